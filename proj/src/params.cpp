#include "iavc/params.hpp"

#include <cmath>

#include "iavc/error.hpp"

namespace iavc {

void ParameterStore::add(std::string name, Tensor value, bool trainable) {
    if (entries_.contains(name)) throw Error(ErrorCode::DuplicateParameter, name);
    Tensor grad(value.shape());
    entries_.emplace(std::move(name), Entry{std::move(value), std::move(grad), trainable});
}

bool ParameterStore::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

void ParameterStore::erase_prefix(std::string_view prefix) {
    std::erase_if(entries_, [&](const auto& kv) { return kv.first.starts_with(prefix); });
}

const ParameterStore::Entry& ParameterStore::entry(std::string_view name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error(ErrorCode::UnknownParameter, std::string(name));
    return it->second;
}

ParameterStore::Entry& ParameterStore::entry(std::string_view name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error(ErrorCode::UnknownParameter, std::string(name));
    return it->second;
}

const Tensor& ParameterStore::value(std::string_view name) const { return entry(name).value; }
Tensor& ParameterStore::value(std::string_view name) { return entry(name).value; }
const Tensor& ParameterStore::grad(std::string_view name) const { return entry(name).grad; }
Tensor& ParameterStore::grad(std::string_view name) { return entry(name).grad; }

void ParameterStore::set_trainable(std::string_view prefix, bool trainable) {
    for (auto& [name, e] : entries_) {
        if (name.starts_with(prefix)) e.trainable = trainable;
    }
}

void ParameterStore::zero_grads() {
    for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
}

bool ParameterStore::same_values(const ParameterStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    for (; a != entries_.end(); ++a, ++b) {
        if (a->first != b->first || a->second.trainable != b->second.trainable) return false;
        if (!(a->second.value == b->second.value)) return false;
    }
    return true;
}

void Adam::step(ParameterStore& store) {
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (auto& [name, e] : store) {
        if (!e.trainable) continue;
        auto mit = m_.find(name);
        if (mit == m_.end()) {
            mit = m_.emplace(name, Tensor(e.value.shape())).first;
            v_.emplace(name, Tensor(e.value.shape()));
        }
        auto m = mit->second.data();
        auto v = v_.find(name)->second.data();
        auto w = e.value.data();
        auto g = e.grad.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
            v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
        }
    }
}

ParameterStore Adam::export_state() const {
    ParameterStore out;
    for (const auto& [name, t] : m_) out.add("m/" + name, t, false);
    for (const auto& [name, t] : v_) out.add("v/" + name, t, false);
    return out;
}

void Adam::import_state(const ParameterStore& state, std::size_t steps) {
    m_.clear();
    v_.clear();
    for (const auto& [name, e] : state) {
        if (name.starts_with("m/")) m_.emplace(name.substr(2), e.value);
        else if (name.starts_with("v/")) v_.emplace(name.substr(2), e.value);
    }
    steps_ = steps;
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return Tensor::uniform({fan_in, fan_out}, -a, a, rng);
}

}  // namespace iavc
