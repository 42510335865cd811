#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>

#include "iavc/tensor.hpp"

namespace iavc {

// Named trainable tensors with gradient slots. Iteration is name-sorted, which
// fixes the order used by the optimizer and by checkpoints.
class ParameterStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
        bool trainable = true;
    };
    using Map = std::map<std::string, Entry, std::less<>>;

    void add(std::string name, Tensor value, bool trainable = true);
    bool contains(std::string_view name) const;
    void erase_prefix(std::string_view prefix);

    const Tensor& value(std::string_view name) const;
    Tensor& value(std::string_view name);
    const Tensor& grad(std::string_view name) const;
    Tensor& grad(std::string_view name);
    const Entry& entry(std::string_view name) const;
    Entry& entry(std::string_view name);

    // Applies to every entry whose name starts with `prefix`.
    void set_trainable(std::string_view prefix, bool trainable);
    void zero_grads();

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t scalar_count() const;
    Map::const_iterator begin() const { return entries_.begin(); }
    Map::const_iterator end() const { return entries_.end(); }
    Map::iterator begin() { return entries_.begin(); }
    Map::iterator end() { return entries_.end(); }

    // Bitwise equality over names, values and trainable flags.
    bool same_values(const ParameterStore& other) const;

private:
    Map entries_;
};

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moments are keyed by parameter name so the state
// can be checkpointed alongside the store.
class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {}

    void step(ParameterStore& store);

    const AdamOptions& options() const noexcept { return options_; }
    void set_lr(double lr) { options_.lr = lr; }
    std::size_t steps() const noexcept { return steps_; }

    // Moment tensors as "m/<name>" and "v/<name>" entries, for persistence.
    ParameterStore export_state() const;
    void import_state(const ParameterStore& state, std::size_t steps);

private:
    AdamOptions options_;
    std::size_t steps_ = 0;
    std::map<std::string, Tensor, std::less<>> m_;
    std::map<std::string, Tensor, std::less<>> v_;
};

// Uniform Glorot initialisation for a fan_in x fan_out matrix.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace iavc
