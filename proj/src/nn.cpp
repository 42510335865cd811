#include "iavc/nn.hpp"

#include <cmath>
#include <vector>

#include "iavc/error.hpp"

namespace iavc::nn {

namespace {

std::string key(std::string_view prefix, std::string_view leaf) {
    std::string k(prefix);
    k += '.';
    k += leaf;
    return k;
}

}  // namespace

void init_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, bool bias,
                 Rng& rng) {
    store.add(key(prefix, "weight"), xavier_uniform(in, out, rng));
    if (bias) store.add(key(prefix, "bias"), Tensor::vector(out));
}

Var linear(Graph& g, const ParameterStore& store, std::string_view prefix, Var x) {
    Var y = matmul(x, g.param(store, key(prefix, "weight")));
    const auto bias_key = key(prefix, "bias");
    if (store.contains(bias_key)) y = add_bias(y, g.param(store, bias_key));
    return y;
}

void init_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t n) {
    store.add(key(prefix, "gain"), Tensor::vector(n, 1.0));
    store.add(key(prefix, "bias"), Tensor::vector(n));
}

Var layer_norm(Graph& g, const ParameterStore& store, std::string_view prefix, Var x) {
    return iavc::layer_norm(x, g.param(store, key(prefix, "gain")), g.param(store, key(prefix, "bias")));
}

void init_attention(ParameterStore& store, const std::string& prefix, std::size_t d, bool out_proj, Rng& rng) {
    store.add(key(prefix, "wq"), xavier_uniform(d, d, rng));
    store.add(key(prefix, "wk"), xavier_uniform(d, d, rng));
    store.add(key(prefix, "wv"), xavier_uniform(d, d, rng));
    if (out_proj) store.add(key(prefix, "wo"), xavier_uniform(d, d, rng));
}

Var attention(Graph& g, const ParameterStore& store, std::string_view prefix, Var queries, Var keys_values,
              std::size_t n_heads, bool causal) {
    const std::size_t d = queries.cols();
    if (keys_values.cols() != d) {
        throw Error(ErrorCode::ShapeMismatch, "attention widths " + queries.value().shape_string() + " vs " +
                                                  keys_values.value().shape_string());
    }
    if (n_heads == 0 || d % n_heads != 0) {
        throw Error(ErrorCode::ShapeMismatch,
                    "width " + std::to_string(d) + " not divisible by " + std::to_string(n_heads) + " heads");
    }
    Var q = matmul(queries, g.param(store, key(prefix, "wq")));
    Var k = matmul(keys_values, g.param(store, key(prefix, "wk")));
    Var v = matmul(keys_values, g.param(store, key(prefix, "wv")));
    const std::size_t dh = d / n_heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Var out;
    if (n_heads == 1) {
        out = matmul(softmax_rows(scale(matmul_bt(q, k), inv_scale), causal), v);
    } else {
        std::vector<Var> heads;
        heads.reserve(n_heads);
        for (std::size_t h = 0; h < n_heads; ++h) {
            Var qh = slice_cols(q, h * dh, dh);
            Var kh = slice_cols(k, h * dh, dh);
            Var vh = slice_cols(v, h * dh, dh);
            heads.push_back(matmul(softmax_rows(scale(matmul_bt(qh, kh), inv_scale), causal), vh));
        }
        out = concat_cols(heads);
    }
    const auto wo = key(prefix, "wo");
    if (store.contains(wo)) out = matmul(out, g.param(store, wo));
    return out;
}

void init_two_layer(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                    std::size_t out, Rng& rng) {
    init_linear(store, prefix + ".fc1", in, hidden, true, rng);
    init_linear(store, prefix + ".fc2", hidden, out, true, rng);
}

Var two_layer(Graph& g, const ParameterStore& store, std::string_view prefix, Var x, bool inner_gelu) {
    Var h = linear(g, store, key(prefix, "fc1"), x);
    if (inner_gelu) h = gelu(h);
    return linear(g, store, key(prefix, "fc2"), h);
}

}  // namespace iavc::nn
