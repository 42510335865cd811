#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "iavc/autograd.hpp"
#include "iavc/params.hpp"

// Parameterised building blocks. Each block owns the store entries under its
// name prefix; init_* creates them and the forward function looks them up.
namespace iavc::nn {

// Row-vector convention: y = x W + b with W stored as [in x out].
void init_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, bool bias,
                 Rng& rng);
Var linear(Graph& g, const ParameterStore& store, std::string_view prefix, Var x);

void init_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t n);
Var layer_norm(Graph& g, const ParameterStore& store, std::string_view prefix, Var x);

// Multi-head attention parameters: .wq .wk .wv [d x d] and, when requested,
// an output projection .wo [d x d]. No biases.
void init_attention(ParameterStore& store, const std::string& prefix, std::size_t d, bool out_proj, Rng& rng);

// softmax(Q_h K_h^T / sqrt(d / n_heads)) V_h per head, heads concatenated,
// then projected by .wo if the store has it. Queries come from `queries`,
// keys and values from `keys_values`.
Var attention(Graph& g, const ParameterStore& store, std::string_view prefix, Var queries, Var keys_values,
              std::size_t n_heads, bool causal = false);

inline Var msa(Graph& g, const ParameterStore& store, std::string_view prefix, Var x, std::size_t n_heads) {
    return attention(g, store, prefix, x, x, n_heads);
}

inline Var mca_attn(Graph& g, const ParameterStore& store, std::string_view prefix, Var i1, Var i2,
                    std::size_t n_heads) {
    return attention(g, store, prefix, i1, i2, n_heads);
}

// Two linear layers with an optional GELU between them.
void init_two_layer(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                    std::size_t out, Rng& rng);
Var two_layer(Graph& g, const ParameterStore& store, std::string_view prefix, Var x, bool inner_gelu);

}  // namespace iavc::nn
