#include "iavc/vclm.hpp"

#include <cmath>

#include "iavc/error.hpp"
#include "iavc/nn.hpp"

namespace iavc {

namespace {

Var single_head(Graph& g, const ParameterStore& store, Var queries, Var keys_values, const char* wq, const char* wk,
                const char* wv, double scale_by) {
    Var q = matmul(queries, g.param(store, wq));
    Var k = matmul(keys_values, g.param(store, wk));
    Var v = matmul(keys_values, g.param(store, wv));
    return matmul(softmax_rows(scale(matmul_bt(q, k), 1.0 / scale_by)), v);
}

}  // namespace

void init_vclm(ParameterStore& store, const HyperConfig& cfg, Rng& rng) {
    const std::size_t d = cfg.d_time;
    store.add("vclm.theta", Tensor::normal({cfg.n_q, d}, 0.0, 0.02, rng));
    for (const char* name : {"vclm.wq1", "vclm.wk1", "vclm.wv1", "vclm.wq2", "vclm.wk2", "vclm.wv2"}) {
        store.add(name, xavier_uniform(d, d, rng));
    }
    nn::init_two_layer(store, "vclm.mlp", d, cfg.vclm_hidden(), d, rng);
    nn::init_two_layer(store, "vclm.ffn", d, d * cfg.vclm_ffn_mult, d, rng);
}

Var vclm_forward(Graph& g, const ParameterStore& store, const HyperConfig& cfg, Var v_v, bool positions) {
    if (v_v.cols() != cfg.d_time || v_v.rows() == 0) {
        throw Error(ErrorCode::ShapeMismatch, "vclm input " + v_v.value().shape_string() + " needs width " +
                                                  std::to_string(cfg.d_time));
    }
    const double root_d = std::sqrt(static_cast<double>(cfg.d_time));
    Var theta = g.param(store, "vclm.theta");
    Var v_self = single_head(g, store, theta, theta, "vclm.wq1", "vclm.wk1", "vclm.wv1", root_d);
    Var v_pv = positions ? add(g.constant(sinusoidal_positions(v_v.rows(), cfg.d_time)), v_v) : v_v;
    Var v_cross = single_head(g, store, v_self, v_pv, "vclm.wq2", "vclm.wk2", "vclm.wv2", root_d);
    return nn::two_layer(g, store, "vclm.ffn", nn::two_layer(g, store, "vclm.mlp", v_cross, true), true);
}

}  // namespace iavc
