#pragma once

#include "iavc/autograd.hpp"
#include "iavc/config.hpp"
#include "iavc/params.hpp"

namespace iavc {

// Learnable-query context summary of a video. Parameters live under "vclm.":
// theta [n_q x d_time], single-head projections wq1..wv2, and the mlp and ffn
// two-layer blocks.
void init_vclm(ParameterStore& store, const HyperConfig& cfg, Rng& rng);

// [N_v x d_time] -> [n_q x d_time]. With positions off the video rows are
// used without the sinusoidal table.
Var vclm_forward(Graph& g, const ParameterStore& store, const HyperConfig& cfg, Var v_v, bool positions = true);

}  // namespace iavc
