#pragma once

#include <cstddef>
#include <cstdint>

#include "json.hpp"

namespace iavc {

using Json = nlohmann::ordered_json;

// Model geometry and decoding knobs shared by every module.
struct HyperConfig {
    std::size_t d_in = 16;            // width of per-frame input features
    std::size_t d_time = 32;          // video / player embedding width
    std::size_t d_down = 16;          // interaction bottleneck
    std::size_t d_llm = 48;           // decoder width
    std::size_t n_q = 8;              // learnable context queries
    std::size_t n_heads = 4;
    std::size_t k_players = 2;
    std::size_t n_frames_max = 60;
    std::size_t seq_len_max = 20;
    std::size_t beam_size = 5;
    std::size_t max_len = 24;         // generated tokens, excluding <bos>
    std::size_t decoder_layers = 2;
    std::size_t bsim_mlp_expansion = 1;
    std::size_t vclm_mlp_hidden = 0;  // 0 means d_time
    std::size_t vclm_ffn_mult = 4;
    double dropout_rate = 0.1;
    std::uint64_t seed = 7;

    // Throws ConfigError when an invariant is violated.
    void validate() const;

    std::size_t vclm_hidden() const { return vclm_mlp_hidden == 0 ? d_time : vclm_mlp_hidden; }
};

void to_json(Json& j, const HyperConfig& c);
void from_json(const Json& j, HyperConfig& c);

}  // namespace iavc
