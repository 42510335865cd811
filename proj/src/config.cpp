#include "iavc/config.hpp"

#include <string>

#include "iavc/error.hpp"

namespace iavc {

void HyperConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
    for (auto [name, v] : {std::pair{"d_in", d_in}, {"d_time", d_time}, {"d_down", d_down}, {"d_llm", d_llm},
                           {"n_q", n_q}, {"n_heads", n_heads}, {"k_players", k_players},
                           {"n_frames_max", n_frames_max}, {"seq_len_max", seq_len_max}, {"beam_size", beam_size},
                           {"max_len", max_len}, {"decoder_layers", decoder_layers},
                           {"bsim_mlp_expansion", bsim_mlp_expansion}, {"vclm_ffn_mult", vclm_ffn_mult}}) {
        if (v < 1) fail(std::string(name) + " must be >= 1");
    }
    if (d_time % n_heads != 0) fail("d_time must be divisible by n_heads");
    if (d_llm % n_heads != 0) fail("d_llm must be divisible by n_heads");
    if (d_down % n_heads != 0) fail("d_down must be divisible by n_heads");
    if (d_down > d_time) fail("d_down must not exceed d_time");
    if (d_time % 2 != 0 || d_llm % 2 != 0) fail("d_time and d_llm must be even for sinusoidal positions");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
}

void to_json(Json& j, const HyperConfig& c) {
    j = Json{{"d_in", c.d_in},
             {"d_time", c.d_time},
             {"d_down", c.d_down},
             {"d_llm", c.d_llm},
             {"n_q", c.n_q},
             {"n_heads", c.n_heads},
             {"k_players", c.k_players},
             {"n_frames_max", c.n_frames_max},
             {"seq_len_max", c.seq_len_max},
             {"beam_size", c.beam_size},
             {"max_len", c.max_len},
             {"decoder_layers", c.decoder_layers},
             {"bsim_mlp_expansion", c.bsim_mlp_expansion},
             {"vclm_mlp_hidden", c.vclm_mlp_hidden},
             {"vclm_ffn_mult", c.vclm_ffn_mult},
             {"dropout_rate", c.dropout_rate},
             {"seed", c.seed}};
}

void from_json(const Json& j, HyperConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("d_in", c.d_in);
    get("d_time", c.d_time);
    get("d_down", c.d_down);
    get("d_llm", c.d_llm);
    get("n_q", c.n_q);
    get("n_heads", c.n_heads);
    get("k_players", c.k_players);
    get("n_frames_max", c.n_frames_max);
    get("seq_len_max", c.seq_len_max);
    get("beam_size", c.beam_size);
    get("max_len", c.max_len);
    get("decoder_layers", c.decoder_layers);
    get("bsim_mlp_expansion", c.bsim_mlp_expansion);
    get("vclm_mlp_hidden", c.vclm_mlp_hidden);
    get("vclm_ffn_mult", c.vclm_ffn_mult);
    get("dropout_rate", c.dropout_rate);
    get("seed", c.seed);
}

}  // namespace iavc
