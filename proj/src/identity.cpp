#include "iavc/identity.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "iavc/error.hpp"
#include "iavc/nn.hpp"

namespace iavc {

void init_pin(ParameterStore& store, const HyperConfig& cfg, std::size_t n_classes, Rng& rng) {
    if (n_classes == 0) throw Error(ErrorCode::ConfigError, "player catalog is empty");
    nn::init_linear(store, "pin.embed", cfg.d_in, cfg.d_time, true, rng);
    nn::init_layer_norm(store, "pin.ln", cfg.d_time);
    nn::init_attention(store, "pin.attn", cfg.d_time, true, rng);
    nn::init_linear(store, "pin.head", cfg.d_time, n_classes, true, rng);
}

Var encode_player_sequence(Graph& g, const ParameterStore& store, const HyperConfig& cfg, const Tensor& frames) {
    if (frames.empty() || frames.rows() == 0) throw Error(ErrorCode::EmptySequence, "player sequence has no frames");
    Var h = nn::linear(g, store, "pin.embed", g.constant(frames));
    h = add(h, g.constant(sinusoidal_positions(frames.rows(), cfg.d_time)));
    h = add(h, nn::msa(g, store, "pin.attn", nn::layer_norm(g, store, "pin.ln", h), cfg.n_heads));
    return mean_rows(h);
}

Var classify_logits(Graph& g, const ParameterStore& store, Var features) {
    return nn::linear(g, store, "pin.head", features);
}

Var classify_player(Graph& g, const ParameterStore& store, Var features) {
    return softmax_rows(classify_logits(g, store, features));
}

Var pin_loss(Var probs, std::span<const int> labels) { return nll_mean(probs, labels); }

IdentifiedPlayer identify(const ParameterStore& store, const HyperConfig& cfg, const PlayerSequence& seq,
                          const PlayerCatalog& catalog) {
    Graph g(false);
    Var f = encode_player_sequence(g, store, cfg, seq.frames);
    const Tensor& p = classify_player(g, store, f).value();
    const auto row = p.row(0);
    const auto best = std::max_element(row.begin(), row.end());
    IdentifiedPlayer out;
    out.class_index = static_cast<int>(best - row.begin());
    out.name = catalog.name(out.class_index);
    out.confidence = *best;
    out.feature = f.value();
    return out;
}

std::vector<IdentifiedPlayer> select_top_k(std::vector<IdentifiedPlayer> players, std::size_t k) {
    std::stable_sort(players.begin(), players.end(), [](const IdentifiedPlayer& a, const IdentifiedPlayer& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.class_index < b.class_index;
    });
    if (players.size() > k) players.resize(k);
    return players;
}

std::vector<IdentifiedPlayer> top_k_players(std::span<const PlayerSequence> sequences, std::size_t k,
                                            const ParameterStore& store, const HyperConfig& cfg,
                                            const PlayerCatalog& catalog) {
    if (k == 0) throw Error(ErrorCode::ConfigError, "k must be >= 1");
    std::vector<IdentifiedPlayer> all;
    all.reserve(sequences.size());
    for (const auto& s : sequences) all.push_back(identify(store, cfg, s, catalog));
    return select_top_k(std::move(all), k);
}

ClassAccuracy mca_mpca(std::span<const int> preds, std::span<const int> truth) {
    if (preds.empty() || preds.size() != truth.size()) {
        throw Error(ErrorCode::EmptyInput, "mca_mpca needs equal, nonempty label lists");
    }
    std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto& [c, n] = per_class[truth[i]];
        ++n;
        if (preds[i] == truth[i]) {
            ++c;
            ++correct;
        }
    }
    ClassAccuracy acc;
    acc.mca = static_cast<double>(correct) / static_cast<double>(truth.size());
    for (const auto& [label, cn] : per_class) acc.mpca += static_cast<double>(cn.first) / static_cast<double>(cn.second);
    acc.mpca /= static_cast<double>(per_class.size());
    return acc;
}

void init_bsim(ParameterStore& store, const HyperConfig& cfg, Rng& rng) {
    const std::size_t d = cfg.d_time, dd = cfg.d_down, hidden = cfg.d_time * cfg.bsim_mlp_expansion;
    nn::init_layer_norm(store, "bsim.ln1", d);
    nn::init_layer_norm(store, "bsim.ln2", d);
    nn::init_attention(store, "bsim.msa1", d, true, rng);
    nn::init_attention(store, "bsim.msa2", d, true, rng);
    nn::init_linear(store, "bsim.wd1", d, dd, false, rng);
    nn::init_linear(store, "bsim.wd2", d, dd, false, rng);
    nn::init_layer_norm(store, "bsim.ln3", dd);
    nn::init_layer_norm(store, "bsim.ln4", dd);
    nn::init_attention(store, "bsim.mca_ev", dd, true, rng);
    nn::init_attention(store, "bsim.mca_ve", dd, true, rng);
    nn::init_linear(store, "bsim.wu1", dd, d, false, rng);
    nn::init_linear(store, "bsim.wu2", dd, d, false, rng);
    nn::init_two_layer(store, "bsim.mlp_v", d, hidden, d, rng);
    nn::init_two_layer(store, "bsim.mlp_f", d, hidden, d, rng);
    nn::init_layer_norm(store, "bsim.ln5", d);
    nn::init_layer_norm(store, "bsim.ln6", d);
}

BsimOutput bsim_forward(Graph& g, const ParameterStore& store, const HyperConfig& cfg, Var v_v, Var f_k, Mode mode,
                        Rng& rng) {
    if (v_v.cols() != cfg.d_time || f_k.cols() != cfg.d_time) {
        throw Error(ErrorCode::ShapeMismatch, "bsim inputs must have width " + std::to_string(cfg.d_time));
    }
    // Self enhancement.
    Var v1 = nn::msa(g, store, "bsim.msa1", nn::layer_norm(g, store, "bsim.ln1", v_v), cfg.n_heads);
    Var f1 = nn::msa(g, store, "bsim.msa2", nn::layer_norm(g, store, "bsim.ln2", f_k), cfg.n_heads);

    // Exchange in the bottleneck. ln3 and ln4 are shared by both directions.
    Var vd = nn::layer_norm(g, store, "bsim.ln3", nn::linear(g, store, "bsim.wd1", v1));
    Var fd = nn::layer_norm(g, store, "bsim.ln4", nn::linear(g, store, "bsim.wd2", f1));
    Var v2 = nn::linear(g, store, "bsim.wu1", nn::mca_attn(g, store, "bsim.mca_ev", vd, fd, cfg.n_heads));
    Var f2 = nn::linear(g, store, "bsim.wu2", nn::mca_attn(g, store, "bsim.mca_ve", fd, vd, cfg.n_heads));

    auto out = [&](Var x, const char* mlp, const char* ln) {
        Var y = dropout(nn::two_layer(g, store, mlp, gelu(x), false), cfg.dropout_rate, mode, rng);
        return nn::layer_norm(g, store, ln, add(y, x));
    };
    return {out(v2, "bsim.mlp_v", "bsim.ln5"), out(f2, "bsim.mlp_f", "bsim.ln6")};
}

IdentityRows build_identity_embeddings(Graph& g, const ClipRecord& clip, IdentityMode mode, std::size_t k,
                                       const ParameterStore& store, const HyperConfig& cfg,
                                       const PlayerCatalog& catalog) {
    if (k == 0) throw Error(ErrorCode::ConfigError, "k must be >= 1");
    IdentityRows out;
    std::vector<Var> rows;
    if (mode == IdentityMode::Train) {
        if (clip.players.empty()) {
            throw Error(ErrorCode::MissingSequences, "clip " + clip.video_id + " has no annotated players");
        }
        for (const auto& p : clip.players) {
            if (rows.size() == k) break;
            if (p.sequence.frames.empty()) {
                throw Error(ErrorCode::MissingSequences,
                            "clip " + clip.video_id + " has no sequence for player '" + p.name + "'");
            }
            rows.push_back(encode_player_sequence(g, store, cfg, p.sequence.frames));
            out.names.push_back(p.name);
        }
    } else {
        out.identified = top_k_players(clip.candidates, k, store, cfg, catalog);
        for (const auto& p : out.identified) {
            rows.push_back(g.constant(p.feature));
            out.names.push_back(p.name);
        }
    }
    if (rows.size() < k) {
        rows.push_back(g.constant(Tensor::matrix(k - rows.size(), cfg.d_time)));
        out.names.resize(k, std::string(kNoneName));
    }
    out.features = rows.size() == 1 ? rows.front() : concat_rows(rows);
    return out;
}

}  // namespace iavc
