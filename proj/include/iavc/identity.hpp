#pragma once

#include <span>
#include <string>
#include <vector>

#include "iavc/autograd.hpp"
#include "iavc/config.hpp"
#include "iavc/params.hpp"
#include "iavc/records.hpp"

namespace iavc {

// Player identification network: a one-block transformer encoder over frame
// features followed by a linear classification head. Parameters live under
// "pin.".
void init_pin(ParameterStore& store, const HyperConfig& cfg, std::size_t n_classes, Rng& rng);

// [t x d_in] frames -> [1 x d_time]. Throws EmptySequence when t == 0.
Var encode_player_sequence(Graph& g, const ParameterStore& store, const HyperConfig& cfg, const Tensor& frames);

Var classify_logits(Graph& g, const ParameterStore& store, Var features);
// Softmax over the catalog for every row of `features`.
Var classify_player(Graph& g, const ParameterStore& store, Var features);
// Mean negative log-likelihood of the labelled classes.
Var pin_loss(Var probs, std::span<const int> labels);

IdentifiedPlayer identify(const ParameterStore& store, const HyperConfig& cfg, const PlayerSequence& seq,
                          const PlayerCatalog& catalog);

// Orders by confidence (descending), then class index, then input position,
// and keeps the first k. Duplicate identities are kept.
std::vector<IdentifiedPlayer> select_top_k(std::vector<IdentifiedPlayer> players, std::size_t k);
std::vector<IdentifiedPlayer> top_k_players(std::span<const PlayerSequence> sequences, std::size_t k,
                                            const ParameterStore& store, const HyperConfig& cfg,
                                            const PlayerCatalog& catalog);

struct ClassAccuracy {
    double mca = 0.0;
    double mpca = 0.0;
};
// mpca averages per-class accuracy over the classes present in `truth`.
ClassAccuracy mca_mpca(std::span<const int> preds, std::span<const int> truth);

// Bidirectional interaction between video rows and player rows. Parameters
// live under "bsim.".
void init_bsim(ParameterStore& store, const HyperConfig& cfg, Rng& rng);

struct BsimOutput {
    Var v_bsi;  // same shape as the video input
    Var f_bsi;  // same shape as the player input
};
BsimOutput bsim_forward(Graph& g, const ParameterStore& store, const HyperConfig& cfg, Var v_v, Var f_k, Mode mode,
                        Rng& rng);

enum class IdentityMode { Train, Infer };

struct IdentityRows {
    Var features;  // [k x d_time], zero rows for padding
    std::vector<std::string> names;
    std::vector<IdentifiedPlayer> identified;  // infer mode only
};

// Train mode encodes the annotated players (gradients can reach the PIN);
// infer mode ranks the clip's candidate sequences and keeps the top k.
// Short lists are padded with zero rows named "<none>".
IdentityRows build_identity_embeddings(Graph& g, const ClipRecord& clip, IdentityMode mode, std::size_t k,
                                       const ParameterStore& store, const HyperConfig& cfg,
                                       const PlayerCatalog& catalog);

}  // namespace iavc
