#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "iavc/data.hpp"
#include "iavc/identity.hpp"
#include "iavc/params.hpp"
#include "iavc/pipeline.hpp"

namespace iavc {

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // mean per item
    std::optional<double> mca;
    std::optional<double> mpca;
};

void to_json(Json& j, const EpochLog& e);

using EpochCallback = std::function<void(const EpochLog&)>;

// Shuffle and dropout randomness for one epoch depends only on (seed, epoch),
// so a resumed run replays exactly what an uninterrupted one would.
Rng epoch_rng(std::uint64_t seed, std::size_t epoch);

struct PinData {
    std::vector<PlayerSequence> train;
    std::vector<PlayerSequence> heldout;
};

// Labelled sequences from the player-centric set. Every holdout_every-th
// sequence of each player is held out; max_per_player caps the sequences
// taken per player (0 keeps all).
PinData pin_data(const PlayerCentricSet& set, const PlayerCatalog& catalog, std::size_t holdout_every = 5,
                 std::size_t max_per_player = 0);

ClassAccuracy evaluate_pin(const IavcModel& model, const std::vector<PlayerSequence>& sequences);

struct PinTrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
};

// Runs epochs start_epoch+1 .. options.epochs, updating only "pin." entries.
std::vector<EpochLog> train_pin(IavcModel& model, const PinData& data, const PinTrainOptions& options, Adam& adam,
                                std::size_t start_epoch = 0, const EpochCallback& on_epoch = {});

struct CaptionTrainOptions {
    std::size_t epochs = 100;
    std::size_t batch_size = 8;
    bool freeze_pin = true;
    AblationFlags flags;
};

// Teacher-forced training over the clips; annotated sequences are fetched
// from the player-centric set built over the same clips.
std::vector<EpochLog> train_captioner(IavcModel& model, const std::vector<ClipRecord>& clips,
                                      const CaptionTrainOptions& options, Adam& adam, std::size_t start_epoch = 0,
                                      const EpochCallback& on_epoch = {});

std::vector<GeneratedCaption> generate_captions(const IavcModel& model, const std::vector<ClipRecord>& clips,
                                                const AblationFlags& flags, IdentityMode identity_mode,
                                                std::size_t beam_size);

// Share of clips whose generated caption equals the annotation token for token.
double exact_match_rate(const std::vector<GeneratedCaption>& generated, const std::vector<ClipRecord>& clips);

}  // namespace iavc
