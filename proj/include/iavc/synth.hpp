#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iavc/captioner.hpp"
#include "iavc/config.hpp"
#include "iavc/data.hpp"
#include "iavc/records.hpp"

namespace iavc {

// Desk-scale stand-in for broadcast footage. Each player owns a latent
// identity vector; tracked sequences are that vector plus Gaussian noise.
// Video frames walk through event-specific phase vectors (made and missed
// shots visit the same phases in opposite order), carry a faint low-rank
// fingerprint of whichever player is acting, and mark the release frame of
// a shot at a time that grows with the shot distance.
struct SynthConfig {
    std::size_t n_games = 40;
    std::size_t n_test_games = 5;
    std::size_t n_players = 16;
    std::size_t clips_per_game = 12;
    std::size_t total_clips = 0;  // when nonzero, overrides clips_per_game and is spread over games
    std::size_t n_event_types = 9;
    std::size_t d_in = 16;
    double noise_sigma = 0.1;
    double video_noise = 0.1;
    std::size_t sequence_frames = 4;
    std::size_t video_frames = 16;
    std::size_t fingerprint_rank = 1;
    double fingerprint_scale = 0.25;
    std::size_t distractors = 0;  // extra unlabelled tracker sequences per clip
    std::uint64_t seed = 11;

    void validate(std::size_t k_players = 1) const;  // throws ConfigError
    std::size_t clip_count() const { return total_clips ? total_clips : n_games * clips_per_game; }
};

void to_json(Json& j, const SynthConfig& c);
void from_json(const Json& j, SynthConfig& c);

struct SynthDataset {
    std::vector<ClipRecord> records;
    PlayerCatalog catalog;
    Vocabulary vocab;
    SplitSpec split;
    Tensor identities;  // [n_players x d_in]
};

inline constexpr std::size_t kMajorEventTypes = 9;

// Deterministic under cfg.seed.
SynthDataset synth_generate(const SynthConfig& cfg);

// Fresh labelled sequences drawn from the identity vectors.
std::vector<PlayerSequence> synth_player_sequences(const Tensor& identities, std::size_t per_player, double sigma,
                                                   std::size_t frames, Rng& rng);

// Catalog names in the order they occur in the caption.
std::vector<std::string> extract_names(const std::string& caption, const PlayerCatalog& catalog);

}  // namespace iavc
