#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iavc/tensor.hpp"

namespace iavc {

inline constexpr std::string_view kNoneName = "<none>";

// Per-frame features of one tracked player. label is -1 when unknown.
struct PlayerSequence {
    Tensor frames;  // [t x d_in]
    int label = -1;
    std::string source = "dataset";
};

// Ordered, duplicate-free list of player names; the index is the class id.
class PlayerCatalog {
public:
    PlayerCatalog() = default;
    explicit PlayerCatalog(std::vector<std::string> names);

    // Returns the existing index when the name is already present.
    int add(const std::string& name);
    int index_of(std::string_view name) const;  // throws DataError
    bool contains(std::string_view name) const;
    const std::string& name(int index) const;
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::size_t size() const noexcept { return names_.size(); }

    bool operator==(const PlayerCatalog& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
};

struct IdentifiedPlayer {
    int class_index = -1;
    std::string name;
    double confidence = 0.0;
    Tensor feature;  // [1 x d_time]
};

struct ClipPlayer {
    std::string name;
    std::string sequence_ref;
    PlayerSequence sequence;
    std::optional<std::array<double, 4>> box;  // x, y, w, h; metadata only
};

struct ClipRecord {
    std::string video_id;
    std::string game_id;
    std::string caption;
    std::string event_type;
    std::vector<ClipPlayer> players;
    std::string video_ref;
    Tensor video;  // [N_v x d_in]
    // Unlabelled tracker output used at inference time.
    std::vector<std::string> candidate_refs;
    std::vector<PlayerSequence> candidates;

    std::vector<std::string> player_names() const;
};

}  // namespace iavc
