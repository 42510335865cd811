#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "iavc/config.hpp"
#include "iavc/records.hpp"
#include "iavc/tensor.hpp"

namespace iavc {

using TensorMap = std::map<std::string, Tensor>;

inline constexpr std::uint32_t kArchiveVersion = 1;

// Flat binary container: "IAVC", u32 version, u64 entry count, then per entry
// u64 name length, name bytes, u32 rank, u64 extents, little-endian f64 data.
void write_tensor_entries(std::ostream& out, const TensorMap& tensors);
TensorMap read_tensor_entries(std::istream& in);  // throws CorruptFile
void write_tensor_archive(std::ostream& out, const TensorMap& tensors);
TensorMap read_tensor_archive(std::istream& in);  // throws CorruptFile, VersionMismatch
void save_tensor_archive(const std::string& path, const TensorMap& tensors);
TensorMap load_tensor_archive(const std::string& path);

// Feature tensors of an annotation file live next to it in <path>.tensors.
std::string sidecar_path(const std::string& annotations_path);

// One JSON object per line. Empty refs are filled with names derived from the
// video id before writing.
void save_annotations(const std::string& path, const std::vector<ClipRecord>& records);
// Throws SchemaError for a missing field, a bad name count or a bad tensor
// extent, and DuplicateVideoId.
std::vector<ClipRecord> load_annotations(const std::string& path);

ClipRecord record_from_json(const Json& j, const TensorMap& tensors);
Json record_to_json(const ClipRecord& r);

// Sorted unique names over every annotated player.
PlayerCatalog catalog_from_records(const std::vector<ClipRecord>& records);
// Sets PlayerSequence::label on annotated players from the catalog.
void assign_labels(std::vector<ClipRecord>& records, const PlayerCatalog& catalog);

struct CentricEntry {
    std::string video_id;
    std::string game_id;
    PlayerSequence sequence;
};

// Player name -> every clip that names the player, in record order. A name
// repeated within one clip is grouped once.
using PlayerCentricSet = std::map<std::string, std::vector<CentricEntry>>;

PlayerCentricSet build_player_centric_set(const std::vector<ClipRecord>& records);  // throws MissingSequences

// Fetches the clip's annotated sequences back out of the set by video id.
std::vector<PlayerSequence> lookup_sequences(const PlayerCentricSet& set, const ClipRecord& clip);

struct SplitSpec {
    std::set<std::string> train_games;
    std::set<std::string> test_games;

    void validate() const;  // throws ConfigError on overlap
};

void to_json(Json& j, const SplitSpec& s);
void from_json(const Json& j, SplitSpec& s);

// The last n_test games in sorted order go to the test side.
SplitSpec split_last_games(const std::vector<ClipRecord>& records, std::size_t n_test);

struct SplitResult {
    std::vector<ClipRecord> train;
    std::vector<ClipRecord> test;
};

SplitResult split_by_game(const std::vector<ClipRecord>& records, const SplitSpec& spec);  // throws UncoveredGame

}  // namespace iavc
