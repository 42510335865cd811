#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "iavc/captioner.hpp"
#include "iavc/config.hpp"
#include "iavc/params.hpp"
#include "iavc/records.hpp"

namespace iavc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerState {
    AdamOptions options;
    std::size_t steps = 0;
    ParameterStore moments;  // Adam::export_state layout
};

struct Checkpoint {
    HyperConfig cfg;
    PlayerCatalog catalog;
    Vocabulary vocab;
    ParameterStore store;
    std::optional<OptimizerState> optimizer;
    std::size_t epoch = 0;  // completed epochs
    Json meta = Json::object();
};

// "IAVC", u32 version, u64 header length, JSON header, tensor entries, then a
// CRC-32 of every preceding byte.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);  // throws CorruptFile, VersionMismatch

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);  // throws MissingCheckpoint when absent

std::uint32_t crc32_of(const std::string& bytes);

}  // namespace iavc
