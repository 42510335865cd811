#include "iavc/data.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "iavc/error.hpp"

namespace iavc {

namespace {

constexpr char kMagic[4] = {'I', 'A', 'V', 'C'};
constexpr std::uint32_t kMaxRank = 3;

template <typename U>
void put_le(std::ostream& out, U v) {
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
    unsigned char buf[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw Error(ErrorCode::CorruptFile, "unexpected end of data");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

std::string require_string(const Json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string())
        throw Error(ErrorCode::SchemaError, std::string("missing string field '") + key + "'");
    return j.at(key).get<std::string>();
}

const Tensor& require_tensor(const TensorMap& tensors, const std::string& ref, const std::string& video_id) {
    auto it = tensors.find(ref);
    if (it == tensors.end()) throw Error(ErrorCode::SchemaError, video_id + ": tensor '" + ref + "' not in sidecar");
    if (it->second.rank() != 2 || it->second.rows() == 0)
        throw Error(ErrorCode::SchemaError, video_id + ": tensor '" + ref + "' must be a nonempty matrix");
    return it->second;
}

}  // namespace

void write_tensor_entries(std::ostream& out, const TensorMap& tensors) {
    put_le<std::uint64_t>(out, tensors.size());
    for (const auto& [name, t] : tensors) {
        put_le<std::uint64_t>(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t e : t.shape()) put_le<std::uint64_t>(out, e);
        for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
}

TensorMap read_tensor_entries(std::istream& in) {
    TensorMap out;
    const auto count = get_le<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = get_le<std::uint64_t>(in);
        if (len > (1u << 20)) throw Error(ErrorCode::CorruptFile, "implausible tensor name length");
        std::string name(len, '\0');
        if (!in.read(name.data(), static_cast<std::streamsize>(len)))
            throw Error(ErrorCode::CorruptFile, "unexpected end of data");
        const auto rank = get_le<std::uint32_t>(in);
        if (rank == 0 || rank > kMaxRank) throw Error(ErrorCode::CorruptFile, "bad rank for '" + name + "'");
        Shape shape(rank);
        std::uint64_t total = 1;
        for (auto& e : shape) {
            e = get_le<std::uint64_t>(in);
            total *= e;
            if (total > (1ull << 32)) throw Error(ErrorCode::CorruptFile, "implausible extent for '" + name + "'");
        }
        std::vector<double> data(total);
        for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
        if (!out.emplace(name, Tensor(shape, std::move(data))).second)
            throw Error(ErrorCode::CorruptFile, "duplicate tensor '" + name + "'");
    }
    return out;
}

void write_tensor_archive(std::ostream& out, const TensorMap& tensors) {
    out.write(kMagic, 4);
    put_le<std::uint32_t>(out, kArchiveVersion);
    write_tensor_entries(out, tensors);
}

TensorMap read_tensor_archive(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw Error(ErrorCode::CorruptFile, "not a tensor archive");
    const auto version = get_le<std::uint32_t>(in);
    if (version != kArchiveVersion)
        throw Error(ErrorCode::VersionMismatch, "archive version " + std::to_string(version));
    TensorMap t = read_tensor_entries(in);
    if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::CorruptFile, "trailing bytes in archive");
    return t;
}

void save_tensor_archive(const std::string& path, const TensorMap& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    write_tensor_archive(out, tensors);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

TensorMap load_tensor_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
    return read_tensor_archive(in);
}

std::string sidecar_path(const std::string& annotations_path) { return annotations_path + ".tensors"; }

Json record_to_json(const ClipRecord& r) {
    Json players = Json::array();
    for (std::size_t i = 0; i < r.players.size(); ++i) {
        const auto& p = r.players[i];
        Json pj{{"name", p.name},
                {"sequence_ref", p.sequence_ref.empty() ? r.video_id + "/player" + std::to_string(i) : p.sequence_ref}};
        if (p.box) pj["box"] = *p.box;
        players.push_back(std::move(pj));
    }
    Json j{{"video_id", r.video_id},
           {"game_id", r.game_id},
           {"caption", r.caption},
           {"event_type", r.event_type},
           {"players", std::move(players)},
           {"video_ref", r.video_ref.empty() ? r.video_id + "/video" : r.video_ref}};
    if (!r.candidates.empty()) {
        Json refs = Json::array();
        for (std::size_t i = 0; i < r.candidates.size(); ++i)
            refs.push_back(i < r.candidate_refs.size() && !r.candidate_refs[i].empty()
                               ? r.candidate_refs[i]
                               : r.video_id + "/candidate" + std::to_string(i));
        j["candidate_refs"] = std::move(refs);
    }
    return j;
}

ClipRecord record_from_json(const Json& j, const TensorMap& tensors) {
    if (!j.is_object()) throw Error(ErrorCode::SchemaError, "annotation line is not an object");
    ClipRecord r;
    r.video_id = require_string(j, "video_id");
    r.game_id = require_string(j, "game_id");
    r.caption = require_string(j, "caption");
    r.event_type = require_string(j, "event_type");
    r.video_ref = require_string(j, "video_ref");
    if (!j.contains("players") || !j.at("players").is_array())
        throw Error(ErrorCode::SchemaError, r.video_id + ": missing players array");
    const Json& players = j.at("players");
    if (players.empty() || players.size() > 2)
        throw Error(ErrorCode::SchemaError,
                    r.video_id + ": expected 1 or 2 players, got " + std::to_string(players.size()));
    for (const auto& pj : players) {
        if (!pj.is_object()) throw Error(ErrorCode::SchemaError, r.video_id + ": player entry is not an object");
        ClipPlayer p;
        p.name = require_string(pj, "name");
        p.sequence_ref = require_string(pj, "sequence_ref");
        p.sequence.frames = require_tensor(tensors, p.sequence_ref, r.video_id);
        if (pj.contains("box")) {
            try {
                p.box = pj.at("box").get<std::array<double, 4>>();
            } catch (const nlohmann::json::exception&) {
                throw Error(ErrorCode::SchemaError, r.video_id + ": box must hold 4 numbers");
            }
        }
        r.players.push_back(std::move(p));
    }
    r.video = require_tensor(tensors, r.video_ref, r.video_id);
    if (j.contains("candidate_refs")) {
        if (!j.at("candidate_refs").is_array())
            throw Error(ErrorCode::SchemaError, r.video_id + ": candidate_refs must be an array");
        for (const auto& c : j.at("candidate_refs")) {
            if (!c.is_string()) throw Error(ErrorCode::SchemaError, r.video_id + ": candidate ref must be a string");
            r.candidate_refs.push_back(c.get<std::string>());
            r.candidates.push_back({require_tensor(tensors, r.candidate_refs.back(), r.video_id), -1, "tracker"});
        }
    }
    const std::size_t d = r.video.cols();
    for (const auto& p : r.players)
        if (p.sequence.frames.cols() != d) throw Error(ErrorCode::SchemaError, r.video_id + ": feature width mismatch");
    for (const auto& c : r.candidates)
        if (c.frames.cols() != d) throw Error(ErrorCode::SchemaError, r.video_id + ": feature width mismatch");
    return r;
}

void save_annotations(const std::string& path, const std::vector<ClipRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    TensorMap tensors;
    for (const auto& r : records) {
        const Json j = record_to_json(r);
        out << j.dump() << '\n';
        tensors[j.at("video_ref").get<std::string>()] = r.video;
        for (std::size_t i = 0; i < r.players.size(); ++i)
            tensors[j.at("players")[i].at("sequence_ref").get<std::string>()] = r.players[i].sequence.frames;
        if (j.contains("candidate_refs"))
            for (std::size_t i = 0; i < r.candidates.size(); ++i)
                tensors[j.at("candidate_refs")[i].get<std::string>()] = r.candidates[i].frames;
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
    save_tensor_archive(sidecar_path(path), tensors);
}

std::vector<ClipRecord> load_annotations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
    const TensorMap tensors = load_tensor_archive(sidecar_path(path));
    std::vector<ClipRecord> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::SchemaError, path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        ClipRecord r = record_from_json(j, tensors);
        if (!seen.insert(r.video_id).second) throw Error(ErrorCode::DuplicateVideoId, r.video_id);
        out.push_back(std::move(r));
    }
    return out;
}

PlayerCatalog catalog_from_records(const std::vector<ClipRecord>& records) {
    std::set<std::string> names;
    for (const auto& r : records)
        for (const auto& p : r.players) names.insert(p.name);
    return PlayerCatalog({names.begin(), names.end()});
}

void assign_labels(std::vector<ClipRecord>& records, const PlayerCatalog& catalog) {
    for (auto& r : records)
        for (auto& p : r.players) p.sequence.label = catalog.index_of(p.name);
}

PlayerCentricSet build_player_centric_set(const std::vector<ClipRecord>& records) {
    PlayerCentricSet set;
    for (const auto& r : records) {
        std::set<std::string> grouped;
        for (const auto& p : r.players) {
            if (p.sequence.frames.empty())
                throw Error(ErrorCode::MissingSequences, r.video_id + ": no sequence for " + p.name);
            if (!grouped.insert(p.name).second) continue;
            set[p.name].push_back({r.video_id, r.game_id, p.sequence});
        }
    }
    return set;
}

std::vector<PlayerSequence> lookup_sequences(const PlayerCentricSet& set, const ClipRecord& clip) {
    std::vector<PlayerSequence> out;
    for (const auto& p : clip.players) {
        auto it = set.find(p.name);
        const CentricEntry* hit = nullptr;
        if (it != set.end())
            for (const auto& e : it->second)
                if (e.video_id == clip.video_id) hit = &e;
        if (!hit) throw Error(ErrorCode::MissingSequences, clip.video_id + ": " + p.name + " not in player-centric set");
        out.push_back(hit->sequence);
    }
    return out;
}

void SplitSpec::validate() const {
    for (const auto& g : train_games)
        if (test_games.count(g)) throw Error(ErrorCode::ConfigError, "game " + g + " is on both sides of the split");
}

void to_json(Json& j, const SplitSpec& s) {
    j = Json{{"train_games", s.train_games}, {"test_games", s.test_games}};
}

void from_json(const Json& j, SplitSpec& s) {
    s.train_games = j.at("train_games").get<std::set<std::string>>();
    s.test_games = j.at("test_games").get<std::set<std::string>>();
}

SplitSpec split_last_games(const std::vector<ClipRecord>& records, std::size_t n_test) {
    std::set<std::string> games;
    for (const auto& r : records) games.insert(r.game_id);
    if (n_test >= games.size() && !games.empty())
        throw Error(ErrorCode::ConfigError, "need more games than the " + std::to_string(n_test) + " held out");
    SplitSpec s;
    std::size_t i = 0;
    for (const auto& g : games) (i++ < games.size() - n_test ? s.train_games : s.test_games).insert(g);
    return s;
}

SplitResult split_by_game(const std::vector<ClipRecord>& records, const SplitSpec& spec) {
    spec.validate();
    SplitResult out;
    for (const auto& r : records) {
        if (spec.train_games.count(r.game_id)) {
            out.train.push_back(r);
        } else if (spec.test_games.count(r.game_id)) {
            out.test.push_back(r);
        } else {
            throw Error(ErrorCode::UncoveredGame, "game " + r.game_id + " (clip " + r.video_id + ") not in split");
        }
    }
    return out;
}

}  // namespace iavc
