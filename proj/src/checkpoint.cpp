#include "iavc/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "iavc/data.hpp"
#include "iavc/error.hpp"

namespace iavc {

namespace {

constexpr char kMagic[4] = {'I', 'A', 'V', 'C'};

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& s, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::string& s, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
    return v;
}

}  // namespace

std::uint32_t crc32_of(const std::string& bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths, so feed large buffers in pieces.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), n);
        off += n;
    }
    return static_cast<std::uint32_t>(crc);
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    Json trainable = Json::object();
    TensorMap tensors;
    for (const auto& [name, e] : ckpt.store) {
        trainable[name] = e.trainable;
        tensors["param/" + name] = e.value;
    }
    Json header{{"format_version", kCheckpointVersion},
                {"config", ckpt.cfg},
                {"catalog", ckpt.catalog.names()},
                {"vocab", ckpt.vocab.tokens()},
                {"trainable", std::move(trainable)},
                {"epoch", ckpt.epoch},
                {"meta", ckpt.meta}};
    if (ckpt.optimizer) {
        const auto& o = *ckpt.optimizer;
        header["optimizer"] = Json{{"lr", o.options.lr},
                                   {"beta1", o.options.beta1},
                                   {"beta2", o.options.beta2},
                                   {"eps", o.options.eps},
                                   {"steps", o.steps}};
        for (const auto& [name, e] : o.moments) tensors["adam/" + name] = e.value;
    }
    const std::string header_text = header.dump();

    std::ostringstream body(std::ios::binary);
    body.write(kMagic, 4);
    std::string fixed;
    put_u32(fixed, kCheckpointVersion);
    const std::uint64_t len = header_text.size();
    for (int i = 0; i < 8; ++i) fixed.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
    body << fixed << header_text;
    write_tensor_entries(body, tensors);
    std::string out = body.str();
    put_u32(out, crc32_of(out));
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 4 + 4 + 8 + 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw Error(ErrorCode::CorruptFile, "not a checkpoint");
    const std::string payload = bytes.substr(0, bytes.size() - 4);
    if (crc32_of(payload) != get_u32(bytes, bytes.size() - 4))
        throw Error(ErrorCode::CorruptFile, "checksum mismatch");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kCheckpointVersion)
        throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                    std::to_string(kCheckpointVersion));
    const std::uint64_t header_len = get_u64(bytes, 8);
    if (16 + header_len > payload.size()) throw Error(ErrorCode::CorruptFile, "header overruns file");

    Checkpoint c;
    TensorMap tensors;
    try {
        const Json header = Json::parse(payload.substr(16, header_len));
        c.cfg = header.at("config").get<HyperConfig>();
        c.catalog = PlayerCatalog(header.at("catalog").get<std::vector<std::string>>());
        c.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
        c.epoch = header.at("epoch").get<std::size_t>();
        c.meta = header.at("meta");
        std::istringstream in(payload.substr(16 + header_len), std::ios::binary);
        tensors = read_tensor_entries(in);
        if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::CorruptFile, "trailing bytes");
        for (const auto& [name, flag] : header.at("trainable").items()) {
            auto it = tensors.find("param/" + name);
            if (it == tensors.end()) throw Error(ErrorCode::CorruptFile, "missing tensor for " + name);
            c.store.add(name, it->second, flag.get<bool>());
        }
        if (header.contains("optimizer")) {
            const Json& o = header.at("optimizer");
            OptimizerState s;
            s.options = {o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                         o.at("eps").get<double>()};
            s.steps = o.at("steps").get<std::size_t>();
            for (const auto& [name, t] : tensors)
                if (name.starts_with("adam/")) s.moments.add(name.substr(5), t, false);
            c.optimizer = std::move(s);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CorruptFile, std::string("bad checkpoint header: ") + e.what());
    }
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingCheckpoint, path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace iavc
