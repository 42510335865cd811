#include "iavc/records.hpp"

#include "iavc/error.hpp"

namespace iavc {

PlayerCatalog::PlayerCatalog(std::vector<std::string> names) {
    for (auto& n : names) {
        if (contains(n)) throw Error(ErrorCode::DataError, "duplicate player name '" + n + "'");
        add(n);
    }
}

int PlayerCatalog::add(const std::string& name) {
    if (auto it = index_.find(name); it != index_.end()) return it->second;
    const int id = static_cast<int>(names_.size());
    names_.push_back(name);
    index_.emplace(name, id);
    return id;
}

int PlayerCatalog::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw Error(ErrorCode::DataError, "unknown player '" + std::string(name) + "'");
    return it->second;
}

bool PlayerCatalog::contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

const std::string& PlayerCatalog::name(int index) const {
    if (index < 0 || static_cast<std::size_t>(index) >= names_.size()) {
        throw Error(ErrorCode::LabelOutOfRange, "player index " + std::to_string(index) + " out of range");
    }
    return names_[static_cast<std::size_t>(index)];
}

std::vector<std::string> ClipRecord::player_names() const {
    std::vector<std::string> out;
    out.reserve(players.size());
    for (const auto& p : players) out.push_back(p.name);
    return out;
}

}  // namespace iavc
