#include "iavc/train.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "iavc/error.hpp"

namespace iavc {

namespace {

// Restores every trainable flag on scope exit.
class TrainableGuard {
public:
    explicit TrainableGuard(ParameterStore& store) : store_(store) {
        for (const auto& [name, e] : store) saved_.emplace(name, e.trainable);
    }
    ~TrainableGuard() {
        for (const auto& [name, flag] : saved_)
            if (store_.contains(name)) store_.entry(name).trainable = flag;
    }
    TrainableGuard(const TrainableGuard&) = delete;
    TrainableGuard& operator=(const TrainableGuard&) = delete;

private:
    ParameterStore& store_;
    std::map<std::string, bool> saved_;
};

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

}  // namespace

void to_json(Json& j, const EpochLog& e) {
    j = Json{{"epoch", e.epoch}, {"loss", e.loss}};
    if (e.mca) j["mca"] = *e.mca;
    if (e.mpca) j["mpca"] = *e.mpca;
}

Rng epoch_rng(std::uint64_t seed, std::size_t epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x1a5c0de5u};
    return Rng(seq);
}

PinData pin_data(const PlayerCentricSet& set, const PlayerCatalog& catalog, std::size_t holdout_every,
                 std::size_t max_per_player) {
    PinData out;
    for (const auto& [name, entries] : set) {
        const int label = catalog.index_of(name);
        const std::size_t n = max_per_player ? std::min(max_per_player, entries.size()) : entries.size();
        for (std::size_t i = 0; i < n; ++i) {
            PlayerSequence s = entries[i].sequence;
            s.label = label;
            (holdout_every && i % holdout_every == holdout_every - 1 ? out.heldout : out.train).push_back(std::move(s));
        }
    }
    return out;
}

ClassAccuracy evaluate_pin(const IavcModel& model, const std::vector<PlayerSequence>& sequences) {
    std::vector<int> preds, truth;
    for (const auto& s : sequences) {
        preds.push_back(identify(model.store, model.cfg, s, model.catalog).class_index);
        truth.push_back(s.label);
    }
    return mca_mpca(preds, truth);
}

std::vector<EpochLog> train_pin(IavcModel& model, const PinData& data, const PinTrainOptions& options, Adam& adam,
                                std::size_t start_epoch, const EpochCallback& on_epoch) {
    if (data.train.empty()) throw Error(ErrorCode::DataError, "no labelled player sequences to train on");
    for (const auto& s : data.train)
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= model.catalog.size())
            throw Error(ErrorCode::LabelOutOfRange, "sequence label " + std::to_string(s.label));
    TrainableGuard guard(model.store);
    for (auto& [name, e] : model.store) e.trainable = e.trainable && name.starts_with("pin.");
    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

    std::vector<EpochLog> logs;
    for (std::size_t epoch = start_epoch + 1; epoch <= options.epochs; ++epoch) {
        Rng rng = epoch_rng(model.cfg.seed, epoch);
        const auto order = shuffled_order(data.train.size(), rng);
        double total = 0.0;
        for (std::size_t b = 0; b < order.size(); b += batch) {
            model.store.zero_grads();
            for (std::size_t i = b; i < std::min(order.size(), b + batch); ++i) {
                const PlayerSequence& s = data.train[order[i]];
                Graph g;
                Var f = encode_player_sequence(g, model.store, model.cfg, s.frames);
                const int label = s.label;
                Var loss = pin_loss(classify_player(g, model.store, f), std::span<const int>(&label, 1));
                total += loss.value()[0];
                g.backward(loss, model.store);
            }
            adam.step(model.store);
        }
        EpochLog log{epoch, total / static_cast<double>(order.size()), {}, {}};
        if (!data.heldout.empty()) {
            const ClassAccuracy acc = evaluate_pin(model, data.heldout);
            log.mca = acc.mca;
            log.mpca = acc.mpca;
        }
        logs.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    model.store.zero_grads();
    return logs;
}

std::vector<EpochLog> train_captioner(IavcModel& model, const std::vector<ClipRecord>& clips,
                                      const CaptionTrainOptions& options, Adam& adam, std::size_t start_epoch,
                                      const EpochCallback& on_epoch) {
    if (clips.empty()) throw Error(ErrorCode::DataError, "no training clips");
    options.flags.validate();
    // Train-mode identity comes from the player-centric set.
    const PlayerCentricSet set = build_player_centric_set(clips);
    std::vector<ClipRecord> queried = clips;
    for (auto& c : queried) {
        const auto seqs = lookup_sequences(set, c);
        for (std::size_t i = 0; i < c.players.size(); ++i) c.players[i].sequence = seqs[i];
    }

    TrainableGuard guard(model.store);
    if (options.freeze_pin) model.store.set_trainable("pin.", false);
    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

    std::vector<EpochLog> logs;
    for (std::size_t epoch = start_epoch + 1; epoch <= options.epochs; ++epoch) {
        Rng rng = epoch_rng(model.cfg.seed, epoch);
        const auto order = shuffled_order(queried.size(), rng);
        double total = 0.0;
        for (std::size_t b = 0; b < order.size(); b += batch) {
            model.store.zero_grads();
            for (std::size_t i = b; i < std::min(order.size(), b + batch); ++i) {
                Graph g;
                Var loss = clip_caption_loss(g, model, queried[order[i]], options.flags, rng);
                total += loss.value()[0];
                g.backward(loss, model.store);
            }
            adam.step(model.store);
        }
        EpochLog log{epoch, total / static_cast<double>(order.size()), {}, {}};
        logs.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    model.store.zero_grads();
    return logs;
}

std::vector<GeneratedCaption> generate_captions(const IavcModel& model, const std::vector<ClipRecord>& clips,
                                                const AblationFlags& flags, IdentityMode identity_mode,
                                                std::size_t beam_size) {
    std::vector<GeneratedCaption> out;
    out.reserve(clips.size());
    for (const auto& c : clips) out.push_back(caption_clip(model, c, flags, identity_mode, beam_size));
    return out;
}

double exact_match_rate(const std::vector<GeneratedCaption>& generated, const std::vector<ClipRecord>& clips) {
    if (generated.size() != clips.size() || clips.empty())
        throw Error(ErrorCode::AlignmentError, "generated and reference lists differ in length");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < clips.size(); ++i)
        if (split_whitespace(generated[i].caption) == split_whitespace(clips[i].caption)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(clips.size());
}

}  // namespace iavc
