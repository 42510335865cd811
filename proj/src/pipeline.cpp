#include "iavc/pipeline.hpp"

#include "iavc/error.hpp"
#include "iavc/nn.hpp"
#include "iavc/vclm.hpp"

namespace iavc {

std::string to_string(BsimOutputMode m) {
    switch (m) {
        case BsimOutputMode::Video: return "video";
        case BsimOutputMode::Player: return "player";
        case BsimOutputMode::Both: return "both";
    }
    return "both";
}

BsimOutputMode parse_bsim_output(const std::string& s) {
    if (s == "video") return BsimOutputMode::Video;
    if (s == "player") return BsimOutputMode::Player;
    if (s == "both") return BsimOutputMode::Both;
    throw Error(ErrorCode::ConfigError, "bsim_output must be video, player or both, got '" + s + "'");
}

void AblationFlags::validate() const {
    if (bsim_output != BsimOutputMode::Both && !bsim_active()) {
        throw Error(ErrorCode::InconsistentFlags, "bsim_output=" + to_string(bsim_output) + " requires BSIM");
    }
}

std::string AblationFlags::label() const {
    std::string s;
    auto part = [&](const std::string& p) { s += s.empty() ? p : "+" + p; };
    if (no_vclm) part("no_vclm");
    if (no_pin) part("no_pin");
    if (no_bsim) part("no_bsim");
    if (bsim_output != BsimOutputMode::Both) part("bsim_output=" + to_string(bsim_output));
    return s.empty() ? "full" : s;
}

void to_json(Json& j, const AblationFlags& f) {
    j = Json{{"no_vclm", f.no_vclm}, {"no_pin", f.no_pin}, {"no_bsim", f.no_bsim},
             {"bsim_output", to_string(f.bsim_output)}};
}

void from_json(const Json& j, AblationFlags& f) {
    if (j.contains("no_vclm")) j.at("no_vclm").get_to(f.no_vclm);
    if (j.contains("no_pin")) j.at("no_pin").get_to(f.no_pin);
    if (j.contains("no_bsim")) j.at("no_bsim").get_to(f.no_bsim);
    if (j.contains("bsim_output")) f.bsim_output = parse_bsim_output(j.at("bsim_output").get<std::string>());
}

IavcModel IavcModel::create(const HyperConfig& cfg, PlayerCatalog catalog, Vocabulary vocab) {
    cfg.validate();
    IavcModel m{cfg, {}, std::move(catalog), std::move(vocab)};
    Rng rng(cfg.seed);
    init_pin(m.store, cfg, m.catalog.size(), rng);
    init_bsim(m.store, cfg, rng);
    init_vclm(m.store, cfg, rng);
    init_captioner(m.store, cfg, m.vocab.size(), rng);
    return m;
}

PromptBuild build_prompt(Graph& g, const IavcModel& model, const ClipRecord& clip, IdentityMode identity_mode,
                         const AblationFlags& flags, Mode mode, Rng& rng) {
    flags.validate();
    const auto& cfg = model.cfg;
    if (clip.video.empty()) throw Error(ErrorCode::DataError, "clip " + clip.video_id + " has no video features");
    PromptBuild out;
    Var v_v = nn::linear(g, model.store, "video.embed", g.constant(clip.video));

    std::optional<Var> v_c, v_bsi = v_v, f_bsi, e_k;
    if (!flags.no_vclm) v_c = vclm_forward(g, model.store, cfg, v_v);
    if (!flags.no_pin) {
        out.identity = build_identity_embeddings(g, clip, identity_mode, cfg.k_players, model.store, cfg, model.catalog);
        f_bsi = out.identity.features;
        if (flags.bsim_active()) {
            const BsimOutput b = bsim_forward(g, model.store, cfg, v_v, out.identity.features, mode, rng);
            if (flags.bsim_output != BsimOutputMode::Player) v_bsi = b.v_bsi;
            if (flags.bsim_output != BsimOutputMode::Video) f_bsi = b.f_bsi;
        }
        e_k = embed_names(g, model.store, model.vocab, out.identity.names);
    }
    out.prompt = assemble_prompt(g, model.store, v_c, v_bsi, f_bsi, e_k);
    return out;
}

std::vector<int> caption_targets(const Vocabulary& vocab, const std::string& caption, std::size_t max_len) {
    std::vector<int> ids = vocab.encode(caption);
    if (ids.size() > max_len) {
        throw Error(ErrorCode::LengthCapExceeded,
                    "caption has " + std::to_string(ids.size()) + " tokens, cap is " + std::to_string(max_len));
    }
    ids.insert(ids.begin(), Vocabulary::kBos);
    ids.push_back(Vocabulary::kEos);
    return ids;
}

Var clip_caption_loss(Graph& g, const IavcModel& model, const ClipRecord& clip, const AblationFlags& flags, Rng& rng) {
    const PromptBuild p = build_prompt(g, model, clip, IdentityMode::Train, flags, Mode::Train, rng);
    return caption_loss(g, model.store, model.cfg, p.prompt, caption_targets(model.vocab, clip.caption, model.cfg.max_len));
}

GeneratedCaption caption_clip(const IavcModel& model, const ClipRecord& clip, const AblationFlags& flags,
                              IdentityMode identity_mode, std::size_t beam_size) {
    Graph g(false);
    Rng rng(model.cfg.seed);
    const PromptBuild p = build_prompt(g, model, clip, identity_mode, flags, Mode::Infer, rng);
    const std::vector<int> ids = generate(model.store, model.cfg, p.prompt.rows.value(), beam_size, model.cfg.max_len);
    return {clip.video_id, model.vocab.decode(ids), p.identity.identified};
}

}  // namespace iavc
