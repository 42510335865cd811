#include "iavc/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "iavc/checkpoint.hpp"
#include "iavc/error.hpp"

namespace iavc {

namespace fs = std::filesystem;

const std::vector<Preset>& presets() {
    static const std::vector<Preset> table = {
        {"g", 5e-5, 768, 64},       {"q-0.5b", 7e-5, 896, 32}, {"q-1.5b", 5e-5, 1536, 32},
        {"q-3b", 1e-5, 2048, 8},    {"l-1b", 5e-5, 2048, 32},  {"l-3b", 7e-6, 3072, 8},
    };
    return table;
}

const Preset& find_preset(const std::string& name) {
    for (const auto& p : presets())
        if (p.name == name) return p;
    throw Error(ErrorCode::ConfigError, "unknown preset '" + name + "'");
}

void to_json(Json& j, const RunConfig& c) {
    j = Json::object();
    j["command"] = c.command;
    j["preset"] = c.preset;
    j["hyper"] = c.hyper;
    j["synth"] = c.synth;
    j["paths"] = Json{{"data", c.paths.data},           {"split", c.paths.split},
                      {"checkpoint", c.paths.checkpoint}, {"out", c.paths.out},
                      {"candidates", c.paths.candidates}, {"references", c.paths.references}};
    j["n_test_games"] = c.n_test_games;
    j["pin"] = Json{{"epochs", c.pin.epochs},
                    {"batch_size", c.pin.batch_size},
                    {"lr", c.pin.lr},
                    {"holdout_every", c.pin.holdout_every},
                    {"max_per_player", c.pin.max_per_player}};
    j["captioner"] = Json{{"epochs", c.captioner.epochs},
                          {"batch_size", c.captioner.batch_size},
                          {"lr", c.captioner.lr},
                          {"freeze_pin", c.captioner.freeze_pin}};
    j["flags"] = c.flags;
    j["subset"] = c.subset;
    j["ablate"] = Json{{"variants", c.ablate.variants},
                       {"d_down_grid", c.ablate.d_down_grid},
                       {"n_q_grid", c.ablate.n_q_grid}};
    j["eval"] = c.eval;
}

void from_json(const Json& j, RunConfig& c) {
    auto get = [](const Json& obj, const char* key, auto& field) {
        if (obj.contains(key)) obj.at(key).get_to(field);
    };
    get(j, "command", c.command);
    get(j, "preset", c.preset);
    get(j, "hyper", c.hyper);
    get(j, "synth", c.synth);
    if (j.contains("paths")) {
        const Json& p = j.at("paths");
        get(p, "data", c.paths.data);
        get(p, "split", c.paths.split);
        get(p, "checkpoint", c.paths.checkpoint);
        get(p, "out", c.paths.out);
        get(p, "candidates", c.paths.candidates);
        get(p, "references", c.paths.references);
    }
    get(j, "n_test_games", c.n_test_games);
    if (j.contains("pin")) {
        const Json& p = j.at("pin");
        get(p, "epochs", c.pin.epochs);
        get(p, "batch_size", c.pin.batch_size);
        get(p, "lr", c.pin.lr);
        get(p, "holdout_every", c.pin.holdout_every);
        get(p, "max_per_player", c.pin.max_per_player);
    }
    if (j.contains("captioner")) {
        const Json& p = j.at("captioner");
        get(p, "epochs", c.captioner.epochs);
        get(p, "batch_size", c.captioner.batch_size);
        get(p, "lr", c.captioner.lr);
        get(p, "freeze_pin", c.captioner.freeze_pin);
    }
    get(j, "flags", c.flags);
    get(j, "subset", c.subset);
    if (j.contains("ablate")) {
        const Json& a = j.at("ablate");
        get(a, "variants", c.ablate.variants);
        get(a, "d_down_grid", c.ablate.d_down_grid);
        get(a, "n_q_grid", c.ablate.n_q_grid);
    }
    get(j, "eval", c.eval);
}

namespace {

// Rejects keys the defaults do not know about, so typos fail loudly.
void check_keys(const Json& known, const Json& given, const std::string& where) {
    if (!given.is_object()) return;
    for (const auto& [key, value] : given.items()) {
        if (where.empty() && key == "seed") continue;
        if (!known.contains(key)) throw Error(ErrorCode::ConfigError, "unknown config key '" + where + key + "'");
        if (known.at(key).is_object()) check_keys(known.at(key), value, where + key + ".");
    }
}

}  // namespace

RunConfig resolve_config(const std::string& command, const Json& file_layer, const Json& cli_layer) {
    if (!file_layer.is_null() && !file_layer.is_object()) throw Error(ErrorCode::ConfigError, "config file must hold an object");
    Json merged = RunConfig{};
    check_keys(merged, file_layer, "");
    check_keys(merged, cli_layer, "");

    std::string preset;
    if (file_layer.contains("preset")) preset = file_layer.at("preset").get<std::string>();
    if (cli_layer.contains("preset")) preset = cli_layer.at("preset").get<std::string>();
    if (!preset.empty()) {
        const Preset& p = find_preset(preset);
        merged.merge_patch(Json{{"preset", p.name},
                                {"hyper", {{"d_time", 768}, {"d_down", 512}, {"n_q", 32}, {"d_llm", p.hidden}}},
                                {"captioner", {{"lr", p.lr}, {"batch_size", p.batch}}}});
    }
    if (file_layer.is_object()) merged.merge_patch(file_layer);
    if (cli_layer.is_object()) merged.merge_patch(cli_layer);
    if (merged.contains("seed")) {
        const Json seed = merged.at("seed");
        merged["hyper"]["seed"] = seed;
        merged["synth"]["seed"] = seed;
        merged.erase("seed");
    }
    merged["command"] = command;

    RunConfig cfg;
    try {
        cfg = merged.get<RunConfig>();
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
    cfg.hyper.validate();
    cfg.flags.validate();
    if (cfg.subset != "train" && cfg.subset != "test" && cfg.subset != "all")
        throw Error(ErrorCode::ConfigError, "subset must be train, test or all");
    return cfg;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::SchemaError, path + ": " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

AblationFlags parse_variant(const std::string& variant) {
    AblationFlags f;
    if (variant == "full") return f;
    std::stringstream ss(variant);
    std::string part;
    while (std::getline(ss, part, '+')) {
        if (part == "no_vclm") f.no_vclm = true;
        else if (part == "no_pin") f.no_pin = true;
        else if (part == "no_bsim") f.no_bsim = true;
        else if (part.starts_with("bsim_output=")) f.bsim_output = parse_bsim_output(part.substr(12));
        else throw Error(ErrorCode::ConfigError, "unknown variant part '" + part + "' in '" + variant + "'");
    }
    f.validate();
    return f;
}

LoadedData load_data(const RunConfig& cfg) {
    if (cfg.paths.data.empty()) throw Error(ErrorCode::ConfigError, "no annotations given (--data)");
    LoadedData d;
    d.records = load_annotations(cfg.paths.data);
    if (d.records.empty()) throw Error(ErrorCode::DataError, cfg.paths.data + " holds no clips");
    d.catalog = catalog_from_records(d.records);
    assign_labels(d.records, d.catalog);
    for (const auto& r : d.records) d.vocab.add_text(r.caption);
    for (const auto& n : d.catalog.names()) d.vocab.add_text(n);
    if (!cfg.paths.split.empty()) {
        d.split = read_json_file(cfg.paths.split).get<SplitSpec>();
        d.split.validate();
    } else {
        d.split = split_last_games(d.records, cfg.n_test_games);
    }
    return d;
}

namespace {

Json config_json(const RunConfig& cfg) { return Json(cfg); }

void say(const ProgressFn& progress, const std::string& line) {
    if (progress) progress(line);
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0) {
    char buf[128];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

std::string require_out(const RunConfig& cfg) {
    if (cfg.paths.out.empty()) throw Error(ErrorCode::ConfigError, cfg.command + " needs --out");
    return cfg.paths.out;
}

Checkpoint require_checkpoint(const RunConfig& cfg) {
    if (cfg.paths.checkpoint.empty())
        throw Error(ErrorCode::MissingCheckpoint, cfg.command + " needs --checkpoint");
    return load_checkpoint(cfg.paths.checkpoint);
}

std::string stage_of(const Checkpoint& c) { return c.meta.value("stage", std::string()); }

// A checkpoint fixes the geometry; decoding width stays a run knob.
void adopt_geometry(RunConfig& cfg, const HyperConfig& trained) {
    const std::size_t beam = cfg.hyper.beam_size;
    cfg.hyper = trained;
    cfg.hyper.beam_size = beam;
}

IavcModel model_from(const Checkpoint& c) {
    IavcModel m{c.cfg, c.store, c.catalog, c.vocab};
    return m;
}

void check_width(const RunConfig& cfg, const LoadedData& d) {
    const std::size_t w = d.records.front().video.cols();
    if (w != cfg.hyper.d_in)
        throw Error(ErrorCode::ConfigError, "data width " + std::to_string(w) + " differs from d_in " +
                                                std::to_string(cfg.hyper.d_in));
}

std::vector<ClipRecord> subset_of(const LoadedData& d, const std::string& which) {
    if (which == "all") return d.records;
    SplitResult s = split_by_game(d.records, d.split);
    return which == "train" ? s.train : s.test;
}

OptimizerState optimizer_state(const Adam& adam) { return {adam.options(), adam.steps(), adam.export_state()}; }

Adam restore_adam(const Checkpoint& c, double lr) {
    Adam adam(c.optimizer ? c.optimizer->options : AdamOptions{});
    adam.set_lr(lr);
    if (c.optimizer) adam.import_state(c.optimizer->moments, c.optimizer->steps);
    return adam;
}

Json epochs_json(const std::vector<EpochLog>& logs) {
    Json arr = Json::array();
    for (const auto& l : logs) arr.push_back(l);
    return arr;
}

CaptionTrainOptions caption_options(const RunConfig& cfg, const AblationFlags& flags) {
    CaptionTrainOptions o;
    o.epochs = cfg.captioner.epochs;
    o.batch_size = cfg.captioner.batch_size;
    o.freeze_pin = cfg.captioner.freeze_pin;
    o.flags = flags;
    return o;
}

EpochCallback epoch_printer(const ProgressFn& progress, const std::string& tag) {
    if (!progress) return {};
    return [progress, tag](const EpochLog& e) {
        std::string line = tag + " epoch " + std::to_string(e.epoch) + fmt(" loss %.6f", e.loss);
        if (e.mca) line += fmt(" mca %.4f mpca %.4f", *e.mca, *e.mpca);
        progress(line);
    };
}

struct MinMeanMax {
    double min = 0, mean = 0, max = 0;
};

MinMeanMax summarize(const std::vector<double>& xs) {
    MinMeanMax s;
    if (xs.empty()) return s;
    s.min = *std::min_element(xs.begin(), xs.end());
    s.max = *std::max_element(xs.begin(), xs.end());
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    return s;
}

Json mmm_json(const MinMeanMax& s) { return Json{{"min", s.min}, {"mean", s.mean}, {"max", s.max}}; }

std::vector<Json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::vector<Json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::parse_error& e) {
            throw Error(ErrorCode::SchemaError, path + ":" + std::to_string(n) + ": " + e.what());
        }
        if (!out.back().contains("video_id") || !out.back().contains("caption"))
            throw Error(ErrorCode::SchemaError, path + ":" + std::to_string(n) + ": needs video_id and caption");
    }
    return out;
}

}  // namespace

Json generated_to_json(const GeneratedCaption& g) {
    Json players = Json::array();
    for (const auto& p : g.identified) players.push_back(Json{{"name", p.name}, {"confidence", p.confidence}});
    return Json{{"video_id", g.video_id}, {"caption", g.caption}, {"identified_players", players}};
}

Json cmd_synth(const RunConfig& cfg) {
    const fs::path dir(require_out(cfg));
    const SynthDataset ds = synth_generate(cfg.synth);
    fs::create_directories(dir);
    const std::string ann = (dir / "annotations.jsonl").string();
    save_annotations(ann, ds.records);
    write_text_file((dir / "split.json").string(), dump_json(Json(ds.split)));
    const SplitResult parts = split_by_game(ds.records, ds.split);
    Json report{{"config", config_json(cfg)},
                {"files", {{"annotations", ann}, {"tensors", sidecar_path(ann)}, {"split", (dir / "split.json").string()}}},
                {"clips", ds.records.size()},
                {"train_clips", parts.train.size()},
                {"test_clips", parts.test.size()},
                {"train_games", ds.split.train_games.size()},
                {"test_games", ds.split.test_games.size()},
                {"players", ds.catalog.size()},
                {"vocab_size", ds.vocab.size()}};
    write_text_file((dir / "manifest.json").string(), dump_json(report));
    return report;
}

Json cmd_stats(const RunConfig& cfg) {
    const LoadedData d = load_data(cfg);
    const SplitResult parts = split_by_game(d.records, d.split);
    std::map<std::string, std::size_t> events, per_game;
    std::map<std::size_t, std::size_t> players_per_clip;
    std::vector<double> caption_len, frames, candidates;
    for (const auto& r : d.records) {
        ++events[r.event_type];
        ++per_game[r.game_id];
        ++players_per_clip[r.players.size()];
        caption_len.push_back(static_cast<double>(split_whitespace(r.caption).size()));
        frames.push_back(static_cast<double>(r.video.rows()));
        candidates.push_back(static_cast<double>(r.candidates.size()));
    }
    std::vector<double> clips_per_player;
    for (const auto& [name, entries] : build_player_centric_set(parts.train))
        clips_per_player.push_back(static_cast<double>(entries.size()));
    std::vector<double> game_sizes;
    for (const auto& [g, n] : per_game) game_sizes.push_back(static_cast<double>(n));

    Json ppc = Json::object();
    for (const auto& [k, n] : players_per_clip) ppc[std::to_string(k)] = n;
    return Json{{"config", config_json(cfg)},
                {"clips", d.records.size()},
                {"games", per_game.size()},
                {"players", d.catalog.size()},
                {"vocab_size", d.vocab.size()},
                {"train", {{"games", d.split.train_games.size()}, {"clips", parts.train.size()}}},
                {"test", {{"games", d.split.test_games.size()}, {"clips", parts.test.size()}}},
                {"event_types", events},
                {"players_per_clip", ppc},
                {"caption_tokens", mmm_json(summarize(caption_len))},
                {"video_frames", mmm_json(summarize(frames))},
                {"candidates_per_clip", mmm_json(summarize(candidates))},
                {"clips_per_game", mmm_json(summarize(game_sizes))},
                {"train_clips_per_player", mmm_json(summarize(clips_per_player))}};
}

Json cmd_train_pin(const RunConfig& resolved, const ProgressFn& progress) {
    RunConfig cfg = resolved;
    const std::string out = require_out(cfg);
    LoadedData d = load_data(cfg);

    std::optional<IavcModel> model;
    std::size_t start = 0;
    Adam adam(AdamOptions{cfg.pin.lr});
    if (!cfg.paths.checkpoint.empty()) {
        const Checkpoint c = load_checkpoint(cfg.paths.checkpoint);
        if (stage_of(c) != "pin") throw Error(ErrorCode::ConfigError, "train-pin resumes only from a PIN checkpoint");
        adopt_geometry(cfg, c.cfg);
        model = model_from(c);
        start = c.epoch;
        adam = restore_adam(c, cfg.pin.lr);
    } else {
        cfg.hyper.d_in = d.records.front().video.cols();
        model = IavcModel::create(cfg.hyper, d.catalog, d.vocab);
    }
    check_width(cfg, d);
    assign_labels(d.records, model->catalog);

    const SplitResult parts = split_by_game(d.records, d.split);
    const PinData data = pin_data(build_player_centric_set(parts.train), model->catalog, cfg.pin.holdout_every,
                                  cfg.pin.max_per_player);
    PinTrainOptions opts{cfg.pin.epochs, cfg.pin.batch_size};
    const auto logs = train_pin(*model, data, opts, adam, start, epoch_printer(progress, "pin"));

    Json report{{"config", config_json(cfg)},
                {"checkpoint", out},
                {"train_sequences", data.train.size()},
                {"heldout_sequences", data.heldout.size()},
                {"epochs", epochs_json(logs)}};
    Checkpoint c{model->cfg, model->catalog, model->vocab, model->store, optimizer_state(adam),
                 std::max(start, cfg.pin.epochs), Json{{"stage", "pin"}, {"run", report}}};
    save_checkpoint(out, c);
    return report;
}

Json cmd_train_captioner(const RunConfig& resolved, const ProgressFn& progress) {
    RunConfig cfg = resolved;
    const std::string out = require_out(cfg);
    const Checkpoint c = require_checkpoint(cfg);
    const std::string stage = stage_of(c);
    if (stage != "pin" && stage != "captioner")
        throw Error(ErrorCode::ConfigError, "checkpoint stage '" + stage + "' cannot seed captioner training");
    adopt_geometry(cfg, c.cfg);
    LoadedData d = load_data(cfg);
    check_width(cfg, d);
    IavcModel model = model_from(c);
    assign_labels(d.records, model.catalog);

    std::size_t start = 0;
    Adam adam(AdamOptions{cfg.captioner.lr});
    if (stage == "captioner") {
        AblationFlags trained = c.meta.at("flags").get<AblationFlags>();
        if (trained.label() != cfg.flags.label())
            throw Error(ErrorCode::InconsistentFlags, "checkpoint was trained as " + trained.label());
        start = c.epoch;
        adam = restore_adam(c, cfg.captioner.lr);
    }
    const SplitResult parts = split_by_game(d.records, d.split);
    const auto logs = train_captioner(model, parts.train, caption_options(cfg, cfg.flags), adam, start,
                                      epoch_printer(progress, "captioner"));

    Json report{{"config", config_json(cfg)},
                {"checkpoint", out},
                {"train_clips", parts.train.size()},
                {"epochs", epochs_json(logs)}};
    Checkpoint next{model.cfg, model.catalog, model.vocab, model.store, optimizer_state(adam),
                    std::max(start, cfg.captioner.epochs), Json{{"stage", "captioner"}, {"flags", cfg.flags}, {"run", report}}};
    save_checkpoint(out, next);
    return report;
}

Json cmd_generate(const RunConfig& resolved) {
    RunConfig cfg = resolved;
    const std::string out = require_out(cfg);
    const Checkpoint c = require_checkpoint(cfg);
    adopt_geometry(cfg, c.cfg);
    if (c.meta.contains("flags")) {
        const AblationFlags trained = c.meta.at("flags").get<AblationFlags>();
        if (trained.label() != cfg.flags.label())
            throw Error(ErrorCode::InconsistentFlags,
                        "checkpoint was trained as " + trained.label() + ", generate asked for " + cfg.flags.label());
    }
    LoadedData d = load_data(cfg);
    check_width(cfg, d);
    const IavcModel model = model_from(c);
    assign_labels(d.records, model.catalog);
    const auto clips = subset_of(d, cfg.subset);
    const auto generated = generate_captions(model, clips, cfg.flags, IdentityMode::Infer, cfg.hyper.beam_size);

    std::string lines;
    for (const auto& g : generated) lines += generated_to_json(g).dump() + "\n";
    write_text_file(out, lines);
    Json run{{"config", config_json(cfg)}, {"output", out}, {"clips", generated.size()}};
    write_text_file(out + ".run.json", dump_json(run));
    return run;
}

Json cmd_eval(const RunConfig& cfg) {
    if (cfg.paths.candidates.empty() || cfg.paths.references.empty())
        throw Error(ErrorCode::ConfigError, "eval needs --candidates and --references");
    const auto cands = read_jsonl(cfg.paths.candidates);
    const auto refs = read_jsonl(cfg.paths.references);

    std::map<std::string, const Json*> by_id;
    for (const auto& c : cands)
        if (!by_id.emplace(c.at("video_id").get<std::string>(), &c).second)
            throw Error(ErrorCode::AlignmentError, "candidate video_id repeated: " + c.at("video_id").get<std::string>());
    std::set<std::string> ref_ids;
    for (const auto& r : refs) ref_ids.insert(r.at("video_id").get<std::string>());
    if (ref_ids.size() != refs.size()) throw Error(ErrorCode::AlignmentError, "reference video_id repeated");
    for (const auto& [id, _] : by_id)
        if (!ref_ids.contains(id)) throw Error(ErrorCode::AlignmentError, "no reference for " + id);
    for (const auto& id : ref_ids)
        if (!by_id.contains(id)) throw Error(ErrorCode::AlignmentError, "no candidate for " + id);

    std::vector<EvalPair> pairs;
    bool labelled = true;
    for (const auto& r : refs) {
        const std::string id = r.at("video_id").get<std::string>();
        const Json& c = *by_id.at(id);
        pairs.push_back({id, c.at("caption").get<std::string>(), {r.at("caption").get<std::string>()},
                         r.value("event_type", std::string())});
        labelled = labelled && c.contains("identified_players") && r.contains("players");
    }
    EvalReport report = evaluate_corpus(pairs, cfg.eval);

    if (labelled) {
        // Each annotated player counts as correct when the generator named it;
        // otherwise it is charged to the first unmatched identified name.
        PlayerCatalog classes;
        std::vector<int> preds, truth;
        classes.add(std::string(kNoneName));
        for (const auto& r : refs) {
            const Json& c = *by_id.at(r.at("video_id").get<std::string>());
            std::vector<std::string> named, annotated;
            for (const auto& p : c.at("identified_players")) named.push_back(p.at("name").get<std::string>());
            for (const auto& p : r.at("players")) annotated.push_back(p.at("name").get<std::string>());
            std::vector<bool> used(named.size(), false);
            for (const auto& a : annotated) {
                auto hit = std::find(named.begin(), named.end(), a);
                if (hit != named.end()) used[hit - named.begin()] = true;
            }
            for (const auto& a : annotated) {
                truth.push_back(classes.add(a));
                if (std::find(named.begin(), named.end(), a) != named.end()) {
                    preds.push_back(truth.back());
                    continue;
                }
                int pred = classes.index_of(kNoneName);
                for (std::size_t i = 0; i < named.size(); ++i)
                    if (!used[i] && std::find(annotated.begin(), annotated.end(), named[i]) == annotated.end()) {
                        used[i] = true;
                        pred = classes.add(named[i]);
                        break;
                    }
                preds.push_back(pred);
            }
        }
        if (!truth.empty()) {
            const ClassAccuracy acc = mca_mpca(preds, truth);
            report.mca = acc.mca;
            report.mpca = acc.mpca;
        }
    }
    return report_to_json(report, config_json(cfg));
}

Json cmd_ablate(const RunConfig& resolved, const ProgressFn& progress) {
    RunConfig cfg = resolved;
    std::vector<std::pair<std::string, AblationFlags>> variants;
    for (const auto& v : cfg.ablate.variants) variants.emplace_back(v, parse_variant(v));

    LoadedData d = load_data(cfg);
    std::optional<IavcModel> base;
    Json pin_log = Json::object();
    if (!cfg.paths.checkpoint.empty()) {
        const Checkpoint c = load_checkpoint(cfg.paths.checkpoint);
        adopt_geometry(cfg, c.cfg);
        base = model_from(c);
        pin_log["checkpoint"] = cfg.paths.checkpoint;
    } else {
        cfg.hyper.d_in = d.records.front().video.cols();
        base = IavcModel::create(cfg.hyper, d.catalog, d.vocab);
    }
    check_width(cfg, d);
    assign_labels(d.records, base->catalog);
    const SplitResult parts = split_by_game(d.records, d.split);
    if (parts.test.empty()) throw Error(ErrorCode::DataError, "ablation needs test clips");

    if (cfg.paths.checkpoint.empty()) {
        Adam adam(AdamOptions{cfg.pin.lr});
        const PinData data = pin_data(build_player_centric_set(parts.train), base->catalog, cfg.pin.holdout_every,
                                      cfg.pin.max_per_player);
        const auto logs = train_pin(*base, data, {cfg.pin.epochs, cfg.pin.batch_size}, adam, 0,
                                    epoch_printer(progress, "pin"));
        pin_log["epochs"] = logs.size();
        if (!logs.empty() && logs.back().mca) {
            pin_log["mca"] = *logs.back().mca;
            pin_log["mpca"] = *logs.back().mpca;
        }
    }

    struct Row {
        std::string name;
        AblationFlags flags;
        std::size_t d_down, n_q;
    };
    std::vector<Row> rows;
    for (const auto& [name, f] : variants) rows.push_back({name, f, base->cfg.d_down, base->cfg.n_q});
    for (std::size_t dd : cfg.ablate.d_down_grid) rows.push_back({"d_down=" + std::to_string(dd), {}, dd, base->cfg.n_q});
    for (std::size_t q : cfg.ablate.n_q_grid) rows.push_back({"n_q=" + std::to_string(q), {}, base->cfg.d_down, q});

    Json table = Json::array();
    for (const auto& row : rows) {
        HyperConfig h = base->cfg;
        h.d_down = row.d_down;
        h.n_q = row.n_q;
        h.validate();
        IavcModel m = IavcModel::create(h, base->catalog, base->vocab);
        for (auto& [name, e] : m.store)
            if (name.starts_with("pin.")) e.value = base->store.value(name);
        Adam adam(AdamOptions{cfg.captioner.lr});
        const auto logs = train_captioner(m, parts.train, caption_options(cfg, row.flags), adam, 0,
                                          epoch_printer(progress, row.name));
        const auto generated = generate_captions(m, parts.test, row.flags, IdentityMode::Infer, h.beam_size);
        std::vector<EvalPair> pairs;
        for (std::size_t i = 0; i < generated.size(); ++i)
            pairs.push_back({generated[i].video_id, generated[i].caption, {parts.test[i].caption}, parts.test[i].event_type});
        const EvalReport rep = evaluate_corpus(pairs, cfg.eval);
        const double exact = exact_match_rate(generated, parts.test);
        table.push_back(Json{{"variant", row.name},
                             {"flags", row.flags},
                             {"d_down", row.d_down},
                             {"n_q", row.n_q},
                             {"final_loss", logs.empty() ? 0.0 : logs.back().loss},
                             {"bleu4", rep.corpus.bleu4},
                             {"rouge_l", rep.corpus.rouge_l},
                             {"meteor", rep.corpus.meteor},
                             {"cider", rep.corpus.cider},
                             {"exact_match", exact}});
        say(progress, row.name + fmt(" cider %.4f bleu4 %.4f exact %.4f", rep.corpus.cider, rep.corpus.bleu4, exact));
    }
    return Json{{"config", config_json(cfg)},
                {"train_clips", parts.train.size()},
                {"test_clips", parts.test.size()},
                {"pin", pin_log},
                {"rows", table}};
}

}  // namespace iavc
