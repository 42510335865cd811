#include <chrono>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iavc/commands.hpp"
#include "iavc/error.hpp"

namespace {

using iavc::Json;

// Collects command-line values as a JSON layer over the config file.
class Layer {
public:
    template <typename T>
    void option(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
        app->add_option_function<T>(
            flag, [this, pointer](const T& v) { json_[Json::json_pointer(pointer)] = v; }, help);
    }
    void flag(CLI::App* app, const std::string& name, const std::string& pointer, bool value, const std::string& help) {
        app->add_flag_function(
            name, [this, pointer, value](std::int64_t) { json_[Json::json_pointer(pointer)] = value; }, help);
    }
    const Json& json() const { return json_; }

private:
    Json json_ = Json::object();
};

void ablation_flags(Layer& L, CLI::App* app) {
    L.flag(app, "--no-pin", "/flags/no_pin", true, "drop identity information");
    L.flag(app, "--no-vclm", "/flags/no_vclm", true, "drop the video context span");
    L.flag(app, "--no-bsim", "/flags/no_bsim", true, "bypass the interaction module");
    L.option<std::string>(app, "--bsim-output", "/flags/bsim_output", "video, player or both");
}

void data_options(Layer& L, CLI::App* app) {
    L.option<std::string>(app, "--data", "/paths/data", "annotations JSONL (tensors in <path>.tensors)");
    L.option<std::string>(app, "--split", "/paths/split", "split JSON; default holds out the last games");
    L.option<std::size_t>(app, "--test-games", "/n_test_games", "games held out when no split file is given");
}

void emit(const Json& report, const std::string& out) {
    if (out.empty())
        std::cout << iavc::dump_json(report);
    else
        iavc::write_text_file(out, iavc::dump_json(report));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Identity-aware sports video captioning"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    Layer L;
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    L.option<std::uint64_t>(&app, "--seed", "/seed", "seed for model init, shuffling and synthetic data");
    L.option<std::string>(&app, "--preset", "/preset", "g, q-0.5b, q-1.5b, q-3b, l-1b or l-3b");
    L.option<std::string>(&app, "--out", "/paths/out", "output path");
    bool quiet = false;
    app.add_flag("--quiet", quiet, "no progress lines on stderr");

    auto* synth = app.add_subcommand("synth", "generate a synthetic annotated dataset into --out");
    L.option<std::size_t>(synth, "--games", "/synth/n_games", "number of games");
    L.option<std::size_t>(synth, "--test-games", "/synth/n_test_games", "games held out for testing");
    L.option<std::size_t>(synth, "--players", "/synth/n_players", "player identities");
    L.option<std::size_t>(synth, "--clips-per-game", "/synth/clips_per_game", "clips per game");
    L.option<std::size_t>(synth, "--total-clips", "/synth/total_clips", "total clips, spread over games");
    L.option<double>(synth, "--sigma", "/synth/noise_sigma", "player sequence noise");
    L.option<std::size_t>(synth, "--distractors", "/synth/distractors", "extra tracker sequences per clip");

    auto* stats = app.add_subcommand("stats", "corpus statistics");
    data_options(L, stats);

    auto* tpin = app.add_subcommand("train-pin", "train the player identification network");
    data_options(L, tpin);
    L.option<std::string>(tpin, "--checkpoint", "/paths/checkpoint", "resume from this PIN checkpoint");
    L.option<std::size_t>(tpin, "--epochs", "/pin/epochs", "epochs");
    L.option<std::size_t>(tpin, "--batch", "/pin/batch_size", "batch size");
    L.option<double>(tpin, "--lr", "/pin/lr", "Adam learning rate");
    L.option<std::size_t>(tpin, "--holdout-every", "/pin/holdout_every", "hold out every n-th sequence per player");
    L.option<std::size_t>(tpin, "--max-per-player", "/pin/max_per_player", "cap sequences per player (0 = all)");

    auto* tcap = app.add_subcommand("train-captioner", "train the captioner on top of a PIN checkpoint");
    data_options(L, tcap);
    L.option<std::string>(tcap, "--checkpoint", "/paths/checkpoint", "PIN or captioner checkpoint");
    L.option<std::size_t>(tcap, "--epochs", "/captioner/epochs", "epochs");
    L.option<std::size_t>(tcap, "--batch", "/captioner/batch_size", "batch size");
    L.option<double>(tcap, "--lr", "/captioner/lr", "Adam learning rate");
    L.flag(tcap, "--joint", "/captioner/freeze_pin", false, "also update the PIN");
    ablation_flags(L, tcap);

    auto* gen = app.add_subcommand("generate", "caption clips, writing JSON Lines to --out");
    data_options(L, gen);
    L.option<std::string>(gen, "--checkpoint", "/paths/checkpoint", "captioner checkpoint");
    L.option<std::string>(gen, "--subset", "/subset", "train, test or all");
    L.option<std::size_t>(gen, "--beam", "/hyper/beam_size", "beam width");
    L.option<std::size_t>(gen, "--top-k", "/hyper/k_players", "player sequences kept per clip");
    ablation_flags(L, gen);

    auto* eval = app.add_subcommand("eval", "score generated captions against references");
    L.option<std::string>(eval, "--candidates", "/paths/candidates", "generated JSONL");
    L.option<std::string>(eval, "--references", "/paths/references", "annotations JSONL");
    L.flag(eval, "--bleu-smooth", "/eval/bleu_smooth", true, "add-one smoothing for BLEU");

    auto* ablate = app.add_subcommand("ablate", "train and score each ablation variant");
    data_options(L, ablate);
    L.option<std::string>(ablate, "--checkpoint", "/paths/checkpoint", "base checkpoint providing the PIN");
    L.option<std::vector<std::string>>(ablate, "--variants", "/ablate/variants", "e.g. full no_pin no_pin+no_vclm");
    L.option<std::vector<std::size_t>>(ablate, "--d-down-grid", "/ablate/d_down_grid", "bottleneck widths");
    L.option<std::vector<std::size_t>>(ablate, "--n-q-grid", "/ablate/n_q_grid", "context query counts");
    L.option<std::size_t>(ablate, "--pin-epochs", "/pin/epochs", "PIN epochs when no checkpoint is given");
    L.option<double>(ablate, "--pin-lr", "/pin/lr", "PIN learning rate");
    L.option<std::size_t>(ablate, "--epochs", "/captioner/epochs", "captioner epochs per variant");
    L.option<double>(ablate, "--lr", "/captioner/lr", "captioner learning rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const CLI::App* sub = app.get_subcommands().front();
        const std::string command = sub->get_name();
        const Json file_layer = config_path.empty() ? Json::object() : iavc::read_json_file(config_path);
        const iavc::RunConfig cfg = iavc::resolve_config(command, file_layer, L.json());
        iavc::ProgressFn progress;
        if (!quiet) progress = [](const std::string& line) { std::cerr << line << std::endl; };

        if (command == "synth") {
            std::cout << iavc::dump_json(iavc::cmd_synth(cfg));
        } else if (command == "stats") {
            emit(iavc::cmd_stats(cfg), cfg.paths.out);
        } else if (command == "train-pin") {
            std::cout << iavc::dump_json(iavc::cmd_train_pin(cfg, progress));
        } else if (command == "train-captioner") {
            std::cout << iavc::dump_json(iavc::cmd_train_captioner(cfg, progress));
        } else if (command == "generate") {
            const auto t0 = std::chrono::steady_clock::now();
            const Json run = iavc::cmd_generate(cfg);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (progress && run.at("clips").get<std::size_t>() > 0)
                progress("seconds per caption (including loading): " +
                         std::to_string(secs / run.at("clips").get<double>()));
            std::cout << iavc::dump_json(run);
        } else if (command == "eval") {
            emit(iavc::cmd_eval(cfg), cfg.paths.out);
        } else if (command == "ablate") {
            emit(iavc::cmd_ablate(cfg, progress), cfg.paths.out);
        }
    } catch (const iavc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
