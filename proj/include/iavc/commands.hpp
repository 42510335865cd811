#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iavc/config.hpp"
#include "iavc/data.hpp"
#include "iavc/metrics.hpp"
#include "iavc/pipeline.hpp"
#include "iavc/synth.hpp"
#include "iavc/train.hpp"

namespace iavc {

// Named decoder rows with their learning rate, hidden size and batch size.
// Forcing one also switches the geometry to full size (d_time 768,
// d_down 512, n_q 32).
struct Preset {
    std::string name;
    double lr;
    std::size_t hidden;
    std::size_t batch;
};

const std::vector<Preset>& presets();
const Preset& find_preset(const std::string& name);  // throws ConfigError

struct PathConfig {
    std::string data;        // annotations JSONL with its .tensors sidecar
    std::string split;       // split JSON; empty means the last n_test_games games
    std::string checkpoint;  // input checkpoint
    std::string out;
    std::string candidates;  // eval: generated JSONL
    std::string references;  // eval: annotations JSONL (tensors not needed)
};

struct PinRunConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    double lr = 5e-5;
    std::size_t holdout_every = 5;
    std::size_t max_per_player = 0;
};

struct CaptionRunConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    bool freeze_pin = true;
};

struct AblateConfig {
    std::vector<std::string> variants = {"full", "no_bsim", "no_pin", "no_pin+no_vclm",
                                         "bsim_output=video", "bsim_output=player"};
    std::vector<std::size_t> d_down_grid = {128, 256, 512, 768};
    std::vector<std::size_t> n_q_grid = {8, 16, 32, 64};
};

struct RunConfig {
    std::string command;
    std::string preset;  // empty keeps the desk-scale geometry
    HyperConfig hyper;
    SynthConfig synth;
    PathConfig paths;
    std::size_t n_test_games = 5;
    PinRunConfig pin;
    CaptionRunConfig captioner;
    AblationFlags flags;
    std::string subset = "test";  // generate: train | test | all
    AblateConfig ablate;
    EvalConfig eval;
};

void to_json(Json& j, const RunConfig& c);
void from_json(const Json& j, RunConfig& c);

// Built-in defaults, then the preset, then the config file, then the command
// line overrides. Each layer is a JSON merge patch over the previous one; a
// top-level "seed" sets both the model and the synthetic-data seed.
RunConfig resolve_config(const std::string& command, const Json& file_layer, const Json& cli_layer);

Json read_json_file(const std::string& path);          // throws IoError, SchemaError
void write_text_file(const std::string& path, const std::string& text);  // throws IoError
std::string dump_json(const Json& j);                  // indented, trailing newline

// "full" or '+'-joined parts: no_vclm, no_pin, no_bsim, bsim_output=<video|player|both>.
AblationFlags parse_variant(const std::string& variant);  // throws ConfigError, InconsistentFlags

struct LoadedData {
    std::vector<ClipRecord> records;
    SplitSpec split;
    PlayerCatalog catalog;
    Vocabulary vocab;
};

LoadedData load_data(const RunConfig& cfg);

using ProgressFn = std::function<void(const std::string&)>;

// Each command returns its report with the resolved config under "config".
Json cmd_synth(const RunConfig& cfg);  // writes annotations, tensors and split under paths.out
Json cmd_stats(const RunConfig& cfg);
Json cmd_train_pin(const RunConfig& cfg, const ProgressFn& progress = {});
Json cmd_train_captioner(const RunConfig& cfg, const ProgressFn& progress = {});
// Writes JSON Lines to paths.out and returns the run record.
Json cmd_generate(const RunConfig& cfg);
Json cmd_eval(const RunConfig& cfg);
Json cmd_ablate(const RunConfig& cfg, const ProgressFn& progress = {});

// Generated JSONL line for one clip.
Json generated_to_json(const GeneratedCaption& g);

}  // namespace iavc
