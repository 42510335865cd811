#pragma once

#include <string>
#include <vector>

#include "iavc/captioner.hpp"
#include "iavc/config.hpp"
#include "iavc/identity.hpp"
#include "iavc/params.hpp"
#include "iavc/records.hpp"

namespace iavc {

enum class BsimOutputMode { Video, Player, Both };

std::string to_string(BsimOutputMode m);
BsimOutputMode parse_bsim_output(const std::string& s);  // throws ConfigError

struct AblationFlags {
    bool no_vclm = false;
    bool no_pin = false;
    bool no_bsim = false;
    BsimOutputMode bsim_output = BsimOutputMode::Both;

    bool bsim_active() const { return !no_bsim && !no_pin; }
    // Throws InconsistentFlags when a partial BSIM output is requested while
    // BSIM is not running.
    void validate() const;
    std::string label() const;
};

void to_json(Json& j, const AblationFlags& f);
void from_json(const Json& j, AblationFlags& f);

// Everything a captioning run needs: geometry, parameters and the two
// symbol tables.
struct IavcModel {
    HyperConfig cfg;
    ParameterStore store;
    PlayerCatalog catalog;
    Vocabulary vocab;

    // Creates every parameter group with one seeded generator.
    static IavcModel create(const HyperConfig& cfg, PlayerCatalog catalog, Vocabulary vocab);
};

struct PromptBuild {
    MultimodalPrompt prompt;
    IdentityRows identity;
};

// Video embedding -> identity rows -> BSIM -> VCLM -> name rows -> prompt,
// with spans dropped or bypassed according to the flags.
PromptBuild build_prompt(Graph& g, const IavcModel& model, const ClipRecord& clip, IdentityMode identity_mode,
                         const AblationFlags& flags, Mode mode, Rng& rng);

// Teacher-forced loss of the clip's caption.
Var clip_caption_loss(Graph& g, const IavcModel& model, const ClipRecord& clip, const AblationFlags& flags, Rng& rng);

std::vector<int> caption_targets(const Vocabulary& vocab, const std::string& caption, std::size_t max_len);

struct GeneratedCaption {
    std::string video_id;
    std::string caption;
    std::vector<IdentifiedPlayer> identified;
};

GeneratedCaption caption_clip(const IavcModel& model, const ClipRecord& clip, const AblationFlags& flags,
                              IdentityMode identity_mode, std::size_t beam_size);

}  // namespace iavc
