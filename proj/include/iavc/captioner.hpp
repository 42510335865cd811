#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iavc/autograd.hpp"
#include "iavc/config.hpp"
#include "iavc/params.hpp"
#include "iavc/records.hpp"

namespace iavc {

// Whitespace-token vocabulary. Ids 0-3 are reserved.
class Vocabulary {
public:
    static constexpr int kBos = 0;
    static constexpr int kEos = 1;
    static constexpr int kPad = 2;
    static constexpr int kNone = 3;

    Vocabulary();
    explicit Vocabulary(const std::vector<std::string>& tokens);  // full table, reserved first

    int add(const std::string& token);
    void add_text(std::string_view text);
    int id(std::string_view token) const;  // throws UnknownToken
    bool contains(std::string_view token) const;
    const std::string& token(int id) const;
    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    std::vector<int> encode(std::string_view text) const;
    // Drops reserved ids and joins with single spaces.
    std::string decode(std::span<const int> ids) const;

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

std::vector<std::string> split_whitespace(std::string_view text);

// Decoder stand-in for the language model plus the prompt projections and the
// frame-feature embedding:
//   dec.tok [V x d_llm], dec.b<i>.{ln1,attn,ln2,ffn}, dec.ln_f, dec.head
//   proj.context, proj.video, proj.player (d_time -> d_llm), proj.name (d_llm -> d_llm)
//   video.embed (d_in -> d_time)
void init_captioner(ParameterStore& store, const HyperConfig& cfg, std::size_t vocab_size, Rng& rng);

// One row per name: the mean of its token embeddings, zeros for "<none>".
Var embed_names(Graph& g, const ParameterStore& store, const Vocabulary& vocab, std::span<const std::string> names);

struct PromptSpan {
    std::string segment;  // context, video, player or name
    std::size_t begin = 0;
    std::size_t count = 0;
};

struct MultimodalPrompt {
    Var rows;  // [rows x d_llm]
    std::vector<PromptSpan> spans;

    std::size_t row_count() const { return rows.rows(); }
    const PromptSpan* span(std::string_view segment) const;
};

// Projects and concatenates the present segments in the order
// context, video, player, name. At least one segment is required.
MultimodalPrompt assemble_prompt(Graph& g, const ParameterStore& store, std::optional<Var> v_c,
                                 std::optional<Var> v_bsi, std::optional<Var> f_bsi, std::optional<Var> e_k);

// Causal transformer over [prompt rows ; token embeddings + positions].
// Returns logits [tokens x V]; row t predicts token t+1. Throws
// LengthCapExceeded when more than max_len + 1 tokens are supplied.
Var decoder_forward(Graph& g, const ParameterStore& store, const HyperConfig& cfg, const MultimodalPrompt& prompt,
                    std::span<const int> tokens);

// Sum of next-token cross entropies for targets [<bos>, w1 .. wn, <eos>];
// <pad> targets are skipped.
Var caption_loss(Graph& g, const ParameterStore& store, const HyperConfig& cfg, const MultimodalPrompt& prompt,
                 std::span<const int> targets);

struct CaptionHypothesis {
    std::vector<int> tokens;  // starts with <bos>
    double log_prob = 0.0;
    bool finished = false;
};

// Next-token logits for a prefix that starts with <bos>.
using NextLogits = std::function<std::vector<double>(std::span<const int> prefix)>;

// Length-capped beam search over cumulative log-probability. Each step ranks
// every one-token extension by score (ties by lexicographic token ids) and
// walks that ranking until beam_size unfinished hypotheses are kept; finished
// ones passed on the way are collected. A hypothesis finishes on <eos> or
// after max_len generated tokens.
CaptionHypothesis beam_search(const NextLogits& next, std::size_t beam_size, std::size_t max_len,
                              int bos = Vocabulary::kBos, int eos = Vocabulary::kEos);
CaptionHypothesis greedy_decode(const NextLogits& next, std::size_t max_len, int bos = Vocabulary::kBos,
                                int eos = Vocabulary::kEos);

std::vector<double> log_softmax(std::span<const double> logits);

// Beam search driven by decoder_forward on a fixed prompt. Returns the body
// ids with <bos> and <eos> removed.
std::vector<int> generate(const ParameterStore& store, const HyperConfig& cfg, const Tensor& prompt_rows,
                          std::size_t beam_size, std::size_t max_len);

}  // namespace iavc
