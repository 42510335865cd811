#include "iavc/captioner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "iavc/error.hpp"
#include "iavc/nn.hpp"

namespace iavc {

namespace {

const std::vector<std::string>& reserved_tokens() {
    static const std::vector<std::string> r = {"<bos>", "<eos>", "<pad>", "<none>"};
    return r;
}

std::string block(std::size_t i, const char* leaf) { return "dec.b" + std::to_string(i) + "." + leaf; }

bool ranks_before(const CaptionHypothesis& a, const CaptionHypothesis& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.tokens < b.tokens;
}

}  // namespace

Vocabulary::Vocabulary() {
    for (const auto& t : reserved_tokens()) add(t);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
    if (tokens.size() < reserved_tokens().size() ||
        !std::equal(reserved_tokens().begin(), reserved_tokens().end(), tokens.begin())) {
        throw Error(ErrorCode::SchemaError, "vocabulary must start with the reserved tokens");
    }
    for (const auto& t : tokens) {
        if (contains(t)) throw Error(ErrorCode::SchemaError, "duplicate vocabulary token '" + t + "'");
        add(t);
    }
}

int Vocabulary::add(const std::string& token) {
    if (auto it = index_.find(token); it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
}

void Vocabulary::add_text(std::string_view text) {
    for (const auto& t : split_whitespace(text)) add(t);
}

int Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) throw Error(ErrorCode::UnknownToken, "token '" + std::string(token) + "' not in vocabulary");
    return it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& t : split_whitespace(text)) ids.push_back(id(t));
    return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
    std::string out;
    for (int i : ids) {
        if (i >= 0 && i < static_cast<int>(reserved_tokens().size())) continue;
        if (!out.empty()) out += ' ';
        out += token(i);
    }
    return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

void init_captioner(ParameterStore& store, const HyperConfig& cfg, std::size_t vocab_size, Rng& rng) {
    const std::size_t d = cfg.d_llm;
    store.add("dec.tok", Tensor::normal({vocab_size, d}, 0.0, 0.02, rng));
    for (std::size_t i = 0; i < cfg.decoder_layers; ++i) {
        nn::init_layer_norm(store, block(i, "ln1"), d);
        nn::init_attention(store, block(i, "attn"), d, true, rng);
        nn::init_layer_norm(store, block(i, "ln2"), d);
        nn::init_two_layer(store, block(i, "ffn"), d, 4 * d, d, rng);
    }
    nn::init_layer_norm(store, "dec.ln_f", d);
    nn::init_linear(store, "dec.head", d, vocab_size, true, rng);
    nn::init_linear(store, "proj.context", cfg.d_time, d, true, rng);
    nn::init_linear(store, "proj.video", cfg.d_time, d, true, rng);
    nn::init_linear(store, "proj.player", cfg.d_time, d, true, rng);
    nn::init_linear(store, "proj.name", d, d, true, rng);
    nn::init_linear(store, "video.embed", cfg.d_in, cfg.d_time, true, rng);
}

Var embed_names(Graph& g, const ParameterStore& store, const Vocabulary& vocab, std::span<const std::string> names) {
    if (names.empty()) throw Error(ErrorCode::EmptyInput, "no names to embed");
    Var table = g.param(store, "dec.tok");
    std::vector<Var> rows;
    rows.reserve(names.size());
    for (const auto& name : names) {
        if (name == kNoneName) {
            rows.push_back(g.constant(Tensor::matrix(1, table.cols())));
            continue;
        }
        const std::vector<int> ids = vocab.encode(name);
        if (ids.empty()) throw Error(ErrorCode::UnknownToken, "empty player name");
        rows.push_back(mean_rows(gather_rows(table, ids)));
    }
    return rows.size() == 1 ? rows.front() : concat_rows(rows);
}

const PromptSpan* MultimodalPrompt::span(std::string_view segment) const {
    for (const auto& s : spans)
        if (s.segment == segment) return &s;
    return nullptr;
}

MultimodalPrompt assemble_prompt(Graph& g, const ParameterStore& store, std::optional<Var> v_c,
                                 std::optional<Var> v_bsi, std::optional<Var> f_bsi, std::optional<Var> e_k) {
    MultimodalPrompt prompt;
    std::vector<Var> parts;
    std::size_t at = 0;
    auto push = [&](const std::optional<Var>& x, const char* segment, const char* proj) {
        if (!x) return;
        parts.push_back(nn::linear(g, store, proj, *x));
        prompt.spans.push_back({segment, at, x->rows()});
        at += x->rows();
    };
    push(v_c, "context", "proj.context");
    push(v_bsi, "video", "proj.video");
    push(f_bsi, "player", "proj.player");
    push(e_k, "name", "proj.name");
    if (parts.empty()) throw Error(ErrorCode::EmptyInput, "prompt has no segments");
    prompt.rows = parts.size() == 1 ? parts.front() : concat_rows(parts);
    return prompt;
}

Var decoder_forward(Graph& g, const ParameterStore& store, const HyperConfig& cfg, const MultimodalPrompt& prompt,
                    std::span<const int> tokens) {
    if (tokens.empty()) throw Error(ErrorCode::EmptyInput, "decoder needs at least <bos>");
    if (tokens.size() > cfg.max_len + 1) {
        throw Error(ErrorCode::LengthCapExceeded, std::to_string(tokens.size()) + " tokens exceed the cap of " +
                                                      std::to_string(cfg.max_len + 1));
    }
    const std::size_t n_prompt = prompt.row_count();
    Var tok = gather_rows(g.param(store, "dec.tok"), tokens);
    tok = add(tok, g.constant(sinusoidal_positions(tokens.size(), cfg.d_llm)));
    Var x = concat_rows(std::vector<Var>{prompt.rows, tok});
    for (std::size_t i = 0; i < cfg.decoder_layers; ++i) {
        Var h = nn::layer_norm(g, store, block(i, "ln1"), x);
        x = add(x, nn::attention(g, store, block(i, "attn"), h, h, cfg.n_heads, true));
        h = nn::layer_norm(g, store, block(i, "ln2"), x);
        x = add(x, nn::two_layer(g, store, block(i, "ffn"), h, true));
    }
    x = nn::layer_norm(g, store, "dec.ln_f", slice_rows(x, n_prompt, tokens.size()));
    return nn::linear(g, store, "dec.head", x);
}

Var caption_loss(Graph& g, const ParameterStore& store, const HyperConfig& cfg, const MultimodalPrompt& prompt,
                 std::span<const int> targets) {
    if (targets.size() < 2) throw Error(ErrorCode::EmptyInput, "caption target needs <bos> and one more token");
    Var logits = decoder_forward(g, store, cfg, prompt, targets.first(targets.size() - 1));
    return cross_entropy_sum(logits, targets.subspan(1), Vocabulary::kPad);
}

std::vector<double> log_softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
    return out;
}

CaptionHypothesis beam_search(const NextLogits& next, std::size_t beam_size, std::size_t max_len, int bos, int eos) {
    if (beam_size == 0 || max_len == 0) throw Error(ErrorCode::ConfigError, "beam_size and max_len must be >= 1");
    std::vector<CaptionHypothesis> live{{{bos}, 0.0, false}};
    std::vector<CaptionHypothesis> finished;
    while (!live.empty()) {
        std::vector<CaptionHypothesis> candidates;
        for (const auto& h : live) {
            const std::vector<double> lp = log_softmax(next(h.tokens));
            for (std::size_t t = 0; t < lp.size(); ++t) {
                CaptionHypothesis c = h;
                c.tokens.push_back(static_cast<int>(t));
                c.log_prob += lp[t];
                c.finished = static_cast<int>(t) == eos || c.tokens.size() - 1 >= max_len;
                candidates.push_back(std::move(c));
            }
        }
        std::sort(candidates.begin(), candidates.end(), ranks_before);
        // Finished candidates met on the way do not take a beam slot.
        live.clear();
        for (auto& c : candidates) {
            if (live.size() == beam_size) break;
            (c.finished ? finished : live).push_back(std::move(c));
        }
        if (!finished.empty() && !live.empty()) {
            const auto best = std::min_element(finished.begin(), finished.end(), ranks_before);
            // Scores only fall as tokens are appended.
            if (best->log_prob >= live.front().log_prob) break;
        }
    }
    return *std::min_element(finished.begin(), finished.end(), ranks_before);
}

CaptionHypothesis greedy_decode(const NextLogits& next, std::size_t max_len, int bos, int eos) {
    CaptionHypothesis h{{bos}, 0.0, false};
    while (!h.finished) {
        const std::vector<double> lp = log_softmax(next(h.tokens));
        const auto best = std::max_element(lp.begin(), lp.end());
        const int t = static_cast<int>(best - lp.begin());
        h.tokens.push_back(t);
        h.log_prob += *best;
        h.finished = t == eos || h.tokens.size() - 1 >= max_len;
    }
    return h;
}

std::vector<int> generate(const ParameterStore& store, const HyperConfig& cfg, const Tensor& prompt_rows,
                          std::size_t beam_size, std::size_t max_len) {
    HyperConfig capped = cfg;
    capped.max_len = std::max(cfg.max_len, max_len);
    const NextLogits next = [&](std::span<const int> prefix) {
        Graph g(false);
        MultimodalPrompt prompt{g.constant(prompt_rows), {}};
        const Tensor& logits = decoder_forward(g, store, capped, prompt, prefix).value();
        const auto last = logits.row(logits.rows() - 1);
        std::vector<double> out(last.begin(), last.end());
        // Only real words and <eos> may be emitted.
        for (int r : {Vocabulary::kBos, Vocabulary::kPad, Vocabulary::kNone})
            out[static_cast<std::size_t>(r)] = -std::numeric_limits<double>::infinity();
        return out;
    };
    const CaptionHypothesis best = beam_search(next, beam_size, max_len);
    std::vector<int> body(best.tokens.begin() + 1, best.tokens.end());
    if (!body.empty() && body.back() == Vocabulary::kEos) body.pop_back();
    return body;
}

}  // namespace iavc
