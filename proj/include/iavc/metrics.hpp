#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iavc/config.hpp"

namespace iavc {

using Tokens = std::vector<std::string>;

// Lowercases and turns punctuation into spaces. A period directly after a
// single-letter word is kept, so "T. Jones" becomes {"t.", "jones"}.
Tokens tokenize(std::string_view text);
std::string join(const Tokens& tokens);

// Geometric mean of clipped n-gram precisions for n = 1..max_n with the
// brevity penalty measured against the shortest reference. Any zero
// precision gives 0 unless add-one smoothing is requested.
double bleu(const Tokens& candidate, const std::vector<Tokens>& references, int max_n = 4, bool smooth = false);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
double rouge_l(const Tokens& candidate, const Tokens& reference, double beta = 1.0);

struct MeteorAlignment {
    std::size_t matches = 0;
    std::size_t chunks = 0;
};
// Exact-match alignment with the most matches and, among those, the fewest
// chunks.
MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference);
double meteor(const Tokens& candidate, const Tokens& reference, double alpha = 0.9, double gamma = 0.5);

// Document frequencies of n-grams over a reference corpus; each document is
// the reference set of one clip.
class CorpusStats {
public:
    static constexpr int kMaxN = 4;

    explicit CorpusStats(const std::vector<std::vector<Tokens>>& documents);

    std::size_t size() const noexcept { return n_docs_; }
    std::size_t df(const std::string& ngram_key, int n) const;
    // ln(N / df) with df taken as at least 1, so unseen n-grams get ln N.
    double idf(const std::string& ngram_key, int n) const;

private:
    std::size_t n_docs_ = 0;
    std::array<std::map<std::string, std::size_t>, kMaxN> df_;
};

std::map<std::string, std::size_t> ngram_counts(const Tokens& tokens, int n);

double cider(const Tokens& candidate, const std::vector<Tokens>& references, const CorpusStats& corpus, int max_n = 4,
             double scale = 10.0);

struct EvalConfig {
    int bleu_n = 4;
    bool bleu_smooth = false;
    double rouge_beta = 1.0;
    double meteor_alpha = 0.9;
    double meteor_gamma = 0.5;
    int cider_n = 4;
    double cider_scale = 10.0;
};

void to_json(Json& j, const EvalConfig& c);
void from_json(const Json& j, EvalConfig& c);

struct EvalPair {
    std::string video_id;
    std::string candidate;
    std::vector<std::string> references;
    std::string event_type;
};

struct ClipScores {
    std::string video_id;
    std::string event_type;
    double bleu4 = 0.0;
    double rouge_l = 0.0;
    double meteor = 0.0;
    double cider = 0.0;
};

struct CorpusScores {
    double bleu4 = 0.0;
    double rouge_l = 0.0;
    double meteor = 0.0;
    double cider = 0.0;
    std::size_t count = 0;
};

struct EvalReport {
    std::vector<ClipScores> per_clip;
    CorpusScores corpus;
    std::map<std::string, CorpusScores> per_event;
    std::optional<double> mca;
    std::optional<double> mpca;
};

// Scores every pair against its own references; CIDEr document frequencies
// come from the references of the whole list. Throws EmptyCorpus.
EvalReport evaluate_corpus(const std::vector<EvalPair>& pairs, const EvalConfig& config = {});

// {config, per_clip, corpus, per_event} with a stable key order.
Json report_to_json(const EvalReport& report, const Json& config);

}  // namespace iavc
