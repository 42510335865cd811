#include "iavc/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <unordered_map>

#include "iavc/error.hpp"

namespace iavc {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string ngram_key(const Tokens& t, std::size_t begin, int n) {
    std::string k;
    for (int i = 0; i < n; ++i) {
        if (i) k += '\x1f';
        k += t[begin + static_cast<std::size_t>(i)];
    }
    return k;
}

double harmonic(double p, double r, double alpha) {
    const double denom = alpha * p + (1.0 - alpha) * r;
    return denom > 0.0 ? p * r / denom : 0.0;
}

}  // namespace

Tokens tokenize(std::string_view text) {
    std::string clean(text.size(), ' ');
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '.') {
            const bool initial = i >= 1 && is_alpha(text[i - 1]) && (i < 2 || !is_alnum(text[i - 2]));
            clean[i] = initial ? '.' : ' ';
        } else if (std::ispunct(static_cast<unsigned char>(c))) {
            clean[i] = ' ';
        } else {
            clean[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    Tokens out;
    std::size_t i = 0;
    while (i < clean.size()) {
        while (i < clean.size() && std::isspace(static_cast<unsigned char>(clean[i]))) ++i;
        std::size_t j = i;
        while (j < clean.size() && !std::isspace(static_cast<unsigned char>(clean[j]))) ++j;
        if (j > i) out.push_back(clean.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string join(const Tokens& tokens) {
    std::string s;
    for (const auto& t : tokens) {
        if (!s.empty()) s += ' ';
        s += t;
    }
    return s;
}

std::map<std::string, std::size_t> ngram_counts(const Tokens& tokens, int n) {
    std::map<std::string, std::size_t> counts;
    if (n < 1 || tokens.size() < static_cast<std::size_t>(n)) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) ++counts[ngram_key(tokens, i, n)];
    return counts;
}

double bleu(const Tokens& candidate, const std::vector<Tokens>& references, int max_n, bool smooth) {
    if (max_n < 1) throw Error(ErrorCode::ConfigError, "BLEU order must be >= 1");
    if (references.empty()) throw Error(ErrorCode::EmptyInput, "BLEU needs at least one reference");
    if (candidate.empty()) return 0.0;
    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto cand = ngram_counts(candidate, n);
        std::map<std::string, std::size_t> max_ref;
        for (const auto& r : references)
            for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
        std::size_t matched = 0, total = 0;
        for (const auto& [g, c] : cand) {
            total += c;
            if (auto it = max_ref.find(g); it != max_ref.end()) matched += std::min(c, it->second);
        }
        double p = smooth ? (matched + 1.0) / (total + 1.0) : total ? static_cast<double>(matched) / total : 0.0;
        if (p == 0.0) return 0.0;
        log_sum += std::log(p) / max_n;
    }
    std::size_t shortest = std::numeric_limits<std::size_t>::max();
    for (const auto& r : references) shortest = std::min(shortest, r.size());
    const double c = static_cast<double>(candidate.size()), r = static_cast<double>(shortest);
    const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_sum);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference, double beta) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_length(candidate, reference));
    if (lcs == 0.0) return 0.0;
    const double r = lcs / static_cast<double>(reference.size());
    const double p = lcs / static_cast<double>(candidate.size());
    const double b2 = beta * beta;
    return (1.0 + b2) * r * p / (r + b2 * p);
}

MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference) {
    // Reference positions available to each candidate word.
    std::vector<std::vector<std::size_t>> options(candidate.size());
    for (std::size_t i = 0; i < candidate.size(); ++i)
        for (std::size_t j = 0; j < reference.size(); ++j)
            if (candidate[i] == reference[j]) options[i].push_back(j);

    // Best (matches, -chunks) from candidate position i onward, given the set
    // of used reference positions and the reference position matched by i-1.
    struct Score {
        long matches = 0;
        long chunks = 0;
        bool operator<(const Score& o) const {
            return matches != o.matches ? matches < o.matches : chunks > o.chunks;
        }
    };
    std::vector<bool> used(reference.size(), false);
    std::unordered_map<std::string, Score> memo;
    const std::size_t none = reference.size();

    std::function<Score(std::size_t, std::size_t)> best = [&](std::size_t i, std::size_t last) -> Score {
        if (i == candidate.size()) return {};
        std::string key = std::to_string(i) + ":" + std::to_string(last) + ":";
        for (bool u : used) key += u ? '1' : '0';
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        Score result = best(i + 1, none);
        for (std::size_t j : options[i]) {
            if (used[j]) continue;
            used[j] = true;
            Score s = best(i + 1, j);
            used[j] = false;
            s.matches += 1;
            s.chunks += (last != none && j == last + 1) ? 0 : 1;
            if (result < s) result = s;
        }
        memo.emplace(std::move(key), result);
        return result;
    };
    const Score s = best(0, none);
    return {static_cast<std::size_t>(s.matches), static_cast<std::size_t>(s.chunks)};
}

double meteor(const Tokens& candidate, const Tokens& reference, double alpha, double gamma) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const MeteorAlignment a = meteor_align(candidate, reference);
    if (a.matches == 0) return 0.0;
    const double m = static_cast<double>(a.matches);
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(reference.size());
    const double penalty = std::pow(static_cast<double>(a.chunks) / m, 3.0);
    return (1.0 - gamma * penalty) * harmonic(p, r, alpha);
}

CorpusStats::CorpusStats(const std::vector<std::vector<Tokens>>& documents) : n_docs_(documents.size()) {
    for (const auto& refs : documents) {
        for (int n = 1; n <= kMaxN; ++n) {
            std::map<std::string, bool> seen;
            for (const auto& r : refs)
                for (const auto& [g, c] : ngram_counts(r, n)) seen[g] = true;
            for (const auto& [g, s] : seen) ++df_[static_cast<std::size_t>(n - 1)][g];
        }
    }
}

std::size_t CorpusStats::df(const std::string& key, int n) const {
    const auto& table = df_.at(static_cast<std::size_t>(n - 1));
    auto it = table.find(key);
    return it == table.end() ? 0 : it->second;
}

double CorpusStats::idf(const std::string& key, int n) const {
    const std::size_t d = std::max<std::size_t>(df(key, n), 1);
    return std::log(static_cast<double>(n_docs_) / static_cast<double>(d));
}

double cider(const Tokens& candidate, const std::vector<Tokens>& references, const CorpusStats& corpus, int max_n,
             double scale) {
    if (max_n < 1 || max_n > CorpusStats::kMaxN) throw Error(ErrorCode::ConfigError, "CIDEr order must be in 1..4");
    if (references.empty()) throw Error(ErrorCode::EmptyInput, "CIDEr needs at least one reference");
    auto vectorise = [&](const Tokens& t, int n) {
        std::map<std::string, double> v;
        const auto counts = ngram_counts(t, n);
        double total = 0.0;
        for (const auto& [g, c] : counts) total += static_cast<double>(c);
        for (const auto& [g, c] : counts) v[g] = static_cast<double>(c) / total * corpus.idf(g, n);
        return v;
    };
    double score = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto cv = vectorise(candidate, n);
        double cn = 0.0;
        for (const auto& [g, w] : cv) cn += w * w;
        double sum = 0.0;
        for (const auto& ref : references) {
            const auto rv = vectorise(ref, n);
            double rn = 0.0, dot = 0.0;
            for (const auto& [g, w] : rv) {
                rn += w * w;
                if (auto it = cv.find(g); it != cv.end()) dot += w * it->second;
            }
            if (cn > 0.0 && rn > 0.0) sum += dot / (std::sqrt(cn) * std::sqrt(rn));
        }
        score += sum / static_cast<double>(references.size());
    }
    return scale * score / static_cast<double>(max_n);
}

void to_json(Json& j, const EvalConfig& c) {
    j = Json{{"bleu_n", c.bleu_n},           {"bleu_smooth", c.bleu_smooth}, {"rouge_beta", c.rouge_beta},
             {"meteor_alpha", c.meteor_alpha}, {"meteor_gamma", c.meteor_gamma}, {"cider_n", c.cider_n},
             {"cider_scale", c.cider_scale}};
}

void from_json(const Json& j, EvalConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("bleu_n", c.bleu_n);
    get("bleu_smooth", c.bleu_smooth);
    get("rouge_beta", c.rouge_beta);
    get("meteor_alpha", c.meteor_alpha);
    get("meteor_gamma", c.meteor_gamma);
    get("cider_n", c.cider_n);
    get("cider_scale", c.cider_scale);
}

namespace {

void accumulate(CorpusScores& acc, const ClipScores& s) {
    acc.bleu4 += s.bleu4;
    acc.rouge_l += s.rouge_l;
    acc.meteor += s.meteor;
    acc.cider += s.cider;
    ++acc.count;
}

void finish(CorpusScores& acc) {
    const double n = static_cast<double>(acc.count);
    acc.bleu4 /= n;
    acc.rouge_l /= n;
    acc.meteor /= n;
    acc.cider /= n;
}

Json scores_json(const CorpusScores& s) {
    return Json{{"bleu4", s.bleu4}, {"rouge_l", s.rouge_l}, {"meteor", s.meteor}, {"cider", s.cider},
                {"count", s.count}};
}

}  // namespace

EvalReport evaluate_corpus(const std::vector<EvalPair>& pairs, const EvalConfig& config) {
    if (pairs.empty()) throw Error(ErrorCode::EmptyCorpus, "nothing to evaluate");
    std::vector<std::vector<Tokens>> refs;
    refs.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (p.references.empty()) throw Error(ErrorCode::EmptyInput, "clip " + p.video_id + " has no reference");
        std::vector<Tokens> r;
        for (const auto& s : p.references) r.push_back(tokenize(s));
        refs.push_back(std::move(r));
    }
    const CorpusStats corpus(refs);
    EvalReport report;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Tokens cand = tokenize(pairs[i].candidate);
        ClipScores s{pairs[i].video_id, pairs[i].event_type};
        s.bleu4 = bleu(cand, refs[i], config.bleu_n, config.bleu_smooth);
        for (const auto& r : refs[i]) {
            s.rouge_l = std::max(s.rouge_l, rouge_l(cand, r, config.rouge_beta));
            s.meteor = std::max(s.meteor, meteor(cand, r, config.meteor_alpha, config.meteor_gamma));
        }
        s.cider = cider(cand, refs[i], corpus, config.cider_n, config.cider_scale);
        accumulate(report.corpus, s);
        if (!s.event_type.empty()) accumulate(report.per_event[s.event_type], s);
        report.per_clip.push_back(std::move(s));
    }
    finish(report.corpus);
    for (auto& [e, acc] : report.per_event) finish(acc);
    return report;
}

Json report_to_json(const EvalReport& report, const Json& config) {
    Json per_clip = Json::array();
    for (const auto& s : report.per_clip) {
        per_clip.push_back(Json{{"video_id", s.video_id}, {"event_type", s.event_type}, {"bleu4", s.bleu4},
                                {"rouge_l", s.rouge_l}, {"meteor", s.meteor}, {"cider", s.cider}});
    }
    Json corpus = scores_json(report.corpus);
    if (report.mca) corpus["mca"] = *report.mca;
    if (report.mpca) corpus["mpca"] = *report.mpca;
    Json per_event = Json::object();
    for (const auto& [e, s] : report.per_event) per_event[e] = scores_json(s);
    return Json{{"config", config}, {"per_clip", per_clip}, {"corpus", corpus}, {"per_event", per_event}};
}

}  // namespace iavc
