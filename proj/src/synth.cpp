#include "iavc/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "iavc/error.hpp"

namespace iavc {

namespace {

struct Variant {
    std::size_t major;
    const char* text;  // {A}, {B} and {D} are filled in
    bool reversed;
    int dist_lo = 0, dist_hi = 0;
};

constexpr std::array<const char*, kMajorEventTypes> kMajorNames = {
    "2-pt shot", "3-pt shot", "layup", "assist", "defensive rebound", "offensive rebound", "turnover", "foul", "block"};

const std::vector<Variant>& variants() {
    static const std::vector<Variant> v = {
        {0, "{A} makes 2-pt jump shot from {D} ft", false, 8, 22},
        {0, "{A} misses 2-pt jump shot from {D} ft", true, 8, 22},
        {1, "{A} makes 3-pt jump shot from {D} ft", false, 23, 30},
        {1, "{A} misses 3-pt jump shot from {D} ft", true, 23, 30},
        {2, "{A} makes driving layup", false},
        {2, "{A} misses driving layup", true},
        {3, "{A} makes 2-pt jump shot from {D} ft {B} assists", false, 8, 22},
        {4, "{A} defensive rebound", false},
        {5, "{A} offensive rebound", false},
        {6, "{A} bad pass turnover steal by {B}", false},
        {6, "{A} lost ball turnover steal by {B}", true},
        {7, "{A} personal foul", false},
        {7, "{A} shooting foul", true},
        {8, "{A} misses driving layup {B} blocks", false},
    };
    return v;
}

bool two_players(const Variant& v) { return std::string_view(v.text).find("{B}") != std::string_view::npos; }

constexpr std::array<const char*, 32> kSurnames = {
    "Jones",  "Gordon", "Shamet", "Brooks", "Carter", "Diaz",  "Ellis", "Foster", "Grant", "Hayes", "Irving",
    "Jensen", "Keller", "Lowry",  "Marsh",  "Nolan",  "Owens", "Parker", "Quinn", "Reyes", "Sutton", "Tate",
    "Vance",  "Walsh",  "Young",  "Zeller", "Barnes", "Cole",  "Duke",  "Flynn", "Hale",  "Mills"};

std::string player_name(std::size_t i) {
    const char initial = static_cast<char>('A' + (i * 7 + 3) % 26);
    std::string surname = kSurnames[i % kSurnames.size()];
    if (i >= kSurnames.size()) surname += std::to_string(i / kSurnames.size() + 1);
    return std::string(1, initial) + ". " + surname;
}

std::string fill(const std::string& text, const std::string& a, const std::string& b, int d) {
    std::string out;
    for (std::size_t i = 0; i < text.size();) {
        if (text.compare(i, 3, "{A}") == 0) {
            out += a;
            i += 3;
        } else if (text.compare(i, 3, "{B}") == 0) {
            out += b;
            i += 3;
        } else if (text.compare(i, 3, "{D}") == 0) {
            if (d > 0) out += std::to_string(d);
            i += 3;
        } else {
            out += text[i++];
        }
    }
    return out;
}

std::string padded(std::size_t v, std::size_t width) {
    std::string s = std::to_string(v);
    return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

Tensor noisy_rows(std::span<const double> base, std::size_t rows, double sigma, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t = Tensor::matrix(rows, base.size());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < base.size(); ++c) t(r, c) = base[c] + sigma * n(rng);
    return t;
}

}  // namespace

void SynthConfig::validate(std::size_t k_players) const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, "synth: " + m); };
    if (n_games < 2) fail("n_games must be at least 2");
    if (n_test_games == 0 || n_test_games >= n_games) fail("n_test_games must lie in [1, n_games)");
    if (n_players < std::max<std::size_t>(k_players, 2)) fail("n_players must be at least max(k_players, 2)");
    if (n_event_types == 0 || n_event_types > kMajorEventTypes) fail("n_event_types must lie in [1, 9]");
    if (d_in == 0 || sequence_frames == 0 || video_frames == 0 || clip_count() == 0) fail("extents must be >= 1");
    if (fingerprint_rank == 0 || fingerprint_rank > d_in) fail("fingerprint_rank must lie in [1, d_in]");
    if (!(fingerprint_scale >= 0.0)) fail("fingerprint_scale must be non-negative");
    if (!(noise_sigma >= 0.0) || !(video_noise >= 0.0)) fail("noise levels must be non-negative");
}

void to_json(Json& j, const SynthConfig& c) {
    j = Json{{"n_games", c.n_games},
             {"n_test_games", c.n_test_games},
             {"n_players", c.n_players},
             {"clips_per_game", c.clips_per_game},
             {"total_clips", c.total_clips},
             {"n_event_types", c.n_event_types},
             {"d_in", c.d_in},
             {"noise_sigma", c.noise_sigma},
             {"video_noise", c.video_noise},
             {"sequence_frames", c.sequence_frames},
             {"video_frames", c.video_frames},
             {"fingerprint_rank", c.fingerprint_rank},
             {"fingerprint_scale", c.fingerprint_scale},
             {"distractors", c.distractors},
             {"seed", c.seed}};
}

void from_json(const Json& j, SynthConfig& c) {
    auto opt = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    opt("n_games", c.n_games);
    opt("n_test_games", c.n_test_games);
    opt("n_players", c.n_players);
    opt("clips_per_game", c.clips_per_game);
    opt("total_clips", c.total_clips);
    opt("n_event_types", c.n_event_types);
    opt("d_in", c.d_in);
    opt("noise_sigma", c.noise_sigma);
    opt("video_noise", c.video_noise);
    opt("sequence_frames", c.sequence_frames);
    opt("video_frames", c.video_frames);
    opt("fingerprint_rank", c.fingerprint_rank);
    opt("fingerprint_scale", c.fingerprint_scale);
    opt("distractors", c.distractors);
    opt("seed", c.seed);
}

std::vector<PlayerSequence> synth_player_sequences(const Tensor& identities, std::size_t per_player, double sigma,
                                                   std::size_t frames, Rng& rng) {
    std::vector<PlayerSequence> out;
    for (std::size_t p = 0; p < identities.rows(); ++p)
        for (std::size_t s = 0; s < per_player; ++s)
            out.push_back({noisy_rows(identities.row(p), frames, sigma, rng), static_cast<int>(p), "synth"});
    return out;
}

SynthDataset synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const std::size_t d = cfg.d_in;
    std::normal_distribution<double> normal(0.0, 1.0);

    SynthDataset ds;
    for (std::size_t i = 0; i < cfg.n_players; ++i) ds.catalog.add(player_name(i));
    ds.identities = Tensor::normal({cfg.n_players, d}, 0.0, 1.0, rng);

    // Four phase vectors per major event.
    constexpr std::size_t kPhases = 4;
    const Tensor phases = Tensor::normal({kMajorEventTypes * kPhases, d}, 0.0, 1.0, rng);
    // Fingerprint: scale * sum_r (id . v_r) u_r with unit-norm v_r and u_r.
    auto unit_rows = [&](std::size_t n) {
        Tensor t = Tensor::normal({n, d}, 0.0, 1.0, rng);
        for (std::size_t r = 0; r < n; ++r) {
            double norm = 0.0;
            for (double x : t.row(r)) norm += x * x;
            for (double& x : t.row(r)) x /= std::sqrt(norm);
        }
        return t;
    };
    const Tensor fp_v = unit_rows(cfg.fingerprint_rank);
    const Tensor fp_u = unit_rows(cfg.fingerprint_rank);
    const Tensor release = Tensor::normal({1, d}, 0.0, 1.0, rng);
    const Tensor mixing = Tensor::normal({d, d}, 0.0, 1.0 / std::sqrt(double(d)), rng);

    auto fingerprint = [&](std::size_t p) {
        std::vector<double> out(d, 0.0);
        for (std::size_t r = 0; r < cfg.fingerprint_rank; ++r) {
            double low = 0.0;
            for (std::size_t c = 0; c < d; ++c) low += ds.identities(p, c) * fp_v(r, c);
            for (std::size_t c = 0; c < d; ++c) out[c] += cfg.fingerprint_scale * low * fp_u(r, c);
        }
        return out;
    };

    std::vector<const Variant*> usable;
    for (const auto& v : variants())
        if (v.major < cfg.n_event_types) usable.push_back(&v);

    const std::size_t total = cfg.clip_count();
    const std::size_t gw = std::to_string(cfg.n_games).size();
    std::vector<std::size_t> per_game(cfg.n_games, 0);
    std::uniform_int_distribution<std::size_t> pick_player(0, cfg.n_players - 1);
    std::uniform_int_distribution<std::size_t> pick_variant(0, usable.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t game = i * cfg.n_games / total;
        const std::size_t local = per_game[game]++;
        const Variant& var = *usable[pick_variant(rng)];
        const std::size_t a = pick_player(rng);
        std::size_t b = a;
        if (two_players(var)) {
            b = pick_player(rng) % (cfg.n_players - 1);
            if (b >= a) ++b;
        }
        const int dist = var.dist_hi ? var.dist_lo + static_cast<int>(rng() % (var.dist_hi - var.dist_lo + 1)) : 0;

        ClipRecord r;
        r.game_id = "game" + padded(game + 1, gw);
        r.video_id = r.game_id + "_clip" + padded(local + 1, 3);
        r.event_type = kMajorNames[var.major];
        r.caption = fill(var.text, ds.catalog.name(static_cast<int>(a)), ds.catalog.name(static_cast<int>(b)), dist);

        // Actors act in order: A over the first half of the clip, B after.
        // A shot is released later the longer it is.
        const std::vector<double> fa = fingerprint(a), fb = fingerprint(b);
        const std::size_t frames = cfg.video_frames;
        std::size_t release_at = frames;
        if (dist) {
            const auto span = static_cast<std::size_t>(var.dist_hi - var.dist_lo);
            release_at = static_cast<std::size_t>(dist - var.dist_lo) * (frames - 1) / std::max<std::size_t>(span, 1);
        }
        Tensor raw = Tensor::matrix(frames, d);
        for (std::size_t t = 0; t < frames; ++t) {
            std::size_t k = t * kPhases / frames;
            if (var.reversed) k = kPhases - 1 - k;
            const bool second = two_players(var) && 2 * t >= frames;
            for (std::size_t c = 0; c < d; ++c) {
                raw(t, c) = phases(var.major * kPhases + k, c) + (second ? fb[c] : fa[c]);
                if (t == release_at) raw(t, c) += release(0, c);
            }
        }
        r.video = Tensor::matrix(cfg.video_frames, d);
        for (std::size_t t = 0; t < cfg.video_frames; ++t)
            for (std::size_t c = 0; c < d; ++c) {
                double s = 0.0;
                for (std::size_t m = 0; m < d; ++m) s += raw(t, m) * mixing(m, c);
                r.video(t, c) = s + cfg.video_noise * normal(rng);
            }

        // Annotation order carries no role information.
        std::vector<std::size_t> involved{a};
        if (two_players(var)) {
            involved.push_back(b);
            if (rng() % 2) std::swap(involved[0], involved[1]);
        }
        for (std::size_t p : involved) {
            ClipPlayer cp;
            cp.name = ds.catalog.name(static_cast<int>(p));
            cp.sequence = {noisy_rows(ds.identities.row(p), cfg.sequence_frames, cfg.noise_sigma, rng),
                           static_cast<int>(p), "dataset"};
            const double x = unit(rng) * 0.8, y = unit(rng) * 0.6;
            cp.box = std::array<double, 4>{x, y, 0.05 + 0.1 * unit(rng), 0.2 + 0.2 * unit(rng)};
            r.players.push_back(std::move(cp));
        }
        // Tracker stub: fresh draws of the key players plus anonymous extras.
        for (std::size_t p : involved)
            r.candidates.push_back(
                {noisy_rows(ds.identities.row(p), cfg.sequence_frames, cfg.noise_sigma, rng), -1, "tracker"});
        for (std::size_t x = 0; x < cfg.distractors; ++x) {
            const Tensor stranger = Tensor::normal({1, d}, 0.0, 1.0, rng);
            r.candidates.push_back({noisy_rows(stranger.row(0), cfg.sequence_frames, cfg.noise_sigma, rng), -1, "tracker"});
        }
        std::shuffle(r.candidates.begin(), r.candidates.end(), rng);
        ds.records.push_back(std::move(r));
    }

    for (const auto& v : variants())
        if (v.major < cfg.n_event_types) ds.vocab.add_text(fill(v.text, "", "", 0));
    for (int dist = 1; dist <= 30; ++dist) ds.vocab.add(std::to_string(dist));
    for (const auto& n : ds.catalog.names()) ds.vocab.add_text(n);

    ds.split = split_last_games(ds.records, cfg.n_test_games);
    return ds;
}

std::vector<std::string> extract_names(const std::string& caption, const PlayerCatalog& catalog) {
    const std::vector<std::string> words = split_whitespace(caption);
    std::vector<std::vector<std::string>> names;
    for (const auto& n : catalog.names()) names.push_back(split_whitespace(n));
    std::vector<std::string> out;
    for (std::size_t i = 0; i < words.size();) {
        std::size_t best = 0, best_len = 0;
        for (std::size_t n = 0; n < names.size(); ++n) {
            const auto& toks = names[n];
            if (toks.size() <= best_len || i + toks.size() > words.size()) continue;
            if (std::equal(toks.begin(), toks.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
                best = n;
                best_len = toks.size();
            }
        }
        if (best_len) {
            out.push_back(catalog.names()[best]);
            i += best_len;
        } else {
            ++i;
        }
    }
    return out;
}

}  // namespace iavc
