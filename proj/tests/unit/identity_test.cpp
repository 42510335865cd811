#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "iavc/error.hpp"
#include "iavc/gradcheck.hpp"
#include "iavc/identity.hpp"
#include "iavc/nn.hpp"
#include "naive.hpp"

using namespace iavc;

namespace {

HyperConfig small_config() {
    HyperConfig cfg;
    cfg.d_in = 6;
    cfg.d_time = 8;
    cfg.d_down = 4;
    cfg.n_heads = 2;
    return cfg;
}

// Randomises the layer-norm affine terms too, so the oracle comparisons see
// every parameter.
void jitter_norms(ParameterStore& s, Rng& rng) {
    for (auto& [name, e] : s) {
        if (name.ends_with(".gain")) e.value = Tensor::normal(e.value.shape(), 1.0, 0.2, rng);
        if (name.find("ln") != std::string::npos && name.ends_with(".bias"))
            e.value = Tensor::normal(e.value.shape(), 0.0, 0.2, rng);
        if (name.find("fc") != std::string::npos && name.ends_with(".bias"))
            e.value = Tensor::normal(e.value.shape(), 0.0, 0.2, rng);
    }
}

template <class Code>
void expect_code(Code code, const std::function<void()>& f) {
    try {
        f();
        ADD_FAILURE() << "no exception";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), code) << e.what();
    }
}

IdentifiedPlayer fake(int cls, double conf, std::string name = "") {
    IdentifiedPlayer p;
    p.class_index = cls;
    p.confidence = conf;
    p.name = name.empty() ? "p" + std::to_string(cls) : name;
    return p;
}

}  // namespace

TEST(PlayerEncoder, SingleFrameMatchesOracle) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(1);
    init_pin(s, cfg, 5, rng);
    jitter_norms(s, rng);
    for (std::size_t t : {1, 2, 7}) {
        const Tensor frames = Tensor::normal({t, cfg.d_in}, 0.0, 1.0, rng);
        Graph g(false);
        const Tensor f = encode_player_sequence(g, s, cfg, frames).value();
        EXPECT_EQ(f.rows(), 1u);
        EXPECT_EQ(f.cols(), cfg.d_time);
        EXPECT_LT(naive::max_diff(f, naive::pin_encoder(naive::to_matrix(frames), s, cfg.n_heads)), 1e-12);
    }
}

TEST(PlayerEncoder, SingleFrameIsUnpooledRow) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(2);
    init_pin(s, cfg, 3, rng);
    const Tensor frame = Tensor::normal({1, cfg.d_in}, 0.0, 1.0, rng);
    Graph g(false);
    Var h = add(nn::linear(g, s, "pin.embed", g.constant(frame)), g.constant(sinusoidal_positions(1, cfg.d_time)));
    h = add(h, nn::msa(g, s, "pin.attn", nn::layer_norm(g, s, "pin.ln", h), cfg.n_heads));
    EXPECT_EQ(encode_player_sequence(g, s, cfg, frame).value(), h.value());
}

TEST(PlayerEncoder, RepeatedFramesDifferOnlyThroughPositions) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(3);
    init_pin(s, cfg, 3, rng);
    const Tensor frame = Tensor::normal({1, cfg.d_in}, 0.0, 1.0, rng);
    Tensor twice = Tensor::matrix(2, cfg.d_in);
    for (std::size_t r = 0; r < 2; ++r) std::copy(frame.row(0).begin(), frame.row(0).end(), twice.row(r).begin());
    Graph g(false);
    const Tensor one = encode_player_sequence(g, s, cfg, frame).value();
    const Tensor two = encode_player_sequence(g, s, cfg, twice).value();
    // The position table makes the two rows distinct, so pooling does not
    // collapse to the single-frame output.
    EXPECT_GT(naive::max_diff(two, naive::to_matrix(one)), 1e-6);
    EXPECT_LT(naive::max_diff(two, naive::pin_encoder(naive::to_matrix(twice), s, cfg.n_heads)), 1e-12);
}

TEST(PlayerEncoder, EmptySequenceThrows) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(4);
    init_pin(s, cfg, 3, rng);
    Graph g;
    expect_code(ErrorCode::EmptySequence, [&] { encode_player_sequence(g, s, cfg, Tensor()); });
}

TEST(Classifier, ZeroHeadIsUniform) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(5);
    init_pin(s, cfg, 7, rng);
    s.value("pin.head.weight").fill(0.0);
    Graph g(false);
    const Tensor p = classify_player(g, s, g.constant(Tensor::normal({1, cfg.d_time}, 0.0, 1.0, rng))).value();
    for (double v : p.data()) EXPECT_NEAR(v, 1.0 / 7.0, 1e-15);
}

TEST(Classifier, TwoClassClosedForm) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(6);
    init_pin(s, cfg, 2, rng);
    s.value("pin.head.weight").fill(0.0);
    s.value("pin.head.bias") = Tensor({2}, {std::log(3.0), std::log(1.0)});
    Graph g(false);
    const Tensor p = classify_player(g, s, g.constant(Tensor::matrix(1, cfg.d_time, 1.0))).value();
    EXPECT_NEAR(p[0], 0.75, 1e-15);
    EXPECT_NEAR(p[1], 0.25, 1e-15);
}

TEST(Classifier, SumsToOneAndArgmaxIgnoresShift) {
    const HyperConfig cfg = small_config();
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        ParameterStore s;
        init_pin(s, cfg, 9, rng);
        s.value("pin.head.bias") = Tensor::normal({9}, 0.0, 3.0, rng);
        const Tensor f = Tensor::normal({1, cfg.d_time}, 0.0, 2.0, rng);
        Graph g(false);
        const Tensor p = classify_player(g, s, g.constant(f)).value();
        EXPECT_NEAR(std::accumulate(p.data().begin(), p.data().end(), 0.0), 1.0, 1e-12);
        const auto arg = std::max_element(p.data().begin(), p.data().end()) - p.data().begin();
        for (auto& b : s.value("pin.head.bias").data()) b += 17.5;
        Graph g2(false);
        const Tensor q = classify_player(g2, s, g2.constant(f)).value();
        EXPECT_EQ(std::max_element(q.data().begin(), q.data().end()) - q.data().begin(), arg);
    }
}

TEST(Classifier, WrongWidthThrows) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(8);
    init_pin(s, cfg, 3, rng);
    Graph g;
    expect_code(ErrorCode::ShapeMismatch, [&] { classify_player(g, s, g.constant(Tensor::matrix(1, 5))); });
}

TEST(PinLoss, UniformPerfectAndHandBatch) {
    Graph g(false);
    const std::vector<int> labels = {0, 3, 1};
    EXPECT_NEAR(pin_loss(g.constant(Tensor::matrix(3, 5, 0.2)), labels).value()[0], std::log(5.0), 1e-15);

    Tensor onehot = Tensor::matrix(3, 5);
    for (std::size_t i = 0; i < 3; ++i) onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
    EXPECT_EQ(pin_loss(g.constant(onehot), labels).value()[0], 0.0);

    // -(ln 0.7 + ln 0.25) / 2
    const Tensor batch = Tensor::from_rows({{0.7, 0.2, 0.1}, {0.25, 0.5, 0.25}});
    const std::vector<int> hand = {0, 2};
    EXPECT_NEAR(pin_loss(g.constant(batch), hand).value()[0], -(std::log(0.7) + std::log(0.25)) / 2.0, 1e-15);

    // A zero probability is clamped rather than producing infinity.
    const std::vector<int> zero = {2};
    EXPECT_NEAR(pin_loss(g.constant(Tensor::from_rows({{0.5, 0.5, 0.0}})), zero).value()[0], -std::log(1e-12), 1e-9);
}

TEST(PinLoss, NonNegativeAndLabelRange) {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        Graph g(false);
        Var p = softmax_rows(g.constant(Tensor::normal({4, 6}, 0.0, 4.0, rng)));
        std::vector<int> labels(4);
        for (auto& l : labels) l = static_cast<int>(rng() % 6);
        EXPECT_GE(pin_loss(p, labels).value()[0], 0.0);
    }
    Graph g;
    const std::vector<int> bad = {6};
    expect_code(ErrorCode::LabelOutOfRange, [&] { pin_loss(g.constant(Tensor::matrix(1, 6, 1.0 / 6)), bad); });
}

TEST(TopK, KeepsHighestConfidences) {
    const auto out = select_top_k({fake(4, 0.9), fake(1, 0.5), fake(2, 0.3)}, 2);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].class_index, 4);
    EXPECT_EQ(out[1].class_index, 1);
    EXPECT_EQ(select_top_k({fake(0, 0.4)}, 2).size(), 1u);
}

TEST(TopK, TieBreakMatchesExhaustiveOrder) {
    // Every ordering of a small list with repeated confidences and a repeated
    // class must rank by (-confidence, class, input position).
    std::vector<IdentifiedPlayer> base = {fake(2, 0.5, "a"), fake(1, 0.5, "b"), fake(2, 0.5, "c"),
                                          fake(0, 0.25, "d"), fake(3, 0.75, "e")};
    std::vector<std::size_t> order(base.size());
    std::iota(order.begin(), order.end(), 0);
    do {
        std::vector<IdentifiedPlayer> in;
        for (auto i : order) in.push_back(base[i]);
        std::vector<std::tuple<double, int, std::size_t, std::string>> keyed;
        for (std::size_t pos = 0; pos < in.size(); ++pos)
            keyed.emplace_back(-in[pos].confidence, in[pos].class_index, pos, in[pos].name);
        std::sort(keyed.begin(), keyed.end());
        for (std::size_t k = 1; k <= 5; ++k) {
            const auto out = select_top_k(in, k);
            ASSERT_EQ(out.size(), k);
            for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(out[i].name, std::get<3>(keyed[i]));
        }
    } while (std::next_permutation(order.begin(), order.end()));
}

TEST(TopK, RealSequencesAreRankedByConfidence) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(10);
    init_pin(s, cfg, 4, rng);
    const PlayerCatalog catalog({"A. One", "B. Two", "C. Three", "D. Four"});
    std::vector<PlayerSequence> seqs;
    for (int i = 0; i < 6; ++i) seqs.push_back({Tensor::normal({3, cfg.d_in}, 0.0, 1.0, rng), -1, "tracker-stub"});
    const auto out = top_k_players(seqs, 4, s, cfg, catalog);
    ASSERT_EQ(out.size(), 4u);
    for (std::size_t i = 1; i < out.size(); ++i) EXPECT_GE(out[i - 1].confidence, out[i].confidence);
    for (const auto& p : out) {
        EXPECT_GT(p.confidence, 0.0);
        EXPECT_LE(p.confidence, 1.0);
        EXPECT_EQ(p.feature.cols(), cfg.d_time);
        EXPECT_EQ(p.name, catalog.name(p.class_index));
    }
}

TEST(Accuracy, HandCases) {
    const std::vector<int> t = {0, 0, 0, 1}, p = {0, 0, 1, 1};
    const auto acc = mca_mpca(p, t);
    EXPECT_DOUBLE_EQ(acc.mca, 0.75);
    EXPECT_NEAR(acc.mpca, (2.0 / 3.0 + 1.0) / 2.0, 1e-15);
    const auto perfect = mca_mpca(t, t);
    EXPECT_EQ(perfect.mca, 1.0);
    EXPECT_EQ(perfect.mpca, 1.0);
    expect_code(ErrorCode::EmptyInput, [] { mca_mpca(std::vector<int>{}, std::vector<int>{}); });
}

TEST(Accuracy, BruteForceProperties) {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int classes = 1 + static_cast<int>(rng() % 5);
        const std::size_t n = 1 + rng() % 30;
        std::vector<int> t(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = static_cast<int>(rng() % classes);
            p[i] = static_cast<int>(rng() % classes);
        }
        const auto acc = mca_mpca(p, t);
        double weighted = 0.0;
        for (int c = 0; c < classes; ++c) {
            std::size_t total = 0, hit = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (t[i] == c) {
                    ++total;
                    hit += p[i] == c;
                }
            if (total) weighted += static_cast<double>(total) / n * (static_cast<double>(hit) / total);
        }
        EXPECT_NEAR(acc.mca, weighted, 1e-12);
    }
    // Balanced classes give equal accuracies.
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> t, p;
        for (int c = 0; c < 4; ++c)
            for (int r = 0; r < 3; ++r) {
                t.push_back(c);
                p.push_back(static_cast<int>(rng() % 4));
            }
        const auto acc = mca_mpca(p, t);
        EXPECT_NEAR(acc.mca, acc.mpca, 1e-12);
    }
}

TEST(Bsim, FullSizeShapes) {
    HyperConfig cfg;
    cfg.d_time = 768;
    cfg.d_down = 512;
    cfg.n_heads = 8;
    ParameterStore s;
    Rng rng(12);
    init_bsim(s, cfg, rng);
    Graph g(false);
    const auto out = bsim_forward(g, s, cfg, g.constant(Tensor::normal({60, 768}, 0.0, 1.0, rng)),
                                  g.constant(Tensor::normal({2, 768}, 0.0, 1.0, rng)), Mode::Infer, rng);
    EXPECT_EQ(out.v_bsi.value().shape(), (Shape{60, 768}));
    EXPECT_EQ(out.f_bsi.value().shape(), (Shape{2, 768}));
}

TEST(Bsim, MatchesTranscriptionOracle) {
    const HyperConfig cfg = small_config();
    Rng rng(13);
    for (std::size_t k : {1, 2}) {
        ParameterStore s;
        init_bsim(s, cfg, rng);
        jitter_norms(s, rng);
        const Tensor v = Tensor::normal({3, cfg.d_time}, 0.0, 1.0, rng);
        const Tensor f = Tensor::normal({k, cfg.d_time}, 0.0, 1.0, rng);
        Graph g(false);
        const auto out = bsim_forward(g, s, cfg, g.constant(v), g.constant(f), Mode::Infer, rng);
        const auto ref = naive::bsim(naive::to_matrix(v), naive::to_matrix(f), s, cfg.n_heads);
        EXPECT_EQ(out.v_bsi.rows(), 3u);
        EXPECT_EQ(out.f_bsi.rows(), k);
        EXPECT_LT(naive::max_diff(out.v_bsi.value(), ref.v), 1e-12);
        EXPECT_LT(naive::max_diff(out.f_bsi.value(), ref.f), 1e-12);
    }
}

TEST(Bsim, InferDeterministicTrainStochastic) {
    HyperConfig cfg = small_config();
    cfg.dropout_rate = 0.5;
    ParameterStore s;
    Rng rng(14);
    init_bsim(s, cfg, rng);
    const Tensor v = Tensor::normal({4, cfg.d_time}, 0.0, 1.0, rng);
    const Tensor f = Tensor::normal({2, cfg.d_time}, 0.0, 1.0, rng);
    auto run = [&](Mode mode, std::uint64_t seed) {
        Graph g(false);
        Rng r(seed);
        return bsim_forward(g, s, cfg, g.constant(v), g.constant(f), mode, r).v_bsi.value();
    };
    EXPECT_EQ(run(Mode::Infer, 1), run(Mode::Infer, 2));
    EXPECT_FALSE(run(Mode::Train, 1) == run(Mode::Infer, 1));
    EXPECT_EQ(run(Mode::Train, 3), run(Mode::Train, 3));
}

TEST(Bsim, WidthMismatchThrows) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(15);
    init_bsim(s, cfg, rng);
    Graph g;
    expect_code(ErrorCode::ShapeMismatch, [&] {
        bsim_forward(g, s, cfg, g.constant(Tensor::matrix(2, 6)), g.constant(Tensor::matrix(1, 8)), Mode::Infer, rng);
    });
}

TEST(Bsim, GradientCheck) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(16);
    init_bsim(s, cfg, rng);
    jitter_norms(s, rng);
    const Tensor v = Tensor::normal({3, cfg.d_time}, 0.0, 1.0, rng);
    const Tensor f = Tensor::normal({2, cfg.d_time}, 0.0, 1.0, rng);
    const Tensor wv = Tensor::normal({3, cfg.d_time}, 0.0, 1.0, rng);
    const Tensor wf = Tensor::normal({2, cfg.d_time}, 0.0, 1.0, rng);
    const auto r = grad_check(
        [&](Graph& g, const ParameterStore& st) {
            Rng unused(0);
            auto out = bsim_forward(g, st, cfg, g.constant(v), g.constant(f), Mode::Infer, unused);
            return add(sum_squares(add(out.v_bsi, g.constant(wv))), sum_squares(add(out.f_bsi, g.constant(wf))));
        },
        s);
    EXPECT_LE(r.max_rel_error, 1e-6) << r.worst_parameter << "[" << r.worst_index << "]";
}

namespace {

ClipRecord clip_with(std::size_t n_named, std::size_t n_candidates, const HyperConfig& cfg, Rng& rng) {
    ClipRecord c;
    c.video_id = "v1";
    c.game_id = "g1";
    c.video = Tensor::normal({5, cfg.d_in}, 0.0, 1.0, rng);
    const char* names[] = {"A. One", "B. Two"};
    for (std::size_t i = 0; i < n_named; ++i) {
        ClipPlayer p;
        p.name = names[i];
        p.sequence = {Tensor::normal({4, cfg.d_in}, 0.0, 1.0, rng), static_cast<int>(i), "dataset"};
        c.players.push_back(p);
    }
    for (std::size_t i = 0; i < n_candidates; ++i)
        c.candidates.push_back({Tensor::normal({4, cfg.d_in}, 0.0, 1.0, rng), -1, "tracker-stub"});
    return c;
}

}  // namespace

TEST(IdentityEmbeddings, TrainModeUsesAnnotatedPlayers) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(17);
    init_pin(s, cfg, 3, rng);
    const PlayerCatalog catalog({"A. One", "B. Two", "C. Three"});
    const ClipRecord clip = clip_with(2, 0, cfg, rng);
    Graph g(false);
    const auto rows = build_identity_embeddings(g, clip, IdentityMode::Train, 2, s, cfg, catalog);
    EXPECT_EQ(rows.names, (std::vector<std::string>{"A. One", "B. Two"}));
    const Tensor& f = rows.features.value();
    ASSERT_EQ(f.shape(), (Shape{2, cfg.d_time}));
    const Tensor second = encode_player_sequence(g, s, cfg, clip.players[1].sequence.frames).value();
    for (std::size_t j = 0; j < cfg.d_time; ++j) EXPECT_EQ(f(1, j), second[j]);

    const ClipRecord empty = clip_with(0, 3, cfg, rng);
    expect_code(ErrorCode::MissingSequences,
                [&] { build_identity_embeddings(g, empty, IdentityMode::Train, 2, s, cfg, catalog); });
}

TEST(IdentityEmbeddings, InferModeTakesTopCandidatesAndPads) {
    const HyperConfig cfg = small_config();
    ParameterStore s;
    Rng rng(18);
    init_pin(s, cfg, 3, rng);
    const PlayerCatalog catalog({"A. One", "B. Two", "C. Three"});

    const ClipRecord five = clip_with(0, 5, cfg, rng);
    Graph g(false);
    const auto rows = build_identity_embeddings(g, five, IdentityMode::Infer, 2, s, cfg, catalog);
    const auto expected = top_k_players(five.candidates, 2, s, cfg, catalog);
    ASSERT_EQ(rows.identified.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(rows.names[i], expected[i].name);
        for (std::size_t j = 0; j < cfg.d_time; ++j) EXPECT_EQ(rows.features.value()(i, j), expected[i].feature[j]);
    }

    const ClipRecord one = clip_with(0, 1, cfg, rng);
    const auto padded = build_identity_embeddings(g, one, IdentityMode::Infer, 2, s, cfg, catalog);
    ASSERT_EQ(padded.features.value().shape(), (Shape{2, cfg.d_time}));
    EXPECT_EQ(padded.names[1], "<none>");
    for (std::size_t j = 0; j < cfg.d_time; ++j) EXPECT_EQ(padded.features.value()(1, j), 0.0);
    EXPECT_NE(padded.features.value().row(0)[0], 0.0);
}
