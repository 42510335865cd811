#pragma once

// Plain nested-loop reference implementations used as test oracles. Nothing
// here touches the autodiff graph; parameters are read straight out of the
// store.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "iavc/config.hpp"
#include "iavc/params.hpp"
#include "iavc/tensor.hpp"

namespace naive {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const iavc::Tensor& t) {
    Matrix m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
    return m;
}

inline Matrix param(const iavc::ParameterStore& s, const std::string& name) { return to_matrix(s.value(name)); }

inline Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, std::vector<double>(c, 0.0)); }

inline Matrix mm(const Matrix& a, const Matrix& b) {
    Matrix c = zeros(a.size(), b[0].size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b[0].size(); ++j)
            for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t = zeros(a[0].size(), a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
    return t;
}

inline Matrix plus(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[0].size(); ++j) c[i][j] += b[i][j];
    return c;
}

inline Matrix scaled(Matrix a, double f) {
    for (auto& r : a)
        for (auto& v : r) v *= f;
    return a;
}

inline Matrix rows(const Matrix& a, std::size_t begin, std::size_t count) {
    return Matrix(a.begin() + static_cast<std::ptrdiff_t>(begin), a.begin() + static_cast<std::ptrdiff_t>(begin + count));
}

inline Matrix stack(const std::vector<Matrix>& parts) {
    Matrix out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

inline Matrix softmax(const Matrix& a, bool causal = false) {
    Matrix y = a;
    const std::size_t offset = a[0].size() - a.size();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const std::size_t n = causal ? i + offset + 1 : a[0].size();
        double mx = a[i][0];
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, a[i][j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(a[i][j] - mx);
        for (std::size_t j = 0; j < a[0].size(); ++j) y[i][j] = j < n ? std::exp(a[i][j] - mx) / z : 0.0;
    }
    return y;
}

inline Matrix layer_norm(const Matrix& a, const iavc::ParameterStore& s, const std::string& prefix) {
    const iavc::Tensor& gain = s.value(prefix + ".gain");
    const iavc::Tensor& bias = s.value(prefix + ".bias");
    Matrix y = a;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double n = static_cast<double>(a[i].size());
        double mean = 0.0, var = 0.0;
        for (double v : a[i]) mean += v;
        mean /= n;
        for (double v : a[i]) var += (v - mean) * (v - mean);
        var /= n;
        for (std::size_t j = 0; j < a[i].size(); ++j)
            y[i][j] = (a[i][j] - mean) / std::sqrt(var + 1e-5) * gain[j] + bias[j];
    }
    return y;
}

inline Matrix gelu(Matrix a) {
    for (auto& r : a)
        for (auto& v : r) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    return a;
}

inline Matrix linear(const Matrix& x, const iavc::ParameterStore& s, const std::string& prefix) {
    Matrix y = mm(x, param(s, prefix + ".weight"));
    if (s.contains(prefix + ".bias")) {
        const iavc::Tensor& b = s.value(prefix + ".bias");
        for (auto& r : y)
            for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
    }
    return y;
}

inline Matrix two_layer(const Matrix& x, const iavc::ParameterStore& s, const std::string& prefix, bool inner_gelu) {
    Matrix h = linear(x, s, prefix + ".fc1");
    if (inner_gelu) h = gelu(h);
    return linear(h, s, prefix + ".fc2");
}

inline Matrix attention(const Matrix& i1, const Matrix& i2, const iavc::ParameterStore& s, const std::string& prefix,
                        std::size_t heads, bool causal = false) {
    const Matrix q = mm(i1, param(s, prefix + ".wq"));
    const Matrix k = mm(i2, param(s, prefix + ".wk"));
    const Matrix v = mm(i2, param(s, prefix + ".wv"));
    const std::size_t d = q[0].size(), dh = d / heads;
    Matrix out = zeros(i1.size(), d);
    for (std::size_t h = 0; h < heads; ++h) {
        Matrix scores = zeros(i1.size(), i2.size());
        for (std::size_t i = 0; i < i1.size(); ++i)
            for (std::size_t j = 0; j < i2.size(); ++j) {
                for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) scores[i][j] += q[i][c] * k[j][c];
                scores[i][j] /= std::sqrt(static_cast<double>(dh));
            }
        const Matrix w = softmax(scores, causal);
        for (std::size_t i = 0; i < i1.size(); ++i)
            for (std::size_t j = 0; j < i2.size(); ++j)
                for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) out[i][c] += w[i][j] * v[j][c];
    }
    if (s.contains(prefix + ".wo")) out = mm(out, param(s, prefix + ".wo"));
    return out;
}

inline Matrix positions(std::size_t n, std::size_t d) {
    Matrix p = zeros(n, d);
    for (std::size_t pos = 0; pos < n; ++pos)
        for (std::size_t i = 0; 2 * i < d; ++i) {
            const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / d);
            p[pos][2 * i] = std::sin(angle);
            p[pos][2 * i + 1] = std::cos(angle);
        }
    return p;
}

inline Matrix mean_rows(const Matrix& a) {
    Matrix m = zeros(1, a[0].size());
    for (const auto& r : a)
        for (std::size_t j = 0; j < r.size(); ++j) m[0][j] += r[j] / static_cast<double>(a.size());
    return m;
}

inline double max_diff(const iavc::Tensor& t, const Matrix& m) {
    double d = 0.0;
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) d = std::max(d, std::abs(t(i, j) - m[i][j]));
    return d;
}

// Straight-line transcription of the interaction module, dropout off.
struct BsimResult {
    Matrix v, f;
};

inline BsimResult bsim(const Matrix& vv, const Matrix& fk, const iavc::ParameterStore& s, std::size_t heads) {
    const Matrix v1 = attention(layer_norm(vv, s, "bsim.ln1"), layer_norm(vv, s, "bsim.ln1"), s, "bsim.msa1", heads);
    const Matrix f1 = attention(layer_norm(fk, s, "bsim.ln2"), layer_norm(fk, s, "bsim.ln2"), s, "bsim.msa2", heads);
    const Matrix vd = layer_norm(mm(v1, param(s, "bsim.wd1.weight")), s, "bsim.ln3");
    const Matrix fd = layer_norm(mm(f1, param(s, "bsim.wd2.weight")), s, "bsim.ln4");
    const Matrix v2 = mm(attention(vd, fd, s, "bsim.mca_ev", heads), param(s, "bsim.wu1.weight"));
    const Matrix f2 = mm(attention(fd, vd, s, "bsim.mca_ve", heads), param(s, "bsim.wu2.weight"));
    return {layer_norm(plus(two_layer(gelu(v2), s, "bsim.mlp_v", false), v2), s, "bsim.ln5"),
            layer_norm(plus(two_layer(gelu(f2), s, "bsim.mlp_f", false), f2), s, "bsim.ln6")};
}

// Straight-line transcription of the learnable-query context module.
inline Matrix vclm(const Matrix& vv, const iavc::ParameterStore& s, bool with_positions = true) {
    const Matrix theta = param(s, "vclm.theta");
    const double root_d = std::sqrt(static_cast<double>(theta[0].size()));
    const Matrix q1 = mm(theta, param(s, "vclm.wq1")), k1 = mm(theta, param(s, "vclm.wk1")),
                 v1 = mm(theta, param(s, "vclm.wv1"));
    const Matrix v_self = mm(softmax(scaled(mm(q1, transpose(k1)), 1.0 / root_d)), v1);
    const Matrix v_pv = with_positions ? plus(positions(vv.size(), vv[0].size()), vv) : vv;
    const Matrix q2 = mm(v_self, param(s, "vclm.wq2")), k2 = mm(v_pv, param(s, "vclm.wk2")),
                 v2 = mm(v_pv, param(s, "vclm.wv2"));
    const Matrix v_cross = mm(softmax(scaled(mm(q2, transpose(k2)), 1.0 / root_d)), v2);
    return two_layer(two_layer(v_cross, s, "vclm.mlp", true), s, "vclm.ffn", true);
}

inline Matrix pin_encoder(const Matrix& frames, const iavc::ParameterStore& s, std::size_t heads) {
    Matrix h = linear(frames, s, "pin.embed");
    h = plus(h, positions(frames.size(), h[0].size()));
    const Matrix n = layer_norm(h, s, "pin.ln");
    return mean_rows(plus(h, attention(n, n, s, "pin.attn", heads)));
}

// Logits for every token position of the decoder stand-in.
inline Matrix decoder(const Matrix& prompt, const std::vector<int>& tokens, const iavc::ParameterStore& s,
                      const iavc::HyperConfig& cfg) {
    const Matrix table = param(s, "dec.tok");
    Matrix tok;
    for (int t : tokens) tok.push_back(table[static_cast<std::size_t>(t)]);
    tok = plus(tok, positions(tokens.size(), cfg.d_llm));
    Matrix x = stack({prompt, tok});
    for (std::size_t i = 0; i < cfg.decoder_layers; ++i) {
        const std::string b = "dec.b" + std::to_string(i) + ".";
        Matrix h = layer_norm(x, s, b + "ln1");
        x = plus(x, attention(h, h, s, b + "attn", cfg.n_heads, true));
        h = layer_norm(x, s, b + "ln2");
        x = plus(x, two_layer(h, s, b + "ffn", true));
    }
    return linear(layer_norm(rows(x, prompt.size(), tokens.size()), s, "dec.ln_f"), s, "dec.head");
}

}  // namespace naive
