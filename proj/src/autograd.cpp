#include "iavc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "iavc/error.hpp"

namespace iavc {

const Tensor& Var::value() const { return graph_->value(*this); }

Var Graph::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
    return {this, nodes_.size() - 1};
}

Var Graph::param(const ParameterStore& store, std::string_view name) {
    std::string key(name);
    if (auto it = params_.find(key); it != params_.end()) return {this, it->second};
    const auto& e = store.entry(name);
    nodes_.push_back(Node{e.value, {}, {}, key, record_ && e.trainable});
    params_.emplace(std::move(key), nodes_.size() - 1);
    return {this, nodes_.size() - 1};
}

Tensor Graph::grad(Var v) const {
    const auto& n = nodes_[v.id()];
    return n.grad.empty() ? Tensor(n.value.shape()) : n.grad;
}

Var Graph::record(Tensor value, std::span<const Var> inputs, Backprop backprop) {
    bool rg = false;
    for (const auto& in : inputs) rg = rg || nodes_[in.id()].requires_grad;
    Node node{std::move(value), {}, {}, {}, rg && record_};
    if (node.requires_grad) node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
}

Tensor& Graph::grad_slot(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Graph::backward(Var loss, ParameterStore& store) {
    if (value(loss).size() != 1) {
        throw Error(ErrorCode::NonScalarLoss, "loss has shape " + value(loss).shape_string());
    }
    for (auto& n : nodes_) n.grad = Tensor();
    grad_slot(loss.id()).fill(1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (n.grad.empty() || !n.requires_grad) continue;
        if (n.backprop) n.backprop(*this, i);
    }
    for (const auto& [name, id] : params_) {
        const auto& n = nodes_[id];
        if (n.grad.empty() || !n.requires_grad) continue;
        auto& e = store.entry(name);
        if (!e.trainable) continue;
        auto dst = e.grad.data();
        auto src = n.grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
}

namespace {

// C[m x n] += A[m x p] * B[p x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t p, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t k = 0; k < p; ++k) {
            const double aik = a[i * p + k];
            if (aik == 0.0) continue;
            const double* bk = b + k * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
}

// C[m x n] += A[m x p] * B[n x p]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t p, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * p;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * p;
            double s = 0.0;
            for (std::size_t k = 0; k < p; ++k) s += ai[k] * bj[k];
            c[i * n + j] += s;
        }
    }
}

// C[m x n] += A[p x m]^T * B[p x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t p, std::size_t m, std::size_t n) {
    for (std::size_t k = 0; k < p; ++k) {
        const double* ak = a + k * m;
        const double* bk = b + k * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
        }
    }
}

void require(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) throw Error(code, what);
}

std::string shapes(const Tensor& a, const Tensor& b) { return a.shape_string() + " vs " + b.shape_string(); }

}  // namespace

Var matmul(Var a, Var b) {
    Graph& g = a.graph();
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const std::size_t m = A.rows(), p = A.cols(), n = B.cols();
    require(B.rows() == p, ErrorCode::ShapeMismatch, "matmul " + shapes(A, B));
    Tensor C = Tensor::matrix(m, n);
    gemm_nn(A.data().data(), B.data().data(), C.data().data(), m, p, n);
    return g.record(std::move(C), {a, b}, [a, b, m, p, n](Graph& g, std::size_t out) {
        const double* dc = g.out_grad(out).data().data();
        if (g.needs_grad(a.id())) gemm_nt(dc, b.value().data().data(), g.grad_slot(a.id()).data().data(), m, n, p);
        if (g.needs_grad(b.id())) gemm_tn(a.value().data().data(), dc, g.grad_slot(b.id()).data().data(), m, p, n);
    });
}

Var matmul_bt(Var a, Var b) {
    Graph& g = a.graph();
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const std::size_t m = A.rows(), p = A.cols(), n = B.rows();
    require(B.cols() == p, ErrorCode::ShapeMismatch, "matmul_bt " + shapes(A, B));
    Tensor C = Tensor::matrix(m, n);
    gemm_nt(A.data().data(), B.data().data(), C.data().data(), m, p, n);
    return g.record(std::move(C), {a, b}, [a, b, m, p, n](Graph& g, std::size_t out) {
        const double* dc = g.out_grad(out).data().data();
        if (g.needs_grad(a.id())) gemm_nn(dc, b.value().data().data(), g.grad_slot(a.id()).data().data(), m, n, p);
        if (g.needs_grad(b.id())) gemm_tn(dc, a.value().data().data(), g.grad_slot(b.id()).data().data(), m, n, p);
    });
}

Var add(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.shape() == B.shape(), ErrorCode::ShapeMismatch, "add " + shapes(A, B));
    Tensor C = A;
    auto c = C.data();
    auto bd = B.data();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += bd[i];
    return a.graph().record(std::move(C), {a, b}, [a, b](Graph& g, std::size_t out) {
        auto dc = g.out_grad(out).data();
        for (Var v : {a, b}) {
            if (!g.needs_grad(v.id())) continue;
            auto d = g.grad_slot(v.id()).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dc[i];
        }
    });
}

Var add_bias(Var x, Var bias) {
    const Tensor& X = x.value();
    const Tensor& B = bias.value();
    require(B.size() == X.cols(), ErrorCode::ShapeMismatch, "add_bias " + shapes(X, B));
    Tensor Y = X;
    const std::size_t m = X.rows(), n = X.cols();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) Y[i * n + j] += B[j];
    }
    return x.graph().record(std::move(Y), {x, bias}, [x, bias, m, n](Graph& g, std::size_t out) {
        auto dy = g.out_grad(out).data();
        if (g.needs_grad(x.id())) {
            auto dx = g.grad_slot(x.id()).data();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
        }
        if (g.needs_grad(bias.id())) {
            auto db = g.grad_slot(bias.id()).data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) db[j] += dy[i * n + j];
            }
        }
    });
}

Var scale(Var x, double factor) {
    Tensor Y = x.value();
    for (auto& v : Y.data()) v *= factor;
    return x.graph().record(std::move(Y), {x}, [x, factor](Graph& g, std::size_t out) {
        auto dy = g.out_grad(out).data();
        auto dx = g.grad_slot(x.id()).data();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * dy[i];
    });
}

Var softmax_rows(Var x, bool causal) {
    const Tensor& X = x.value();
    const std::size_t m = X.rows(), n = X.cols();
    // Row i may see columns j <= i + offset; offset aligns the last row with the last column.
    const std::size_t offset = n >= m ? n - m : 0;
    Tensor Y(X.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t limit = causal ? std::min(n, i + offset + 1) : n;
        auto xr = X.row(i);
        auto yr = Y.row(i);
        double mx = xr[0];
        for (std::size_t j = 1; j < limit; ++j) mx = std::max(mx, xr[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < limit; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            s += yr[j];
        }
        for (std::size_t j = 0; j < limit; ++j) yr[j] /= s;
    }
    return x.graph().record(std::move(Y), {x}, [x, m, n](Graph& g, std::size_t out) {
        const Tensor& Yv = g.value(Var(&g, out));
        const Tensor& dY = g.out_grad(out);
        Tensor& dX = g.grad_slot(x.id());
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += dY(i, j) * Yv(i, j);
            for (std::size_t j = 0; j < n; ++j) dX(i, j) += Yv(i, j) * (dY(i, j) - dot);
        }
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& X = x.value();
    const std::size_t m = X.rows(), n = X.cols();
    require(n >= 2, ErrorCode::DegenerateRow, "layer_norm needs at least 2 columns");
    require(gain.value().size() == n && bias.value().size() == n, ErrorCode::ShapeMismatch,
            "layer_norm parameters " + shapes(X, gain.value()));
    const Tensor& G = gain.value();
    const Tensor& B = bias.value();
    Tensor Y(X.shape());
    Tensor xhat(X.shape());
    std::vector<double> inv(m);
    for (std::size_t i = 0; i < m; ++i) {
        auto xr = X.row(i);
        double mean = 0.0;
        for (double v : xr) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : xr) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        inv[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat(i, j) = (xr[j] - mean) * inv[i];
            Y(i, j) = xhat(i, j) * G[j] + B[j];
        }
    }
    return x.graph().record(
        std::move(Y), {x, gain, bias},
        [x, gain, bias, m, n, xhat = std::move(xhat), inv = std::move(inv)](Graph& g, std::size_t out) {
            const Tensor& dY = g.out_grad(out);
            const Tensor& G = gain.value();
            if (g.needs_grad(gain.id()) || g.needs_grad(bias.id())) {
                Tensor& dG = g.grad_slot(gain.id());
                Tensor& dB = g.grad_slot(bias.id());
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        dG[j] += dY(i, j) * xhat(i, j);
                        dB[j] += dY(i, j);
                    }
                }
            }
            if (!g.needs_grad(x.id())) return;
            Tensor& dX = g.grad_slot(x.id());
            const double nn = static_cast<double>(n);
            for (std::size_t i = 0; i < m; ++i) {
                double s1 = 0.0, s2 = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dxh = dY(i, j) * G[j];
                    s1 += dxh;
                    s2 += dxh * xhat(i, j);
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const double dxh = dY(i, j) * G[j];
                    dX(i, j) += inv[i] / nn * (nn * dxh - s1 - xhat(i, j) * s2);
                }
            }
        });
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gelu_value(double x) { return x * normal_cdf(x); }

Var gelu(Var x) {
    Tensor Y = x.value();
    for (auto& v : Y.data()) v = gelu_value(v);
    return x.graph().record(std::move(Y), {x}, [x](Graph& g, std::size_t out) {
        auto xs = x.value().data();
        auto dy = g.out_grad(out).data();
        auto dx = g.grad_slot(x.id()).data();
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            const double v = xs[i];
            dx[i] += dy[i] * (normal_cdf(v) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v));
        }
    });
}

Var dropout(Var x, double rate, Mode mode, Rng& rng) {
    require(rate >= 0.0 && rate < 1.0, ErrorCode::InvalidRate, "dropout rate " + std::to_string(rate));
    if (mode == Mode::Infer || rate == 0.0) return x;
    Tensor mask(x.value().shape());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep = 1.0 / (1.0 - rate);
    for (auto& v : mask.data()) v = u(rng) < rate ? 0.0 : keep;
    Tensor Y = x.value();
    auto y = Y.data();
    auto mk = mask.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mk[i];
    return x.graph().record(std::move(Y), {x}, [x, mask = std::move(mask)](Graph& g, std::size_t out) {
        auto dy = g.out_grad(out).data();
        auto dx = g.grad_slot(x.id()).data();
        auto mk = mask.data();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * mk[i];
    });
}

Var concat_rows(std::span<const Var> parts) {
    require(!parts.empty(), ErrorCode::ShapeMismatch, "concat_rows of nothing");
    Graph& g = parts.front().graph();
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    for (const auto& p : parts) {
        require(p.cols() == n, ErrorCode::ShapeMismatch, "concat_rows width mismatch");
        m += p.rows();
    }
    Tensor Y = Tensor::matrix(m, n);
    std::size_t off = 0;
    for (const auto& p : parts) {
        auto src = p.value().data();
        std::copy(src.begin(), src.end(), Y.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += src.size();
    }
    std::vector<std::size_t> ids;
    for (const auto& p : parts) ids.push_back(p.id());
    return g.record(std::move(Y), parts, [ids](Graph& g, std::size_t out) {
        auto dy = g.out_grad(out).data();
        std::size_t off = 0;
        for (auto id : ids) {
            const std::size_t len = g.value(Var(&g, id)).size();
            if (g.needs_grad(id)) {
                auto dx = g.grad_slot(id).data();
                for (std::size_t k = 0; k < len; ++k) dx[k] += dy[off + k];
            }
            off += len;
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), ErrorCode::ShapeMismatch, "concat_cols of nothing");
    Graph& g = parts.front().graph();
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    for (const auto& p : parts) {
        require(p.rows() == m, ErrorCode::ShapeMismatch, "concat_cols height mismatch");
        n += p.cols();
    }
    Tensor Y = Tensor::matrix(m, n);
    std::size_t c0 = 0;
    for (const auto& p : parts) {
        const Tensor& P = p.value();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < P.cols(); ++j) Y(i, c0 + j) = P(i, j);
        }
        c0 += P.cols();
    }
    std::vector<std::size_t> ids;
    for (const auto& p : parts) ids.push_back(p.id());
    return g.record(std::move(Y), parts, [ids, m, n](Graph& g, std::size_t out) {
        const Tensor& dY = g.out_grad(out);
        std::size_t c0 = 0;
        for (auto id : ids) {
            const std::size_t w = g.value(Var(&g, id)).cols();
            if (g.needs_grad(id)) {
                Tensor& dX = g.grad_slot(id);
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < w; ++j) dX(i, j) += dY(i, c0 + j);
                }
            }
            c0 += w;
        }
        (void)n;
    });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
    const Tensor& X = x.value();
    require(count > 0 && begin + count <= X.rows(), ErrorCode::ShapeMismatch, "slice_rows out of range");
    const std::size_t n = X.cols();
    auto src = X.data().subspan(begin * n, count * n);
    Tensor Y({count, n}, std::vector<double>(src.begin(), src.end()));
    return x.graph().record(std::move(Y), {x}, [x, begin, n](Graph& g, std::size_t out) {
        auto dy = g.out_grad(out).data();
        auto dx = g.grad_slot(x.id()).data().subspan(begin * n, dy.size());
        for (std::size_t k = 0; k < dy.size(); ++k) dx[k] += dy[k];
    });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
    const Tensor& X = x.value();
    require(count > 0 && begin + count <= X.cols(), ErrorCode::ShapeMismatch, "slice_cols out of range");
    const std::size_t m = X.rows();
    Tensor Y = Tensor::matrix(m, count);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < count; ++j) Y(i, j) = X(i, begin + j);
    }
    return x.graph().record(std::move(Y), {x}, [x, begin, count, m](Graph& g, std::size_t out) {
        const Tensor& dY = g.out_grad(out);
        Tensor& dX = g.grad_slot(x.id());
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < count; ++j) dX(i, begin + j) += dY(i, j);
        }
    });
}

Var mean_rows(Var x) {
    const Tensor& X = x.value();
    const std::size_t m = X.rows(), n = X.cols();
    Tensor Y = Tensor::matrix(1, n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) Y[j] += X(i, j);
    }
    for (auto& v : Y.data()) v /= static_cast<double>(m);
    return x.graph().record(std::move(Y), {x}, [x, m, n](Graph& g, std::size_t out) {
        auto dy = g.out_grad(out).data();
        Tensor& dX = g.grad_slot(x.id());
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) dX(i, j) += dy[j] / static_cast<double>(m);
        }
    });
}

Var gather_rows(Var table, std::span<const int> ids) {
    const Tensor& T = table.value();
    require(!ids.empty(), ErrorCode::ShapeMismatch, "gather_rows with no ids");
    const std::size_t n = T.cols();
    Tensor Y = Tensor::matrix(ids.size(), n);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < T.rows(), ErrorCode::ShapeMismatch,
                "gather_rows id out of range");
        auto src = T.row(static_cast<std::size_t>(ids[i]));
        std::copy(src.begin(), src.end(), Y.row(i).begin());
    }
    std::vector<int> idv(ids.begin(), ids.end());
    return table.graph().record(std::move(Y), {table}, [table, idv = std::move(idv), n](Graph& g, std::size_t out) {
        const Tensor& dY = g.out_grad(out);
        Tensor& dT = g.grad_slot(table.id());
        for (std::size_t i = 0; i < idv.size(); ++i) {
            for (std::size_t j = 0; j < n; ++j) dT(static_cast<std::size_t>(idv[i]), j) += dY(i, j);
        }
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    return x.graph().record(Tensor({1}, s), {x}, [x](Graph& g, std::size_t out) {
        const double d = g.out_grad(out)[0];
        for (auto& v : g.grad_slot(x.id()).data()) v += d;
    });
}

Var sum_squares(Var x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v * v;
    return x.graph().record(Tensor({1}, s), {x}, [x](Graph& g, std::size_t out) {
        const double d = g.out_grad(out)[0];
        auto xs = x.value().data();
        auto dx = g.grad_slot(x.id()).data();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * d * xs[i];
    });
}

Var nll_mean(Var probs, std::span<const int> labels) {
    constexpr double kFloor = 1e-12;
    const Tensor& P = probs.value();
    require(labels.size() == P.rows(), ErrorCode::ShapeMismatch, "nll_mean label count");
    require(!labels.empty(), ErrorCode::EmptyInput, "nll_mean of empty batch");
    const double nb = static_cast<double>(labels.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= P.cols()) {
            throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[i]));
        }
        loss -= std::log(std::max(P(i, static_cast<std::size_t>(labels[i])), kFloor));
    }
    std::vector<int> lv(labels.begin(), labels.end());
    return probs.graph().record(Tensor({1}, loss / nb), {probs}, [probs, lv = std::move(lv), nb](Graph& g, std::size_t out) {
        const double d = g.out_grad(out)[0];
        const Tensor& P = probs.value();
        Tensor& dP = g.grad_slot(probs.id());
        for (std::size_t i = 0; i < lv.size(); ++i) {
            const auto c = static_cast<std::size_t>(lv[i]);
            if (P(i, c) > kFloor) dP(i, c) -= d / (nb * P(i, c));
        }
    });
}

Var cross_entropy_sum(Var logits, std::span<const int> targets, int ignore) {
    const Tensor& L = logits.value();
    const std::size_t m = L.rows(), n = L.cols();
    require(targets.size() == m, ErrorCode::ShapeMismatch, "cross_entropy target count");
    Tensor soft(L.shape());
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        auto lr = L.row(i);
        auto sr = soft.row(i);
        const double mx = *std::max_element(lr.begin(), lr.end());
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            sr[j] = std::exp(lr[j] - mx);
            s += sr[j];
        }
        for (std::size_t j = 0; j < n; ++j) sr[j] /= s;
        if (targets[i] == ignore) continue;
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n) {
            throw Error(ErrorCode::LabelOutOfRange, "target " + std::to_string(targets[i]));
        }
        loss -= lr[static_cast<std::size_t>(targets[i])] - mx - std::log(s);
    }
    std::vector<int> tv(targets.begin(), targets.end());
    return logits.graph().record(
        Tensor({1}, loss), {logits},
        [logits, tv = std::move(tv), soft = std::move(soft), ignore, m, n](Graph& g, std::size_t out) {
            const double d = g.out_grad(out)[0];
            Tensor& dL = g.grad_slot(logits.id());
            for (std::size_t i = 0; i < m; ++i) {
                if (tv[i] == ignore) continue;
                for (std::size_t j = 0; j < n; ++j) dL(i, j) += d * soft(i, j);
                dL(i, static_cast<std::size_t>(tv[i])) -= d;
            }
        });
}

}  // namespace iavc
