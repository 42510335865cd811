#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iavc/params.hpp"
#include "iavc/tensor.hpp"

namespace iavc {

class Graph;

enum class Mode { Train, Infer };

// Handle to a value recorded on a Graph.
class Var {
public:
    Var() = default;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    const Tensor& value() const;
    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

// Append-only tape of operations. Nodes are created in topological order, so
// backward() is a single reverse sweep that visits each node once.
//
// With recording disabled no backward closures are kept, which is what the
// inference paths use.
class Graph {
public:
    explicit Graph(bool record = true) : record_(record) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const noexcept { return record_; }

    Var constant(Tensor value);
    // Leaf bound to a store entry. Repeated lookups of one name share a node.
    Var param(const ParameterStore& store, std::string_view name);

    const Tensor& value(Var v) const { return nodes_[v.id()].value; }
    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
    // Gradient of the last backward() target w.r.t. v (zeros if unreached).
    Tensor grad(Var v) const;

    // Accumulates dLoss/dParam into the gradient slot of every trainable
    // parameter reached from `loss`. Throws NonScalarLoss unless size 1.
    void backward(Var loss, ParameterStore& store);

    std::size_t node_count() const noexcept { return nodes_.size(); }

    // Op plumbing.
    using Backprop = std::function<void(Graph&, std::size_t out)>;
    Var record(Tensor value, std::span<const Var> inputs, Backprop backprop);
    Var record(Tensor value, std::initializer_list<Var> inputs, Backprop backprop) {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backprop));
    }
    Tensor& grad_slot(std::size_t id);
    const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
    bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Backprop backprop;
        std::string param_name;
        bool requires_grad = false;
    };
    bool record_;
    std::deque<Node> nodes_;  // stable addresses: value() references survive growth
    std::unordered_map<std::string, std::size_t> params_;
};

// Matrix products (rank-1 operands act as one row).
Var matmul(Var a, Var b);     // a[m x p] * b[p x n]
Var matmul_bt(Var a, Var b);  // a[m x p] * b[n x p]^T

Var add(Var a, Var b);            // equal shapes
Var add_bias(Var x, Var bias);    // x[m x n] + bias[n] on every row
Var scale(Var x, double factor);
Var softmax_rows(Var x, bool causal = false);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gelu(Var x);
Var dropout(Var x, double rate, Mode mode, Rng& rng);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var mean_rows(Var x);  // [m x n] -> [1 x n]
Var gather_rows(Var table, std::span<const int> ids);

Var sum(Var x);          // -> [1]
Var sum_squares(Var x);  // -> [1]

// -(1/N) sum_n log(max(p[n, label_n], 1e-12)) over rows of a probability matrix.
Var nll_mean(Var probs, std::span<const int> labels);
// -sum_t log softmax(logits[t])[target_t], skipping targets equal to `ignore`.
Var cross_entropy_sum(Var logits, std::span<const int> targets, int ignore = -1);

inline Var operator+(Var a, Var b) { return add(a, b); }

// Standard normal CDF and exact GELU, shared with tests and oracles.
double normal_cdf(double x);
double gelu_value(double x);

}  // namespace iavc
