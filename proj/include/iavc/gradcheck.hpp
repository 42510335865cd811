#pragma once

#include <functional>
#include <string>

#include "iavc/autograd.hpp"
#include "iavc/params.hpp"

namespace iavc {

// Scalar-valued function of the store's parameters. Must be deterministic;
// anything stochastic (dropout) has to run in infer mode.
using ScalarFunction = std::function<Var(Graph&, const ParameterStore&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

// Compares reverse-mode gradients with central differences for every scalar
// of every trainable entry. Error per scalar is
// |autodiff - numeric| / max(1, |numeric|). The store is left unchanged
// apart from its gradient slots.
GradCheckResult grad_check(const ScalarFunction& f, ParameterStore& store, double eps = 1e-5);

}  // namespace iavc
