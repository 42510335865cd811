#include "iavc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace iavc {

namespace {

double evaluate(const ScalarFunction& f, const ParameterStore& store) {
    Graph g(false);
    return f(g, store).value()[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& f, ParameterStore& store, double eps) {
    store.zero_grads();
    {
        Graph g;
        Var loss = f(g, store);
        g.backward(loss, store);
    }
    GradCheckResult result;
    for (auto& [name, e] : store) {
        if (!e.trainable) continue;
        auto w = e.value.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + eps;
            const double up = evaluate(f, store);
            w[i] = saved - eps;
            const double down = evaluate(f, store);
            w[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double err = std::abs(e.grad[i] - numeric) / std::max(1.0, std::abs(numeric));
            ++result.checked;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_parameter = name;
                result.worst_index = i;
            }
        }
    }
    return result;
}

}  // namespace iavc
