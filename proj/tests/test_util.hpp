#pragma once

#include <cmath>
#include <vector>

#include "ccnl/autodiff.hpp"
#include "ccnl/optim.hpp"
#include "ccnl/random.hpp"
#include "ccnl/tensor.hpp"

namespace testutil {

inline ccnl::Tensor random_tensor(ccnl::Shape shape, ccnl::Rng& rng, double limit = 1.0) {
    ccnl::Tensor t(std::move(shape));
    for (double& x : t.values()) x = ccnl::uniform(rng, -limit, limit);
    return t;
}

// Backward through `build`, then compare against central differences.
template <typename Build>
std::vector<ccnl::GradCheckEntry> tape_grad_check(const std::vector<ccnl::Parameter*>& params, Build build,
                                                 double h = 1e-5) {
    for (auto* p : params) p->zero_grad();
    {
        ccnl::Tape tape;
        tape.backward(build(tape));
    }
    const auto f = [&] {
        ccnl::Tape tape(false);
        return tape.value(build(tape))[0];
    };
    return ccnl::grad_check_report(f, params, h);
}

// Moves every parameter to a random point away from the near-zero-output initialisation.
inline void randomize(const std::vector<ccnl::Parameter*>& params, ccnl::Rng& rng, double limit = 1.0) {
    for (auto* p : params)
        for (double& x : p->value.values()) x = ccnl::uniform(rng, -limit, limit);
}

// A fixed random projection to a scalar so every output coordinate matters.
inline ccnl::Var project(ccnl::Var v, const ccnl::Tensor& weights) {
    return ccnl::ad::sum(ccnl::ad::mul_const(v, weights));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace testutil
