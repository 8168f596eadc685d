#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ccnl/parameter.hpp"

namespace ccnl {

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    Tensor first_moment;
    Tensor second_moment;
    std::uint64_t step_count = 0;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    AdamState(const Parameter& param, const AdamOptions& options);
};

/// One bias-corrected Adam update. The gradient is left for the caller to reset.
void adam_step(Parameter& param, AdamState& state);

/// Adam over a fixed list of parameters, one state per parameter.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamOptions options);
    void step();
    void zero_grad();
    const std::vector<Parameter*>& params() const { return params_; }

private:
    std::vector<Parameter*> params_;
    std::vector<AdamState> states_;
};

struct GradCheckEntry {
    std::string name;
    double max_relative_error = 0.0;
};

// Central finite differences against the gradients already stored in each
// Parameter. `loss` must be deterministic and read parameters by reference.
// Relative error uses max(|analytic|, |numeric|, 1e-8) as the denominator.
std::vector<GradCheckEntry> grad_check_report(const std::function<double()>& loss,
                                              std::span<Parameter* const> params, double h = 1e-5);

double grad_check(const std::function<double()>& loss, std::span<Parameter* const> params, double h = 1e-5);

}  // namespace ccnl
