#include "ccnl/optim.hpp"

#include <algorithm>
#include <cmath>

#include "ccnl/error.hpp"

namespace ccnl {

AdamState::AdamState(const Parameter& param, const AdamOptions& options)
    : first_moment(param.value.shape()),
      second_moment(param.value.shape()),
      learning_rate(options.learning_rate),
      beta1(options.beta1),
      beta2(options.beta2),
      epsilon(options.epsilon) {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
        throw ConfigError("Adam requires 0 < beta1, beta2 < 1 and epsilon > 0");
    }
}

void adam_step(Parameter& param, AdamState& state) {
    if (state.first_moment.shape() != param.value.shape()) {
        throw DimensionError("Adam state shape " + shape_string(state.first_moment.shape()) +
                             " does not match parameter " + param.name + " " +
                             shape_string(param.value.shape()));
    }
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < param.value.size(); ++i) {
        const double g = param.grad[i];
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        param.value[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

Adam::Adam(std::vector<Parameter*> params, AdamOptions options) : params_(std::move(params)) {
    states_.reserve(params_.size());
    for (const Parameter* p : params_) states_.emplace_back(*p, options);
}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], states_[i]);
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

std::vector<GradCheckEntry> grad_check_report(const std::function<double()>& loss,
                                              std::span<Parameter* const> params, double h) {
    if (!(h > 0.0)) throw ConfigError("grad_check step must be positive");
    std::vector<GradCheckEntry> report;
    report.reserve(params.size());
    for (Parameter* p : params) {
        GradCheckEntry entry{p->name, 0.0};
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double original = p->value[i];
            p->value[i] = original + h;
            const double plus = loss();
            p->value[i] = original - h;
            const double minus = loss();
            p->value[i] = original;
            const double numeric = (plus - minus) / (2.0 * h);
            const double analytic = p->grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            entry.max_relative_error = std::max(entry.max_relative_error, std::abs(analytic - numeric) / denom);
        }
        report.push_back(std::move(entry));
    }
    return report;
}

double grad_check(const std::function<double()>& loss, std::span<Parameter* const> params, double h) {
    double worst = 0.0;
    for (const auto& e : grad_check_report(loss, params, h)) worst = std::max(worst, e.max_relative_error);
    return worst;
}

}  // namespace ccnl
