#include "ccnl/capsule.hpp"

#include "ccnl/error.hpp"
#include "ccnl/layers.hpp"

namespace ccnl {

namespace {

// u [N_in, d], W [N_p, N_out, d, d] -> predictions [N_in, N_out, d] with
// pred[r, j] = W[r % N_p, j]^T u[r].
Var predict(Var capsules, Var weights, std::size_t channels, std::size_t outputs, std::size_t d) {
    const Tensor& u = capsules.value();
    const Tensor& w = weights.value();
    const std::size_t n_in = u.rows();
    Tensor pred(Shape{n_in, outputs, d});
    for (std::size_t r = 0; r < n_in; ++r) {
        const std::size_t c = r % channels;
        for (std::size_t j = 0; j < outputs; ++j) {
            const double* wm = w.data() + (c * outputs + j) * d * d;
            double* out = pred.data() + (r * outputs + j) * d;
            for (std::size_t p = 0; p < d; ++p) {
                const double up = u.at(r, p);
                for (std::size_t q = 0; q < d; ++q) out[q] += up * wm[p * d + q];
            }
        }
    }
    return capsules.tape->record(
        std::move(pred), {capsules, weights}, [capsules, weights, channels, outputs, d](Tape& t, const Tensor& g) {
            const Tensor& u = t.value(capsules);
            const Tensor& w = t.value(weights);
            const bool need_u = t.requires_grad(capsules);
            const bool need_w = t.requires_grad(weights);
            Tensor* gu = need_u ? &t.grad(capsules) : nullptr;
            Tensor* gw = need_w ? &t.grad(weights) : nullptr;
            for (std::size_t r = 0; r < u.rows(); ++r) {
                const std::size_t c = r % channels;
                for (std::size_t j = 0; j < outputs; ++j) {
                    const std::size_t block = (c * outputs + j) * d * d;
                    const double* gp = g.data() + (r * outputs + j) * d;
                    for (std::size_t p = 0; p < d; ++p) {
                        if (need_u) {
                            double acc = 0.0;
                            for (std::size_t q = 0; q < d; ++q) acc += w[block + p * d + q] * gp[q];
                            gu->at(r, p) += acc;
                        }
                        if (need_w) {
                            const double up = u.at(r, p);
                            for (std::size_t q = 0; q < d; ++q) (*gw)[block + p * d + q] += up * gp[q];
                        }
                    }
                }
            }
        });
}

// s[j] = sum_r c[r, j] * pred[r, j]
Var weighted_sum(Var couplings, Var predictions) {
    const Tensor& c = couplings.value();
    const Tensor& pred = predictions.value();
    const std::size_t n_in = pred.dim(0), n_out = pred.dim(1), d = pred.dim(2);
    Tensor s(Shape{n_out, d});
    for (std::size_t r = 0; r < n_in; ++r)
        for (std::size_t j = 0; j < n_out; ++j) {
            const double cr = c.at(r, j);
            const double* p = pred.data() + (r * n_out + j) * d;
            for (std::size_t q = 0; q < d; ++q) s.at(j, q) += cr * p[q];
        }
    return couplings.tape->record(std::move(s), {couplings, predictions}, [couplings, predictions](Tape& t, const Tensor& g) {
        const Tensor& c = t.value(couplings);
        const Tensor& pred = t.value(predictions);
        const std::size_t n_in = pred.dim(0), n_out = pred.dim(1), d = pred.dim(2);
        if (t.requires_grad(couplings)) {
            Tensor& gc = t.grad(couplings);
            for (std::size_t r = 0; r < n_in; ++r)
                for (std::size_t j = 0; j < n_out; ++j) {
                    const double* p = pred.data() + (r * n_out + j) * d;
                    double acc = 0.0;
                    for (std::size_t q = 0; q < d; ++q) acc += g.at(j, q) * p[q];
                    gc.at(r, j) += acc;
                }
        }
        if (t.requires_grad(predictions)) {
            Tensor& gp = t.grad(predictions);
            for (std::size_t r = 0; r < n_in; ++r)
                for (std::size_t j = 0; j < n_out; ++j) {
                    double* dst = gp.data() + (r * n_out + j) * d;
                    const double cr = c.at(r, j);
                    for (std::size_t q = 0; q < d; ++q) dst[q] += cr * g.at(j, q);
                }
        }
    });
}

// a[r, j] = pred[r, j] . v[j]
Var agreement(Var predictions, Var outputs) {
    const Tensor& pred = predictions.value();
    const Tensor& v = outputs.value();
    const std::size_t n_in = pred.dim(0), n_out = pred.dim(1), d = pred.dim(2);
    Tensor a(Shape{n_in, n_out});
    for (std::size_t r = 0; r < n_in; ++r)
        for (std::size_t j = 0; j < n_out; ++j) {
            const double* p = pred.data() + (r * n_out + j) * d;
            double acc = 0.0;
            for (std::size_t q = 0; q < d; ++q) acc += p[q] * v.at(j, q);
            a.at(r, j) = acc;
        }
    return predictions.tape->record(std::move(a), {predictions, outputs}, [predictions, outputs](Tape& t, const Tensor& g) {
        const Tensor& pred = t.value(predictions);
        const Tensor& v = t.value(outputs);
        const std::size_t n_in = pred.dim(0), n_out = pred.dim(1), d = pred.dim(2);
        const bool need_p = t.requires_grad(predictions);
        const bool need_v = t.requires_grad(outputs);
        Tensor* gp = need_p ? &t.grad(predictions) : nullptr;
        Tensor* gv = need_v ? &t.grad(outputs) : nullptr;
        for (std::size_t r = 0; r < n_in; ++r)
            for (std::size_t j = 0; j < n_out; ++j) {
                const double ga = g.at(r, j);
                const std::size_t base = (r * n_out + j) * d;
                for (std::size_t q = 0; q < d; ++q) {
                    if (need_p) (*gp)[base + q] += ga * v.at(j, q);
                    if (need_v) gv->at(j, q) += ga * pred[base + q];
                }
            }
    });
}

}  // namespace

CapsuleLayerParams CapsuleLayerParams::init(const std::string& prefix, std::size_t input_dim, std::size_t channels,
                                            std::size_t outputs, std::size_t capsule_dim, Rng& rng) {
    if (input_dim == 0 || channels == 0 || outputs == 0 || capsule_dim == 0) {
        throw ConfigError("capsule layer dimensions must be positive");
    }
    CapsuleLayerParams p;
    p.input_dim = input_dim;
    p.channels = channels;
    p.outputs = outputs;
    p.capsule_dim = capsule_dim;
    p.primary_weights = Parameter(prefix + ".primary_weights",
                                  glorot_uniform({input_dim, channels * capsule_dim}, input_dim, channels * capsule_dim, rng));
    p.primary_bias = Parameter(prefix + ".primary_bias", Tensor(Shape{channels * capsule_dim}));
    p.routing_weights =
        Parameter(prefix + ".routing_weights",
                  glorot_uniform({channels, outputs, capsule_dim, capsule_dim}, capsule_dim, capsule_dim, rng));
    return p;
}

std::vector<Parameter*> CapsuleLayerParams::parameters() { return {&primary_weights, &primary_bias, &routing_weights}; }

Tensor squash(const Tensor& s) {
    Tape tape(false);
    const bool vector = s.rank() == 1;
    Var rows = tape.input(s);
    if (vector) rows = ad::reshape(rows, {1, s.size()});
    return ad::squash_rows(rows).value().reshaped(s.shape());
}

Var primary_capsules(Var features, CapsuleLayerParams& params) {
    Tape& tape = *features.tape;
    const std::size_t steps = features.value().rows();
    const Var projected =
        ad::add_bias(ad::matmul(features, tape.param(params.primary_weights)), tape.param(params.primary_bias));
    return ad::squash_rows(ad::reshape(projected, {steps * params.channels, params.capsule_dim}));
}

Tensor primary_capsules(const Tensor& features, const CapsuleLayerParams& params) {
    Tape tape(false);
    return primary_capsules(tape.input(features), const_cast<CapsuleLayerParams&>(params)).value();
}

RoutingVars dynamic_routing(Var capsules, CapsuleLayerParams& params, std::size_t iterations, bool stop_gradient) {
    if (iterations == 0) throw ConfigError("dynamic routing needs at least one iteration");
    const Tensor& u = capsules.value();
    if (u.rank() != 2 || u.cols() != params.capsule_dim) {
        throw DimensionError("routing input " + shape_string(u.shape()) + " does not match capsule dimension " +
                             std::to_string(params.capsule_dim));
    }
    Tape& tape = *capsules.tape;
    RoutingVars out;
    out.predictions = predict(capsules, tape.param(params.routing_weights), params.channels, params.outputs,
                              params.capsule_dim);
    out.logits = tape.constant(Tensor(Shape{u.rows(), params.outputs}));
    for (std::size_t it = 0; it < iterations; ++it) {
        out.couplings = ad::softmax_rows(out.logits);
        out.coupling_history.push_back(out.couplings);
        out.outputs = ad::squash_rows(weighted_sum(out.couplings, out.predictions));
        if (it + 1 == iterations) break;
        const Var agree = stop_gradient ? agreement(tape.constant(out.predictions.value()),
                                                    tape.constant(out.outputs.value()))
                                        : agreement(out.predictions, out.outputs);
        out.logits = ad::add(out.logits, agree);
    }
    return out;
}

RoutingState dynamic_routing(const Tensor& capsules, const CapsuleLayerParams& params, std::size_t iterations) {
    Tape tape(false);
    const RoutingVars vars =
        dynamic_routing(tape.input(capsules), const_cast<CapsuleLayerParams&>(params), iterations);
    RoutingState state;
    state.logits = vars.logits.value();
    state.couplings = vars.couplings.value();
    state.predictions = vars.predictions.value();
    state.outputs = vars.outputs.value();
    state.iterations = iterations;
    for (Var c : vars.coupling_history) state.coupling_history.push_back(c.value());
    return state;
}

Var flatten_capsules(Var capsules) { return ad::reshape(capsules, {1, capsules.value().size()}); }

Tensor flatten_capsules(const Tensor& capsules) { return capsules.reshaped({capsules.size()}); }

}  // namespace ccnl
