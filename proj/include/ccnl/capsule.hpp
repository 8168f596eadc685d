#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ccnl/autodiff.hpp"
#include "ccnl/random.hpp"

namespace ccnl {

// Primary projection: column block i of primary_weights is the per-channel
// matrix W_i [input_dim, d], shared across timesteps. Routing transforms are
// indexed by (primary channel, output capsule), so they are shared across
// timesteps too.
struct CapsuleLayerParams {
    std::size_t input_dim = 0;
    std::size_t channels = 0;     // N_p
    std::size_t outputs = 0;      // N_out
    std::size_t capsule_dim = 0;  // d
    Parameter primary_weights;    // [input_dim, channels * d]
    Parameter primary_bias;       // [channels * d]
    Parameter routing_weights;    // [channels, outputs, d, d]

    static CapsuleLayerParams init(const std::string& prefix, std::size_t input_dim, std::size_t channels,
                                   std::size_t outputs, std::size_t capsule_dim, Rng& rng);
    std::vector<Parameter*> parameters();
};

/// Snapshot of one routing run. logits are the b_{j|i} that produced the final couplings.
struct RoutingState {
    Tensor logits;       // [N_in, N_out]
    Tensor couplings;    // [N_in, N_out]
    Tensor predictions;  // [N_in, N_out, d]
    Tensor outputs;      // [N_out, d]
    std::size_t iterations = 0;
    std::vector<Tensor> coupling_history;  // couplings at each iteration

    friend bool operator==(const RoutingState&, const RoutingState&) = default;
};

/// squash for a single vector [d] or row-wise for [n, d].
Tensor squash(const Tensor& s);

/// [T, input_dim] -> [T * N_p, d]; row t * N_p + i is squash(W_i^T h_t + b_i).
Var primary_capsules(Var features, CapsuleLayerParams& params);
Tensor primary_capsules(const Tensor& features, const CapsuleLayerParams& params);

struct RoutingVars {
    Var outputs;
    Var couplings;
    Var logits;
    Var predictions;
    std::vector<Var> coupling_history;
};

// Dynamic routing from input capsules u [N_in, d], where input row r belongs to
// primary channel r % N_p. With stop_gradient, the agreement updates to the
// logits are treated as constants.
RoutingVars dynamic_routing(Var capsules, CapsuleLayerParams& params, std::size_t iterations,
                            bool stop_gradient = false);
RoutingState dynamic_routing(const Tensor& capsules, const CapsuleLayerParams& params, std::size_t iterations);

/// [N_out, d] -> [1, N_out * d] on the tape, [N_out * d] standalone; row-major.
Var flatten_capsules(Var capsules);
Tensor flatten_capsules(const Tensor& capsules);

}  // namespace ccnl
