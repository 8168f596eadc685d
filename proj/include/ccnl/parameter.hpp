#pragma once

#include <string>
#include <utility>

#include "ccnl/tensor.hpp"

namespace ccnl {

/// A trainable tensor and its gradient accumulator (always the same shape).
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(0.0); }
};

}  // namespace ccnl
