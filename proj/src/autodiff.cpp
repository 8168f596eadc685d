#include "ccnl/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "ccnl/error.hpp"

namespace ccnl {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
MutMap as_matrix(Tensor& t) { return MutMap(t.data(), t.rows(), t.cols()); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

void require_rank2(const char* op, const Tensor& a) {
    if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected rank 2, got " + shape_string(a.shape()));
}

// Applies f elementwise and records backward g' = gout * df(x, y).
template <typename F, typename D>
Var unary(Var a, F f, D df) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    return t.record(std::move(y), {a}, [a, df](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(a)) return;
        const Tensor& x = tape.value(a);
        Tensor& ga = tape.grad(a);
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i]);
    });
}

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
}

Var Tape::input(const Tensor& value) {
    Node n;
    n.external = &value;
    return push(std::move(n));
}

Var Tape::param(Parameter& p) {
    Node n;
    n.external = &p.value;
    if (grad_enabled_) {
        n.external_grad = &p.grad;
        n.requires_grad = true;
    }
    return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
    Node n;
    n.owned = std::move(value);
    if (grad_enabled_) {
        n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [this](Var v) { return requires_grad(v); });
        if (n.requires_grad) n.backward = std::move(backward);
    }
    return push(std::move(n));
}

Tensor& Tape::grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.external_grad) return *n.external_grad;
    if (n.owned_grad.empty()) n.owned_grad = Tensor(n.value().shape());
    return n.owned_grad;
}

void Tape::backward(Var root) {
    if (value(root).size() != 1) {
        throw DimensionError("backward root must be a scalar, got " + shape_string(value(root).shape()));
    }
    if (!requires_grad(root)) return;
    grad(root)[0] += 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backward && !n.owned_grad.empty()) n.backward(*this, n.owned_grad);
    }
}

namespace ad {

Var add(Var a, Var b) {
    require_same_shape("add", a.value(), b.value());
    Tensor y = a.value();
    y.add_inplace(b.value());
    return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) t.grad(a).add_inplace(g);
        if (t.requires_grad(b)) t.grad(b).add_inplace(g);
    });
}

Var sub(Var a, Var b) {
    require_same_shape("sub", a.value(), b.value());
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
    return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) t.grad(a).add_inplace(g);
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    require_same_shape("mul", a.value(), b.value());
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
    return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Var one_minus(Var a) {
    return unary(a, [](double x) { return 1.0 - x; }, [](double) { return -1.0; });
}

Var add_bias(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2("add_bias", av);
    if (bv.size() != av.cols()) {
        throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " vs input " + shape_string(av.shape()));
    }
    Tensor y = av;
    for (std::size_t r = 0; r < y.rows(); ++r)
        for (std::size_t c = 0; c < y.cols(); ++c) y.at(r, c) += bv[c];
    return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) t.grad(a).add_inplace(g);
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad(b);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
        }
    });
}

Var matmul(Var a, Var b) {
    Tensor y = ccnl::matmul(a.value(), b.value());
    return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const auto gm = as_matrix(g);
        if (t.requires_grad(a)) as_matrix(t.grad(a)).noalias() += gm * as_matrix(t.value(b)).transpose();
        if (t.requires_grad(b)) as_matrix(t.grad(b)).noalias() += as_matrix(t.value(a)).transpose() * gm;
    });
}

Var sigmoid(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    const std::size_t out_id = t.size();
    return t.record(std::move(y), {a}, [a, out_id](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(a)) return;
        const Tensor& y = tape.value(Var{&tape, out_id});
        Tensor& ga = tape.grad(a);
        for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

Var tanh(Var a) {
    Tape& t = *a.tape;
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    const std::size_t out_id = t.size();
    return t.record(std::move(y), {a}, [a, out_id](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(a)) return;
        const Tensor& y = tape.value(Var{&tape, out_id});
        Tensor& ga = tape.grad(a);
        for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var mul_const(Var a, const Tensor& mask) {
    require_same_shape("mul_const", a.value(), mask);
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
    return a.tape->record(std::move(y), {a}, [a, mask](Tape& t, const Tensor& g) {
        if (!t.requires_grad(a)) return;
        Tensor& ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Tensor& x = a.value();
    require_rank2("slice_cols", x);
    if (begin >= end || end > x.cols()) throw DimensionError("slice_cols: bad column range");
    const std::size_t width = end - begin;
    Tensor y(Shape{x.rows(), width});
    for (std::size_t r = 0; r < x.rows(); ++r)
        std::copy_n(x.row(r).begin() + static_cast<std::ptrdiff_t>(begin), width, y.row(r).begin());
    return a.tape->record(std::move(y), {a}, [a, begin, width](Tape& t, const Tensor& g) {
        if (!t.requires_grad(a)) return;
        Tensor& ga = t.grad(a);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < width; ++c) ga.at(r, begin + c) += g.at(r, c);
    });
}

Var row(Var a, std::size_t r) {
    const Tensor& x = a.value();
    require_rank2("row", x);
    if (r >= x.rows()) throw DimensionError("row index out of range");
    const auto src = x.row(r);
    Tensor y(Shape{1, x.cols()}, std::vector<double>(src.begin(), src.end()));
    return a.tape->record(std::move(y), {a}, [a, r](Tape& t, const Tensor& g) {
        if (!t.requires_grad(a)) return;
        auto dst = t.grad(a).row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += g[c];
    });
}

Var stack_rows(std::span<const Var> rows) {
    if (rows.empty()) throw DimensionError("stack_rows: no rows");
    const std::size_t width = rows[0].value().size();
    Tensor y(Shape{rows.size(), width});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Tensor& v = rows[r].value();
        if (v.size() != width) throw DimensionError("stack_rows: ragged rows");
        std::copy(v.values().begin(), v.values().end(), y.row(r).begin());
    }
    std::vector<Var> inputs(rows.begin(), rows.end());
    return rows[0].tape->record(std::move(y), rows, [inputs](Tape& t, const Tensor& g) {
        for (std::size_t r = 0; r < inputs.size(); ++r) {
            if (!t.requires_grad(inputs[r])) continue;
            Tensor& gr = t.grad(inputs[r]);
            const auto src = g.row(r);
            for (std::size_t c = 0; c < src.size(); ++c) gr[c] += src[c];
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t n = parts[0].value().rows();
    std::size_t total = 0;
    for (Var p : parts) {
        require_rank2("concat_cols", p.value());
        if (p.value().rows() != n) throw DimensionError("concat_cols: row count mismatch");
        total += p.value().cols();
    }
    Tensor y(Shape{n, total});
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& v = p.value();
        for (std::size_t r = 0; r < n; ++r)
            std::copy(v.row(r).begin(), v.row(r).end(), y.row(r).begin() + static_cast<std::ptrdiff_t>(off));
        offsets.push_back(off);
        off += v.cols();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return parts[0].tape->record(std::move(y), parts, [inputs, offsets](Tape& t, const Tensor& g) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            if (!t.requires_grad(inputs[k])) continue;
            Tensor& gk = t.grad(inputs[k]);
            for (std::size_t r = 0; r < gk.rows(); ++r)
                for (std::size_t c = 0; c < gk.cols(); ++c) gk.at(r, c) += g.at(r, offsets[k] + c);
        }
    });
}

Var reshape(Var a, Shape shape) {
    Tensor y = a.value().reshaped(std::move(shape));
    return a.tape->record(std::move(y), {a}, [a](Tape& t, const Tensor& g) {
        if (!t.requires_grad(a)) return;
        Tensor& ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var mean_rows(Var a) {
    const Tensor& x = a.value();
    require_rank2("mean_rows", x);
    const double inv = 1.0 / static_cast<double>(x.rows());
    Tensor y(Shape{1, x.cols()});
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) y[c] += x.at(r, c);
    for (std::size_t c = 0; c < x.cols(); ++c) y[c] *= inv;
    return a.tape->record(std::move(y), {a}, [a, inv](Tape& t, const Tensor& g) {
        if (!t.requires_grad(a)) return;
        Tensor& ga = t.grad(a);
        for (std::size_t r = 0; r < ga.rows(); ++r)
            for (std::size_t c = 0; c < ga.cols(); ++c) ga.at(r, c) += g[c] * inv;
    });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    return a.tape->record(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
        if (!t.requires_grad(a)) return;
        Tensor& ga = t.grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
    });
}

Var softmax_rows(Var a) {
    require_rank2("softmax_rows", a.value());
    Tape& t = *a.tape;
    const std::size_t out_id = t.size();
    return t.record(softmax(a.value(), 1), {a}, [a, out_id](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(a)) return;
        const Tensor& p = tape.value(Var{&tape, out_id});
        Tensor& ga = tape.grad(a);
        for (std::size_t r = 0; r < p.rows(); ++r) {
            double inner = 0.0;
            for (std::size_t c = 0; c < p.cols(); ++c) inner += g.at(r, c) * p.at(r, c);
            for (std::size_t c = 0; c < p.cols(); ++c) ga.at(r, c) += p.at(r, c) * (g.at(r, c) - inner);
        }
    });
}

namespace {

struct SquashTerms {
    double factor;  // |s| / (1 + |s|^2)
    double radial;  // d factor / d|s|, divided by |s|
};

SquashTerms squash_terms(std::span<const double> s) {
    const double n2 = dot(s, s);
    if (std::isfinite(n2)) {
        const double n = std::sqrt(n2);
        return {n / (1.0 + n2), n > 0.0 ? (1.0 - n2) / ((1.0 + n2) * (1.0 + n2) * n) : 0.0};
    }
    // |s|^2 overflows: rescale, then work with t = 1/|s|.
    double peak = 0.0;
    for (double x : s) peak = std::max(peak, std::abs(x));
    double scaled = 0.0;
    for (double x : s) scaled += (x / peak) * (x / peak);
    const double t = 1.0 / (peak * std::sqrt(scaled));
    const double t2 = t * t;
    return {t / (1.0 + t2), (t2 - 1.0) * t2 * t / ((1.0 + t2) * (1.0 + t2))};
}

}  // namespace

Var squash_rows(Var a) {
    const Tensor& s = a.value();
    require_rank2("squash_rows", s);
    Tensor y(s.shape());
    for (std::size_t r = 0; r < s.rows(); ++r) {
        const double factor = squash_terms(s.row(r)).factor;
        for (std::size_t c = 0; c < s.cols(); ++c) y.at(r, c) = factor * s.at(r, c);
    }
    return a.tape->record(std::move(y), {a}, [a](Tape& t, const Tensor& g) {
        if (!t.requires_grad(a)) return;
        const Tensor& s = t.value(a);
        Tensor& ga = t.grad(a);
        for (std::size_t r = 0; r < s.rows(); ++r) {
            const SquashTerms k = squash_terms(s.row(r));
            const double radial = k.radial * dot(s.row(r), g.row(r));
            for (std::size_t c = 0; c < s.cols(); ++c) ga.at(r, c) += k.factor * g.at(r, c) + radial * s.at(r, c);
        }
    });
}

Var cross_entropy_with_logits(Var logits, std::size_t label) {
    const Tensor& z = logits.value();
    if (z.rank() != 2 || z.rows() != 1 || label >= z.cols()) {
        throw DimensionError("cross_entropy_with_logits: expected [1, C] logits and label < C");
    }
    Tensor p = softmax(z, 1);
    double peak = z[0];
    for (std::size_t c = 1; c < z.cols(); ++c) peak = std::max(peak, z[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) total += std::exp(z[c] - peak);
    const double loss = peak + std::log(total) - z[label];
    return logits.tape->record(Tensor::scalar(loss), {logits}, [logits, label, p](Tape& t, const Tensor& g) {
        if (!t.requires_grad(logits)) return;
        Tensor& gz = t.grad(logits);
        for (std::size_t c = 0; c < p.size(); ++c) gz[c] += g[0] * (p[c] - (c == label ? 1.0 : 0.0));
    });
}

Var gather_rows(Tape& tape, Parameter& table, std::span<const std::size_t> ids, bool trainable) {
    const Tensor& e = table.value;
    require_rank2("gather_rows", e);
    Tensor y(Shape{ids.size(), e.cols()});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= e.rows()) {
            throw VocabularyError("token id " + std::to_string(ids[r]) + " out of range for vocabulary of size " +
                                  std::to_string(e.rows()));
        }
        std::copy(e.row(ids[r]).begin(), e.row(ids[r]).end(), y.row(r).begin());
    }
    if (!trainable || !tape.grad_enabled()) return tape.constant(std::move(y));
    // Route the gradient through a leaf that owns no storage: the closure
    // writes straight into the table's gradient rows.
    Var anchor = tape.param(table);
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    Parameter* target = &table;
    return tape.record(std::move(y), {anchor}, [rows, target](Tape&, const Tensor& g) {
        for (std::size_t r = 0; r < rows.size(); ++r) {
            auto dst = target->grad.row(rows[r]);
            const auto src = g.row(r);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
    });
}

}  // namespace ad
}  // namespace ccnl
