#include "ccnl/layers.hpp"

#include <array>
#include <cmath>

#include "ccnl/error.hpp"

namespace ccnl {

namespace {

constexpr double kRecurrentInitLimit = 0.08;

RecurrentDirection init_direction(const std::string& prefix, std::size_t input_dim, std::size_t hidden,
                                  std::size_t gates, Rng& rng) {
    RecurrentDirection d;
    d.input_weights = Parameter(prefix + ".input_weights",
                                uniform_tensor({input_dim, gates * hidden}, kRecurrentInitLimit, rng));
    d.recurrent_weights = Parameter(prefix + ".recurrent_weights",
                                    uniform_tensor({hidden, gates * hidden}, kRecurrentInitLimit, rng));
    d.bias = Parameter(prefix + ".bias", Tensor(Shape{gates * hidden}));
    return d;
}

struct DirectionVars {
    Var input_weights;
    Var recurrent_weights;
    Var bias;
};

DirectionVars bind(Tape& tape, RecurrentDirection& d) {
    return {tape.param(d.input_weights), tape.param(d.recurrent_weights), tape.param(d.bias)};
}

Var lstm_direction(Var inputs, RecurrentDirection& params, std::size_t k, bool reverse) {
    Tape& tape = *inputs.tape;
    const DirectionVars w = bind(tape, params);
    const std::size_t steps = inputs.value().rows();
    const Var projected = ad::add_bias(ad::matmul(inputs, w.input_weights), w.bias);
    Var h = tape.constant(Tensor(Shape{1, k}));
    Var c = tape.constant(Tensor(Shape{1, k}));
    std::vector<Var> outputs(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = reverse ? steps - 1 - s : s;
        Var z = ad::row(projected, t);
        if (s > 0) z = ad::add(z, ad::matmul(h, w.recurrent_weights));
        const Var in_gate = ad::sigmoid(ad::slice_cols(z, 0, k));
        const Var forget_gate = ad::sigmoid(ad::slice_cols(z, k, 2 * k));
        const Var out_gate = ad::sigmoid(ad::slice_cols(z, 2 * k, 3 * k));
        const Var candidate = ad::tanh(ad::slice_cols(z, 3 * k, 4 * k));
        c = s > 0 ? ad::add(ad::mul(forget_gate, c), ad::mul(in_gate, candidate)) : ad::mul(in_gate, candidate);
        h = ad::mul(out_gate, ad::tanh(c));
        outputs[t] = h;
    }
    return ad::stack_rows(outputs);
}

Var gru_direction(Var inputs, RecurrentDirection& params, std::size_t k, bool reverse) {
    Tape& tape = *inputs.tape;
    const DirectionVars w = bind(tape, params);
    const std::size_t steps = inputs.value().rows();
    const Var projected = ad::add_bias(ad::matmul(inputs, w.input_weights), w.bias);
    Var h = tape.constant(Tensor(Shape{1, k}));
    std::vector<Var> outputs(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = reverse ? steps - 1 - s : s;
        const Var x = ad::row(projected, t);
        const Var hw = ad::matmul(h, w.recurrent_weights);
        const Var update = ad::sigmoid(ad::add(ad::slice_cols(x, 0, k), ad::slice_cols(hw, 0, k)));
        const Var reset = ad::sigmoid(ad::add(ad::slice_cols(x, k, 2 * k), ad::slice_cols(hw, k, 2 * k)));
        const Var candidate =
            ad::tanh(ad::add(ad::slice_cols(x, 2 * k, 3 * k), ad::mul(reset, ad::slice_cols(hw, 2 * k, 3 * k))));
        // h' = z * h + (1 - z) * n
        h = ad::add(ad::mul(update, h), ad::mul(ad::one_minus(update), candidate));
        outputs[t] = h;
    }
    return ad::stack_rows(outputs);
}

// [T, e] -> [T, width*e]; row t holds x[t - left .. t - left + width - 1].
Var unfold(Var inputs, std::size_t width) {
    const Tensor& x = inputs.value();
    const std::size_t steps = x.rows();
    const std::size_t e = x.cols();
    const std::ptrdiff_t left = static_cast<std::ptrdiff_t>((width - 1) / 2);
    Tensor y(Shape{steps, width * e});
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t tap = 0; tap < width; ++tap) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + tap) - left;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
            for (std::size_t j = 0; j < e; ++j) y.at(t, tap * e + j) = x.at(static_cast<std::size_t>(src), j);
        }
    }
    return inputs.tape->record(std::move(y), {inputs}, [inputs, width, left](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(inputs)) return;
        Tensor& gx = tape.grad(inputs);
        const std::size_t steps = gx.rows();
        const std::size_t e = gx.cols();
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t tap = 0; tap < width; ++tap) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + tap) - left;
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
                for (std::size_t j = 0; j < e; ++j) gx.at(static_cast<std::size_t>(src), j) += g.at(t, tap * e + j);
            }
        }
    });
}

// Runs a layer on a forward-only tape. The tape never writes to parameters
// when gradients are disabled, so dropping const here is sound.
template <typename Params, typename Fn>
Tensor evaluate(const Tensor& inputs, const Params& params, Fn fn) {
    Tape tape(false);
    Var out = fn(tape.input(inputs), const_cast<Params&>(params));
    return out.value();
}

}  // namespace

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform_tensor(std::move(shape), limit, rng);
}

Tensor uniform_tensor(Shape shape, double limit, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(rng, -limit, limit);
    return t;
}

Tensor embed(std::span<const std::size_t> tokens, const EmbeddingMatrix& embeddings) {
    const Tensor& table = embeddings.table.value;
    Tensor out(Shape{tokens.size(), table.cols()});
    for (std::size_t r = 0; r < tokens.size(); ++r) {
        if (tokens[r] >= table.rows()) {
            throw VocabularyError("token id " + std::to_string(tokens[r]) + " out of range for vocabulary of size " +
                                  std::to_string(table.rows()));
        }
        std::copy(table.row(tokens[r]).begin(), table.row(tokens[r]).end(), out.row(r).begin());
    }
    return out;
}

Var embed(Tape& tape, std::span<const std::size_t> tokens, EmbeddingMatrix& embeddings) {
    return ad::gather_rows(tape, embeddings.table, tokens, embeddings.trainable);
}

BiLstmParams BiLstmParams::init(const std::string& prefix, std::size_t input_dim, std::size_t hidden, Rng& rng) {
    BiLstmParams p;
    p.hidden = hidden;
    p.forward = init_direction(prefix + ".forward", input_dim, hidden, 4, rng);
    p.backward = init_direction(prefix + ".backward", input_dim, hidden, 4, rng);
    for (RecurrentDirection* d : {&p.forward, &p.backward})
        for (std::size_t j = hidden; j < 2 * hidden; ++j) d->bias.value[j] = 1.0;
    return p;
}

std::vector<Parameter*> BiLstmParams::parameters() {
    return {&forward.input_weights,  &forward.recurrent_weights,  &forward.bias,
            &backward.input_weights, &backward.recurrent_weights, &backward.bias};
}

BiGruParams BiGruParams::init(const std::string& prefix, std::size_t input_dim, std::size_t hidden, Rng& rng) {
    BiGruParams p;
    p.hidden = hidden;
    p.forward = init_direction(prefix + ".forward", input_dim, hidden, 3, rng);
    p.backward = init_direction(prefix + ".backward", input_dim, hidden, 3, rng);
    return p;
}

std::vector<Parameter*> BiGruParams::parameters() {
    return {&forward.input_weights,  &forward.recurrent_weights,  &forward.bias,
            &backward.input_weights, &backward.recurrent_weights, &backward.bias};
}

Conv1dParams Conv1dParams::init(const std::string& prefix, std::size_t input_dim, std::size_t filters,
                                std::size_t width, Rng& rng) {
    if (width == 0) throw ConfigError("convolution width must be positive");
    Conv1dParams p;
    p.width = width;
    p.weights = Parameter(prefix + ".weights",
                          glorot_uniform({width * input_dim, filters}, width * input_dim, filters, rng));
    p.bias = Parameter(prefix + ".bias", Tensor(Shape{filters}));
    return p;
}

std::vector<Parameter*> Conv1dParams::parameters() { return {&weights, &bias}; }

Var bilstm_forward(Var inputs, BiLstmParams& params) {
    const std::size_t k = params.hidden;
    const std::array<Var, 2> halves{lstm_direction(inputs, params.forward, k, false),
                                    lstm_direction(inputs, params.backward, k, true)};
    return ad::concat_cols(halves);
}

Tensor bilstm_forward(const Tensor& inputs, const BiLstmParams& params) {
    return evaluate(inputs, params, [](Var x, BiLstmParams& p) { return bilstm_forward(x, p); });
}

Var gru_forward(Var inputs, BiGruParams& params) {
    const std::size_t k = params.hidden;
    const std::array<Var, 2> halves{gru_direction(inputs, params.forward, k, false),
                                    gru_direction(inputs, params.backward, k, true)};
    return ad::concat_cols(halves);
}

Tensor gru_forward(const Tensor& inputs, const BiGruParams& params) {
    return evaluate(inputs, params, [](Var x, BiGruParams& p) { return gru_forward(x, p); });
}

Var conv1d_forward(Var inputs, Conv1dParams& params) {
    Tape& tape = *inputs.tape;
    const Var patches = unfold(inputs, params.width);
    return ad::relu(ad::add_bias(ad::matmul(patches, tape.param(params.weights)), tape.param(params.bias)));
}

Tensor conv1d_forward(const Tensor& inputs, const Conv1dParams& params) {
    return evaluate(inputs, params, [](Var x, Conv1dParams& p) { return conv1d_forward(x, p); });
}

namespace {

Tensor dropout_mask(const Shape& shape, double rate, Rng& rng) {
    Tensor mask(shape);
    const double keep = 1.0 - rate;
    const double scale = 1.0 / keep;
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = uniform(rng, 0.0, 1.0) < keep ? scale : 0.0;
    return mask;
}

void check_rate(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
}

}  // namespace

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
    check_rate(rate);
    if (!training || rate == 0.0) return x;
    const Tensor mask = dropout_mask(x.shape(), rate, rng);
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
    return y;
}

Var dropout(Var x, double rate, bool training, Rng& rng) {
    check_rate(rate);
    if (!training || rate == 0.0) return x;
    return ad::mul_const(x, dropout_mask(x.shape(), rate, rng));
}

}  // namespace ccnl
