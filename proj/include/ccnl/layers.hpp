#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ccnl/autodiff.hpp"
#include "ccnl/random.hpp"
#include "ccnl/vocab.hpp"

namespace ccnl {

/// Vocabulary-indexed word vectors, stored as [V, e].
struct EmbeddingMatrix {
    Vocabulary vocab;
    Parameter table;
    bool trainable = true;

    std::size_t dim() const { return table.value.cols(); }
    std::size_t size() const { return table.value.rows(); }
    std::span<const double> vector(std::size_t id) const { return table.value.row(id); }
};

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor uniform_tensor(Shape shape, double limit, Rng& rng);

/// Row gather; ids must be < V. Padding id 0 maps to the (all-zero) pad row.
Tensor embed(std::span<const std::size_t> tokens, const EmbeddingMatrix& embeddings);
Var embed(Tape& tape, std::span<const std::size_t> tokens, EmbeddingMatrix& embeddings);

/// One direction of a gated recurrence: gates are packed column-wise.
struct RecurrentDirection {
    Parameter input_weights;      // [e, G*k]
    Parameter recurrent_weights;  // [k, G*k]
    Parameter bias;               // [G*k]
};

// LSTM gate order: input, forget, output, candidate.
struct BiLstmParams {
    std::size_t hidden = 0;
    RecurrentDirection forward;
    RecurrentDirection backward;

    static BiLstmParams init(const std::string& prefix, std::size_t input_dim, std::size_t hidden, Rng& rng);
    std::vector<Parameter*> parameters();
};

// GRU gate order: update, reset, candidate. The reset gate scales the
// recurrent contribution of the candidate: n = tanh(x W_n + r * (h U_n) + b_n).
struct BiGruParams {
    std::size_t hidden = 0;
    RecurrentDirection forward;
    RecurrentDirection backward;

    static BiGruParams init(const std::string& prefix, std::size_t input_dim, std::size_t hidden, Rng& rng);
    std::vector<Parameter*> parameters();
};

struct Conv1dParams {
    std::size_t width = 3;
    Parameter weights;  // [width*e, F], tap-major
    Parameter bias;     // [F]

    static Conv1dParams init(const std::string& prefix, std::size_t input_dim, std::size_t filters, std::size_t width,
                             Rng& rng);
    std::vector<Parameter*> parameters();
};

/// [T, e] -> [T, 2k]; each row is [forward_t; backward_t], zero initial states.
Var bilstm_forward(Var inputs, BiLstmParams& params);
Tensor bilstm_forward(const Tensor& inputs, const BiLstmParams& params);

Var gru_forward(Var inputs, BiGruParams& params);
Tensor gru_forward(const Tensor& inputs, const BiGruParams& params);

/// Same-length zero-padded convolution followed by ReLU: [T, e] -> [T, F].
Var conv1d_forward(Var inputs, Conv1dParams& params);
Tensor conv1d_forward(const Tensor& inputs, const Conv1dParams& params);

/// Inverted dropout in training mode, identity otherwise.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);
Var dropout(Var x, double rate, bool training, Rng& rng);

}  // namespace ccnl
