#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ccnl/capsule.hpp"
#include "ccnl/data.hpp"
#include "ccnl/layers.hpp"

namespace ccnl {

enum class Ablation { full, non_parallel, non_lstm, non_caps, cnn_extractor, gru_extractor };

/// Variants in ablation-table row order.
inline constexpr std::array<Ablation, 6> kAblationTableOrder{Ablation::non_parallel, Ablation::non_lstm,
                                                             Ablation::non_caps,     Ablation::cnn_extractor,
                                                             Ablation::gru_extractor, Ablation::full};

std::string_view ablation_tag(Ablation a);
std::string_view ablation_display_name(Ablation a);
/// Accepts the canonical tags plus the aliases non_fe, cnn, gru and ccnl.
Ablation parse_ablation(std::string_view tag);

enum class Activation { relu, tanh };

struct ModelConfig {
    std::size_t embedding_dim = 300;
    std::size_t lstm_units = 128;  // per direction
    std::size_t classifier_hidden = 50;
    std::size_t capsule_dim = 16;
    std::size_t capsule_count = 10;     // output capsules
    std::size_t primary_channels = 10;  // primary capsules per timestep
    std::size_t routing_iterations = 5;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double dropout = 0.4;
    std::size_t batch_size = 8;
    std::size_t max_sequence_length = 75;
    std::size_t max_epochs = 100;
    std::size_t early_stopping_patience = 10;
    std::uint64_t seed = 1;
    Ablation ablation = Ablation::full;
    bool embeddings_trainable = true;
    std::size_t conv_width = 3;
    bool routing_stop_gradient = false;
    Activation classifier_activation = Activation::relu;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::vector<std::string> config_keys();
/// Sets one field from its string form; unknown keys and bad values throw ConfigError.
void set_config_value(ModelConfig& config, std::string_view key, std::string_view value);
std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(std::string_view json);

/// Token ids for both texts of a parallel example, right-padded with 0 to T.
struct EncodedPair {
    std::string id;
    std::vector<std::size_t> source;
    std::vector<std::size_t> target;
    int label = 0;
};

/// Embedding -> feature extractor (optional) -> capsule stack (optional).
struct Tower {
    std::string name;
    EmbeddingMatrix embeddings;
    std::optional<BiLstmParams> lstm;
    std::optional<BiGruParams> gru;
    std::optional<Conv1dParams> conv;
    std::optional<CapsuleLayerParams> capsules;

    std::size_t feature_dim() const;
    std::size_t output_width() const;
    std::vector<Parameter*> parameters();
};

class CcnlModel {
public:
    /// One embedding matrix per tower (2, or 1 for non_parallel), each of width config.embedding_dim.
    CcnlModel(ModelConfig config, std::vector<EmbeddingMatrix> embeddings, Rng& rng);

    static std::size_t tower_count(Ablation ablation);

    const ModelConfig& config() const { return config_; }
    std::vector<Tower>& towers() { return towers_; }
    const std::vector<Tower>& towers() const { return towers_; }

    /// Pre-classifier width (sum of tower outputs).
    std::size_t feature_width() const;

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    /// parameters() minus frozen embedding tables.
    std::vector<Parameter*> trainable_parameters();

    EncodedPair encode(const ParallelExample& example) const;

    // `rng` is only drawn from in training mode (dropout) and may be null otherwise.
    Var features(Tape& tape, const EncodedPair& example, bool training, Rng* rng);
    Var logits(Tape& tape, const EncodedPair& example, bool training, Rng* rng);

    /// Class probabilities [2].
    Tensor forward(const EncodedPair& example, bool training = false, Rng* rng = nullptr) const;

private:
    Var tower_output(Tape& tape, Tower& tower, std::span<const std::size_t> ids, bool training, Rng* rng);

    ModelConfig config_;
    std::vector<Tower> towers_;
    Parameter hidden_weights_;
    Parameter hidden_bias_;
    Parameter output_weights_;
    Parameter output_bias_;
};

/// -ln p[label].
double loss(std::span<const double> probabilities, int label);
double batch_loss(std::span<const Tensor> probabilities, std::span<const int> labels);

struct Prediction {
    int label = 0;
    std::array<double, 2> probabilities{};
};

/// Argmax; an exact tie resolves to label 0.
int decide(std::span<const double> probabilities);
std::vector<Prediction> predict(const CcnlModel& model, std::span<const EncodedPair> examples);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_macro_f1 = std::numeric_limits<double>::quiet_NaN();

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingReport {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_macro_f1 = std::numeric_limits<double>::quiet_NaN();
    bool stopped_early = false;
};

struct FitOptions {
    /// Overrides config.max_epochs when set.
    std::optional<std::size_t> epochs;
    /// Stop as soon as validation macro-F1 reaches this value.
    std::optional<double> target_val_macro_f1;
    std::function<void(const EpochRecord&)> on_epoch;
};

// Mini-batch Adam with a per-epoch seeded shuffle. With a validation set, the
// parameters of the best validation epoch are restored on return and training
// stops after `early_stopping_patience` epochs without improvement.
TrainingReport fit(CcnlModel& model, std::span<const EncodedPair> train, std::span<const EncodedPair> val,
                   const FitOptions& options = {});

}  // namespace ccnl
