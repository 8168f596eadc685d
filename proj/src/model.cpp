#include "ccnl/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "ccnl/error.hpp"
#include "ccnl/eval.hpp"
#include "ccnl/optim.hpp"

namespace ccnl {

namespace {

constexpr std::array<std::pair<Ablation, std::string_view>, 6> kTags{{
    {Ablation::full, "full"},
    {Ablation::non_parallel, "non_parallel"},
    {Ablation::non_lstm, "non_lstm"},
    {Ablation::non_caps, "non_caps"},
    {Ablation::cnn_extractor, "cnn_extractor"},
    {Ablation::gru_extractor, "gru_extractor"},
}};

std::size_t parse_count(std::string_view key, std::string_view value) {
    std::size_t out = 0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw ConfigError("config key '" + std::string(key) + "' expects a non-negative integer, got '" +
                          std::string(value) + "'");
    }
    return out;
}

double parse_real(std::string_view key, std::string_view value) {
    double out = 0.0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw ConfigError("config key '" + std::string(key) + "' expects a number, got '" + std::string(value) + "'");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config key '" + std::string(key) + "' expects true/false, got '" + std::string(value) + "'");
}

Activation parse_activation(std::string_view value) {
    if (value == "relu") return Activation::relu;
    if (value == "tanh") return Activation::tanh;
    throw ConfigError("unknown classifier activation '" + std::string(value) + "'");
}

std::string_view activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

// One table drives key listing, string parsing and JSON I/O.
struct Field {
    std::string_view key;
    std::function<void(ModelConfig&, std::string_view)> set;
    std::function<nlohmann::json(const ModelConfig&)> get;
};

template <typename M>
Field count_field(std::string_view key, M member) {
    return {key, [key, member](ModelConfig& c, std::string_view v) { c.*member = parse_count(key, v); },
            [member](const ModelConfig& c) { return nlohmann::json(c.*member); }};
}

template <typename M>
Field real_field(std::string_view key, M member) {
    return {key, [key, member](ModelConfig& c, std::string_view v) { c.*member = parse_real(key, v); },
            [member](const ModelConfig& c) { return nlohmann::json(c.*member); }};
}

template <typename M>
Field bool_field(std::string_view key, M member) {
    return {key, [key, member](ModelConfig& c, std::string_view v) { c.*member = parse_bool(key, v); },
            [member](const ModelConfig& c) { return nlohmann::json(c.*member); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f{
            count_field("embedding_dim", &ModelConfig::embedding_dim),
            count_field("lstm_units", &ModelConfig::lstm_units),
            count_field("classifier_hidden", &ModelConfig::classifier_hidden),
            count_field("capsule_dim", &ModelConfig::capsule_dim),
            count_field("capsule_count", &ModelConfig::capsule_count),
            count_field("primary_channels", &ModelConfig::primary_channels),
            count_field("routing_iterations", &ModelConfig::routing_iterations),
            real_field("learning_rate", &ModelConfig::learning_rate),
            real_field("adam_beta1", &ModelConfig::adam_beta1),
            real_field("adam_beta2", &ModelConfig::adam_beta2),
            real_field("adam_epsilon", &ModelConfig::adam_epsilon),
            real_field("dropout", &ModelConfig::dropout),
            count_field("batch_size", &ModelConfig::batch_size),
            count_field("max_sequence_length", &ModelConfig::max_sequence_length),
            count_field("max_epochs", &ModelConfig::max_epochs),
            count_field("early_stopping_patience", &ModelConfig::early_stopping_patience),
            {"seed",
             [](ModelConfig& c, std::string_view v) { c.seed = static_cast<std::uint64_t>(parse_count("seed", v)); },
             [](const ModelConfig& c) { return nlohmann::json(c.seed); }},
            {"ablation", [](ModelConfig& c, std::string_view v) { c.ablation = parse_ablation(v); },
             [](const ModelConfig& c) { return nlohmann::json(std::string(ablation_tag(c.ablation))); }},
            bool_field("embeddings_trainable", &ModelConfig::embeddings_trainable),
            count_field("conv_width", &ModelConfig::conv_width),
            bool_field("routing_stop_gradient", &ModelConfig::routing_stop_gradient),
            {"classifier_activation",
             [](ModelConfig& c, std::string_view v) { c.classifier_activation = parse_activation(v); },
             [](const ModelConfig& c) { return nlohmann::json(std::string(activation_name(c.classifier_activation))); }},
        };
        return f;
    }();
    return table;
}

std::string json_scalar_string(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number_float()) {
        char buf[64];
        const auto res = std::to_chars(buf, buf + sizeof buf, v.get<double>());
        return std::string(buf, res.ptr);
    }
    throw ConfigError("unsupported config value " + v.dump());
}

}  // namespace

std::string_view ablation_tag(Ablation a) {
    for (const auto& [value, tag] : kTags)
        if (value == a) return tag;
    return "full";
}

std::string_view ablation_display_name(Ablation a) {
    switch (a) {
        case Ablation::full: return "CCNL";
        case Ablation::non_parallel: return "CCNL-non-parallel";
        case Ablation::non_lstm: return "CCNL-non-LSTM/non-FE";
        case Ablation::non_caps: return "CCNL-non-Caps";
        case Ablation::cnn_extractor: return "CCNL-CNN";
        case Ablation::gru_extractor: return "CCNL-GRU";
    }
    return "CCNL";
}

Ablation parse_ablation(std::string_view tag) {
    for (const auto& [value, name] : kTags)
        if (name == tag) return value;
    if (tag == "ccnl") return Ablation::full;
    if (tag == "non_fe") return Ablation::non_lstm;
    if (tag == "cnn") return Ablation::cnn_extractor;
    if (tag == "gru") return Ablation::gru_extractor;
    throw ConfigError("unknown ablation '" + std::string(tag) + "'");
}

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(embedding_dim, "embedding_dim");
    positive(lstm_units, "lstm_units");
    positive(classifier_hidden, "classifier_hidden");
    positive(capsule_dim, "capsule_dim");
    positive(capsule_count, "capsule_count");
    positive(primary_channels, "primary_channels");
    positive(routing_iterations, "routing_iterations");
    positive(batch_size, "batch_size");
    positive(max_sequence_length, "max_sequence_length");
    positive(conv_width, "conv_width");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0 && adam_epsilon > 0.0)) {
        throw ConfigError("Adam requires 0 < beta1, beta2 < 1 and epsilon > 0");
    }
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.emplace_back(f.key);
    return keys;
}

void set_config_value(ModelConfig& config, std::string_view key, std::string_view value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(config, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string config_to_json(const ModelConfig& config) {
    nlohmann::ordered_json j;
    for (const auto& f : fields()) j[std::string(f.key)] = f.get(config);
    return j.dump();
}

ModelConfig config_from_json(std::string_view json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid model config JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("model config JSON must be an object");
    ModelConfig config;
    for (const auto& [key, value] : j.items()) set_config_value(config, key, json_scalar_string(value));
    return config;
}

std::size_t Tower::feature_dim() const {
    if (lstm) return 2 * lstm->hidden;
    if (gru) return 2 * gru->hidden;
    if (conv) return conv->bias.value.size();
    return embeddings.dim();
}

std::size_t Tower::output_width() const {
    return capsules ? capsules->outputs * capsules->capsule_dim : feature_dim();
}

std::vector<Parameter*> Tower::parameters() {
    std::vector<Parameter*> out{&embeddings.table};
    auto append = [&out](std::vector<Parameter*> more) { out.insert(out.end(), more.begin(), more.end()); };
    if (lstm) append(lstm->parameters());
    if (gru) append(gru->parameters());
    if (conv) append(conv->parameters());
    if (capsules) append(capsules->parameters());
    return out;
}

std::size_t CcnlModel::tower_count(Ablation ablation) { return ablation == Ablation::non_parallel ? 1 : 2; }

CcnlModel::CcnlModel(ModelConfig config, std::vector<EmbeddingMatrix> embeddings, Rng& rng)
    : config_(std::move(config)) {
    config_.validate();
    const std::size_t towers = tower_count(config_.ablation);
    if (embeddings.size() != towers) {
        throw ConfigError("ablation " + std::string(ablation_tag(config_.ablation)) + " needs " +
                          std::to_string(towers) + " embedding matrices, got " + std::to_string(embeddings.size()));
    }
    const std::array<const char*, 2> names =
        towers == 1 ? std::array<const char*, 2>{"target", ""} : std::array<const char*, 2>{"source", "target"};
    const std::size_t k = config_.lstm_units;
    for (std::size_t i = 0; i < towers; ++i) {
        Tower t;
        t.name = names[i];
        t.embeddings = std::move(embeddings[i]);
        if (t.embeddings.dim() != config_.embedding_dim) {
            throw DimensionError("tower '" + t.name + "' embeddings have width " + std::to_string(t.embeddings.dim()) +
                                 " but embedding_dim is " + std::to_string(config_.embedding_dim));
        }
        t.embeddings.trainable = config_.embeddings_trainable;
        t.embeddings.table.name = t.name + ".embedding";
        const std::size_t e = config_.embedding_dim;
        switch (config_.ablation) {
            case Ablation::full:
            case Ablation::non_parallel:
            case Ablation::non_caps: t.lstm = BiLstmParams::init(t.name + ".bilstm", e, k, rng); break;
            case Ablation::gru_extractor: t.gru = BiGruParams::init(t.name + ".bigru", e, k, rng); break;
            case Ablation::cnn_extractor:
                t.conv = Conv1dParams::init(t.name + ".conv", e, 2 * k, config_.conv_width, rng);
                break;
            case Ablation::non_lstm: break;
        }
        if (config_.ablation != Ablation::non_caps) {
            t.capsules = CapsuleLayerParams::init(t.name + ".capsules", t.feature_dim(), config_.primary_channels,
                                                  config_.capsule_count, config_.capsule_dim, rng);
        }
        towers_.push_back(std::move(t));
    }
    const std::size_t width = feature_width();
    const std::size_t hidden = config_.classifier_hidden;
    hidden_weights_ = Parameter("classifier.hidden_weights", glorot_uniform({width, hidden}, width, hidden, rng));
    hidden_bias_ = Parameter("classifier.hidden_bias", Tensor(Shape{hidden}));
    output_weights_ = Parameter("classifier.output_weights", glorot_uniform({hidden, 2}, hidden, 2, rng));
    output_bias_ = Parameter("classifier.output_bias", Tensor(Shape{2}));
}

std::size_t CcnlModel::feature_width() const {
    std::size_t w = 0;
    for (const auto& t : towers_) w += t.output_width();
    return w;
}

std::vector<Parameter*> CcnlModel::parameters() {
    std::vector<Parameter*> out;
    for (auto& t : towers_) {
        auto p = t.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    out.insert(out.end(), {&hidden_weights_, &hidden_bias_, &output_weights_, &output_bias_});
    return out;
}

std::vector<const Parameter*> CcnlModel::parameters() const {
    auto mutable_params = const_cast<CcnlModel*>(this)->parameters();
    return {mutable_params.begin(), mutable_params.end()};
}

std::vector<Parameter*> CcnlModel::trainable_parameters() {
    std::vector<Parameter*> out;
    for (Parameter* p : parameters()) {
        const bool frozen_embedding =
            !config_.embeddings_trainable &&
            std::any_of(towers_.begin(), towers_.end(), [p](const Tower& t) { return &t.embeddings.table == p; });
        if (!frozen_embedding) out.push_back(p);
    }
    return out;
}

EncodedPair CcnlModel::encode(const ParallelExample& example) const {
    EncodedPair out;
    out.id = example.source.id;
    out.label = example.label();
    const std::size_t T = config_.max_sequence_length;
    if (towers_.size() == 2) {
        out.source = encode_tokens(tokenize(example.source.text), towers_[0].embeddings.vocab, T);
        out.target = encode_tokens(tokenize(example.target_text), towers_[1].embeddings.vocab, T);
    } else {
        out.target = encode_tokens(tokenize(example.target_text), towers_[0].embeddings.vocab, T);
    }
    return out;
}

Var CcnlModel::tower_output(Tape& tape, Tower& tower, std::span<const std::size_t> ids, bool training, Rng* rng) {
    // Padding sits only at the tail; the network sees the real prefix, which
    // is equivalent to zeroing padded positions and excluding them from routing.
    std::size_t length = ids.size();
    while (length > 0 && ids[length - 1] == kPadId) --length;
    const std::span<const std::size_t> real = ids.subspan(0, std::max<std::size_t>(length, 1));

    Var x = embed(tape, real, tower.embeddings);
    if (training) x = dropout(x, config_.dropout, true, *rng);

    Var h = x;
    if (tower.lstm) h = bilstm_forward(x, *tower.lstm);
    if (tower.gru) h = gru_forward(x, *tower.gru);
    if (tower.conv) h = conv1d_forward(x, *tower.conv);
    if (training && (tower.lstm || tower.gru || tower.conv)) h = dropout(h, config_.dropout, true, *rng);

    if (!tower.capsules) return ad::mean_rows(h);
    const Var primary = primary_capsules(h, *tower.capsules);
    const RoutingVars routed =
        dynamic_routing(primary, *tower.capsules, config_.routing_iterations, config_.routing_stop_gradient);
    return flatten_capsules(routed.outputs);
}

Var CcnlModel::features(Tape& tape, const EncodedPair& example, bool training, Rng* rng) {
    if (training && !rng) throw ConfigError("training-mode forward needs an RNG");
    std::vector<Var> parts;
    if (towers_.size() == 2) {
        parts.push_back(tower_output(tape, towers_[0], example.source, training, rng));
        parts.push_back(tower_output(tape, towers_[1], example.target, training, rng));
    } else {
        parts.push_back(tower_output(tape, towers_[0], example.target, training, rng));
    }
    return parts.size() == 1 ? parts[0] : ad::concat_cols(parts);
}

Var CcnlModel::logits(Tape& tape, const EncodedPair& example, bool training, Rng* rng) {
    const Var f = features(tape, example, training, rng);
    Var hidden = ad::add_bias(ad::matmul(f, tape.param(hidden_weights_)), tape.param(hidden_bias_));
    hidden = config_.classifier_activation == Activation::relu ? ad::relu(hidden) : ad::tanh(hidden);
    return ad::add_bias(ad::matmul(hidden, tape.param(output_weights_)), tape.param(output_bias_));
}

Tensor CcnlModel::forward(const EncodedPair& example, bool training, Rng* rng) const {
    Tape tape(false);
    const Var z = const_cast<CcnlModel*>(this)->logits(tape, example, training, rng);
    return softmax(z.value().reshaped({2}), 0);
}

double loss(std::span<const double> probabilities, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size()) throw InputError("label out of range");
    return -std::log(probabilities[static_cast<std::size_t>(label)]);
}

double batch_loss(std::span<const Tensor> probabilities, std::span<const int> labels) {
    if (probabilities.size() != labels.size() || probabilities.empty()) {
        throw InputError("batch_loss needs equal, non-zero numbers of predictions and labels");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) total += loss(probabilities[i].values(), labels[i]);
    return total / static_cast<double>(labels.size());
}

int decide(std::span<const double> probabilities) { return probabilities[1] > probabilities[0] ? 1 : 0; }

std::vector<Prediction> predict(const CcnlModel& model, std::span<const EncodedPair> examples) {
    std::vector<Prediction> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        const Tensor p = model.forward(ex);
        out.push_back(Prediction{decide(p.values()), {p[0], p[1]}});
    }
    return out;
}

namespace {

double macro_f1_of(const CcnlModel& model, std::span<const EncodedPair> data) {
    std::vector<int> gold, pred;
    for (const auto& p : predict(model, data)) pred.push_back(p.label);
    for (const auto& ex : data) gold.push_back(ex.label);
    return macro_f1(gold, pred);
}

}  // namespace

TrainingReport fit(CcnlModel& model, std::span<const EncodedPair> train, std::span<const EncodedPair> val,
                   const FitOptions& options) {
    if (train.empty()) throw ConfigError("training set is empty");
    const ModelConfig& cfg = model.config();
    const std::size_t max_epochs = options.epochs.value_or(cfg.max_epochs);
    Rng rng(cfg.seed);

    std::vector<Parameter*> params = model.trainable_parameters();
    Adam optimizer(params, AdamOptions{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon});
    std::vector<Parameter*> all = model.parameters();

    TrainingReport report;
    std::vector<Tensor> best_values;
    std::size_t since_best = 0;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
        shuffle(order, rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(end - start);
            optimizer.zero_grad();
            for (std::size_t b = start; b < end; ++b) {
                const EncodedPair& ex = train[order[b]];
                Tape tape;
                const Var z = model.logits(tape, ex, true, &rng);
                const Var l = ad::cross_entropy_with_logits(z, static_cast<std::size_t>(ex.label));
                loss_sum += l.value()[0];
                tape.backward(ad::scale(l, inv));
            }
            optimizer.step();
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(train.size());
        if (!val.empty()) record.val_macro_f1 = macro_f1_of(model, val);
        report.epochs.push_back(record);
        if (options.on_epoch) options.on_epoch(record);

        if (val.empty()) {
            report.best_epoch = epoch;
            continue;
        }
        if (report.best_epoch == 0 || record.val_macro_f1 > report.best_val_macro_f1) {
            report.best_epoch = epoch;
            report.best_val_macro_f1 = record.val_macro_f1;
            best_values.clear();
            for (const Parameter* p : all) best_values.push_back(p->value);
            since_best = 0;
        } else {
            ++since_best;
        }
        if (options.target_val_macro_f1 && record.val_macro_f1 >= *options.target_val_macro_f1) break;
        if (since_best >= cfg.early_stopping_patience) {
            report.stopped_early = true;
            break;
        }
    }
    if (!best_values.empty()) {
        for (std::size_t i = 0; i < all.size(); ++i) all[i]->value = best_values[i];
    }
    return report;
}

}  // namespace ccnl
