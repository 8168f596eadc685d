#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "ccnl/ccnl.h"

namespace {

// Flags bound to config keys, applied after the config file in flag order.
struct Bindings {
    std::vector<std::pair<CLI::Option*, std::string>> scalar;
    std::vector<std::pair<CLI::Option*, std::string>> flag;
    std::vector<std::unique_ptr<std::string>> values;
    std::vector<std::unique_ptr<std::vector<std::string>>> lists;
    std::vector<std::pair<CLI::Option*, std::pair<std::string, std::vector<std::string>*>>> multi;

    void value(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
        values.push_back(std::make_unique<std::string>());
        scalar.emplace_back(app->add_option(name, *values.back(), help), key);
    }
    void toggle(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
        flag.emplace_back(app->add_flag(name, help), key);
    }
    void repeated(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
        lists.push_back(std::make_unique<std::vector<std::string>>());
        multi.push_back({app->add_option(name, *lists.back(), help), {key, lists.back().get()}});
    }
};

struct Command {
    CLI::App* app = nullptr;
    std::string config_file;
    std::vector<std::string> sets;
    Bindings bind;
    ccnl_status (*run)(const ccnl_config*) = nullptr;
};

void add_shared(Command& c) {
    c.app->add_option("--config", c.config_file, "JSON config file (flags override it)");
    c.bind.value(c.app, "--seed", "seed", "random seed");
    c.bind.value(c.app, "--out", "out", "output directory");
    c.app->add_option("--set", c.sets, "override any config key, KEY=VALUE (repeatable)");
}

int report(ccnl_status status) {
    std::fprintf(stderr, "ccnl: %s: %s\n", ccnl_status_name(status), ccnl_last_error());
    return status == CCNL_CONFIG || status == CCNL_INVALID_ARGUMENT ? 2 : 1;
}

void log_line(ccnl_log_level level, const char* message, void*) {
    if (level == CCNL_LOG_WARNING) {
        std::fprintf(stderr, "warning: %s\n", message);
    } else {
        std::fprintf(stdout, "%s\n", message);
        std::fflush(stdout);
    }
}

int execute(Command& c) {
    for (const auto& kv : c.sets) {
        if (kv.find('=') == std::string::npos || kv.front() == '=') {
            std::fprintf(stderr, "ccnl: usage error: --set expects KEY=VALUE, got '%s'\n", kv.c_str());
            return 2;
        }
    }
    ccnl_config* config = nullptr;
    if (ccnl_status s = ccnl_config_create(&config); s != CCNL_OK) return report(s);
    auto apply = [&]() -> ccnl_status {
        if (!c.config_file.empty()) {
            if (ccnl_status s = ccnl_config_load_file(config, c.config_file.c_str()); s != CCNL_OK) return s;
        }
        for (auto& [opt, key] : c.bind.scalar) {
            if (opt->count() == 0) continue;
            if (ccnl_status s = ccnl_config_set(config, key.c_str(), opt->as<std::string>().c_str()); s != CCNL_OK) return s;
        }
        for (auto& [opt, key] : c.bind.flag) {
            if (opt->count() == 0) continue;
            if (ccnl_status s = ccnl_config_set(config, key.c_str(), "true"); s != CCNL_OK) return s;
        }
        for (auto& [opt, target] : c.bind.multi) {
            for (const auto& v : *target.second) {
                if (ccnl_status s = ccnl_config_set(config, target.first.c_str(), v.c_str()); s != CCNL_OK) return s;
            }
        }
        for (const auto& kv : c.sets) {
            const auto eq = kv.find('=');
            const std::string key = kv.substr(0, eq);
            if (ccnl_status s = ccnl_config_set(config, key.c_str(), kv.substr(eq + 1).c_str()); s != CCNL_OK) return s;
        }
        return c.run(config);
    };
    const ccnl_status status = apply();
    ccnl_config_destroy(config);
    return status == CCNL_OK ? 0 : report(status);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CCNL cross-lingual capsule-network classifier"};
    app.set_version_flag("--version", std::string(ccnl_version()));
    app.require_subcommand(1);

    std::vector<std::unique_ptr<Command>> commands;
    auto make = [&](const char* name, const char* help, ccnl_status (*run)(const ccnl_config*)) -> Command& {
        commands.push_back(std::make_unique<Command>());
        Command& c = *commands.back();
        c.app = app.add_subcommand(name, help);
        c.run = run;
        add_shared(c);
        return c;
    };

    Command& retrofit = make("retrofit", "retrofit embeddings to lexicon neighbours", ccnl_run_retrofit);
    retrofit.bind.value(retrofit.app, "--embeddings", "embeddings", "embedding file to refine");
    retrofit.bind.repeated(retrofit.app, "--lexicon", "lexicon", "lexicon file (repeatable)");
    retrofit.bind.value(retrofit.app, "--relations", "relations", "relations file: headword TAB ranked words");
    retrofit.bind.value(retrofit.app, "--reference-embeddings", "reference_embeddings", "vectors for OOV lexicon words");
    retrofit.bind.value(retrofit.app, "--iterations", "retrofit_iterations", "retrofitting sweeps (default 10)");

    Command& train = make("train", "train a model on a parallel corpus", ccnl_run_train);
    Command& ablate = make("ablate", "train and score ablation variants", ccnl_run_ablate);
    for (Command* c : {&train, &ablate}) {
        c->bind.value(c->app, "--source", "source", "source-language corpus TSV");
        c->bind.value(c->app, "--translated", "translated", "translated corpus TSV");
        c->bind.value(c->app, "--source-embeddings", "source_embeddings", "source-language embedding file");
        c->bind.value(c->app, "--target-embeddings", "target_embeddings", "target-language embedding file");
        c->bind.value(c->app, "--epochs", "epochs", "fixed epoch budget (overrides max_epochs)");
        c->bind.value(c->app, "--val-fraction", "val_fraction", "held-out validation fraction (default 0.2)");
        c->bind.value(c->app, "--target-f1", "target_f1", "stop once validation macro-F1 reaches this");
    }
    train.bind.value(train.app, "--ablation", "ablation", "architecture variant");
    train.bind.toggle(train.app, "--refit", "refit", "retrain on train+val for the best epoch count");
    ablate.bind.value(ablate.app, "--test-source", "test_source", "test corpus, source language");
    ablate.bind.value(ablate.app, "--test-translated", "test_translated", "test corpus, translated");
    ablate.bind.value(ablate.app, "--variants", "variants", "comma-separated variants (default: all six)");
    ablate.bind.value(ablate.app, "--pair", "pair", "column label for the language pair");

    Command& eval = make("eval", "evaluate a checkpoint or the majority baseline", ccnl_run_eval);
    eval.bind.value(eval.app, "--checkpoint", "checkpoint", "model checkpoint");
    eval.bind.value(eval.app, "--test-source", "test_source", "test corpus, source language");
    eval.bind.value(eval.app, "--test-translated", "test_translated", "test corpus, translated");
    eval.bind.toggle(eval.app, "--majority", "majority", "score the majority-class baseline instead");
    eval.bind.value(eval.app, "--train", "train_labels", "training corpus for --majority");
    eval.bind.value(eval.app, "--test", "test_labels", "test corpus for --majority");

    Command& synth = make("synth", "generate a synthetic parallel corpus", ccnl_run_synth);
    synth.bind.value(synth.app, "--n", "n", "number of examples");
    synth.bind.value(synth.app, "--rate", "rate", "positive rate (default 0.5)");
    synth.bind.value(synth.app, "--separability", "separability", "chance a positive carries a marker (default 1)");
    synth.bind.value(synth.app, "--vocab-size", "vocab_size", "filler vocabulary size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        for (char& ch : msg)
            if (ch == '\n') ch = ' ';
        std::fprintf(stderr, "ccnl: usage error: %s\n", msg.c_str());
        return 2;
    }

    ccnl_set_log_callback(log_line, nullptr);
    for (auto& c : commands) {
        if (c->app->parsed()) return execute(*c);
    }
    return 2;
}
