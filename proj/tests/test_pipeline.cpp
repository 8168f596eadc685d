#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccnl/checkpoint.hpp"
#include "ccnl/error.hpp"
#include "ccnl/lexinfuse.hpp"
#include "ccnl/pipeline.hpp"

using namespace ccnl;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = CCNL_FIXTURES;

std::string fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "ccnl_test_pipeline" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

RunConfig tiny_run(const std::string& out) {
    RunConfig c;
    c.out = out;
    for (const char* kv : {"embedding_dim=6", "lstm_units=4", "capsule_dim=3", "capsule_count=2",
                           "primary_channels=2", "routing_iterations=2", "classifier_hidden=5",
                           "max_sequence_length=8", "max_epochs=3", "learning_rate=0.01"}) {
        const std::string s(kv);
        const auto eq = s.find('=');
        set_run_value(c, s.substr(0, eq), s.substr(eq + 1));
    }
    return c;
}

RunConfig synth_into(const std::string& dir, std::size_t n, std::uint64_t seed) {
    RunConfig c;
    c.out = dir;
    c.synth.n = n;
    c.synth.vocab_size = 30;
    c.synth.min_length = 3;
    c.synth.max_length = 7;
    c.model.seed = seed;
    cmd_synth(c);
    return c;
}

}  // namespace

TEST_CASE("synth writes a deterministic pair of corpora") {
    const std::string a = fresh_dir("synth_a"), b = fresh_dir("synth_b");
    synth_into(a, 30, 4);
    synth_into(b, 30, 4);
    CHECK(slurp(a + "/source.tsv") == slurp(b + "/source.tsv"));
    CHECK(slurp(a + "/translated.tsv") == slurp(b + "/translated.tsv"));
    CHECK(load_parallel(a + "/source.tsv", a + "/translated.tsv").size() == 30);
    RunConfig zero;
    zero.out = fresh_dir("synth_zero");
    zero.synth.n = 0;
    CHECK_THROWS_AS(cmd_synth(zero), ConfigError);
    CHECK_FALSE(fs::exists(zero.out + "/source.tsv"));
}

TEST_CASE("retrofit command") {
    SUBCASE("no lexicon overlap leaves the vectors unchanged and warns") {
        const std::string dir = fresh_dir("retro_none");
        write(dir + "/lex.txt", "nothing_here\nnor_this\n");
        RunConfig c;
        c.out = dir;
        c.embeddings = kFixtures + "/embeddings_toy.vec";
        c.lexicons = {dir + "/lex.txt"};
        std::vector<std::string> warnings;
        c.log = [&](LogLevel level, const std::string& m) {
            if (level == LogLevel::warning) warnings.push_back(m);
        };
        const auto s = cmd_retrofit(c);
        CHECK_FALSE(warnings.empty());
        CHECK(s.graph_edges == 0);
        const auto in = read_embedding_file(c.embeddings);
        const auto out = read_embedding_file(s.output_path);
        CHECK(out.vocab == in.vocab);
        CHECK(out.table.value == in.table.value);
    }
    SUBCASE("a linked pair moves closer and reruns are byte-identical") {
        const std::string dir = fresh_dir("retro_pair");
        write(dir + "/emb.vec", "3 2\nslur1 1 0\nslur2 0 1\nother 1 1\n");
        write(dir + "/lex.txt", "slur1\nslur2\n");
        write(dir + "/rel.tsv", "slur1\tslur2\nslur2\tslur1\n");
        RunConfig c;
        c.out = dir + "/run1";
        c.embeddings = dir + "/emb.vec";
        c.lexicons = {dir + "/lex.txt"};
        c.relations = dir + "/rel.tsv";
        const auto s = cmd_retrofit(c);
        CHECK(s.objective.size() == 11);
        for (std::size_t i = 1; i < s.objective.size(); ++i) CHECK(s.objective[i] <= s.objective[i - 1] + 1e-12);
        const auto out = read_embedding_file(s.output_path);
        const double after = cosine_similarity(out.vector(0), out.vector(1));
        CHECK(after > 0.0);
        CHECK(out.vector(2)[0] == 1.0);
        CHECK(out.vector(2)[1] == 1.0);
        c.out = dir + "/run2";
        cmd_retrofit(c);
        CHECK(slurp(dir + "/run1/retrofitted.vec") == slurp(dir + "/run2/retrofitted.vec"));
    }
    SUBCASE("missing inputs") {
        RunConfig c;
        c.out = fresh_dir("retro_missing");
        c.embeddings = kFixtures + "/no_such.vec";
        c.lexicons = {kFixtures + "/lexicon_toy.txt"};
        try {
            cmd_retrofit(c);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("no_such.vec") != std::string::npos);
        }
        c.embeddings = kFixtures + "/embeddings_toy.vec";
        c.lexicons.clear();
        CHECK_THROWS_AS(cmd_retrofit(c), ConfigError);
    }
}

TEST_CASE("train and eval commands") {
    const std::string data = fresh_dir("train_data");
    synth_into(data, 24, 2);
    RunConfig c = tiny_run(fresh_dir("train_out"));
    c.source = data + "/source.tsv";
    c.translated = data + "/translated.tsv";
    const TrainSummary s = cmd_train(c);
    for (const char* f : {"model.ckpt", "train_report.tsv", "train_summary.txt"}) CHECK(fs::exists(c.out + "/" + f));
    CHECK(slurp(c.out + "/train_report.tsv").rfind("epoch\ttrain_loss\tval_macro_f1\n", 0) == 0);
    CHECK(s.report.epochs.size() <= 3);
    CHECK(load_checkpoint(s.checkpoint_path).config() == c.model);

    SUBCASE("eval writes reports") {
        RunConfig e;
        e.out = fresh_dir("eval_out");
        e.checkpoint = s.checkpoint_path;
        e.test_source = c.source;
        e.test_translated = c.translated;
        const EvalSummary r = cmd_eval(e);
        CHECK(r.written.size() == 3);
        CHECK(slurp(e.out + "/misclassified.tsv").rfind("id\tgold\tpred", 0) == 0);
        CHECK(r.report.confusion[0][0] + r.report.confusion[0][1] + r.report.confusion[1][0] +
                  r.report.confusion[1][1] ==
              24);
    }
    SUBCASE("a corrupt checkpoint fails before any output is written") {
        const std::string dir = fresh_dir("eval_corrupt");
        std::string bytes = slurp(s.checkpoint_path);
        bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 1);
        write(dir + "/bad.ckpt", bytes);
        RunConfig e;
        e.out = dir + "/out";
        e.checkpoint = dir + "/bad.ckpt";
        e.test_source = c.source;
        e.test_translated = c.translated;
        CHECK_THROWS_AS(cmd_eval(e), ChecksumError);
        CHECK_FALSE(fs::exists(e.out + "/eval_report.tsv"));
        CHECK_FALSE(fs::exists(e.out + "/eval_summary.txt"));
    }
    SUBCASE("majority baseline needs no checkpoint") {
        RunConfig e;
        e.out = fresh_dir("eval_majority");
        e.majority = true;
        e.train_labels = kFixtures + "/corpus_three.tsv";
        e.test_labels = kFixtures + "/corpus_two.tsv";
        const EvalSummary r = cmd_eval(e);
        CHECK(r.report.macro_f1 == doctest::Approx(1.0 / 3));
    }
    SUBCASE("a missing embedding file is named in the error") {
        RunConfig bad = c;
        bad.out = fresh_dir("train_bad");
        bad.source_embeddings = data + "/absent.vec";
        try {
            cmd_train(bad);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("absent.vec") != std::string::npos);
        }
        CHECK_FALSE(fs::exists(bad.out + "/model.ckpt"));
    }
    SUBCASE("identical runs give identical artifacts") {
        RunConfig again = c;
        again.out = fresh_dir("train_again");
        cmd_train(again);
        CHECK(slurp(again.out + "/model.ckpt") == slurp(c.out + "/model.ckpt"));
        CHECK(slurp(again.out + "/train_report.tsv") == slurp(c.out + "/train_report.tsv"));
    }
}

TEST_CASE("configuration handling") {
    RunConfig c;
    apply_config_json(c, R"({"lstm_units": 7, "seed": 5, "lexicons": ["a.txt", "b.txt"], "variants": "full,gru",
                             "dropout": 0.25, "embeddings_trainable": false, "ablation": "non_caps"})");
    CHECK(c.model.lstm_units == 7);
    CHECK(c.model.seed == 5);
    CHECK(c.lexicons == std::vector<std::string>{"a.txt", "b.txt"});
    CHECK(c.variants == std::vector<Ablation>{Ablation::full, Ablation::gru_extractor});
    CHECK(c.model.dropout == 0.25);
    CHECK_FALSE(c.model.embeddings_trainable);
    CHECK(c.model.ablation == Ablation::non_caps);
    set_run_value(c, "seed", "9");
    CHECK(c.model.seed == 9);
    CHECK_THROWS_AS(set_run_value(c, "no_such_key", "1"), ConfigError);
    CHECK_THROWS_AS(set_run_value(c, "lstm_units", "-3"), ConfigError);
    CHECK_THROWS_AS(apply_config_json(c, "[1,2]"), ConfigError);
    CHECK_THROWS_AS(apply_config_json(c, "{oops"), ParseError);
    CHECK_THROWS_AS(apply_config_file(c, kFixtures + "/missing.json"), IoError);
    const auto keys = run_config_keys();
    for (const auto& k : config_keys()) CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
}
