#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ccnl/ccnl.h"

namespace fs = std::filesystem;

namespace {

const std::string kCli = CCNL_CLI;

std::string scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "ccnl_test_capi" / name;
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

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run cli(const std::string& args) {
    const std::string dir = (fs::temp_directory_path() / "ccnl_test_capi").string();
    fs::create_directories(dir);
    const std::string o = dir + "/stdout.txt", e = dir + "/stderr.txt";
    const int raw = std::system((kCli + " " + args + " >" + o + " 2>" + e).c_str());
    Run r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

std::size_t lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

struct Config {
    ccnl_config* c = nullptr;
    Config() { REQUIRE(ccnl_config_create(&c) == CCNL_OK); }
    ~Config() { ccnl_config_destroy(c); }
    void set(const char* k, const std::string& v) { REQUIRE(ccnl_config_set(c, k, v.c_str()) == CCNL_OK); }
};

void small_model(Config& cfg) {
    for (auto [k, v] : std::vector<std::pair<const char*, const char*>>{
             {"embedding_dim", "6"}, {"lstm_units", "4"}, {"capsule_dim", "3"}, {"capsule_count", "2"},
             {"primary_channels", "2"}, {"routing_iterations", "2"}, {"classifier_hidden", "5"},
             {"max_sequence_length", "8"}, {"max_epochs", "3"}, {"learning_rate", "0.01"}}) {
        cfg.set(k, v);
    }
}

}  // namespace

TEST_CASE("status names, version and argument checks") {
    CHECK(std::strlen(ccnl_version()) > 0);
    CHECK(std::string(ccnl_status_name(CCNL_OK)) == "ok");
    CHECK(std::string(ccnl_status_name(CCNL_CHECKSUM)) == "checksum error");
    CHECK(ccnl_config_create(nullptr) == CCNL_INVALID_ARGUMENT);
    CHECK(std::strlen(ccnl_last_error()) > 0);
    CHECK(ccnl_run_train(nullptr) == CCNL_INVALID_ARGUMENT);
    double f = -1;
    const int gold[] = {0, 1, 1, 0};
    const int pred[] = {0, 1, 0, 0};
    CHECK(ccnl_macro_f1(gold, pred, 4, &f) == CCNL_OK);
    CHECK(f == doctest::Approx((0.8 + 2.0 / 3) / 2));
    const int bad[] = {0, 3, 0, 0};
    CHECK(ccnl_macro_f1(gold, bad, 4, &f) == CCNL_INPUT);
    CHECK(ccnl_model_load("/nonexistent/model.ckpt", nullptr) == CCNL_INVALID_ARGUMENT);
    ccnl_model* m = nullptr;
    CHECK(ccnl_model_load("/nonexistent/model.ckpt", &m) == CCNL_IO);
    CHECK(m == nullptr);
    CHECK(std::string(ccnl_last_error()).find("/nonexistent/model.ckpt") != std::string::npos);
}

TEST_CASE("config handle") {
    Config cfg;
    CHECK(ccnl_config_set(cfg.c, "bogus", "1") == CCNL_CONFIG);
    CHECK(ccnl_config_set(cfg.c, "lstm_units", "x") == CCNL_CONFIG);
    cfg.set("lstm_units", "33");
    const char* json = nullptr;
    REQUIRE(ccnl_config_model_json(cfg.c, &json) == CCNL_OK);
    CHECK(std::string(json).find("\"lstm_units\":33") != std::string::npos);
    const std::string dir = scratch("config");
    std::ofstream(dir + "/c.json") << R"({"lstm_units": 12})";
    CHECK(ccnl_config_load_file(cfg.c, (dir + "/c.json").c_str()) == CCNL_OK);
    REQUIRE(ccnl_config_model_json(cfg.c, &json) == CCNL_OK);
    CHECK(std::string(json).find("\"lstm_units\":12") != std::string::npos);
    std::ofstream(dir + "/bad.json") << "{";
    CHECK(ccnl_config_load_file(cfg.c, (dir + "/bad.json").c_str()) == CCNL_PARSE);
}

namespace {
std::vector<std::string> g_logs;
void collect(ccnl_log_level, const char* m, void*) { g_logs.emplace_back(m); }
}  // namespace

TEST_CASE("synth, train, predict and eval through the C API") {
    const std::string dir = scratch("flow");
    g_logs.clear();
    ccnl_set_log_callback(collect, nullptr);
    {
        Config s;
        s.set("out", dir);
        s.set("n", "20");
        s.set("vocab_size", "30");
        s.set("max_length", "7");
        REQUIRE(ccnl_run_synth(s.c) == CCNL_OK);
    }
    CHECK_FALSE(g_logs.empty());
    ccnl_set_log_callback(nullptr, nullptr);
    {
        Config t;
        small_model(t);
        t.set("out", dir + "/model");
        t.set("source", dir + "/source.tsv");
        t.set("translated", dir + "/translated.tsv");
        REQUIRE(ccnl_run_train(t.c) == CCNL_OK);
        t.set("target_embeddings", dir + "/none.vec");
        CHECK(ccnl_run_train(t.c) == CCNL_IO);
    }
    ccnl_model* m = nullptr;
    REQUIRE(ccnl_model_load((dir + "/model/model.ckpt").c_str(), &m) == CCNL_OK);
    CHECK(std::string(ccnl_model_ablation(m)) == "full");
    int label = -1;
    double p[2] = {0, 0};
    REQUIRE(ccnl_model_predict(m, "src1 src12", "tgt3 tgt4", &label, p) == CCNL_OK);
    CHECK(p[0] + p[1] == doctest::Approx(1.0));
    CHECK(label == (p[1] > p[0] ? 1 : 0));
    CHECK(ccnl_model_predict(m, nullptr, "x", &label, p) == CCNL_INVALID_ARGUMENT);
    REQUIRE(ccnl_model_save(m, (dir + "/copy.ckpt").c_str()) == CCNL_OK);
    CHECK(slurp(dir + "/copy.ckpt") == slurp(dir + "/model/model.ckpt"));
    ccnl_model_destroy(m);
    {
        Config e;
        e.set("out", dir + "/eval");
        e.set("checkpoint", dir + "/model/model.ckpt");
        e.set("test_source", dir + "/source.tsv");
        e.set("test_translated", dir + "/translated.tsv");
        CHECK(ccnl_run_eval(e.c) == CCNL_OK);
        CHECK(fs::exists(dir + "/eval/eval_report.tsv"));
    }
}

TEST_CASE("command-line tool") {
    const std::string dir = scratch("cli");
    SUBCASE("synth then train") {
        Run r = cli("synth --n 20 --vocab-size 30 --seed 3 --out " + dir);
        CHECK(r.code == 0);
        CHECK(fs::exists(dir + "/source.tsv"));
        r = cli("train --source " + dir + "/source.tsv --translated " + dir + "/translated.tsv --out " + dir +
                "/m --epochs 2 --set embedding_dim=6 --set lstm_units=4 --set capsule_dim=3 --set capsule_count=2"
                " --set primary_channels=2 --set classifier_hidden=5");
        CHECK(r.code == 0);
        CHECK(r.out.find("train_macro_f1\t") != std::string::npos);
        CHECK(fs::exists(dir + "/m/model.ckpt"));
    }
    SUBCASE("failures exit nonzero with one diagnostic line") {
        for (const std::string args :
             {"synth --n 0 --out " + dir, "train --source " + dir + "/missing.tsv --translated x --out " + dir,
              "eval --checkpoint " + dir + "/missing.ckpt --test-source a --test-translated b --out " + dir,
              "retrofit --embeddings " + dir + "/none.vec --lexicon l.txt --out " + dir,
              "train --set lstm_units --out " + dir, "train --set nope=1 --out " + dir, std::string("frobnicate"),
              "synth --n 5 --config " + dir + "/missing.json --out " + dir}) {
            CAPTURE(args);
            const Run r = cli(args);
            CHECK(r.code != 0);
            CHECK(lines(r.err) == 1);
            CHECK(r.err.rfind("ccnl: ", 0) == 0);
        }
        CHECK(cli("synth --n 0 --out " + dir).code == 2);
        CHECK(cli("train --source " + dir + "/missing.tsv --out " + dir).code == 1);
    }
    SUBCASE("config file is overridden by flags and --set") {
        std::ofstream(dir + "/c.json") << R"({"n": 50, "seed": 1, "out": ")" + dir + R"(/a"})";
        CHECK(cli("synth --config " + dir + "/c.json --n 10").code == 0);
        CHECK(lines(slurp(dir + "/a/source.tsv")) == 11);
        CHECK(cli("synth --config " + dir + "/c.json --n 10 --set n=12").code == 0);
        CHECK(lines(slurp(dir + "/a/source.tsv")) == 13);
        CHECK(cli("synth --config " + dir + "/c.json --seed 2 --out " + dir + "/b").code == 0);
        CHECK(slurp(dir + "/b/source.tsv") != slurp(dir + "/a/source.tsv"));
    }
}
