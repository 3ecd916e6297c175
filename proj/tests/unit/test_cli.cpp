// Command-line surface: configuration resolution and precedence, the strict
// JSON schema, and every subcommand flow end to end on a micro model,
// exercised in-process exactly the way the real entry point wires them.
#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <functional>

#include "xda/cli.hpp"

using namespace xda;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("xda_test_" + tag + "_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string capture_stdout(const std::function<void()>& fn) {
    static int counter = 0;
    const fs::path tmp = fs::temp_directory_path() /
                         ("xda_cap_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::fflush(stdout);
    const int saved = ::dup(1);
    FILE* f = std::fopen(tmp.c_str(), "w");
    REQUIRE(f != nullptr);
    ::dup2(::fileno(f), 1);
    fn();
    std::fflush(stdout);
    ::dup2(saved, 1);
    ::close(saved);
    std::fclose(f);
    std::string out = read_file_text(tmp);
    fs::remove(tmp);
    return out;
}

struct CliResult {
    int code = 0;
    std::string err;  // "error: <ClassName>: detail" when a library error escaped
    std::string out;  // captured stdout
};

// Mirrors the real main(): parse, run, render library errors as one line.
CliResult cli(std::vector<std::string> args) {
    CliResult res;
    args.insert(args.begin(), "xda");
    std::vector<char*> argv;
    argv.reserve(args.size());
    for (auto& a : args) argv.push_back(a.data());

    CLI::App app{"xda"};
    CliCtx ctx;
    build_app(app, ctx);
    res.out = capture_stdout([&] {
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            res.code = app.exit(e);
            return;
        }
        try {
            res.code = run_cli(app, ctx);
        } catch (const Error& e) {
            res.code = 1;
            res.err = e.line();
        }
    });
    return res;
}

// A complete micro run configuration: everything small enough that each
// subcommand finishes in well under a second.
std::string micro_config_json() {
    return R"({
      "model": {"layers": 1, "heads": 2, "d_emb": 8, "d_ff": 16, "seq_len": 64},
      "synth": {"num_binaries": 8, "funcs_min": 2, "funcs_max": 3, "body_min": 2, "body_max": 5},
      "pretrain": {"batch_size": 4, "update_frequency": 1, "epochs": 1, "lr": 0.001},
      "finetune": {"batch_size": 2, "update_frequency": 1, "epochs": 1, "lr": 0.001, "dropout": 0}
    })";
}

} // namespace

TEST_CASE("presets pick architectures and plans", "[cli][config]") {
    RunConfig desk = RunConfig::with_preset("desk");
    CHECK(desk.model.layers == 4);
    CHECK(desk.model.d_emb == 64);
    CHECK(desk.model.seq_len == 512);

    RunConfig paper = RunConfig::with_preset("paper");
    CHECK(paper.model.layers == 12);
    CHECK(paper.model.heads == 12);
    CHECK(paper.model.d_emb == 768);
    CHECK(paper.model.d_ff == 3072);

    CHECK_THROWS_AS(RunConfig::with_preset("huge"), BadConfig);
}

TEST_CASE("json overrides are strict and round-trip", "[cli][config]") {
    RunConfig rc = RunConfig::with_preset("desk");
    rc.apply_json(nlohmann::json::parse(R"({
        "seed": 42,
        "model": {"layers": 2},
        "synth": {"num_binaries": 16},
        "pretrain": {"lr": 0.5}
    })"));
    CHECK(rc.seed == 42);
    CHECK(rc.model.layers == 2);
    CHECK(rc.model.d_emb == 64); // untouched keys keep preset values
    CHECK(rc.synth.num_binaries == 16);
    CHECK(rc.pretrain_plan.lr == 0.5);
    // finalize() pushed the one seed everywhere
    CHECK(rc.pretrain_plan.seed == 42);
    CHECK(rc.finetune_plan.seed == 42);
    CHECK(rc.synth.seed == 42);
    CHECK(rc.split.seed == 42);

    // Serialization reproduces the exact configuration.
    RunConfig rc2 = RunConfig::with_preset("desk");
    rc2.apply_json(rc.to_json());
    CHECK(rc2.to_json().dump() == rc.to_json().dump());

    // Typos and type errors are loud, with the offending path named.
    RunConfig fresh = RunConfig::with_preset("desk");
    CHECK_THROWS_WITH(fresh.apply_json(nlohmann::json::parse(R"({"synth": {"bogus": 1}})")),
                      Catch::Matchers::ContainsSubstring("synth.bogus"));
    CHECK_THROWS_WITH(fresh.apply_json(nlohmann::json::parse(R"({"sead": 1})")),
                      Catch::Matchers::ContainsSubstring("sead"));
    CHECK_THROWS_WITH(fresh.apply_json(nlohmann::json::parse(R"({"seed": "many"})")),
                      Catch::Matchers::ContainsSubstring("wrong type"));
    CHECK_THROWS_AS(fresh.apply_json(nlohmann::json::parse(R"({"mask": {"rate": 1.5}})")),
                    BadConfig);

    // A preset named inside the file rebuilds the base configuration.
    RunConfig swap = RunConfig::with_preset("desk");
    swap.apply_json(nlohmann::json::parse(R"({"preset": "paper", "seed": 3})"));
    CHECK(swap.model.layers == 12);
    CHECK(swap.seed == 3);
}

TEST_CASE("effective config printing and flag precedence", "[cli]") {
    TempDir tmp("cfgprint");
    const fs::path cfg = tmp.path / "cfg.json";
    write_file_text(cfg, R"({"seed": 5, "threads": 2})");

    // Config file sets values; explicit flags win over the file.
    CliResult r = cli({"--config", cfg.string(), "--seed", "9", "--print-config"});
    REQUIRE(r.code == 0);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j["seed"] == 9);
    CHECK(j["threads"] == 2);
    CHECK(j["preset"] == "desk");
    CHECK(j["model"]["d_emb"] == 64);

    // Malformed JSON is a BadConfig naming the file.
    write_file_text(cfg, "{nope");
    CliResult bad = cli({"--config", cfg.string(), "--print-config"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("error: BadConfig:") == 0);
    CHECK(bad.err.find("cfg.json") != std::string::npos);
}

TEST_CASE("output directory resolves flag over environment", "[cli]") {
    TempDir tmp("envout");
    ::setenv("XDA_OUT_DIR", (tmp.path / "from_env").c_str(), 1);
    CliResult env = cli({"--print-config"});
    ::unsetenv("XDA_OUT_DIR");
    REQUIRE(env.code == 0);
    CHECK(nlohmann::json::parse(env.out)["out_dir"] == (tmp.path / "from_env").string());

    ::setenv("XDA_OUT_DIR", "/nowhere", 1);
    CliResult flag = cli({"--out", (tmp.path / "explicit").string(), "--print-config"});
    ::unsetenv("XDA_OUT_DIR");
    REQUIRE(flag.code == 0);
    CHECK(nlohmann::json::parse(flag.out)["out_dir"] == (tmp.path / "explicit").string());
}

TEST_CASE("bare invocation prints help", "[cli]") {
    CliResult r = cli({});
    CHECK(r.code == 0);
    CHECK(r.out.find("gen-corpus") != std::string::npos);
    CHECK(r.out.find("pretrain") != std::string::npos);
    CHECK(r.out.find("attn-dump") != std::string::npos);
}

TEST_CASE("subcommand flows over a micro corpus", "[cli][e2e]") {
    TempDir tmp("flow");
    const fs::path cfg = tmp.path / "cfg.json";
    write_file_text(cfg, micro_config_json());
    const std::string out = (tmp.path / "run").string();
    auto with_base = [&](std::vector<std::string> rest) {
        std::vector<std::string> full{"--out", out, "--config", cfg.string(), "--quiet"};
        full.insert(full.end(), rest.begin(), rest.end());
        return full;
    };

    // gen-corpus: artifacts, summary lines, determinism
    CliResult gen = cli(with_base({"gen-corpus"}));
    REQUIRE(gen.code == 0);
    CHECK(gen.out.find("binaries\t8") == 0);
    CHECK(gen.out.find("manifest\t") != std::string::npos);
    REQUIRE(fs::exists(fs::path(out) / "manifest.tsv"));
    REQUIRE(fs::exists(fs::path(out) / "labels.tsv"));
    REQUIRE(fs::exists(fs::path(out) / "probes.tsv"));
    CHECK(fs::exists(fs::path(out) / "bins" / "synth0.elf"));
    const std::string probes = read_file_text(fs::path(out) / "probes.tsv");
    CHECK(probes.rfind("# xda-probes v1\n", 0) == 0);

    const auto manifest_bytes = read_file_bytes(fs::path(out) / "manifest.tsv");
    CliResult gen2 = cli(with_base({"gen-corpus"}));
    REQUIRE(gen2.code == 0);
    CHECK(read_file_bytes(fs::path(out) / "manifest.tsv") == manifest_bytes);

    Corpus corpus = load_manifest(fs::path(out) / "manifest.tsv", out);
    CHECK(corpus.seq_len == 64);
    REQUIRE_FALSE(corpus.sequences.empty());

    // stats: split table, overlap, n-gram report identical to the library's
    CliResult st = cli(with_base({"stats", "--ngram", "2", "--top", "5", "--report",
                                  (tmp.path / "ngram.tsv").string()}));
    REQUIRE(st.code == 0);
    CHECK(st.out.find("overlap_rate\t") != std::string::npos);
    CHECK(st.out.find("pretrain\tbinaries=") != std::string::npos);
    const std::string want_ngrams = ngram_report(count_ngrams(corpus, Split::pretrain, 2), 5);
    CHECK(read_file_text(tmp.path / "ngram.tsv") == want_ngrams);

    // pretrain
    CliResult pre = cli(with_base({"pretrain"}));
    REQUIRE(pre.code == 0);
    CHECK(pre.out.find("best_val_ppl\t") != std::string::npos);
    REQUIRE(fs::exists(fs::path(out) / "pretrain_best.ckpt"));
    CHECK(fs::exists(fs::path(out) / "pretrain_log.tsv"));

    // finetune from the pretrained checkpoint
    CliResult fine = cli(with_base({"finetune", "--task", "func", "--init",
                                    (fs::path(out) / "pretrain_best.ckpt").string()}));
    REQUIRE(fine.code == 0);
    CHECK(fine.out.find("best_val_f1\t") != std::string::npos);
    REQUIRE(fs::exists(fs::path(out) / "func_best.ckpt"));

    // finetune rejects an architecture mismatch
    ModelConfig other;
    other.layers = 2;
    other.heads = 2;
    other.d_emb = 16;
    other.d_ff = 32;
    other.seq_len = 64;
    auto stray = ModelParameters<float>::init(other, 1);
    save_checkpoint(tmp.path / "other.ckpt", stray, CheckpointMeta{});
    CliResult mism = cli(with_base({"finetune", "--task", "func", "--init",
                                    (tmp.path / "other.ckpt").string()}));
    CHECK(mism.code == 1);
    CHECK(mism.err.find("error: ShapeMismatch:") == 0);

    // predict: sidecar rows cover every test-split byte
    const fs::path pred_path = tmp.path / "pred.tsv";
    CliResult pred = cli(with_base({"predict", "--checkpoint",
                                    (fs::path(out) / "func_best.ckpt").string(), "--split", "test",
                                    "--predictions", pred_path.string()}));
    REQUIRE(pred.code == 0);
    auto pred_lines = split_lines(read_file_text(pred_path));
    while (!pred_lines.empty() && pred_lines.back().empty()) pred_lines.pop_back();
    REQUIRE_FALSE(pred_lines.empty());
    CHECK(pred_lines[0] == "# xda-predictions v1\ttask=func\tclasses=S,E,N");
    size_t test_bytes = 0;
    for (const auto& r : corpus.sequences)
        if (r.split == Split::test) test_bytes += r.bytes.size();
    CHECK(pred_lines.size() == test_bytes + 1);

    // eval on the finetuned checkpoint: metrics plus JSON report
    const fs::path report = tmp.path / "report.json";
    CliResult ev = cli(with_base({"eval", "--checkpoint",
                                  (fs::path(out) / "func_best.ckpt").string(), "--split", "test",
                                  "--report", report.string()}));
    REQUIRE(ev.code == 0);
    CHECK(ev.out.find("byte_f1\t") != std::string::npos);
    auto rj = nlohmann::json::parse(read_file_text(report));
    CHECK(rj["task"] == "func");
    CHECK(rj["byte"].contains("f1"));
    CHECK(rj["spans"].contains("f1"));
    CHECK(rj.contains("auc"));

    // eval on the pretraining checkpoint: perplexity route
    const fs::path ppl_report = tmp.path / "ppl.json";
    CliResult evp = cli(with_base({"eval", "--checkpoint",
                                   (fs::path(out) / "pretrain_best.ckpt").string(), "--split",
                                   "validation", "--report", ppl_report.string()}));
    REQUIRE(evp.code == 0);
    CHECK(evp.out.find("ppl\t") == 0);
    CHECK(evp.out.find("overlap_rate\t") != std::string::npos);
    auto pj = nlohmann::json::parse(read_file_text(ppl_report));
    CHECK(pj["task"] == "pretrain");
    CHECK(pj["ppl"].is_number());

    // attn-dump: TSV header plus an n x n grid, and the optional PGM
    const fs::path attn = tmp.path / "attn.tsv";
    const fs::path pgm = tmp.path / "attn.pgm";
    CliResult ad = cli(with_base({"attn-dump", "--checkpoint",
                                  (fs::path(out) / "pretrain_best.ckpt").string(), "--sequence",
                                  "0", "--dump", attn.string(), "--pgm", pgm.string()}));
    REQUIRE(ad.code == 0);
    auto attn_lines = split_lines(read_file_text(attn));
    while (!attn_lines.empty() && attn_lines.back().empty()) attn_lines.pop_back();
    REQUIRE_FALSE(attn_lines.empty());
    CHECK(attn_lines[0].rfind("# xda-attn v1\tsequence=0\tn=", 0) == 0);
    const size_t n0 = corpus.sequences.front().bytes.size();
    CHECK(attn_lines.size() == n0 + 1);
    CHECK(split_tabs(attn_lines[1]).size() == n0);
    const std::string pgm_bytes = read_file_text(pgm);
    CHECK(pgm_bytes.rfind("P5\n", 0) == 0);

    // attn-dump error paths: impossible selection, unknown sequence
    CliResult sel = cli(with_base({"attn-dump", "--checkpoint",
                                   (fs::path(out) / "pretrain_best.ckpt").string(), "--sequence",
                                   "0", "--layer", "7", "--dump", attn.string()}));
    CHECK(sel.code == 1);
    CHECK(sel.err.find("error: BadConfig:") == 0);
    CliResult noseq = cli(with_base({"attn-dump", "--checkpoint",
                                     (fs::path(out) / "pretrain_best.ckpt").string(), "--sequence",
                                     "99999", "--dump", attn.string()}));
    CHECK(noseq.code == 1);
    CHECK(noseq.err.find("error: UnknownId:") == 0);
}

TEST_CASE("argument validation fails fast", "[cli]") {
    // Required flag missing: CLI11 handles it before any work happens.
    CliResult r1 = cli({"predict"});
    CHECK(r1.code != 0);
    // Constrained values are rejected.
    CliResult r2 = cli({"--preset", "galactic", "--print-config"});
    CHECK(r2.code != 0);
    CliResult r3 = cli({"eval", "--checkpoint", "x.ckpt", "--split", "bogus"});
    CHECK(r3.code != 0);
    // Library errors surface as single machine-parsable lines.
    CliResult r4 = cli({"--out", "/nonexistent_dir_xda", "stats"});
    CHECK(r4.code == 1);
    CHECK(r4.err.rfind("error: ", 0) == 0);
}
