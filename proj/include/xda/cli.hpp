#pragma once
// Command-line surface: one binary, seven subcommands.
//
//   gen-corpus   synthesize binaries, labels, probes, manifest
//   stats        corpus statistics, overlap rate, n-gram tables
//   pretrain     masked-byte pretraining
//   finetune     boundary-recovery training (func or insn)
//   predict      per-byte class probabilities for a split
//   eval         metrics report for a checkpoint
//   attn-dump    attention-weight export for one sequence
//
// Configuration resolves preset -> config file -> explicit flags; every
// failure exits nonzero with a single machine-parsable line on stderr:
// "error: <ClassName>: detail".

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "xda/checkpoint.hpp"
#include "xda/corpus.hpp"
#include "xda/ngram.hpp"
#include "xda/predict.hpp"
#include "xda/runconfig.hpp"
#include "xda/synth.hpp"
#include "xda/train.hpp"

namespace xda {

struct CliCtx {
    // raw flag values
    std::string config_path;
    std::string preset = "desk";
    uint64_t seed = 1;
    bool seed_given = false;
    unsigned threads = 0;
    bool threads_given = false;
    std::string out_dir;
    bool f64 = false;
    double threshold = -1.0;
    bool threshold_given = false;
    bool quiet = false;
    bool print_config = false;

    // subcommand-specific
    std::string manifest, labels_path, checkpoint, init_checkpoint;
    std::string task = "func";
    std::string split_name = "test";
    std::string report_path, predictions_path, dump_path, pgm_path;
    uint32_t ngram_n = 0, ngram_top = 20;
    uint32_t num_binaries = 0; // gen-corpus override
    uint32_t sequence_id = 0;
    int layer = -1, head = -1;

    RunConfig rc; // effective configuration after resolve()

    void resolve() {
        rc = RunConfig::with_preset(preset);
        if (!config_path.empty()) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(read_file_text(config_path));
            } catch (const nlohmann::json::exception& e) {
                throw BadConfig("config file " + config_path + ": " + e.what());
            }
            rc.apply_json(j);
        }
        if (seed_given) rc.seed = seed;
        if (threads_given) rc.threads = threads;
        if (!out_dir.empty()) rc.out_dir = out_dir;
        else if (const char* env = std::getenv("XDA_OUT_DIR"); env && *env && rc.out_dir == "runs/out")
            rc.out_dir = env;
        if (f64) rc.f64 = true;
        if (threshold_given) rc.threshold = threshold;
        rc.finalize();
        if (rc.threads == 0) rc.threads = default_threads();
    }

    std::filesystem::path out() const { return rc.out_dir; }
    std::filesystem::path manifest_path() const {
        return manifest.empty() ? out() / "manifest.tsv" : std::filesystem::path(manifest);
    }
    std::filesystem::path labels_file() const {
        return labels_path.empty() ? out() / "labels.tsv" : std::filesystem::path(labels_path);
    }
    Corpus load_corpus() const {
        const auto mp = manifest_path();
        return load_manifest(mp, mp.parent_path());
    }
    LabelStore load_labels() const { return labels_from_tsv(read_file_text(labels_file())); }
};

// ---- gen-corpus ------------------------------------------------------------

inline constexpr const char* kProbesHeader = "# xda-probes v1";

inline int run_gen_corpus(CliCtx& ctx) {
    SynthConfig sc = ctx.rc.synth;
    if (ctx.num_binaries) sc.num_binaries = ctx.num_binaries;
    const auto bins_dir = ctx.out() / "bins";
    std::filesystem::create_directories(bins_dir);

    std::vector<CorpusInput> inputs;
    LabelStore store;
    std::string probes = std::string(kProbesHeader) + "\n";
    auto binaries = generate_corpus(sc);
    for (const auto& b : binaries) {
        const std::vector<uint8_t> elf = write_minimal_elf(b.bytes);
        const std::string rel = "bins/" + b.id + ".elf";
        write_file_bytes(ctx.out() / rel, elf.data(), elf.size());
        // Re-parse the written image so the corpus goes through the same
        // loader real binaries would.
        inputs.push_back({parse_elf(elf, b.id), rel});
        SectionLabels sl;
        sl.has_func = sl.has_insn = true;
        sl.func_spans = b.func_spans;
        sl.insn_starts = b.insn_starts;
        sl.data_spans = b.data_spans;
        store[{b.id, ".text"}] = std::move(sl);
        for (const auto& pr : b.probes)
            probes += pr.binary_id + "\t" + std::to_string(pr.alloc_imm_off) + "\t" +
                      std::to_string(pr.dealloc_imm_off) + "\t" + hex_byte(pr.imm) + "\n";
    }
    Corpus corpus = build_corpus(inputs, ctx.rc.model.seq_len, ctx.rc.split);
    save_manifest(corpus, ctx.out() / "manifest.tsv");
    write_file_text(ctx.out() / "labels.tsv", labels_to_tsv(store));
    write_file_text(ctx.out() / "probes.tsv", probes);

    auto stats = corpus_stats(corpus);
    std::printf("binaries\t%u\n", sc.num_binaries);
    for (const auto& [split, s] : stats)
        std::printf("%s\tbinaries=%llu\tsequences=%llu\tbytes=%llu\n", to_string(split),
                    (unsigned long long)s.binaries, (unsigned long long)s.sequences,
                    (unsigned long long)s.bytes);
    std::printf("manifest\t%s\n", (ctx.out() / "manifest.tsv").c_str());
    return 0;
}

// ---- stats -----------------------------------------------------------------

inline int run_stats(CliCtx& ctx) {
    Corpus corpus = ctx.load_corpus();
    auto stats = corpus_stats(corpus);
    for (const auto& [split, s] : stats)
        std::printf("%s\tbinaries=%llu\tsequences=%llu\tbytes=%llu\n", to_string(split),
                    (unsigned long long)s.binaries, (unsigned long long)s.sequences,
                    (unsigned long long)s.bytes);
    const OverlapReport ov = overlap_rate(corpus);
    std::printf("overlap_rate\t%s\tmatched=%llu\ttotal_test=%llu\n", format_f(ov.rate).c_str(),
                (unsigned long long)ov.matched, (unsigned long long)ov.total_test);
    if (ctx.ngram_n) {
        NGramTable t = count_ngrams(corpus, Split::pretrain, ctx.ngram_n);
        const std::string report = ngram_report(t, ctx.ngram_top);
        if (!ctx.report_path.empty()) {
            write_file_text(ctx.report_path, report);
            std::printf("ngram_report\t%s\n", ctx.report_path.c_str());
        } else {
            std::fputs(report.c_str(), stdout);
        }
    }
    return 0;
}

// ---- pretrain ----------------------------------------------------------------

template <class T>
inline int run_pretrain_typed(CliCtx& ctx) {
    Corpus corpus = ctx.load_corpus();
    ModelParameters<T> params = ModelParameters<T>::init(ctx.rc.model, ctx.rc.seed);
    std::filesystem::create_directories(ctx.out());
    PretrainResult r = pretrain(params, corpus, ctx.rc.mask, ctx.rc.pretrain_plan, ctx.out(),
                                ctx.rc.threads, ctx.quiet);
    if (r.val_clamped)
        std::fprintf(stderr, "warning: %llu validation probabilities clamped to %g\n",
                     (unsigned long long)r.val_clamped, PplAccumulator::kClamp);
    std::printf("best_val_ppl\t%s\nbest_epoch\t%u\ncheckpoint\t%s\n", format_f(r.best_val_ppl).c_str(),
                r.best_epoch, r.best_checkpoint.c_str());
    return 0;
}

inline int run_pretrain(CliCtx& ctx) {
    return ctx.rc.f64 ? run_pretrain_typed<double>(ctx) : run_pretrain_typed<float>(ctx);
}

// ---- finetune ----------------------------------------------------------------

template <class T>
inline int run_finetune_typed(CliCtx& ctx) {
    Corpus corpus = ctx.load_corpus();
    LabelStore store = ctx.load_labels();
    const TaskKind task = task_from_string(ctx.task);
    ModelParameters<T> params = ctx.init_checkpoint.empty()
                                    ? ModelParameters<T>::init(ctx.rc.model, ctx.rc.seed)
                                    : load_checkpoint<T>(ctx.init_checkpoint);
    if (!ctx.init_checkpoint.empty()) {
        // Architecture must match the requested configuration.
        ModelConfig want = ctx.rc.model;
        const ModelConfig& got = params.cfg;
        if (want.layers != got.layers || want.heads != got.heads || want.d_emb != got.d_emb ||
            want.d_ff != got.d_ff || want.seq_len != got.seq_len)
            throw ShapeMismatch("checkpoint architecture differs from configured model");
    }
    std::filesystem::create_directories(ctx.out());
    FinetuneResult r = finetune(params, corpus, store, task, ctx.rc.finetune_plan, ctx.out(),
                                ctx.rc.threads, ctx.quiet);
    std::printf("best_val_f1\t%s\nbest_epoch\t%u\ncheckpoint\t%s\n", format_f(r.best_val_f1).c_str(),
                r.best_epoch, r.best_checkpoint.c_str());
    return 0;
}

inline int run_finetune(CliCtx& ctx) {
    return ctx.rc.f64 ? run_finetune_typed<double>(ctx) : run_finetune_typed<float>(ctx);
}

// ---- predict -----------------------------------------------------------------

template <class T>
inline int run_predict_typed(CliCtx& ctx) {
    Corpus corpus = ctx.load_corpus();
    CheckpointMeta meta;
    ModelParameters<T> params = load_checkpoint<T>(ctx.checkpoint, &meta);
    TaskKind task = meta.task;
    if (task == TaskKind::pretrain) task = task_from_string(ctx.task);
    auto preds = predict_split(params, corpus, split_from_string(ctx.split_name), task,
                               ctx.rc.threshold, ctx.rc.threads);
    const std::string tsv = predictions_to_tsv(preds, task);
    if (ctx.predictions_path.empty()) {
        std::fputs(tsv.c_str(), stdout);
    } else {
        write_file_text(ctx.predictions_path, tsv);
        std::printf("predictions\t%s\tsequences\t%zu\n", ctx.predictions_path.c_str(), preds.size());
    }
    return 0;
}

inline int run_predict(CliCtx& ctx) {
    return ctx.rc.f64 ? run_predict_typed<double>(ctx) : run_predict_typed<float>(ctx);
}

// ---- eval --------------------------------------------------------------------

template <class T>
inline int run_eval_typed(CliCtx& ctx) {
    Corpus corpus = ctx.load_corpus();
    CheckpointMeta meta;
    ModelParameters<T> params = load_checkpoint<T>(ctx.checkpoint, &meta);
    const Split split = split_from_string(ctx.split_name);

    if (meta.task == TaskKind::pretrain) {
        uint64_t clamped = 0;
        const double ppl =
            eval_ppl(params, corpus.of_split(split), ctx.rc.mask, ctx.rc.seed, ctx.rc.threads, &clamped);
        const OverlapReport ov = overlap_rate(corpus, Split::pretrain, split);
        if (clamped)
            std::fprintf(stderr, "warning: %llu probabilities clamped to %g\n",
                         (unsigned long long)clamped, PplAccumulator::kClamp);
        std::printf("ppl\t%s\n", format_f(ppl).c_str());
        std::printf("overlap_rate\t%s\n", format_f(ov.rate).c_str());
        if (!ctx.report_path.empty()) {
            nlohmann::json j{{"task", "pretrain"},
                             {"split", to_string(split)},
                             {"ppl", ppl},
                             {"clamped", clamped},
                             {"overlap", {{"rate", ov.rate}, {"matched", ov.matched}, {"total_test", ov.total_test}}}};
            write_file_text(ctx.report_path, j.dump(2) + "\n");
        }
        return 0;
    }

    LabelStore store = ctx.load_labels();
    TaskReport rep =
        evaluate_task(params, corpus, split, store, meta.task, ctx.rc.threshold, ctx.rc.threads);
    std::printf("task\t%s\n", to_string(rep.task));
    std::printf("byte_precision\t%s\n", format_f(rep.byte_pooled.precision()).c_str());
    std::printf("byte_recall\t%s\n", format_f(rep.byte_pooled.recall()).c_str());
    std::printf("byte_f1\t%s\n", format_f(rep.byte_pooled.f1()).c_str());
    std::printf("span_f1\t%s\n", format_f(rep.spans.f1()).c_str());
    if (rep.auc_defined) std::printf("auc\t%s\n", format_f(rep.auc).c_str());
    if (!ctx.report_path.empty()) {
        write_file_text(ctx.report_path, report_json(rep).dump(2) + "\n");
        std::printf("report\t%s\n", ctx.report_path.c_str());
    }
    return 0;
}

inline int run_eval(CliCtx& ctx) {
    return ctx.rc.f64 ? run_eval_typed<double>(ctx) : run_eval_typed<float>(ctx);
}

// ---- attn-dump -----------------------------------------------------------------

template <class T>
inline int run_attn_dump_typed(CliCtx& ctx) {
    Corpus corpus = ctx.load_corpus();
    ModelParameters<T> params = load_checkpoint<T>(ctx.checkpoint);
    const SequenceRecord* rec = nullptr;
    for (const auto& r : corpus.sequences)
        if (r.id == ctx.sequence_id) rec = &r;
    if (!rec) throw UnknownId("sequence id " + std::to_string(ctx.sequence_id) + " not in manifest");

    TokenSeq ts = encode(rec->bytes, static_cast<uint32_t>(rec->bytes.size()));
    ForwardOptions opt;
    Trace<T> tr;
    encoder_forward(params, ts.ids, ts.n_real, opt, &tr);

    const Eigen::Index n = tr.n_real;
    Mat<double> sum = Mat<double>::Zero(n, n);
    uint32_t used = 0;
    for (uint32_t li = 0; li < params.cfg.layers; ++li) {
        if (ctx.layer >= 0 && static_cast<uint32_t>(ctx.layer) != li) continue;
        for (uint32_t h = 0; h < params.cfg.heads; ++h) {
            if (ctx.head >= 0 && static_cast<uint32_t>(ctx.head) != h) continue;
            sum += tr.layers[li].probs[h].topLeftCorner(n, n).template cast<double>();
            ++used;
        }
    }
    if (!used) throw BadConfig("layer/head selection matches nothing");

    std::string out = "# xda-attn v1\tsequence=" + std::to_string(rec->id) +
                      "\tn=" + std::to_string(n) + "\tmaps=" + std::to_string(used) + "\n";
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j) out += '\t';
            out += format_f(sum(i, j), "%.6g");
        }
        out += '\n';
    }
    const std::filesystem::path dump =
        ctx.dump_path.empty() ? ctx.out() / "attn.tsv" : std::filesystem::path(ctx.dump_path);
    write_file_text(dump, out);
    std::printf("attn_dump\t%s\tmaps\t%u\n", dump.c_str(), used);

    if (!ctx.pgm_path.empty()) {
        const double mx = sum.maxCoeff();
        std::string pgm = "P5\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                pgm += static_cast<char>(mx > 0 ? static_cast<int>(255.0 * sum(i, j) / mx + 0.5) : 0);
        write_file_bytes(ctx.pgm_path, pgm.data(), pgm.size());
        std::printf("attn_pgm\t%s\n", ctx.pgm_path.c_str());
    }
    return 0;
}

inline int run_attn_dump(CliCtx& ctx) {
    return ctx.rc.f64 ? run_attn_dump_typed<double>(ctx) : run_attn_dump_typed<float>(ctx);
}

// ---- app wiring -----------------------------------------------------------------

inline void build_app(CLI::App& app, CliCtx& ctx) {
    app.description("byte-level disassembly model: corpus tools, training, evaluation");
    app.fallthrough(true);
    app.require_subcommand(0, 1);

    app.add_option("--config", ctx.config_path, "JSON run configuration");
    app.add_option("--preset", ctx.preset, "configuration preset: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--seed", ctx.seed, "seed for every random stream")
        ->each([&](const std::string&) { ctx.seed_given = true; });
    app.add_option("--threads", ctx.threads, "worker threads (0 = hardware)")
        ->each([&](const std::string&) { ctx.threads_given = true; });
    app.add_option("--out", ctx.out_dir, "output directory (env XDA_OUT_DIR)");
    app.add_flag("--f64", ctx.f64, "64-bit float mode");
    app.add_option("--threshold", ctx.threshold, "boundary decision threshold (unset = argmax)")
        ->each([&](const std::string&) { ctx.threshold_given = true; });
    app.add_flag("--quiet", ctx.quiet, "suppress progress lines");
    app.add_flag("--print-config", ctx.print_config, "print the effective configuration and exit");

    auto* gen = app.add_subcommand("gen-corpus", "synthesize binaries, labels, probes and manifest");
    gen->add_option("--num", ctx.num_binaries, "override number of binaries");

    auto* stats = app.add_subcommand("stats", "corpus statistics and n-gram tables");
    stats->add_option("--manifest", ctx.manifest, "manifest path (default <out>/manifest.tsv)");
    stats->add_option("--ngram", ctx.ngram_n, "emit an n-gram table of this order");
    stats->add_option("--top", ctx.ngram_top, "rows to keep in the n-gram table");
    stats->add_option("--report", ctx.report_path, "write the n-gram table to this file");

    auto* pre = app.add_subcommand("pretrain", "masked-byte pretraining");
    pre->add_option("--manifest", ctx.manifest, "manifest path (default <out>/manifest.tsv)");

    auto* fine = app.add_subcommand("finetune", "train boundary recovery from labels");
    fine->add_option("--manifest", ctx.manifest, "manifest path (default <out>/manifest.tsv)");
    fine->add_option("--labels", ctx.labels_path, "labels path (default <out>/labels.tsv)");
    fine->add_option("--task", ctx.task, "func or insn")->check(CLI::IsMember({"func", "insn"}));
    fine->add_option("--init", ctx.init_checkpoint, "pretrained checkpoint to start from");

    auto* pred = app.add_subcommand("predict", "per-byte class probabilities");
    pred->add_option("--manifest", ctx.manifest, "manifest path (default <out>/manifest.tsv)");
    pred->add_option("--checkpoint", ctx.checkpoint, "model checkpoint")->required();
    pred->add_option("--split", ctx.split_name, "corpus split (default test)")
        ->check(CLI::IsMember({"pretrain", "train", "validation", "test"}));
    pred->add_option("--task", ctx.task, "task when the checkpoint is a pretraining one");
    pred->add_option("--predictions", ctx.predictions_path, "output file (default stdout)");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--manifest", ctx.manifest, "manifest path (default <out>/manifest.tsv)");
    ev->add_option("--labels", ctx.labels_path, "labels path (default <out>/labels.tsv)");
    ev->add_option("--checkpoint", ctx.checkpoint, "model checkpoint")->required();
    ev->add_option("--split", ctx.split_name, "corpus split (default test)")
        ->check(CLI::IsMember({"pretrain", "train", "validation", "test"}));
    ev->add_option("--report", ctx.report_path, "write a JSON report here");

    auto* attn = app.add_subcommand("attn-dump", "export attention weights for one sequence");
    attn->add_option("--manifest", ctx.manifest, "manifest path (default <out>/manifest.tsv)");
    attn->add_option("--checkpoint", ctx.checkpoint, "model checkpoint")->required();
    attn->add_option("--sequence", ctx.sequence_id, "sequence id from the manifest");
    attn->add_option("--layer", ctx.layer, "restrict to one layer (default: sum over all)");
    attn->add_option("--head", ctx.head, "restrict to one head (default: sum over all)");
    attn->add_option("--dump", ctx.dump_path, "TSV output path (default <out>/attn.tsv)");
    attn->add_option("--pgm", ctx.pgm_path, "also write a grayscale PGM image");
}

inline int run_cli(CLI::App& app, CliCtx& ctx) {
    ctx.resolve();
    if (ctx.print_config) {
        std::printf("%s\n", ctx.rc.to_json().dump(2).c_str());
        return 0;
    }
    if (app.got_subcommand("gen-corpus")) return run_gen_corpus(ctx);
    if (app.got_subcommand("stats")) return run_stats(ctx);
    if (app.got_subcommand("pretrain")) return run_pretrain(ctx);
    if (app.got_subcommand("finetune")) return run_finetune(ctx);
    if (app.got_subcommand("predict")) return run_predict(ctx);
    if (app.got_subcommand("eval")) return run_eval(ctx);
    if (app.got_subcommand("attn-dump")) return run_attn_dump(ctx);
    std::fputs(app.help().c_str(), stdout);
    return 0;
}

} // namespace xda
