#pragma once
// Checkpoint container: magic, version, architecture block, run metadata,
// named tensors as little-endian float32, and (optionally) optimizer
// moments. Saving the same state twice produces byte-identical files;
// loading validates architecture and every tensor's name and shape.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "xda/config.hpp"
#include "xda/errors.hpp"
#include "xda/model.hpp"
#include "xda/optim.hpp"
#include "xda/util.hpp"

namespace xda {

enum class TaskKind : uint8_t { pretrain = 0, function_bounds = 1, instruction_bounds = 2 };

inline const char* to_string(TaskKind t) {
    switch (t) {
        case TaskKind::pretrain: return "pretrain";
        case TaskKind::function_bounds: return "func";
        case TaskKind::instruction_bounds: return "insn";
    }
    return "?";
}
inline TaskKind task_from_string(std::string_view s) {
    if (s == "pretrain") return TaskKind::pretrain;
    if (s == "func") return TaskKind::function_bounds;
    if (s == "insn") return TaskKind::instruction_bounds;
    throw BadConfig("unknown task '" + std::string(s) + "'");
}

struct CheckpointMeta {
    uint32_t epoch = 0;
    double val_metric = 0.0; // perplexity for pretraining, F1 for finetuning
    uint64_t seed = 0;
    TaskKind task = TaskKind::pretrain;
};

namespace detail {

inline constexpr char kMagic[4] = {'X', 'D', 'A', '1'};
inline constexpr uint32_t kVersion = 1;

struct Writer {
    std::string buf;
    void raw(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
    void u8(uint8_t v) { raw(&v, 1); }
    void u16(uint16_t v) { raw(&v, 2); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
};

struct Reader {
    const uint8_t* p;
    size_t size, off = 0;
    void raw(void* out, size_t n, const char* what) {
        if (off + n > size)
            throw MalformedHeader(std::string("checkpoint truncated reading ") + what);
        std::memcpy(out, p + off, n);
        off += n;
    }
    uint8_t u8(const char* w) { uint8_t v; raw(&v, 1, w); return v; }
    uint16_t u16(const char* w) { uint16_t v; raw(&v, 2, w); return v; }
    uint32_t u32(const char* w) { uint32_t v; raw(&v, 4, w); return v; }
    uint64_t u64(const char* w) { uint64_t v; raw(&v, 8, w); return v; }
    double f64(const char* w) { double v; raw(&v, 8, w); return v; }
};

template <class T>
inline void write_tensors(Writer& w, ModelParameters<T>& p) {
    auto ts = p.tensors();
    w.u32(static_cast<uint32_t>(ts.size()));
    for (auto& t : ts) {
        w.u16(static_cast<uint16_t>(t.name.size()));
        w.raw(t.name.data(), t.name.size());
        w.u32(static_cast<uint32_t>(t.rows));
        w.u32(static_cast<uint32_t>(t.cols));
        for (Eigen::Index k = 0; k < t.size(); ++k) {
            float f = static_cast<float>(t.data[k]);
            w.raw(&f, 4);
        }
    }
}

template <class T>
inline void read_tensors(Reader& r, ModelParameters<T>& p) {
    auto ts = p.tensors();
    const uint32_t count = r.u32("tensor count");
    if (count != ts.size())
        throw ShapeMismatch("checkpoint holds " + std::to_string(count) + " tensors, model needs " +
                            std::to_string(ts.size()));
    for (auto& t : ts) {
        const uint16_t nl = r.u16("tensor name length");
        std::string name(nl, '\0');
        r.raw(name.data(), nl, "tensor name");
        if (name != t.name)
            throw ShapeMismatch("checkpoint tensor '" + name + "' where '" + t.name + "' expected");
        const uint32_t rows = r.u32("tensor rows");
        const uint32_t cols = r.u32("tensor cols");
        if (rows != static_cast<uint32_t>(t.rows) || cols != static_cast<uint32_t>(t.cols))
            throw ShapeMismatch("tensor '" + name + "' is " + std::to_string(rows) + "x" +
                                std::to_string(cols) + ", expected " + std::to_string(t.rows) + "x" +
                                std::to_string(t.cols));
        for (Eigen::Index k = 0; k < t.size(); ++k) {
            float f;
            r.raw(&f, 4, "tensor data");
            t.data[k] = static_cast<T>(f);
        }
    }
}

} // namespace detail

template <class T>
inline void save_checkpoint(const std::filesystem::path& path, ModelParameters<T>& params,
                            const CheckpointMeta& meta, AdamW<T>* optimizer = nullptr) {
    detail::Writer w;
    w.raw(detail::kMagic, 4);
    w.u32(detail::kVersion);

    const ModelConfig& c = params.cfg;
    w.u32(c.layers);
    w.u32(c.heads);
    w.u32(c.d_emb);
    w.u32(c.d_ff);
    w.u32(c.seq_len);
    w.u32(c.vocab);
    w.u32(c.mlm_targets);
    w.u32(c.num_classes);
    w.u8(static_cast<uint8_t>(c.scale));
    w.f64(c.ln_eps);

    w.u32(meta.epoch);
    w.f64(meta.val_metric);
    w.u64(meta.seed);
    w.u8(static_cast<uint8_t>(meta.task));

    detail::write_tensors(w, params);
    w.u8(optimizer ? 1 : 0);
    if (optimizer) {
        w.u64(optimizer->steps_taken());
        detail::write_tensors(w, optimizer->moment1());
        detail::write_tensors(w, optimizer->moment2());
    }
    write_file_bytes(path, w.buf.data(), w.buf.size());
}

template <class T>
inline ModelParameters<T> load_checkpoint(const std::filesystem::path& path,
                                          CheckpointMeta* meta_out = nullptr,
                                          AdamW<T>* optimizer = nullptr) {
    const std::vector<uint8_t> bytes = read_file_bytes(path);
    detail::Reader r{bytes.data(), bytes.size()};

    char magic[4];
    r.raw(magic, 4, "magic");
    if (std::memcmp(magic, detail::kMagic, 4) != 0)
        throw MalformedHeader("not a checkpoint file (bad magic)");
    const uint32_t version = r.u32("version");
    if (version != detail::kVersion)
        throw MalformedHeader("unsupported checkpoint version " + std::to_string(version));

    ModelConfig c;
    c.layers = r.u32("layers");
    c.heads = r.u32("heads");
    c.d_emb = r.u32("d_emb");
    c.d_ff = r.u32("d_ff");
    c.seq_len = r.u32("seq_len");
    c.vocab = r.u32("vocab");
    c.mlm_targets = r.u32("mlm_targets");
    c.num_classes = r.u32("num_classes");
    const uint8_t scale = r.u8("scale");
    if (scale > 1) throw MalformedHeader("invalid attention-scale tag");
    c.scale = static_cast<AttnScale>(scale);
    c.ln_eps = r.f64("ln_eps");
    c.validate();

    CheckpointMeta meta;
    meta.epoch = r.u32("epoch");
    meta.val_metric = r.f64("val_metric");
    meta.seed = r.u64("seed");
    const uint8_t task = r.u8("task");
    if (task > 2) throw MalformedHeader("invalid task tag");
    meta.task = static_cast<TaskKind>(task);
    if (meta_out) *meta_out = meta;

    ModelParameters<T> params = ModelParameters<T>::make(c);
    detail::read_tensors(r, params);

    const uint8_t has_opt = r.u8("optimizer flag");
    if (has_opt && optimizer) {
        optimizer->restore_step(r.u64("optimizer step"));
        detail::read_tensors(r, optimizer->moment1());
        detail::read_tensors(r, optimizer->moment2());
    }
    return params;
}

} // namespace xda
