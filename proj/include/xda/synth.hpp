#pragma once
// Synthetic corpus generator. Emits small x64-flavored binaries with exact
// byte-level ground truth: function spans, instruction starts, and data
// regions (inline jump tables, inter-function int3 padding). Each binary can
// be wrapped in a minimal ELF image so the whole pipeline — including the
// format parser — is exercised end to end.
//
// The instruction templates are real x86-64 encodings, picked so that byte
// values partition cleanly by role: a value that can open an instruction
// never appears inside operand payloads, padding, or table entries. That
// keeps the recovery tasks' difficulty where it belongs — in structure
// rather than byte-identity noise:
//   - functions usually open with `push rbp; mov rbp,rsp` but a fraction are
//     frameless, so start detection cannot be a pure 1-gram match;
//   - a `sub rsp, imm8` stack allocation is paired with an `add rsp, imm8`
//     carrying the *same* immediate before `ret`, which is the long-range
//     dependency the masked-byte probe measures;
//   - inline jump tables and padding interleave code with data, and switch
//     cases share targets the way real jump tables repeat case bodies;
//   - some functions are emitted twice per binary, mirroring the duplicated
//     code that inlining and template instantiation produce.

#include <cstdint>
#include <string>
#include <vector>

#include "xda/errors.hpp"
#include "xda/rng.hpp"

namespace xda {

struct SynthConfig {
    uint32_t num_binaries = 9000;
    uint32_t funcs_min = 4, funcs_max = 8;       // functions per binary
    uint32_t body_min = 3, body_max = 10;        // body instructions per function
    uint32_t pad_min = 1, pad_max = 1;           // 0xcc bytes between/after functions
    double frameless_prob = 0.10;                // functions without push rbp prologue
    double alloc_prob = 0.85;                    // functions with sub/add rsp pair
    double dup_prob = 0.45;                      // function is a clone of an earlier one
    double jump_table_prob = 0.25;               // inline 4-byte-entry table in body
    uint32_t jt_entries_min = 3, jt_entries_max = 8;
    uint64_t seed = 1;

    void validate() const {
        auto range_ok = [](uint32_t lo, uint32_t hi) { return lo >= 1 && lo <= hi; };
        if (num_binaries == 0) throw InvalidSynthConfig("num_binaries must be positive");
        if (!range_ok(funcs_min, funcs_max)) throw InvalidSynthConfig("bad funcs range");
        if (!range_ok(body_min, body_max)) throw InvalidSynthConfig("bad body range");
        if (!range_ok(pad_min, pad_max)) throw InvalidSynthConfig("bad pad range");
        if (!range_ok(jt_entries_min, jt_entries_max)) throw InvalidSynthConfig("bad jump-table range");
        for (double p : {frameless_prob, alloc_prob, dup_prob, jump_table_prob})
            if (p < 0.0 || p > 1.0) throw InvalidSynthConfig("probabilities must lie in [0,1]");
    }
};

struct ProbeSite {
    std::string binary_id;
    uint32_t alloc_imm_off = 0;   // offset of the `sub rsp, imm8` immediate byte
    uint32_t dealloc_imm_off = 0; // offset of the matching `add rsp, imm8` immediate
    uint8_t imm = 0;
};

struct SynthBinary {
    std::string id;
    std::vector<uint8_t> bytes; // text-section content
    std::vector<std::pair<uint32_t, uint32_t>> func_spans; // [start, end) per function
    std::vector<uint32_t> insn_starts;                     // offsets of instruction first bytes
    std::vector<std::pair<uint32_t, uint32_t>> data_spans; // [start, end) of non-code bytes
    std::vector<ProbeSite> probes;
};

namespace detail {

// One generated function, offsets relative to its own first byte. Keeping
// functions self-contained lets a binary re-emit an earlier one verbatim.
struct FuncBlock {
    std::vector<uint8_t> bytes;
    std::vector<uint32_t> insn_starts;
    std::vector<std::pair<uint32_t, uint32_t>> data_spans;
    bool has_probe = false;
    uint32_t alloc_imm_off = 0, dealloc_imm_off = 0;
    uint8_t imm = 0;
};

// Stack adjustment immediates are 4-byte-aligned positive imm8 values.
// 0x48 and 0x74 are skipped — those frames simply come out a different
// size — so that the REX.W prefix and the je opcode stay exclusive to
// instruction-start positions. A wide immediate alphabet keeps the paired
// allocation/deallocation sites informative: recovering a masked
// immediate from its twin beats guessing the marginal distribution by a
// large factor, which is the behavior the probe sites exist to measure.
inline constexpr uint8_t kStackImm[29] = {
    0x04, 0x08, 0x0c, 0x10, 0x14, 0x18, 0x1c, 0x20, 0x24, 0x28,
    0x2c, 0x30, 0x34, 0x38, 0x3c, 0x40, 0x44, 0x4c, 0x50, 0x54,
    0x58, 0x5c, 0x60, 0x64, 0x68, 0x6c, 0x70, 0x78, 0x7c};

struct FuncWriter {
    FuncBlock& blk;
    void insn(std::initializer_list<uint8_t> enc) {
        blk.insn_starts.push_back(static_cast<uint32_t>(blk.bytes.size()));
        blk.bytes.insert(blk.bytes.end(), enc);
    }
    void data(const std::vector<uint8_t>& raw) {
        uint32_t start = static_cast<uint32_t>(blk.bytes.size());
        blk.bytes.insert(blk.bytes.end(), raw.begin(), raw.end());
        blk.data_spans.emplace_back(start, static_cast<uint32_t>(blk.bytes.size()));
    }
};

inline FuncBlock generate_function(const SynthConfig& cfg, Rng& rng) {
    FuncBlock blk;
    FuncWriter w{blk};
    auto range = [&](uint32_t lo, uint32_t hi) {
        return lo + static_cast<uint32_t>(rng.below(hi - lo + 1));
    };

    const bool framed = !rng.bernoulli(cfg.frameless_prob);
    const bool alloc = rng.bernoulli(cfg.alloc_prob);
    const uint8_t imm = kStackImm[rng.below(29)];

    std::vector<uint8_t> saved; // callee-saved push encodings, for mirrored pops
    if (framed) {
        w.insn({0x55});             // push rbp
        w.insn({0x48, 0x89, 0xe5}); // mov rbp, rsp
        const uint32_t n_saved = static_cast<uint32_t>(rng.below(3));
        for (uint32_t i = 0; i < n_saved; ++i) {
            switch (rng.below(3)) {
                case 0: w.insn({0x41, 0x56}); saved.push_back(0); break; // push r14
                case 1: w.insn({0x41, 0x57}); saved.push_back(1); break; // push r15
                default: w.insn({0x53}); saved.push_back(2); break;      // push rbx
            }
        }
    }
    if (alloc) {
        w.insn({0x48, 0x83, 0xec, imm}); // sub rsp, imm8
        blk.alloc_imm_off = static_cast<uint32_t>(blk.bytes.size()) - 1;
    }

    const uint32_t n_body = range(cfg.body_min, cfg.body_max);
    for (uint32_t i = 0; i < n_body; ++i) {
        // Frame slots [rbp-8..rbp-40] skipping -0x18: its encoding 0xe8
        // doubles as the call opcode, and real compilers are free to lay out
        // slots either way.
        static constexpr uint8_t kDisp[4] = {0xd8, 0xe0, 0xf0, 0xf8};
        const uint8_t disp = kDisp[rng.below(4)];
        switch (rng.below(9)) {
            case 0: w.insn({0x48, 0x8b, 0x45, disp}); break;   // mov rax, [rbp+disp8]
            case 1: w.insn({0x48, 0x89, 0x45, disp}); break;   // mov [rbp+disp8], rax
            case 2: w.insn({0x48, 0xff, 0xc0}); break;         // inc rax
            case 3: w.insn({0x31, 0xc0}); break;               // xor eax, eax
            case 4: w.insn({0x85, 0xc0}); break;               // test eax, eax
            case 5: w.insn({0x74, static_cast<uint8_t>(2 + rng.below(0x2e))}); break; // je rel8
            case 6: {                                          // call rel32, 16-aligned target
                int32_t rel = 16 * (static_cast<int32_t>(rng.below(0x80)) - 0x40);
                uint32_t u = static_cast<uint32_t>(rel);
                w.insn({0xe8, static_cast<uint8_t>(u), static_cast<uint8_t>(u >> 8),
                        static_cast<uint8_t>(u >> 16), static_cast<uint8_t>(u >> 24)});
                break;
            }
            case 7: w.insn({0x48, 0xff, 0xc8}); break;         // dec rax
            default: {                                         // mov eax, imm32 (16-aligned)
                uint32_t v = 16 * static_cast<uint32_t>(rng.below(0x100));
                w.insn({0xb8, static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)});
                break;
            }
        }
    }

    if (rng.bernoulli(cfg.jump_table_prob)) {
        // jmp over an inline table of 4-byte little-endian entries. Entries
        // repeat the way switch tables share case bodies: each table draws
        // from one or two distinct 16-aligned targets.
        const uint32_t entries = range(cfg.jt_entries_min, cfg.jt_entries_max);
        const uint32_t distinct = 1 + static_cast<uint32_t>(rng.below(2));
        uint32_t targets[2] = {0, 0};
        for (uint32_t d = 0; d < distinct; ++d)
            targets[d] = 0x1000 + 16 * static_cast<uint32_t>(rng.below(0x200));
        w.insn({0xeb, static_cast<uint8_t>(4 * entries)}); // jmp short past the table
        std::vector<uint8_t> table;
        for (uint32_t e = 0; e < entries; ++e) {
            uint32_t v = targets[rng.below(distinct)];
            table.push_back(static_cast<uint8_t>(v));
            table.push_back(static_cast<uint8_t>(v >> 8));
            table.push_back(static_cast<uint8_t>(v >> 16));
            table.push_back(static_cast<uint8_t>(v >> 24));
        }
        w.data(table);
    }

    if (alloc) {
        w.insn({0x48, 0x83, 0xc4, imm}); // add rsp, imm8 — same immediate
        blk.dealloc_imm_off = static_cast<uint32_t>(blk.bytes.size()) - 1;
        blk.imm = imm;
        blk.has_probe = true;
    }
    for (auto it = saved.rbegin(); it != saved.rend(); ++it) {
        switch (*it) {
            case 0: w.insn({0x41, 0x5e}); break; // pop r14
            case 1: w.insn({0x41, 0x5f}); break; // pop r15
            default: w.insn({0x5b}); break;      // pop rbx
        }
    }
    if (framed) w.insn({0x5d}); // pop rbp
    w.insn({0xc3});             // ret
    return blk;
}

} // namespace detail

inline SynthBinary generate_binary(const SynthConfig& cfg, uint32_t index) {
    cfg.validate();
    Rng rng = Rng::derive(cfg.seed, Stream::synth, 0, index);
    SynthBinary bin;
    bin.id = "synth" + std::to_string(index);

    auto range = [&](uint32_t lo, uint32_t hi) {
        return lo + static_cast<uint32_t>(rng.below(hi - lo + 1));
    };
    auto append = [&](const detail::FuncBlock& blk) {
        const uint32_t base = static_cast<uint32_t>(bin.bytes.size());
        bin.bytes.insert(bin.bytes.end(), blk.bytes.begin(), blk.bytes.end());
        for (uint32_t s : blk.insn_starts) bin.insn_starts.push_back(base + s);
        for (auto [a, b] : blk.data_spans) bin.data_spans.emplace_back(base + a, base + b);
        bin.func_spans.emplace_back(base, static_cast<uint32_t>(bin.bytes.size()));
        if (blk.has_probe)
            bin.probes.push_back(
                {bin.id, base + blk.alloc_imm_off, base + blk.dealloc_imm_off, blk.imm});
        // >=1 padding byte between functions and after the last one, so the
        // exclusive function end always lands on a padding byte
        std::vector<uint8_t> cc(range(cfg.pad_min, cfg.pad_max), 0xcc);
        const uint32_t start = static_cast<uint32_t>(bin.bytes.size());
        bin.bytes.insert(bin.bytes.end(), cc.begin(), cc.end());
        bin.data_spans.emplace_back(start, static_cast<uint32_t>(bin.bytes.size()));
    };

    std::vector<detail::FuncBlock> emitted;
    const uint32_t n_funcs = range(cfg.funcs_min, cfg.funcs_max);
    for (uint32_t f = 0; f < n_funcs; ++f) {
        if (f > 0 && rng.bernoulli(cfg.dup_prob)) {
            detail::FuncBlock clone = emitted[rng.below(emitted.size())];
            // A clone keeps its twin's body but re-draws the stack-adjustment
            // immediate, so the pair stays internally consistent while a
            // masked allocation immediate is never recoverable from a twin —
            // only from its own matching deallocation.
            if (clone.has_probe) {
                clone.imm = detail::kStackImm[rng.below(29)];
                clone.bytes[clone.alloc_imm_off] = clone.imm;
                clone.bytes[clone.dealloc_imm_off] = clone.imm;
            }
            append(clone);
            continue;
        }
        emitted.push_back(detail::generate_function(cfg, rng));
        append(emitted.back());
    }
    return bin;
}

inline std::vector<SynthBinary> generate_corpus(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<SynthBinary> out;
    out.reserve(cfg.num_binaries);
    for (uint32_t i = 0; i < cfg.num_binaries; ++i) out.push_back(generate_binary(cfg, i));
    return out;
}

// Wraps text-section bytes in a minimal but fully valid ELF64 image: file
// header, the section body, a string table, and three section headers
// (null, .text, .shstrtab).
inline std::vector<uint8_t> write_minimal_elf(const std::vector<uint8_t>& text) {
    const uint64_t text_off = 64;
    const std::string shstr = std::string("\0.text\0.shstrtab\0", 17);
    const uint64_t str_off = text_off + text.size();
    uint64_t sh_off = str_off + shstr.size();
    sh_off = (sh_off + 7) & ~7ull;

    std::vector<uint8_t> img(sh_off + 3 * 64, 0);
    auto put16 = [&](uint64_t off, uint16_t v) {
        img[off] = static_cast<uint8_t>(v);
        img[off + 1] = static_cast<uint8_t>(v >> 8);
    };
    auto put32 = [&](uint64_t off, uint32_t v) {
        for (int i = 0; i < 4; ++i) img[off + i] = static_cast<uint8_t>(v >> (8 * i));
    };
    auto put64 = [&](uint64_t off, uint64_t v) {
        for (int i = 0; i < 8; ++i) img[off + i] = static_cast<uint8_t>(v >> (8 * i));
    };

    img[0] = 0x7f; img[1] = 'E'; img[2] = 'L'; img[3] = 'F';
    img[4] = 2;  // ELFCLASS64
    img[5] = 1;  // little-endian
    img[6] = 1;  // EV_CURRENT
    put16(0x10, 2);      // e_type = EXEC
    put16(0x12, 0x3e);   // e_machine = x86-64
    put32(0x14, 1);      // e_version
    put64(0x18, 0x1000); // e_entry
    put64(0x28, sh_off); // e_shoff
    put16(0x34, 64);     // e_ehsize
    put16(0x3a, 64);     // e_shentsize
    put16(0x3c, 3);      // e_shnum
    put16(0x3e, 2);      // e_shstrndx

    std::copy(text.begin(), text.end(), img.begin() + static_cast<ptrdiff_t>(text_off));
    std::copy(shstr.begin(), shstr.end(), img.begin() + static_cast<ptrdiff_t>(str_off));

    const uint64_t sh_text = sh_off + 64;
    put32(sh_text + 0x00, 1);            // sh_name -> ".text"
    put32(sh_text + 0x04, 1);            // SHT_PROGBITS
    put64(sh_text + 0x08, 0x6);          // SHF_ALLOC | SHF_EXECINSTR
    put64(sh_text + 0x10, 0x1000);       // sh_addr
    put64(sh_text + 0x18, text_off);     // sh_offset
    put64(sh_text + 0x20, text.size());  // sh_size
    put64(sh_text + 0x30, 16);           // sh_addralign

    const uint64_t sh_str = sh_off + 128;
    put32(sh_str + 0x00, 7);             // sh_name -> ".shstrtab"
    put32(sh_str + 0x04, 3);             // SHT_STRTAB
    put64(sh_str + 0x18, str_off);
    put64(sh_str + 0x20, shstr.size());
    put64(sh_str + 0x30, 1);
    return img;
}

} // namespace xda
