#pragma once
// Byte-level task labels.
//
// Function recovery uses classes {S, E, N}: S marks a function's first byte,
// E marks the first byte *not* in the function (exclusive end), every other
// byte is N. Instruction recovery uses {B, C, D}: first byte of an
// instruction, continuation byte, data byte.
//
// Labels travel in a TSV file keyed by (binary id, section); sequences slice
// their label window by (section, start, length).

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xda/errors.hpp"
#include "xda/util.hpp"

namespace xda {

namespace cls {
// function task
inline constexpr uint8_t S = 0;
inline constexpr uint8_t E = 1;
inline constexpr uint8_t N = 2;
// instruction task
inline constexpr uint8_t B = 0;
inline constexpr uint8_t C = 1;
inline constexpr uint8_t D = 2;
// positions excluded from loss and metrics
inline constexpr uint8_t IGNORE = 255;
} // namespace cls

struct LabelFlags {
    uint64_t end_beyond_section = 0; // function ends flush with the section: no byte for E
    uint64_t start_overwrote_end = 0; // S and E collide on one byte: S wins
};

// Function spans -> per-byte classes. Spans must be sorted and disjoint.
inline std::vector<uint8_t> func_labels_from_spans(
    uint64_t section_len, const std::vector<std::pair<uint32_t, uint32_t>>& spans,
    LabelFlags* flags = nullptr) {
    std::vector<uint8_t> out(section_len, cls::N);
    uint64_t prev_end = 0;
    bool first = true;
    for (auto [s, e] : spans) {
        if (s >= e) throw LabelMisalignment("empty function span at " + std::to_string(s));
        if (e > section_len)
            throw LabelMisalignment("function span " + std::to_string(s) + ".." + std::to_string(e) +
                                    " exceeds section of " + std::to_string(section_len));
        if (!first && s < prev_end)
            throw OverlappingFunctions("function at " + std::to_string(s) +
                                       " overlaps previous ending at " + std::to_string(prev_end));
        first = false;
        prev_end = e;
        if (e < section_len) {
            out[e] = cls::E;
        } else if (flags) {
            ++flags->end_beyond_section;
        }
    }
    // S in a second pass: when an exclusive end collides with the next
    // function's first byte, the start wins.
    for (auto [s, e] : spans) {
        if (flags && out[s] == cls::E) ++flags->start_overwrote_end;
        out[s] = cls::S;
    }
    return out;
}

// Instruction starts + data spans -> per-byte classes. Bytes inside data
// spans are D, instruction first bytes are B, the rest are C.
inline std::vector<uint8_t> insn_labels(uint64_t section_len, const std::vector<uint32_t>& starts,
                                        const std::vector<std::pair<uint32_t, uint32_t>>& data_spans) {
    std::vector<uint8_t> out(section_len, cls::C);
    for (auto [a, b] : data_spans) {
        if (a >= b || b > section_len)
            throw LabelMisalignment("bad data span " + std::to_string(a) + ".." + std::to_string(b));
        std::fill(out.begin() + a, out.begin() + b, cls::D);
    }
    for (uint32_t s : starts) {
        if (s >= section_len)
            throw LabelMisalignment("instruction start " + std::to_string(s) + " outside section");
        if (out[s] == cls::D)
            throw LabelMisalignment("instruction start " + std::to_string(s) + " inside a data span");
        out[s] = cls::B;
    }
    return out;
}

// ---- function pairing --------------------------------------------------
// Greedy reconstruction of [start, end) pairs from a byte-class sequence.
// An S while another function is open closes the previous one at the new S.
// An E with nothing open is dropped. An S never closed ends at section end.
// All three irregularities are flagged, not fatal: predicted label
// sequences are under no grammar obligation.

struct PairFlags {
    uint64_t implicit_close = 0; // S closed a still-open predecessor
    uint64_t stray_end = 0;      // E without an open function
    uint64_t open_at_end = 0;    // S closed by section end
};

inline std::vector<std::pair<uint32_t, uint32_t>> pairs_from_labels(const std::vector<uint8_t>& labels,
                                                                    PairFlags* flags = nullptr) {
    std::vector<std::pair<uint32_t, uint32_t>> out;
    bool open = false;
    uint32_t open_at = 0;
    for (uint32_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == cls::S) {
            if (open) {
                out.emplace_back(open_at, i);
                if (flags) ++flags->implicit_close;
            }
            open = true;
            open_at = i;
        } else if (labels[i] == cls::E) {
            if (open) {
                out.emplace_back(open_at, i);
                open = false;
            } else if (flags) {
                ++flags->stray_end;
            }
        }
    }
    if (open) {
        out.emplace_back(open_at, static_cast<uint32_t>(labels.size()));
        if (flags) ++flags->open_at_end;
    }
    return out;
}

// Maximal B C* runs -> instruction spans; D runs -> data spans.
struct InsnSpans {
    std::vector<std::pair<uint32_t, uint32_t>> instructions;
    std::vector<std::pair<uint32_t, uint32_t>> data;
};

inline InsnSpans spans_from_insn_labels(const std::vector<uint8_t>& labels) {
    InsnSpans out;
    const uint32_t n = static_cast<uint32_t>(labels.size());
    for (uint32_t i = 0; i < n;) {
        if (labels[i] == cls::B) {
            uint32_t j = i + 1;
            while (j < n && labels[j] == cls::C) ++j;
            out.instructions.emplace_back(i, j);
            i = j;
        } else if (labels[i] == cls::D) {
            uint32_t j = i + 1;
            while (j < n && labels[j] == cls::D) ++j;
            out.data.emplace_back(i, j);
            i = j;
        } else {
            ++i; // orphan continuation byte: not part of any span
        }
    }
    return out;
}

// ---- label store and TSV grammar ----------------------------------------
//
// # xda-labels v1
// <binary>\t<section>\tfunc\t<s>,<e> <s>,<e> ...
// <binary>\t<section>\tinsn\tstarts=<o>,<o>,...\tdata=<a>-<b>,<a>-<b>,...

struct SectionLabels {
    std::vector<std::pair<uint32_t, uint32_t>> func_spans;
    std::vector<uint32_t> insn_starts;
    std::vector<std::pair<uint32_t, uint32_t>> data_spans;
    bool has_func = false, has_insn = false;
};

using LabelStore = std::map<std::pair<std::string, std::string>, SectionLabels>;

inline constexpr const char* kLabelsHeader = "# xda-labels v1";

inline std::string labels_to_tsv(const LabelStore& store) {
    std::string out = std::string(kLabelsHeader) + "\n";
    for (const auto& [key, sl] : store) {
        const auto& [bin, section] = key;
        if (sl.has_func) {
            out += bin + "\t" + section + "\tfunc\t";
            for (size_t i = 0; i < sl.func_spans.size(); ++i) {
                if (i) out += ' ';
                out += std::to_string(sl.func_spans[i].first) + "," +
                       std::to_string(sl.func_spans[i].second);
            }
            out += "\n";
        }
        if (sl.has_insn) {
            out += bin + "\t" + section + "\tinsn\tstarts=";
            for (size_t i = 0; i < sl.insn_starts.size(); ++i) {
                if (i) out += ',';
                out += std::to_string(sl.insn_starts[i]);
            }
            out += "\tdata=";
            for (size_t i = 0; i < sl.data_spans.size(); ++i) {
                if (i) out += ',';
                out += std::to_string(sl.data_spans[i].first) + "-" +
                       std::to_string(sl.data_spans[i].second);
            }
            out += "\n";
        }
    }
    return out;
}

inline LabelStore labels_from_tsv(const std::string& text) {
    auto lines = split_lines(text);
    if (lines.empty() || lines[0] != kLabelsHeader)
        throw MalformedHeader("labels file missing '" + std::string(kLabelsHeader) + "' header");
    LabelStore store;
    for (size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty() || lines[li][0] == '#') continue;
        auto f = split_tabs(lines[li]);
        if (f.size() < 4)
            throw MalformedHeader("labels line " + std::to_string(li + 1) + ": expected >=4 fields");
        SectionLabels& sl = store[{std::string(f[0]), std::string(f[1])}];
        auto parse_pair_list = [&](std::string_view body, char sep,
                                   std::vector<std::pair<uint32_t, uint32_t>>& out) {
            size_t pos = 0;
            while (pos < body.size()) {
                size_t space = body.find(sep == ',' ? ' ' : ',', pos);
                std::string_view item =
                    body.substr(pos, space == std::string_view::npos ? body.size() - pos : space - pos);
                size_t mid = item.find(sep);
                if (mid == std::string_view::npos)
                    throw MalformedHeader("labels line " + std::to_string(li + 1) + ": bad span '" +
                                          std::string(item) + "'");
                out.emplace_back(
                    static_cast<uint32_t>(parse_u64(item.substr(0, mid), "span start")),
                    static_cast<uint32_t>(parse_u64(item.substr(mid + 1), "span end")));
                if (space == std::string_view::npos) break;
                pos = space + 1;
            }
        };
        if (f[2] == "func") {
            sl.has_func = true;
            if (!f[3].empty()) parse_pair_list(f[3], ',', sl.func_spans);
        } else if (f[2] == "insn") {
            sl.has_insn = true;
            for (size_t fi = 3; fi < f.size(); ++fi) {
                std::string_view field = f[fi];
                if (field.rfind("starts=", 0) == 0) {
                    std::string_view body = field.substr(7);
                    size_t pos = 0;
                    while (pos < body.size()) {
                        size_t comma = body.find(',', pos);
                        std::string_view item = body.substr(
                            pos, comma == std::string_view::npos ? body.size() - pos : comma - pos);
                        sl.insn_starts.push_back(
                            static_cast<uint32_t>(parse_u64(item, "instruction start")));
                        if (comma == std::string_view::npos) break;
                        pos = comma + 1;
                    }
                } else if (field.rfind("data=", 0) == 0) {
                    std::string_view body = field.substr(5);
                    if (!body.empty()) parse_pair_list(body, '-', sl.data_spans);
                } else {
                    throw MalformedHeader("labels line " + std::to_string(li + 1) +
                                          ": unknown field '" + std::string(field) + "'");
                }
            }
        } else {
            throw MalformedHeader("labels line " + std::to_string(li + 1) + ": unknown kind '" +
                                  std::string(f[2]) + "'");
        }
    }
    return store;
}

// Per-byte classes for one section under the given task.
inline std::vector<uint8_t> section_classes(const SectionLabels& sl, uint64_t section_len,
                                            bool func_task, LabelFlags* flags = nullptr) {
    if (func_task) {
        if (!sl.has_func) throw LabelMisalignment("section has no function labels");
        return func_labels_from_spans(section_len, sl.func_spans, flags);
    }
    if (!sl.has_insn) throw LabelMisalignment("section has no instruction labels");
    return insn_labels(section_len, sl.insn_starts, sl.data_spans);
}

} // namespace xda
