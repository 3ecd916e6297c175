#pragma once
// Corpus assembly: executable sections are chunked into non-overlapping
// sequences of at most seq_len bytes, split assignment happens at binary
// granularity (never sequence granularity, to avoid leaking one binary's
// bytes across splits), and the result round-trips through a TSV manifest.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "xda/binary.hpp"
#include "xda/errors.hpp"
#include "xda/rng.hpp"
#include "xda/util.hpp"

namespace xda {

enum class Split : uint8_t { pretrain, train, validation, test };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::pretrain: return "pretrain";
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_string(std::string_view s) {
    if (s == "pretrain") return Split::pretrain;
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw MalformedHeader("unknown split name '" + std::string(s) + "'");
}

struct SequenceRecord {
    uint32_t id = 0;
    std::string binary_id;
    std::string path;    // file the bytes came from (empty for in-memory corpora)
    std::string section;
    uint64_t start = 0;  // offset within the section
    Split split = Split::pretrain;
    std::vector<uint8_t> bytes; // 1..seq_len bytes, never padded here
};

struct Corpus {
    uint32_t seq_len = 512;
    std::vector<SequenceRecord> sequences;

    std::vector<const SequenceRecord*> of_split(Split s) const {
        std::vector<const SequenceRecord*> out;
        for (const auto& r : sequences)
            if (r.split == s) out.push_back(&r);
        return out;
    }
    size_t count_split(Split s) const {
        size_t n = 0;
        for (const auto& r : sequences) n += r.split == s;
        return n;
    }
};

struct SplitConfig {
    double pretrain_frac = 0.5; // fraction of binaries used for pretraining
    double val_frac = 0.05;     // fraction of pretrain binaries held out for validation
    double train_frac = 0.10;   // fraction of the remaining pool used as labeled training
    uint64_t seed = 1;
};

inline size_t pretty_round(double v) { return static_cast<size_t>(v + 0.5); }

// Assigns one split per binary. Shuffle order comes from the split stream of
// the seed, so the same binary list + seed always produces the same splits.
inline std::vector<Split> assign_splits(size_t n_binaries, const SplitConfig& cfg) {
    if (n_binaries < 4)
        throw EmptySplit("need at least 4 binaries to populate all splits, got " +
                         std::to_string(n_binaries));
    std::vector<uint32_t> order(n_binaries);
    for (size_t i = 0; i < n_binaries; ++i) order[i] = static_cast<uint32_t>(i);
    Rng rng = Rng::derive(cfg.seed, Stream::split);
    rng.shuffle(order);

    const size_t n_pre_pool = static_cast<size_t>(pretty_round(cfg.pretrain_frac * n_binaries));
    const size_t n_val = std::max<size_t>(1, static_cast<size_t>(cfg.val_frac * n_pre_pool));
    const size_t n_fine = n_binaries - n_pre_pool;
    const size_t n_train = std::max<size_t>(1, static_cast<size_t>(cfg.train_frac * n_fine));

    std::vector<Split> out(n_binaries, Split::test);
    size_t k = 0;
    for (; k < n_pre_pool; ++k) out[order[k]] = k < n_val ? Split::validation : Split::pretrain;
    for (size_t t = 0; t < n_train && k < n_binaries; ++t, ++k) out[order[k]] = Split::train;

    for (Split s : {Split::pretrain, Split::validation, Split::train, Split::test}) {
        if (std::count(out.begin(), out.end(), s) == 0)
            throw EmptySplit(std::string("split '") + to_string(s) +
                             "' received no binaries; adjust fractions or corpus size");
    }
    return out;
}

// Non-overlapping chunks; the final short chunk is kept (padding is the
// tokenizer's job, not the corpus's).
inline std::vector<std::pair<uint64_t, uint64_t>> chunk_offsets(uint64_t section_len, uint32_t seq_len) {
    std::vector<std::pair<uint64_t, uint64_t>> out;
    for (uint64_t off = 0; off < section_len; off += seq_len)
        out.emplace_back(off, std::min<uint64_t>(seq_len, section_len - off));
    return out;
}

struct CorpusInput {
    ExecutableImage image;
    std::string path; // recorded in the manifest; may be empty for synthetic bytes
};

inline Corpus build_corpus(const std::vector<CorpusInput>& inputs, uint32_t seq_len,
                           const std::vector<Split>& splits) {
    if (inputs.size() != splits.size())
        throw LengthMismatch("split list (" + std::to_string(splits.size()) +
                             ") does not match binary list (" + std::to_string(inputs.size()) + ")");
    if (seq_len == 0) throw BadConfig("seq_len must be positive");
    Corpus c;
    c.seq_len = seq_len;
    uint32_t next_id = 0;
    for (size_t b = 0; b < inputs.size(); ++b) {
        const ExecutableImage& img = inputs[b].image;
        for (const Section& sec : img.sections) {
            for (auto [off, len] : chunk_offsets(sec.bytes.size(), seq_len)) {
                SequenceRecord r;
                r.id = next_id++;
                r.binary_id = img.id;
                r.path = inputs[b].path;
                r.section = sec.name;
                r.start = off;
                r.split = splits[b];
                r.bytes.assign(sec.bytes.begin() + static_cast<ptrdiff_t>(off),
                               sec.bytes.begin() + static_cast<ptrdiff_t>(off + len));
                c.sequences.push_back(std::move(r));
            }
        }
    }
    return c;
}

inline Corpus build_corpus(const std::vector<CorpusInput>& inputs, uint32_t seq_len,
                           const SplitConfig& cfg) {
    return build_corpus(inputs, seq_len, assign_splits(inputs.size(), cfg));
}

// ---- manifest ----------------------------------------------------------
// Line format: id<TAB>path<TAB>section<TAB>start<TAB>length<TAB>split
// preceded by a version header. Bytes are re-read from the referenced files
// on load; the manifest itself never stores raw bytes.

inline constexpr const char* kManifestHeader = "# xda-manifest v1";

inline std::string manifest_to_tsv(const Corpus& c) {
    std::string out = kManifestHeader;
    out += "\tseq_len=" + std::to_string(c.seq_len) + "\n";
    for (const auto& r : c.sequences) {
        out += std::to_string(r.id) + "\t" + (r.path.empty() ? "-" : r.path) + "\t" + r.section + "\t" +
               std::to_string(r.start) + "\t" + std::to_string(r.bytes.size()) + "\t" + to_string(r.split) +
               "\n";
    }
    return out;
}

inline void save_manifest(const Corpus& c, const std::filesystem::path& path) {
    write_file_text(path, manifest_to_tsv(c));
}

// Loads a manifest and re-slices the referenced binaries. `root` resolves
// relative paths. All sequences of one file share a single parsed image.
inline Corpus load_manifest(const std::filesystem::path& manifest_path,
                            const std::filesystem::path& root = {}) {
    const std::string text = read_file_text(manifest_path);
    auto lines = split_lines(text);
    if (lines.empty() || lines[0].substr(0, std::string(kManifestHeader).size()) != kManifestHeader)
        throw MalformedHeader("manifest missing '" + std::string(kManifestHeader) + "' header line");

    Corpus c;
    auto head = split_tabs(lines[0]);
    c.seq_len = 512;
    for (size_t i = 1; i < head.size(); ++i) {
        std::string_view f = head[i];
        if (f.rfind("seq_len=", 0) == 0) c.seq_len = static_cast<uint32_t>(parse_u64(f.substr(8), "seq_len"));
    }

    std::map<std::string, ExecutableImage> cache;
    for (size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty() || lines[li][0] == '#') continue;
        auto f = split_tabs(lines[li]);
        if (f.size() != 6)
            throw MalformedHeader("manifest line " + std::to_string(li + 1) + " has " +
                                  std::to_string(f.size()) + " fields, expected 6");
        SequenceRecord r;
        r.id = static_cast<uint32_t>(parse_u64(f[0], "sequence id"));
        r.path = std::string(f[1]);
        r.section = std::string(f[2]);
        r.start = parse_u64(f[3], "start");
        const uint64_t length = parse_u64(f[4], "length");
        r.split = split_from_string(f[5]);
        if (length == 0 || length > c.seq_len)
            throw MalformedHeader("manifest line " + std::to_string(li + 1) + ": length " +
                                  std::to_string(length) + " outside 1.." + std::to_string(c.seq_len));
        if (r.path == "-")
            throw MalformedHeader("manifest line " + std::to_string(li + 1) +
                                  ": in-memory sequence cannot be reloaded");

        auto it = cache.find(r.path);
        if (it == cache.end()) {
            std::filesystem::path p = root.empty() ? std::filesystem::path(r.path) : root / r.path;
            it = cache.emplace(r.path, load_image_file(p)).first;
        }
        const ExecutableImage& img = it->second;
        r.binary_id = img.id;
        const Section* sec = nullptr;
        for (const auto& s : img.sections)
            if (s.name == r.section) sec = &s;
        if (!sec)
            throw MalformedHeader("manifest references section '" + r.section + "' absent from " + r.path);
        if (r.start + length > sec->bytes.size())
            throw MalformedHeader("manifest slice " + std::to_string(r.start) + "+" +
                                  std::to_string(length) + " exceeds section '" + r.section + "' of " +
                                  r.path);
        r.bytes.assign(sec->bytes.begin() + static_cast<ptrdiff_t>(r.start),
                       sec->bytes.begin() + static_cast<ptrdiff_t>(r.start + length));
        c.sequences.push_back(std::move(r));
    }
    return c;
}

// ---- overlap report ----------------------------------------------------
// Fraction of test sequences whose complete byte string also occurs as a
// training-side sequence. Exact whole-sequence equality, nothing fuzzier.

struct OverlapReport {
    double rate = 0.0;
    uint64_t matched = 0;
    uint64_t total_test = 0;
};

inline OverlapReport overlap_rate(const Corpus& c, Split train_side = Split::pretrain,
                                  Split test_side = Split::test) {
    std::set<std::vector<uint8_t>> seen;
    for (const auto& r : c.sequences)
        if (r.split == train_side) seen.insert(r.bytes);
    OverlapReport rep;
    for (const auto& r : c.sequences) {
        if (r.split != test_side) continue;
        ++rep.total_test;
        rep.matched += seen.count(r.bytes);
    }
    rep.rate = rep.total_test ? static_cast<double>(rep.matched) / static_cast<double>(rep.total_test) : 0.0;
    return rep;
}

// ---- stats -------------------------------------------------------------

struct SplitStats {
    uint64_t binaries = 0, sequences = 0, bytes = 0;
};

inline std::map<Split, SplitStats> corpus_stats(const Corpus& c) {
    std::map<Split, SplitStats> out;
    std::map<Split, std::set<std::string>> bins;
    for (const auto& r : c.sequences) {
        auto& s = out[r.split];
        ++s.sequences;
        s.bytes += r.bytes.size();
        bins[r.split].insert(r.binary_id);
    }
    for (auto& [split, s] : out) s.binaries = bins[split].size();
    return out;
}

} // namespace xda
