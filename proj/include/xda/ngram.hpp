#pragma once
// N-gram statistics over corpus splits. Windows containing padding-ish bytes
// (0xcc, 0x00, 0xff by default) are skipped so the tables reflect code, not
// filler. Report rows sort by count descending, ties by tuple ascending, so
// output is a deterministic function of the corpus.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "xda/corpus.hpp"
#include "xda/errors.hpp"
#include "xda/util.hpp"

namespace xda {

struct NGramTable {
    uint32_t n = 1;
    std::set<uint8_t> excluded{0xcc, 0x00, 0xff};
    std::map<std::vector<uint8_t>, uint64_t> counts;
    uint64_t total = 0; // counted windows
};

inline NGramTable count_ngrams(const Corpus& c, Split split, uint32_t n,
                               std::set<uint8_t> excluded = {0xcc, 0x00, 0xff}) {
    if (n == 0) throw BadConfig("n-gram order must be positive");
    NGramTable t;
    t.n = n;
    t.excluded = excluded;
    for (const auto& r : c.sequences) {
        if (r.split != split || r.bytes.size() < n) continue;
        for (size_t i = 0; i + n <= r.bytes.size(); ++i) {
            bool skip = false;
            for (size_t k = 0; k < n && !skip; ++k) skip = excluded.count(r.bytes[i + k]) != 0;
            if (skip) continue;
            std::vector<uint8_t> key(r.bytes.begin() + static_cast<ptrdiff_t>(i),
                                     r.bytes.begin() + static_cast<ptrdiff_t>(i + n));
            ++t.counts[key];
            ++t.total;
        }
    }
    return t;
}

struct NGramRow {
    std::vector<uint8_t> tuple;
    uint64_t count = 0;
};

inline std::vector<NGramRow> sorted_rows(const NGramTable& t, size_t top = 0) {
    std::vector<NGramRow> rows;
    rows.reserve(t.counts.size());
    for (const auto& [tuple, count] : t.counts) rows.push_back({tuple, count});
    std::stable_sort(rows.begin(), rows.end(), [](const NGramRow& a, const NGramRow& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.tuple < b.tuple;
    });
    if (top && rows.size() > top) rows.resize(top);
    return rows;
}

inline std::string ngram_report(const NGramTable& t, size_t top = 0) {
    std::string out;
    for (const auto& row : sorted_rows(t, top))
        out += hex_tuple(row.tuple) + "\t" + std::to_string(row.count) + "\n";
    return out;
}

} // namespace xda
