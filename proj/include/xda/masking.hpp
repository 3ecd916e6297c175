#pragma once
// Masked-reconstruction corruption. For a sequence with n non-pad bytes,
// exactly floor(rate*n) positions are drawn without replacement; of those m,
// floor(m/2) become <MASK> and the rest become uniform random bytes (which
// may coincide with the original — the prediction target is always the
// original byte). There is no keep-original group. Streams are keyed on
// (seed, epoch, sequence id), so every epoch re-rolls the corruption and
// every sequence corrupts independently of how batches are formed.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "xda/errors.hpp"
#include "xda/rng.hpp"
#include "xda/tokenizer.hpp"

namespace xda {

struct MaskConfig {
    double rate = 0.20;            // fraction of non-pad positions to corrupt
    double mask_token_frac = 0.50; // of corrupted: fraction becoming <MASK>
};

struct MaskedSequence {
    TokenSeq input;                  // corrupted copy
    std::vector<uint32_t> positions; // corrupted positions, ascending
    std::vector<uint8_t> targets;    // original bytes at those positions
};

// Draw k distinct values from [0, n) by partial Fisher-Yates.
inline std::vector<uint32_t> sample_without_replacement(uint32_t n, uint32_t k, Rng& rng) {
    std::vector<uint32_t> idx(n);
    for (uint32_t i = 0; i < n; ++i) idx[i] = i;
    for (uint32_t i = 0; i < k; ++i) {
        uint32_t j = i + static_cast<uint32_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

inline MaskedSequence make_masked(const TokenSeq& seq, const MaskConfig& cfg, uint64_t seed,
                                  uint64_t epoch, uint64_t sequence_id,
                                  bool require_nonempty = false) {
    MaskedSequence out;
    out.input = seq;
    const uint32_t n = seq.n_real;
    const uint32_t m = static_cast<uint32_t>(cfg.rate * n); // floor
    if (m == 0) {
        if (require_nonempty)
            throw EmptyMaskSet("sequence of " + std::to_string(n) +
                               " bytes yields zero maskable positions at rate " +
                               std::to_string(cfg.rate));
        return out; // pass-through; caller logs and skips
    }

    Rng sel = Rng::derive(seed, Stream::mask_select, epoch, sequence_id);
    Rng grp = Rng::derive(seed, Stream::mask_group, epoch, sequence_id);
    Rng byt = Rng::derive(seed, Stream::mask_byte, epoch, sequence_id);

    std::vector<uint32_t> chosen = sample_without_replacement(n, m, sel);
    // Group assignment is a second independent shuffle so which positions
    // get <MASK> is not correlated with selection order.
    std::vector<uint32_t> order(m);
    for (uint32_t i = 0; i < m; ++i) order[i] = i;
    grp.shuffle(order);
    const uint32_t n_mask_tok = static_cast<uint32_t>(cfg.mask_token_frac * m); // floor

    std::vector<uint16_t> replacement(m);
    for (uint32_t r = 0; r < m; ++r) {
        if (r < n_mask_tok)
            replacement[order[r]] = tok::MASK;
        else
            replacement[order[r]] = static_cast<uint16_t>(byt.below(256));
    }

    // Emit ascending by position for reproducible downstream iteration.
    std::vector<uint32_t> perm(m);
    for (uint32_t i = 0; i < m; ++i) perm[i] = i;
    std::sort(perm.begin(), perm.end(),
              [&](uint32_t a, uint32_t b) { return chosen[a] < chosen[b]; });

    out.positions.reserve(m);
    out.targets.reserve(m);
    for (uint32_t i : perm) {
        const uint32_t pos = chosen[i];
        out.positions.push_back(pos);
        out.targets.push_back(static_cast<uint8_t>(seq.ids[pos]));
        out.input.ids[pos] = replacement[i];
    }
    return out;
}

// Debug rendering: "pos:orig->new" per corrupted position.
inline std::string mask_dump(const TokenSeq& original, const MaskedSequence& m) {
    std::string out;
    for (size_t i = 0; i < m.positions.size(); ++i) {
        if (i) out += ' ';
        const uint32_t pos = m.positions[i];
        out += std::to_string(pos) + ":" + token_name(original.ids[pos]) + "->" +
               token_name(m.input.ids[pos]);
    }
    return out;
}

} // namespace xda
