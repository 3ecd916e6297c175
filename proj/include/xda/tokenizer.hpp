#pragma once
// Byte tokenizer. Every raw byte value is its own token (0x00..0xff keep
// their numeric identity); five reserved tokens follow. Encoding never
// inserts markers into the stream — non-pad positions always hold byte ids,
// which downstream masking relies on.

#include <cstdint>
#include <string>
#include <vector>

#include "xda/errors.hpp"
#include "xda/util.hpp"

namespace xda {

namespace tok {
inline constexpr uint16_t PAD = 256;
inline constexpr uint16_t BOS = 257;  // <S>
inline constexpr uint16_t EOS = 258;  // </S>
inline constexpr uint16_t UNK = 259;
inline constexpr uint16_t MASK = 260;
inline constexpr uint16_t VOCAB = 261;
inline constexpr uint16_t BYTES = 256;
} // namespace tok

struct TokenSeq {
    std::vector<uint16_t> ids; // length == seq_len, tail padded with PAD
    uint32_t n_real = 0;       // number of non-pad positions (prefix)

    bool is_pad(size_t i) const { return i >= n_real; }
};

inline TokenSeq encode(const std::vector<uint8_t>& bytes, uint32_t seq_len) {
    if (bytes.empty()) throw EmptyInput("cannot encode an empty byte sequence");
    if (bytes.size() > seq_len)
        throw SequenceTooLong("sequence of " + std::to_string(bytes.size()) +
                              " bytes exceeds seq_len " + std::to_string(seq_len));
    TokenSeq s;
    s.n_real = static_cast<uint32_t>(bytes.size());
    s.ids.assign(seq_len, tok::PAD);
    for (size_t i = 0; i < bytes.size(); ++i) s.ids[i] = bytes[i];
    return s;
}

inline std::string token_name(uint16_t id) {
    switch (id) {
        case tok::PAD: return "<PAD>";
        case tok::BOS: return "<S>";
        case tok::EOS: return "</S>";
        case tok::UNK: return "<UNK>";
        case tok::MASK: return "<MASK>";
        default:
            if (id < tok::BYTES) return hex_byte(static_cast<uint8_t>(id));
            throw UnknownId("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(tok::VOCAB));
    }
}

// Inverse of encode for display: hex bytes and reserved-token names,
// space-separated.
inline std::string decode(const std::vector<uint16_t>& ids) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += token_name(ids[i]);
    }
    return out;
}

// Strict inverse back to raw bytes; reserved tokens are an error here.
inline std::vector<uint8_t> decode_bytes(const TokenSeq& s) {
    std::vector<uint8_t> out;
    out.reserve(s.n_real);
    for (uint32_t i = 0; i < s.n_real; ++i) {
        if (s.ids[i] >= tok::BYTES)
            throw UnknownId("non-byte token id " + std::to_string(s.ids[i]) +
                            " at position " + std::to_string(i));
        out.push_back(static_cast<uint8_t>(s.ids[i]));
    }
    return out;
}

} // namespace xda
