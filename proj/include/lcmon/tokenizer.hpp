#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lcmon {

using TokenId = std::int32_t;

// Byte-level tokenizer: ids 0..255 are raw bytes, specials live above.
// Ingested external traces carry their own ids and never pass through this.
struct TokenizerSpec {
    std::string kind = "byte";
    TokenId bos_id = 256;
    TokenId pad_id = 257;
    std::int32_t vocab_size = 258;
};

inline std::vector<TokenId> tokenize(std::string_view text, const TokenizerSpec& = {}) {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<TokenId>(c));
    return ids;
}

inline std::string detokenize(const std::vector<TokenId>& ids, const TokenizerSpec& spec = {}) {
    std::string out;
    out.reserve(ids.size());
    for (TokenId id : ids) {
        if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
        // bos/pad have no byte representation and are dropped
        (void)spec;
    }
    return out;
}

}  // namespace lcmon
