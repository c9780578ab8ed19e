#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace tgrag {

// Byte range [begin, end) of one token inside the tokenized text.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

// Token accounting contract shared by chunking, budgets and token meters.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;
    virtual std::size_t count(std::string_view text) const { return tokenize(text).size(); }
};

// Whitespace-delimited tokens. Counting is additive over text joined by
// whitespace, which budget packing relies on.
class WhitespaceTokenizer final : public Tokenizer {
public:
    std::vector<TokenSpan> tokenize(std::string_view text) const override;
    std::size_t count(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

} // namespace tgrag
