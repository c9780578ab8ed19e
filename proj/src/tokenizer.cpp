#include "tgrag/tokenizer.hpp"

namespace tgrag {

namespace {
bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
} // namespace

std::vector<TokenSpan> WhitespaceTokenizer::tokenize(std::string_view text) const {
    std::vector<TokenSpan> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        if (i == text.size()) break;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        out.push_back({start, i});
    }
    return out;
}

std::size_t WhitespaceTokenizer::count(std::string_view text) const {
    std::size_t n = 0;
    bool in_token = false;
    for (char c : text) {
        if (is_space(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++n;
        }
    }
    return n;
}

const Tokenizer& default_tokenizer() {
    static const WhitespaceTokenizer instance;
    return instance;
}

} // namespace tgrag
