#include "tgrag/prompts.hpp"

#include "tgrag/error.hpp"
#include "tgrag/llm.hpp"

#include <fstream>
#include <sstream>
#include <utility>

namespace tgrag {

// Generated from prompts/*.txt at configure time.
namespace generated {
extern const std::map<std::string, std::string>& prompt_defaults();
}

PromptLibrary::PromptLibrary() {
    for (const auto& [id, text] : generated::prompt_defaults()) templates_.emplace(id, text);
}

const PromptLibrary& PromptLibrary::defaults() {
    static const PromptLibrary lib;
    return lib;
}

void PromptLibrary::load_directory(const std::filesystem::path& dir) {
    for (auto& [id, text] : templates_) {
        const auto path = dir / (id + ".txt");
        if (!std::filesystem::exists(path)) continue;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorCode::kIo, "cannot read prompt " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
}

void PromptLibrary::set(std::string id, std::string text) { templates_[std::move(id)] = std::move(text); }

const std::string& PromptLibrary::get(std::string_view id) const {
    const auto it = templates_.find(id);
    if (it == templates_.end()) {
        throw Error(ErrorCode::kInvalidArgument, "unknown prompt template " + std::string(id));
    }
    return it->second;
}

std::string PromptLibrary::render(std::string_view id,
                                  const std::map<std::string, std::string>& vars) const {
    return substitute(get(id), vars);
}

} // namespace tgrag
