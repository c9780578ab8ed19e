#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace tgrag {

namespace templates {
inline constexpr std::string_view kExtractQuadruples = "extract_quadruples";
inline constexpr std::string_view kTimeScope = "time_scope";
inline constexpr std::string_view kTimeReport = "time_report";
inline constexpr std::string_view kLocalQuery = "local_query";
inline constexpr std::string_view kExtractPoints = "extract_points";
inline constexpr std::string_view kGlobalQuery = "global_query";
inline constexpr std::string_view kJudgeLocal = "judge_local";
inline constexpr std::string_view kJudgeRefusal = "judge_refusal";
inline constexpr std::string_view kJudgePairwise = "judge_pairwise";
} // namespace templates

inline constexpr std::string_view kTupleDelimiter = "<|>";
inline constexpr std::string_view kCompletionDelimiter = "<|COMPLETE|>";
inline constexpr std::string_view kRecordDelimiter = "##";
inline constexpr std::string_view kRefusalAnswer = "No explicit evidence for the question";

// Prompt templates by id. Defaults are compiled in from prompts/*.txt; a
// directory of same-named files overrides them at runtime.
class PromptLibrary {
public:
    PromptLibrary();

    static const PromptLibrary& defaults();

    // Replaces every template for which <dir>/<id>.txt exists.
    void load_directory(const std::filesystem::path& dir);
    void set(std::string id, std::string text);

    const std::string& get(std::string_view id) const;

    // Renders template id, substituting {name} for every entry of vars.
    std::string render(std::string_view id, const std::map<std::string, std::string>& vars) const;

    const std::map<std::string, std::string, std::less<>>& all() const { return templates_; }

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

} // namespace tgrag
