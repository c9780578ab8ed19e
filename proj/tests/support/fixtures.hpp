#pragma once

#include "tgrag/ingest.hpp"
#include "tgrag/llm.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace tgrag::testing {

inline std::filesystem::path fixture_dir() { return TGRAG_FIXTURE_DIR; }

inline const std::string kWdQuery2020Q3 =
    "What were Western Digital Corporation's operating cash flow, gross debt outstanding, and earnings per share in 2020 Q3?";
inline const std::string kWdQueryRevenue2023 =
    "What was Western Digital Corporation's revenue in each quarter from 2023 Q1 to Q3?";

// Base and new WD documents together.
std::vector<Document> wd_corpus();

// Mock provider loaded with the WD fixture.
std::unique_ptr<MockLlmProvider> wd_mock();

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "tgrag");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& text);

} // namespace tgrag::testing
