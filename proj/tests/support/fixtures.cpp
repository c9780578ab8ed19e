#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace tgrag::testing {

std::vector<Document> wd_corpus() {
    auto docs = load_corpus(fixture_dir() / "wd" / "base");
    for (auto& d : load_corpus(fixture_dir() / "wd" / "new")) docs.push_back(std::move(d));
    return docs;
}

std::unique_ptr<MockLlmProvider> wd_mock() {
    auto llm = std::make_unique<MockLlmProvider>();
    llm->load_fixture(fixture_dir() / "wd" / "mock.jsonl");
    return llm;
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << text;
}

} // namespace tgrag::testing
