// Writes a synthetic corpus and its mock fixture:
//   <out>/docs/<id>.txt
//   <out>/mock.jsonl
#include "synthetic.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"synthetic corpus generator"};
    std::filesystem::path out;
    std::size_t docs = 30;
    std::uint64_t seed = 30;
    app.add_option("out", out, "output directory")->required();
    app.add_option("-n,--docs", docs, "number of documents")->check(CLI::PositiveNumber);
    app.add_option("-s,--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    const auto corpus = tgrag::testing::make_synthetic_corpus(docs, seed);
    std::filesystem::create_directories(out / "docs");
    for (const auto& d : corpus.docs) std::ofstream(out / "docs" / (d.id + ".txt")) << d.text;
    std::ofstream(out / "mock.jsonl") << tgrag::testing::mock_fixture_jsonl(corpus);
    std::cout << "wrote " << corpus.docs.size() << " documents to " << out.string() << "\n";
    return 0;
}
