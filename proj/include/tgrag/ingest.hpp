#pragma once

#include "tgrag/embedding.hpp"
#include "tgrag/graph.hpp"
#include "tgrag/llm.hpp"
#include "tgrag/prompts.hpp"
#include "tgrag/reports.hpp"
#include "tgrag/tokenizer.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace tgrag {

struct Document {
    std::string id;
    std::string text;
    std::map<std::string, std::string> metadata;
};

struct Chunk {
    ChunkId id;
    std::string doc_id;
    // [token_begin, token_end) in tokenizer units of the source document.
    std::size_t token_begin = 0;
    std::size_t token_end = 0;
    std::string text;
    // Edges first created from this chunk.
    std::set<EdgeId> extracted_edges;

    std::size_t token_count() const { return token_end - token_begin; }
    bool operator==(const Chunk&) const = default;
};

using ChunkStore = std::map<ChunkId, Chunk>;

struct DocumentRecord {
    std::string id;
    std::map<std::string, std::string> metadata;
    std::vector<ChunkId> chunks;
    bool operator==(const DocumentRecord&) const = default;
};

struct IndexConfig {
    std::size_t chunk_size = 1200;
    std::size_t overlap = 100;
    std::size_t extraction_max_output_tokens = 4096;
    // Chunks extracted concurrently; insertion stays serialized.
    std::size_t extract_workers = 1;
    ReportConfig reports{};

    bool operator==(const IndexConfig& o) const {
        return chunk_size == o.chunk_size && overlap == o.overlap &&
               extraction_max_output_tokens == o.extraction_max_output_tokens &&
               reports.input_limit_tokens == o.reports.input_limit_tokens &&
               reports.max_output_tokens == o.reports.max_output_tokens;
    }
};

// Everything a snapshot persists.
struct IndexState {
    IndexConfig config;
    BiLevelGraph graph;
    ChunkStore chunks;
    std::map<std::string, DocumentRecord> documents;
    VectorIndex edge_vectors;
    VectorIndex entity_vectors;
    ReportStore reports;

    bool operator==(const IndexState&) const = default;
};

GraphStats index_stats(const IndexState& state);

struct UpdateDelta {
    std::set<EdgeId> new_edges;
    std::set<Timestamp> new_time_nodes;
    // Nodes that gained edges, plus every ancestor of those nodes.
    std::set<Timestamp> dirty_time_nodes;
    std::size_t new_chunks = 0;
    std::size_t malformed_lines = 0;

    bool empty() const { return new_edges.empty() && dirty_time_nodes.empty(); }
};

// Splits into windows of chunk_size tokens advancing by chunk_size - overlap.
// Throws Error(kEmptyDocument) when the text has no tokens and
// Error(kInvalidArgument) unless chunk_size > overlap.
std::vector<Chunk> chunk_document(const Document& doc, std::size_t chunk_size, std::size_t overlap,
                                  const Tokenizer& tokenizer = default_tokenizer());

struct ExtractionResult {
    std::vector<Quadruple> quadruples;
    std::size_t malformed_lines = 0;
};

// Parses extractor output: one ("quadruple"<|>head<|>tail<|>relation<|>timestamp)
// record per line (or per "##"), optionally terminated by <|COMPLETE|>. Bad
// records are counted and skipped.
ExtractionResult parse_extraction(std::string_view response);

ExtractionResult extract_quadruples(const Chunk& chunk, LlmProvider& provider,
                                    const PromptLibrary& prompts = PromptLibrary::defaults(),
                                    std::size_t max_output_tokens = 4096);

struct IngestContext {
    LlmProvider& llm;
    EmbeddingProvider& embedder;
    const PromptLibrary& prompts = PromptLibrary::defaults();
    const Tokenizer& tokenizer = default_tokenizer();
};

// Chunks, extracts, inserts and embeds the corpus. Reports are not
// generated; see index_corpus. Throws Error(kEmptyCorpus) on empty input.
IndexState build_index(const std::vector<Document>& corpus, const IndexConfig& cfg,
                       const IngestContext& ctx);

// Merges new documents into state. On failure state is left untouched.
UpdateDelta incremental_update(IndexState& state, const std::vector<Document>& new_docs,
                               const IngestContext& ctx);

// build_index followed by report generation for every time node.
IndexState index_corpus(const std::vector<Document>& corpus, const IndexConfig& cfg,
                        const IngestContext& ctx);

struct UpdateOutcome {
    UpdateDelta delta;
    std::vector<Timestamp> regenerated;
};

// incremental_update followed by refresh_dirty. Strong guarantee on failure.
UpdateOutcome update_corpus(IndexState& state, const std::vector<Document>& new_docs,
                            const IngestContext& ctx);

// Reads *.txt under dir (sorted by file name; id = file stem) and an optional
// manifest.json mapping file name -> {metadata key: value}.
std::vector<Document> load_corpus(const std::filesystem::path& dir);

// Text the embedding of an edge / entity is computed from.
std::string edge_embedding_text(const TemporalEdge& e);
std::string entity_embedding_text(const Entity& e);

} // namespace tgrag
