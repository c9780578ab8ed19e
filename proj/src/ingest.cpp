#include "tgrag/ingest.hpp"

#include "tgrag/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <future>
#include <sstream>

namespace tgrag {

namespace {

constexpr std::size_t kEmbedBatch = 64;

std::string_view strip(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '\n')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) {
        s.remove_suffix(1);
    }
    return s;
}

std::string_view unquote(std::string_view s) {
    s = strip(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return strip(s);
}

std::vector<std::string_view> split(std::string_view s, std::string_view delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + delim.size();
    }
}

void embed_in_batches(const std::vector<std::pair<std::uint64_t, std::string>>& items,
                      EmbeddingProvider& embedder, VectorIndex& index) {
    for (std::size_t start = 0; start < items.size(); start += kEmbedBatch) {
        const std::size_t end = std::min(items.size(), start + kEmbedBatch);
        std::vector<std::string> texts;
        for (std::size_t i = start; i < end; ++i) texts.push_back(items[i].second);
        auto vecs = embed(texts, embedder);
        for (std::size_t i = start; i < end; ++i) index.upsert(items[i].first, std::move(vecs[i - start]));
    }
}

// Ingests docs into st in place and reports what changed.
UpdateDelta ingest_documents(IndexState& st, const std::vector<Document>& docs,
                             const IngestContext& ctx) {
    UpdateDelta delta;

    std::set<std::string> seen;
    for (const auto& d : docs) {
        if (st.documents.count(d.id) || !seen.insert(d.id).second) {
            throw Error(ErrorCode::kDuplicateDocument, "document id '" + d.id + "' already indexed");
        }
    }

    std::vector<Chunk> chunks;
    std::vector<DocumentRecord> records;
    for (const auto& d : docs) {
        auto doc_chunks = chunk_document(d, st.config.chunk_size, st.config.overlap, ctx.tokenizer);
        DocumentRecord rec{d.id, d.metadata, {}};
        for (auto& c : doc_chunks) {
            rec.chunks.push_back(c.id);
            chunks.push_back(std::move(c));
        }
        records.push_back(std::move(rec));
    }

    std::vector<ExtractionResult> extracted(chunks.size());
    const std::size_t workers = std::max<std::size_t>(1, st.config.extract_workers);
    for (std::size_t start = 0; start < chunks.size(); start += workers) {
        const std::size_t end = std::min(chunks.size(), start + workers);
        if (workers == 1) {
            extracted[start] = extract_quadruples(chunks[start], ctx.llm, ctx.prompts,
                                                  st.config.extraction_max_output_tokens);
            continue;
        }
        std::vector<std::future<ExtractionResult>> pending;
        for (std::size_t i = start; i < end; ++i) {
            pending.push_back(std::async(std::launch::async, [&, i] {
                return extract_quadruples(chunks[i], ctx.llm, ctx.prompts,
                                          st.config.extraction_max_output_tokens);
            }));
        }
        for (std::size_t i = start; i < end; ++i) extracted[i] = pending[i - start].get();
    }

    std::map<EntityId, std::string> descriptions_before;
    for (const auto& [id, e] : st.graph.entities()) descriptions_before.emplace(id, e.description);

    for (std::size_t i = 0; i < chunks.size(); ++i) {
        delta.malformed_lines += extracted[i].malformed_lines;
        for (const auto& q : extracted[i].quadruples) {
            const auto res = st.graph.insert_edge(q, chunks[i].id);
            if (!res.inserted) continue;
            chunks[i].extracted_edges.insert(res.edge);
            delta.new_edges.insert(res.edge);
            delta.new_time_nodes.insert(res.created_nodes.begin(), res.created_nodes.end());
            delta.dirty_time_nodes.insert(q.timestamp);
            for (const auto& a : ancestors(q.timestamp)) delta.dirty_time_nodes.insert(a);
        }
    }

    std::vector<std::pair<std::uint64_t, std::string>> edge_items;
    for (EdgeId id : delta.new_edges) edge_items.emplace_back(raw(id), edge_embedding_text(st.graph.edge(id)));
    std::vector<std::pair<std::uint64_t, std::string>> entity_items;
    for (const auto& [id, e] : st.graph.entities()) {
        const auto it = descriptions_before.find(id);
        if (it == descriptions_before.end() || it->second != e.description) {
            entity_items.emplace_back(raw(id), entity_embedding_text(e));
        }
    }
    embed_in_batches(edge_items, ctx.embedder, st.edge_vectors);
    embed_in_batches(entity_items, ctx.embedder, st.entity_vectors);

    delta.new_chunks = chunks.size();
    for (auto& c : chunks) {
        const ChunkId id = c.id;
        st.chunks.emplace(id, std::move(c));
    }
    for (auto& r : records) {
        const std::string id = r.id;
        st.documents.emplace(id, std::move(r));
    }
    return delta;
}

} // namespace

GraphStats index_stats(const IndexState& state) {
    GraphStats s = graph_stats(state.graph);
    s.chunks = state.chunks.size();
    return s;
}

std::vector<Chunk> chunk_document(const Document& doc, std::size_t chunk_size, std::size_t overlap,
                                  const Tokenizer& tokenizer) {
    if (chunk_size == 0 || overlap >= chunk_size) {
        throw Error(ErrorCode::kInvalidArgument, "chunk size must exceed overlap");
    }
    const auto tokens = tokenizer.tokenize(doc.text);
    if (tokens.empty()) throw Error(ErrorCode::kEmptyDocument, "document '" + doc.id + "' has no tokens");

    const std::size_t stride = chunk_size - overlap;
    std::vector<Chunk> out;
    for (std::size_t begin = 0;; begin += stride) {
        const std::size_t end = std::min(tokens.size(), begin + chunk_size);
        Chunk c;
        c.id = doc.id + "#" + std::to_string(out.size());
        c.doc_id = doc.id;
        c.token_begin = begin;
        c.token_end = end;
        c.text = doc.text.substr(tokens[begin].begin, tokens[end - 1].end - tokens[begin].begin);
        out.push_back(std::move(c));
        if (end == tokens.size()) break;
    }
    return out;
}

ExtractionResult parse_extraction(std::string_view response) {
    ExtractionResult result;
    std::vector<std::string_view> records;
    for (auto line : split(response, "\n")) {
        for (auto rec : split(line, kRecordDelimiter)) records.push_back(rec);
    }
    for (auto rec : records) {
        rec = strip(rec);
        if (const auto pos = rec.find(kCompletionDelimiter); pos != std::string_view::npos) {
            rec = strip(rec.substr(0, pos));
        }
        if (rec.empty()) continue;
        if (rec.front() != '(' || rec.back() != ')') {
            ++result.malformed_lines;
            continue;
        }
        const auto fields = split(rec.substr(1, rec.size() - 2), kTupleDelimiter);
        if (fields.size() != 5 || unquote(fields[0]) != "quadruple") {
            ++result.malformed_lines;
            continue;
        }
        Quadruple q;
        q.head_name = normalize_text(unquote(fields[1]));
        q.tail_name = normalize_text(unquote(fields[2]));
        q.relation = normalize_text(unquote(fields[3]));
        if (q.head_name.empty() || q.tail_name.empty() || q.relation.empty()) {
            ++result.malformed_lines;
            continue;
        }
        try {
            q.timestamp = parse_timestamp(unquote(fields[4]));
        } catch (const Error&) {
            ++result.malformed_lines;
            continue;
        }
        result.quadruples.push_back(std::move(q));
    }
    return result;
}

ExtractionResult extract_quadruples(const Chunk& chunk, LlmProvider& provider,
                                    const PromptLibrary& prompts, std::size_t max_output_tokens) {
    std::map<std::string, std::string> vars = {
        {"input_text", chunk.text},
        {"tuple_delimiter", std::string(kTupleDelimiter)},
        {"record_delimiter", std::string(kRecordDelimiter)},
        {"completion_delimiter", std::string(kCompletionDelimiter)},
    };
    ChatRequest req;
    req.template_id = std::string(templates::kExtractQuadruples);
    req.key = chunk.id;
    req.rendered_prompt = prompts.render(templates::kExtractQuadruples, vars);
    req.variables = std::move(vars);
    req.max_output_tokens = max_output_tokens;
    try {
        return parse_extraction(provider.complete(req).text);
    } catch (const ProviderError& e) {
        throw ProviderError(e.kind(), "extraction of chunk " + chunk.id + ": " + e.detail());
    }
}

IndexState build_index(const std::vector<Document>& corpus, const IndexConfig& cfg,
                       const IngestContext& ctx) {
    if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "corpus has no documents");
    IndexState st;
    st.config = cfg;
    st.edge_vectors = VectorIndex(ctx.embedder.dim());
    st.entity_vectors = VectorIndex(ctx.embedder.dim());
    ingest_documents(st, corpus, ctx);
    return st;
}

UpdateDelta incremental_update(IndexState& state, const std::vector<Document>& new_docs,
                               const IngestContext& ctx) {
    IndexState next = state;
    auto delta = ingest_documents(next, new_docs, ctx);
    state = std::move(next);
    return delta;
}

IndexState index_corpus(const std::vector<Document>& corpus, const IndexConfig& cfg,
                        const IngestContext& ctx) {
    auto st = build_index(corpus, cfg, ctx);
    generate_all(st.graph, st.reports,
                 ReportContext{ctx.llm, ctx.prompts, ctx.tokenizer, st.config.reports});
    return st;
}

UpdateOutcome update_corpus(IndexState& state, const std::vector<Document>& new_docs,
                            const IngestContext& ctx) {
    IndexState next = state;
    UpdateOutcome out;
    out.delta = incremental_update(next, new_docs, ctx);
    out.regenerated = refresh_dirty(out.delta.dirty_time_nodes, next.graph, next.reports,
                                    ReportContext{ctx.llm, ctx.prompts, ctx.tokenizer, next.config.reports});
    state = std::move(next);
    return out;
}

std::vector<Document> load_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "corpus directory " + dir.string() + " not found");

    nlohmann::json manifest = nlohmann::json::object();
    if (const auto mpath = dir / "manifest.json"; fs::exists(mpath)) {
        std::ifstream in(mpath);
        manifest = nlohmann::json::parse(in, nullptr, false);
        if (manifest.is_discarded() || !manifest.is_object()) {
            throw Error(ErrorCode::kJsonParse, mpath.string() + ": expected a JSON object");
        }
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<Document> docs;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw Error(ErrorCode::kIo, "cannot read " + f.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        Document d{f.stem().string(), ss.str(), {}};
        if (const auto it = manifest.find(f.filename().string()); it != manifest.end()) {
            for (const auto& [k, v] : it->items()) {
                d.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
            }
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

std::string edge_embedding_text(const TemporalEdge& e) { return e.relation; }

std::string entity_embedding_text(const Entity& e) {
    return e.description.empty() ? e.name : e.name + "\n" + e.description;
}

} // namespace tgrag
