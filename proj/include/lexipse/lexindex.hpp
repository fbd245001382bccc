#pragma once

#include "lexipse/sparse_repr.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace lexipse {

struct QuantizedTerm {
    std::uint16_t term = 0;
    std::uint8_t weight = 0;
    friend bool operator==(const QuantizedTerm&, const QuantizedTerm&) = default;
};

/// Integer lexicon weights ("virtual frequencies") of one sample.
struct QuantizedLexiconVector {
    std::string id;
    std::vector<QuantizedTerm> terms;

    /// Throws InvalidInput unless term ids strictly increase and weights are >= 1.
    void validate() const;
    friend bool operator==(const QuantizedLexiconVector&, const QuantizedLexiconVector&) = default;
};

/// weight = min(255, floor(100 * p)); zero weights are dropped.
QuantizedLexiconVector quantize(const SparseLexiconVector& vec, std::string id = {});

/// Exact lexicon-matching score: sum over shared terms of the weight products.
std::uint64_t match_score(const QuantizedLexiconVector& a, const QuantizedLexiconVector& b);

struct Posting {
    std::uint32_t doc = 0;
    std::uint8_t weight = 0;
    friend bool operator==(const Posting&, const Posting&) = default;
};

struct ScoredDoc {
    std::string id;
    std::uint64_t score = 0;
    friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// Ranked hits, scores non-increasing, ties by ascending doc ordinal.
struct RetrievalResult {
    std::vector<ScoredDoc> hits;
    friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

/// Instrumentation filled in by a search call.
struct SearchStats {
    std::vector<std::uint16_t> lists_read;
    std::uint64_t postings_scanned = 0;
};

struct IndexStats {
    std::uint64_t doc_count = 0;
    std::uint64_t total_postings = 0;
    /// Three bytes per posting: a 2-byte term id and a 1-byte weight.
    std::uint64_t payload_bytes = 0;
    double avg_doc_bytes = 0.0;
    std::uint64_t max_doc_bytes = 0;
};

/// Immutable term -> postings index. Documents are numbered in arrival order.
class InvertedIndex {
  public:
    InvertedIndex() = default;
    explicit InvertedIndex(std::size_t vocab_size);

    std::size_t vocab_size() const noexcept { return postings_.size(); }
    std::size_t doc_count() const noexcept { return doc_ids_.size(); }
    std::uint64_t total_postings() const noexcept { return total_postings_; }
    const std::vector<Posting>& postings(std::size_t term) const { return postings_.at(term); }
    const std::string& doc_id(std::uint32_t ordinal) const { return doc_ids_.at(ordinal); }
    const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
    /// Number of terms stored for each document.
    const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_lengths_; }

    /// Rebuilds the forward vectors, in ordinal order.
    std::vector<QuantizedLexiconVector> forward() const;

    friend bool operator==(const InvertedIndex&, const InvertedIndex&) = default;

  private:
    friend class IndexBuilder;
    friend InvertedIndex deserialize_index(std::span<const std::uint8_t> bytes);

    std::vector<std::vector<Posting>> postings_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::uint64_t total_postings_ = 0;
};

/// Incremental construction; ids must be unique.
class IndexBuilder {
  public:
    explicit IndexBuilder(std::size_t vocab_size = kMaxIndexVocab);
    void add(const QuantizedLexiconVector& doc);
    InvertedIndex finish() &&;

  private:
    InvertedIndex index_;
    std::unordered_set<std::string> seen_ids_;
};

InvertedIndex build_index(std::span<const QuantizedLexiconVector> corpus, std::size_t vocab_size = kMaxIndexVocab);

/// Term-at-a-time searcher with reusable scratch space. One per thread; the
/// index itself is shared read-only.
class Searcher {
  public:
    explicit Searcher(const InvertedIndex& index);
    RetrievalResult search(const QuantizedLexiconVector& query, std::size_t k, SearchStats* stats = nullptr);

  private:
    const InvertedIndex* index_;
    std::vector<std::uint64_t> accum_;
    std::vector<std::uint32_t> touched_;
};

RetrievalResult search(const InvertedIndex& index, const QuantizedLexiconVector& query, std::size_t k,
                       SearchStats* stats = nullptr);

/// Full-scan reference ranking over forward vectors.
RetrievalResult brute_force_search(std::span<const QuantizedLexiconVector> corpus,
                                   const QuantizedLexiconVector& query, std::size_t k);

IndexStats index_stats(const InvertedIndex& index);

/// LXIX binary format, little-endian throughout.
std::vector<std::uint8_t> serialize_index(const InvertedIndex& index);
InvertedIndex deserialize_index(std::span<const std::uint8_t> bytes);
void save_index(const std::string& path, const InvertedIndex& index);
InvertedIndex load_index(const std::string& path);

/// Quantized-vector JSONL: {"id": ..., "terms": [[term, weight], ...]}.
void write_quantized_jsonl(std::ostream& out, std::span<const QuantizedLexiconVector> rows);
std::vector<QuantizedLexiconVector> read_quantized_jsonl(std::istream& in);

}  // namespace lexipse
