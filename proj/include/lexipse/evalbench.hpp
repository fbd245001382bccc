#pragma once

#include "lexipse/lexindex.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <istream>
#include <ostream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lexipse {

/// query id -> relevant sample ids.
using Qrels = std::map<std::string, std::set<std::string>>;

/// Reads `query_id<TAB>relevant_id` lines.
Qrels read_qrels(std::istream& in);

struct RankedQuery {
    std::string query_id;
    RetrievalResult result;
};

/// Search output JSONL: {"query": id, "hits": [[doc_id, score], ...]}.
void write_results_jsonl(std::ostream& out, std::span<const RankedQuery> results);
std::vector<RankedQuery> read_results_jsonl(std::istream& in);

/// Fraction of queries with at least one relevant id in their top k, per k.
std::map<std::size_t, double> recall_at_k(std::span<const RankedQuery> results, const Qrels& qrels,
                                          std::span<const std::size_t> ks);

struct LatencySummary {
    double p50_ms = 0.0;
    double p99_ms = 0.0;
    double mean_ms = 0.0;
};

struct BenchReport {
    std::map<std::size_t, double> recall;
    double qps = 0.0;
    double wall_seconds = 0.0;
    std::uint64_t queries_completed = 0;
    std::size_t threads = 1;
    LatencySummary latency;
    IndexStats index;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json hardware = nlohmann::json::object();
};

struct QpsOptions {
    std::size_t k = 10;
    std::size_t threads = 1;
    std::chrono::duration<double> warmup{0.5};
    std::chrono::duration<double> duration{2.0};
};

/// Multi-threaded closed-loop benchmark. Each worker owns a Searcher over the
/// shared index; workers take query indices round-robin from a shared cursor.
/// Counts only queries started after warmup.
BenchReport qps_bench(const InvertedIndex& index, std::span<const QuantizedLexiconVector> queries,
                      const QpsOptions& opts);

/// Same measurement loop over an arbitrary per-query callable; used for the
/// dense full-scan baseline.
template <typename SearchFn>
BenchReport qps_bench_fn(std::size_t query_count, const QpsOptions& opts, SearchFn&& fn);

/// Dense full-scan baseline: every document as a |V|-length byte vector.
class DenseScanIndex {
  public:
    DenseScanIndex(std::span<const QuantizedLexiconVector> corpus, std::size_t vocab_size);
    RetrievalResult search(const QuantizedLexiconVector& query, std::size_t k) const;
    std::size_t doc_count() const noexcept { return ids_.size(); }

  private:
    std::size_t vocab_;
    std::vector<std::uint8_t> weights_;
    std::vector<std::string> ids_;
};

/// Host description recorded with efficiency numbers.
nlohmann::json hardware_metadata();

nlohmann::json to_json(const IndexStats& stats);
nlohmann::json to_json(const BenchReport& report);
BenchReport report_from_json(const nlohmann::json& j);

/// Canonical JSON: sorted keys, floats rounded to 6 decimals, trailing newline.
std::string emit_report(const BenchReport& report);
BenchReport parse_report(const std::string& text);

}  // namespace lexipse

#include "lexipse/evalbench_impl.hpp"
