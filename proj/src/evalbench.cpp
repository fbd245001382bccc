#include "lexipse/evalbench.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace lexipse {

Qrels read_qrels(std::istream& in) {
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
            throw FormatError("qrels line " + std::to_string(lineno) + " is not query_id<TAB>relevant_id");
        }
        qrels[line.substr(0, tab)].insert(line.substr(tab + 1));
    }
    return qrels;
}

void write_results_jsonl(std::ostream& out, std::span<const RankedQuery> results) {
    for (const auto& rq : results) {
        nlohmann::ordered_json j;
        j["query"] = rq.query_id;
        j["hits"] = nlohmann::json::array();
        for (const auto& h : rq.result.hits) j["hits"].push_back({h.id, h.score});
        out << j.dump() << '\n';
    }
}

std::vector<RankedQuery> read_results_jsonl(std::istream& in) {
    std::vector<RankedQuery> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            RankedQuery rq{j.at("query").get<std::string>(), {}};
            for (const auto& h : j.at("hits")) {
                rq.result.hits.push_back({h.at(0).get<std::string>(), h.at(1).get<std::uint64_t>()});
            }
            out.push_back(std::move(rq));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("results line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::map<std::size_t, double> recall_at_k(std::span<const RankedQuery> results, const Qrels& qrels,
                                          std::span<const std::size_t> ks) {
    std::map<std::size_t, double> recall;
    for (const auto k : ks) {
        if (k == 0) throw InvalidArgument("recall cutoff must be >= 1");
        recall[k] = 0.0;
    }
    if (results.empty()) return recall;
    for (const auto& rq : results) {
        const auto it = qrels.find(rq.query_id);
        if (it == qrels.end() || it->second.empty()) {
            throw InvalidInput("query '" + rq.query_id + "' has no relevance judgements");
        }
        // Rank of the first relevant hit; none found never counts.
        std::size_t first = std::numeric_limits<std::size_t>::max();
        for (std::size_t r = 0; r < rq.result.hits.size(); ++r) {
            if (it->second.count(rq.result.hits[r].id)) {
                first = r;
                break;
            }
        }
        for (auto& [k, value] : recall) {
            if (first < k) value += 1.0;
        }
    }
    for (auto& [k, value] : recall) value /= static_cast<double>(results.size());
    return recall;
}

namespace detail {

LatencySummary summarize_latencies(std::vector<double>& millis) {
    LatencySummary s;
    if (millis.empty()) return s;
    std::sort(millis.begin(), millis.end());
    auto at = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(millis.size()))) - 1;
        return millis[std::min(idx, millis.size() - 1)];
    };
    s.p50_ms = at(0.50);
    s.p99_ms = at(0.99);
    double total = 0.0;
    for (const double m : millis) total += m;
    s.mean_ms = total / static_cast<double>(millis.size());
    return s;
}

}  // namespace detail

BenchReport qps_bench(const InvertedIndex& index, std::span<const QuantizedLexiconVector> queries,
                      const QpsOptions& opts) {
    if (queries.empty()) throw InvalidArgument("benchmark needs at least one query");
    auto report = qps_bench_fn(queries.size(), opts, [&] {
        return [searcher = Searcher(index), &queries, k = opts.k](std::size_t q) mutable {
            const auto r = searcher.search(queries[q], k);
            asm volatile("" : : "g"(r.hits.data()) : "memory");
        };
    });
    report.index = index_stats(index);
    return report;
}

DenseScanIndex::DenseScanIndex(std::span<const QuantizedLexiconVector> corpus, std::size_t vocab_size)
    : vocab_(vocab_size), weights_(corpus.size() * vocab_size, 0) {
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        ids_.push_back(corpus[d].id);
        for (const auto& t : corpus[d].terms) {
            if (t.term >= vocab_) throw ShapeError("dense baseline: term outside vocabulary");
            weights_[d * vocab_ + t.term] = t.weight;
        }
    }
}

RetrievalResult DenseScanIndex::search(const QuantizedLexiconVector& query, std::size_t k) const {
    if (k == 0) throw InvalidArgument("search needs k >= 1");
    std::vector<std::uint32_t> q(vocab_, 0);
    for (const auto& t : query.terms) {
        if (t.term < vocab_) q[t.term] = t.weight;
    }
    std::vector<std::pair<std::uint64_t, std::uint32_t>> cands;
    for (std::size_t d = 0; d < ids_.size(); ++d) {
        const std::uint8_t* row = weights_.data() + d * vocab_;
        std::uint64_t s = 0;
        for (std::size_t j = 0; j < vocab_; ++j) s += std::uint64_t{q[j]} * row[j];
        if (s > 0) cands.emplace_back(s, static_cast<std::uint32_t>(d));
    }
    auto before = [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; };
    const auto keep = std::min(k, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), before);
    cands.resize(keep);
    RetrievalResult out;
    for (const auto& [s, d] : cands) out.hits.push_back({ids_[d], s});
    return out;
}

nlohmann::json hardware_metadata() {
    nlohmann::json hw;
    hw["hardware_concurrency"] = std::thread::hardware_concurrency();
    std::ifstream cpuinfo("/proc/cpuinfo");
    std::string line;
    while (std::getline(cpuinfo, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) hw["cpu_model"] = line.substr(line.find_first_not_of(' ', colon + 1));
            break;
        }
    }
    if (!hw.contains("cpu_model")) hw["cpu_model"] = "unknown";
    return hw;
}

namespace {

double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::string recall_key(std::size_t k) { return "r" + std::to_string(k); }

}  // namespace

nlohmann::json to_json(const IndexStats& s) {
    return {{"doc_count", s.doc_count},
            {"total_postings", s.total_postings},
            {"payload_bytes", s.payload_bytes},
            {"avg_doc_bytes", round6(s.avg_doc_bytes)},
            {"max_doc_bytes", s.max_doc_bytes}};
}

nlohmann::json to_json(const BenchReport& r) {
    nlohmann::json recall = nlohmann::json::object();
    for (const auto& [k, v] : r.recall) recall[recall_key(k)] = round6(v);
    return {{"recall", recall},
            {"qps", round6(r.qps)},
            {"wall_seconds", round6(r.wall_seconds)},
            {"queries_completed", r.queries_completed},
            {"threads", r.threads},
            {"latency_ms", {{"p50", round6(r.latency.p50_ms)}, {"p99", round6(r.latency.p99_ms)}, {"mean", round6(r.latency.mean_ms)}}},
            {"index", to_json(r.index)},
            {"config", r.config},
            {"hardware", r.hardware}};
}

BenchReport report_from_json(const nlohmann::json& j) {
    BenchReport r;
    for (const auto& [key, v] : j.at("recall").items()) {
        if (key.size() < 2 || key[0] != 'r') throw FormatError("bad recall key '" + key + "'");
        r.recall[std::stoul(key.substr(1))] = v.get<double>();
    }
    r.qps = j.at("qps").get<double>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.queries_completed = j.at("queries_completed").get<std::uint64_t>();
    r.threads = j.at("threads").get<std::size_t>();
    const auto& lat = j.at("latency_ms");
    r.latency = {lat.at("p50").get<double>(), lat.at("p99").get<double>(), lat.at("mean").get<double>()};
    const auto& idx = j.at("index");
    r.index.doc_count = idx.at("doc_count").get<std::uint64_t>();
    r.index.total_postings = idx.at("total_postings").get<std::uint64_t>();
    r.index.payload_bytes = idx.at("payload_bytes").get<std::uint64_t>();
    r.index.avg_doc_bytes = idx.at("avg_doc_bytes").get<double>();
    r.index.max_doc_bytes = idx.at("max_doc_bytes").get<std::uint64_t>();
    r.config = j.at("config");
    r.hardware = j.at("hardware");
    return r;
}

std::string emit_report(const BenchReport& report) { return to_json(report).dump(2) + "\n"; }

BenchReport parse_report(const std::string& text) {
    try {
        return report_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
}

}  // namespace lexipse
