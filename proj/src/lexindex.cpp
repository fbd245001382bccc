#include "lexipse/lexindex.hpp"

#include "lexipse/binary.hpp"
#include "lexipse/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace lexipse {

namespace {

constexpr std::string_view kIndexMagic = "LXIX";
constexpr std::uint16_t kIndexVersion = 1;

// floor(100 * p) evaluated on the decimal the caller meant: products that land
// within rounding noise of an integer snap to it, so 0.29 quantizes to 29.
std::uint64_t floor_hundredths(double p) {
    const double scaled = 100.0 * p;
    const double nearest = std::nearbyint(scaled);
    if (std::abs(scaled - nearest) <= 1e-9 * std::max(1.0, std::abs(scaled))) {
        return static_cast<std::uint64_t>(nearest);
    }
    return static_cast<std::uint64_t>(std::floor(scaled));
}

struct Candidate {
    std::uint64_t score;
    std::uint32_t doc;
};

bool ranks_before(const Candidate& a, const Candidate& b) {
    return a.score != b.score ? a.score > b.score : a.doc < b.doc;
}

void select_top_k(std::vector<Candidate>& cands, std::size_t k) {
    if (cands.size() > k) {
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end(), ranks_before);
        cands.resize(k);
    } else {
        std::sort(cands.begin(), cands.end(), ranks_before);
    }
}

}  // namespace

void QuantizedLexiconVector::validate() const {
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].weight == 0) {
            throw InvalidInput("sample '" + id + "' stores a zero weight for term " + std::to_string(terms[i].term));
        }
        if (i > 0 && terms[i - 1].term >= terms[i].term) {
            throw InvalidInput("sample '" + id + "' has term ids out of order");
        }
    }
}

QuantizedLexiconVector quantize(const SparseLexiconVector& vec, std::string id) {
    if (vec.vocab_size > kMaxIndexVocab) {
        throw UnsupportedVocab("vocabulary of " + std::to_string(vec.vocab_size) +
                               " terms does not fit 2-byte term ids");
    }
    QuantizedLexiconVector out;
    out.id = std::move(id);
    out.terms.reserve(vec.entries.size());
    for (const auto& e : vec.entries) {
        const auto w = std::min<std::uint64_t>(255, floor_hundredths(e.weight));
        if (w > 0) out.terms.push_back({static_cast<std::uint16_t>(e.term), static_cast<std::uint8_t>(w)});
    }
    return out;
}

std::uint64_t match_score(const QuantizedLexiconVector& a, const QuantizedLexiconVector& b) {
    std::uint64_t score = 0;
    auto i = a.terms.begin();
    auto j = b.terms.begin();
    while (i != a.terms.end() && j != b.terms.end()) {
        if (i->term < j->term) {
            ++i;
        } else if (j->term < i->term) {
            ++j;
        } else {
            score += std::uint64_t{i->weight} * j->weight;
            ++i;
            ++j;
        }
    }
    return score;
}

InvertedIndex::InvertedIndex(std::size_t vocab_size) : postings_(vocab_size) {
    if (vocab_size > kMaxIndexVocab) {
        throw UnsupportedVocab("index vocabulary " + std::to_string(vocab_size) + " exceeds 65536");
    }
}

std::vector<QuantizedLexiconVector> InvertedIndex::forward() const {
    std::vector<QuantizedLexiconVector> docs(doc_ids_.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        docs[i].id = doc_ids_[i];
        docs[i].terms.reserve(doc_lengths_[i]);
    }
    for (std::size_t t = 0; t < postings_.size(); ++t) {
        for (const auto& p : postings_[t]) docs[p.doc].terms.push_back({static_cast<std::uint16_t>(t), p.weight});
    }
    return docs;
}

IndexBuilder::IndexBuilder(std::size_t vocab_size) : index_(vocab_size) {}

void IndexBuilder::add(const QuantizedLexiconVector& doc) {
    doc.validate();
    if (!doc.terms.empty() && doc.terms.back().term >= index_.vocab_size()) {
        throw ShapeError("sample '" + doc.id + "' uses term " + std::to_string(doc.terms.back().term) +
                         " outside the index vocabulary");
    }
    if (!seen_ids_.insert(doc.id).second) throw DuplicateId("duplicate sample id '" + doc.id + "'");
    const auto ordinal = static_cast<std::uint32_t>(index_.doc_ids_.size());
    index_.doc_ids_.push_back(doc.id);
    index_.doc_lengths_.push_back(static_cast<std::uint32_t>(doc.terms.size()));
    for (const auto& t : doc.terms) index_.postings_[t.term].push_back({ordinal, t.weight});
    index_.total_postings_ += doc.terms.size();
}

InvertedIndex IndexBuilder::finish() && { return std::move(index_); }

InvertedIndex build_index(std::span<const QuantizedLexiconVector> corpus, std::size_t vocab_size) {
    IndexBuilder builder(vocab_size);
    for (const auto& doc : corpus) builder.add(doc);
    return std::move(builder).finish();
}

Searcher::Searcher(const InvertedIndex& index) : index_(&index), accum_(index.doc_count(), 0) {}

RetrievalResult Searcher::search(const QuantizedLexiconVector& query, std::size_t k, SearchStats* stats) {
    if (k == 0) throw InvalidArgument("search needs k >= 1");
    query.validate();
    touched_.clear();
    for (const auto& qt : query.terms) {
        if (qt.term >= index_->vocab_size()) continue;
        const auto& list = index_->postings(qt.term);
        if (stats) {
            stats->lists_read.push_back(qt.term);
            stats->postings_scanned += list.size();
        }
        const std::uint64_t qw = qt.weight;
        for (const auto& p : list) {
            auto& acc = accum_[p.doc];
            if (acc == 0) touched_.push_back(p.doc);
            acc += qw * p.weight;
        }
    }
    std::vector<Candidate> cands;
    cands.reserve(touched_.size());
    for (const auto doc : touched_) {
        cands.push_back({accum_[doc], doc});
        accum_[doc] = 0;
    }
    select_top_k(cands, k);
    RetrievalResult out;
    out.hits.reserve(cands.size());
    for (const auto& c : cands) out.hits.push_back({index_->doc_id(c.doc), c.score});
    return out;
}

RetrievalResult search(const InvertedIndex& index, const QuantizedLexiconVector& query, std::size_t k,
                       SearchStats* stats) {
    Searcher s(index);
    return s.search(query, k, stats);
}

RetrievalResult brute_force_search(std::span<const QuantizedLexiconVector> corpus,
                                   const QuantizedLexiconVector& query, std::size_t k) {
    if (k == 0) throw InvalidArgument("search needs k >= 1");
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto s = match_score(query, corpus[i]);
        if (s > 0) cands.push_back({s, static_cast<std::uint32_t>(i)});
    }
    select_top_k(cands, k);
    RetrievalResult out;
    for (const auto& c : cands) out.hits.push_back({corpus[c.doc].id, c.score});
    return out;
}

IndexStats index_stats(const InvertedIndex& index) {
    IndexStats s;
    s.doc_count = index.doc_count();
    s.total_postings = index.total_postings();
    s.payload_bytes = 3 * s.total_postings;
    for (const auto len : index.doc_lengths()) s.max_doc_bytes = std::max<std::uint64_t>(s.max_doc_bytes, 3ull * len);
    s.avg_doc_bytes = s.doc_count ? static_cast<double>(s.payload_bytes) / static_cast<double>(s.doc_count) : 0.0;
    return s;
}

std::vector<std::uint8_t> serialize_index(const InvertedIndex& index) {
    binary::Writer w;
    w.put_bytes(kIndexMagic);
    w.put<std::uint16_t>(kIndexVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(index.vocab_size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(index.doc_count()));
    w.put<std::uint64_t>(index.total_postings());
    for (const auto& id : index.doc_ids()) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(id.size()));
        w.put_bytes(id);
    }
    w.bytes().reserve(w.bytes().size() + index.total_postings() * 5);
    for (std::size_t t = 0; t < index.vocab_size(); ++t) {
        const auto& list = index.postings(t);
        if (list.empty()) continue;
        w.put<std::uint16_t>(static_cast<std::uint16_t>(t));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
        for (const auto& p : list) {
            w.put<std::uint32_t>(p.doc);
            w.put<std::uint8_t>(p.weight);
        }
    }
    return w.take();
}

InvertedIndex deserialize_index(std::span<const std::uint8_t> bytes) {
    binary::Reader r(bytes);
    if (r.get_string(4, "index header") != kIndexMagic) throw FormatError("bad LXIX magic", 0);
    const auto version = r.get<std::uint16_t>("index header");
    if (version != kIndexVersion) throw FormatError("unsupported LXIX version " + std::to_string(version), 4);
    const auto vocab = r.get<std::uint32_t>("index header");
    if (vocab > kMaxIndexVocab) throw FormatError("index vocabulary exceeds 65536", 6);
    const auto doc_count = r.get<std::uint32_t>("index header");
    const auto total = r.get<std::uint64_t>("index header");

    InvertedIndex index(vocab);
    std::unordered_set<std::string> seen;
    index.doc_ids_.reserve(doc_count);
    for (std::uint32_t i = 0; i < doc_count; ++i) {
        const auto at = r.offset();
        const auto len = r.get<std::uint32_t>("doc table");
        auto id = r.get_string(len, "doc table");
        if (!seen.insert(id).second) throw FormatError("duplicate doc id '" + id + "'", at);
        index.doc_ids_.push_back(std::move(id));
    }
    index.doc_lengths_.assign(doc_count, 0);

    std::uint64_t read = 0;
    long prev_term = -1;
    while (read < total) {
        const auto at = r.offset();
        const auto term = r.get<std::uint16_t>("posting block");
        const auto count = r.get<std::uint32_t>("posting block");
        if (static_cast<long>(term) <= prev_term || term >= vocab) {
            throw FormatError("posting block term " + std::to_string(term) + " out of order or range", at);
        }
        if (count == 0 || count > total - read) throw FormatError("bad posting count", at + 2);
        prev_term = term;
        r.require(static_cast<std::size_t>(count) * 5, "posting list");
        auto& list = index.postings_[term];
        list.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            const auto pos = r.offset();
            const auto doc = r.get<std::uint32_t>("posting");
            const auto weight = r.get<std::uint8_t>("posting");
            if (doc >= doc_count || (!list.empty() && list.back().doc >= doc) || weight == 0) {
                throw FormatError("invalid posting in term " + std::to_string(term), pos);
            }
            list.push_back({doc, weight});
            ++index.doc_lengths_[doc];
        }
        read += count;
    }
    if (!r.at_end()) throw FormatError("trailing bytes after posting lists", r.offset());
    index.total_postings_ = total;
    return index;
}

void save_index(const std::string& path, const InvertedIndex& index) {
    binary::write_file(path, serialize_index(index));
}

InvertedIndex load_index(const std::string& path) { return deserialize_index(binary::read_file(path)); }

void write_quantized_jsonl(std::ostream& out, std::span<const QuantizedLexiconVector> rows) {
    for (const auto& row : rows) {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& t : row.terms) terms.push_back({t.term, t.weight});
        out << nlohmann::json{{"id", row.id}, {"terms", std::move(terms)}}.dump() << '\n';
    }
}

std::vector<QuantizedLexiconVector> read_quantized_jsonl(std::istream& in) {
    std::vector<QuantizedLexiconVector> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            QuantizedLexiconVector row;
            row.id = obj.at("id").get<std::string>();
            for (const auto& t : obj.at("terms")) {
                const auto term = t.at(0).get<std::uint64_t>();
                const auto weight = t.at(1).get<std::uint64_t>();
                if (term >= kMaxIndexVocab || weight == 0 || weight > 255) {
                    throw FormatError("quantized JSONL line " + std::to_string(lineno) + ": term or weight out of range");
                }
                row.terms.push_back({static_cast<std::uint16_t>(term), static_cast<std::uint8_t>(weight)});
            }
            row.validate();
            out.push_back(std::move(row));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("quantized JSONL line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace lexipse
