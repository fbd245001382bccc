#include "lexipse/io.hpp"

#include "lexipse/binary.hpp"
#include "lexipse/errors.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iterator>

namespace lexipse {

namespace binary {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace binary

namespace io {

namespace {
constexpr std::string_view kLogitMagic = "LLGT";
constexpr std::uint16_t kLogitVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_logits(const LogitMatrix& logits) {
    binary::Writer w;
    w.put_bytes(kLogitMagic);
    w.put<std::uint16_t>(kLogitVersion);
    w.put<std::uint16_t>(0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(logits.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(logits.vocab_size()));
    const Matrix& m = logits.values();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) w.put<float>(static_cast<float>(m(r, c)));
    }
    return w.take();
}

LogitMatrix decode_logits(std::span<const std::uint8_t> bytes) {
    binary::Reader r(bytes);
    if (r.get_string(4, "logit header") != kLogitMagic) throw FormatError("bad LLGT magic", 0);
    const auto version = r.get<std::uint16_t>("logit header");
    if (version != kLogitVersion) throw FormatError("unsupported LLGT version " + std::to_string(version), 4);
    r.get<std::uint16_t>("logit header");
    const auto rows = r.get<std::uint32_t>("logit header");
    const auto vocab = r.get<std::uint32_t>("logit header");
    const std::size_t count = static_cast<std::size_t>(rows) * vocab;
    r.require(count * sizeof(float), "logit payload");
    std::vector<double> values(count);
    for (auto& v : values) v = r.get<float>("logit payload");
    if (!r.at_end()) throw FormatError("trailing bytes after logit payload", r.offset());
    return LogitMatrix(rows, vocab, std::move(values));
}

LogitMatrix read_logits(const std::string& path) { return decode_logits(binary::read_file(path)); }

void write_logits(const std::string& path, const LogitMatrix& logits) {
    binary::write_file(path, encode_logits(logits));
}

std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open manifest '" + path + "'");
    const auto base = std::filesystem::path(path).parent_path();
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw FormatError("manifest line " + std::to_string(lineno) + " lacks a tab separator");
        }
        std::filesystem::path file(line.substr(tab + 1));
        if (file.is_relative()) file = base / file;
        out.emplace_back(line.substr(0, tab), file.string());
    }
    return out;
}

void write_sparse_jsonl(std::ostream& out, const std::vector<NamedSparseVector>& rows) {
    for (const auto& row : rows) {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& e : row.vec.entries) terms.push_back({e.term, e.weight});
        nlohmann::json obj{{"id", row.id}, {"v", row.vec.vocab_size}, {"terms", std::move(terms)}};
        out << obj.dump() << '\n';
    }
}

std::vector<NamedSparseVector> read_sparse_jsonl(std::istream& in) {
    std::vector<NamedSparseVector> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto obj = nlohmann::json::parse(line);
            NamedSparseVector row;
            row.id = obj.at("id").get<std::string>();
            row.vec.vocab_size = obj.at("v").get<std::size_t>();
            for (const auto& t : obj.at("terms")) {
                row.vec.entries.push_back({t.at(0).get<TermId>(), t.at(1).get<double>()});
            }
            row.vec.validate();
            out.push_back(std::move(row));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("sparse JSONL line " + std::to_string(lineno) + ": " + e.what());
        } catch (const InvalidInput& e) {
            throw FormatError("sparse JSONL line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace io
}  // namespace lexipse
