#include "lexipse/binary.hpp"
#include "lexipse/errors.hpp"
#include "lexipse/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace lexipse;
namespace fs = std::filesystem;

TEST_SUITE("io") {

TEST_CASE("logit files round-trip through f32") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto rows = 1 + rng() % 5, vocab = 1 + rng() % 30;
        std::vector<double> v(rows * vocab);
        for (auto& x : v) x = static_cast<float>(u(rng));
        const LogitMatrix m(rows, vocab, v);
        const auto bytes = io::encode_logits(m);
        CHECK(bytes.size() == 16 + 4 * rows * vocab);
        const auto back = io::decode_logits(bytes);
        CHECK(back.values() == m.values());
        CHECK(io::encode_logits(back) == bytes);
    }
}

TEST_CASE("logit files reject bad headers and payloads") {
    const auto bytes = io::encode_logits(LogitMatrix(2, 3, {1, 2, 3, 4, 5, 6}));
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LLGT");
    auto bad = bytes;
    bad[3] = 'X';
    CHECK_THROWS_AS(io::decode_logits(bad), FormatError);
    bad = bytes;
    bad[4] = 2;
    CHECK_THROWS_AS(io::decode_logits(bad), FormatError);
    CHECK_THROWS_AS(io::decode_logits(std::span<const std::uint8_t>(bytes.data(), bytes.size() - 1)), FormatError);
    bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(io::decode_logits(bad), FormatError);
    binary::Writer w;
    w.put_bytes("LLGT");
    w.put<std::uint16_t>(1);
    w.put<std::uint16_t>(0);
    w.put<std::uint32_t>(1);
    w.put<std::uint32_t>(1);
    w.put<float>(std::numeric_limits<float>::quiet_NaN());
    CHECK_THROWS(io::decode_logits(w.bytes()));
}

TEST_CASE("manifest paths resolve against the manifest directory") {
    const auto dir = fs::temp_directory_path() / "lexipse_io_manifest";
    fs::create_directories(dir / "sub");
    io::write_logits((dir / "sub" / "a.llgt").string(), LogitMatrix(1, 2, {0.5, -1.0}));
    {
        std::ofstream m(dir / "manifest.tsv");
        m << "a\tsub/a.llgt\n";
    }
    const auto entries = io::read_manifest((dir / "manifest.tsv").string());
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].first == "a");
    CHECK(io::read_logits(entries[0].second).vocab_size() == 2);
    {
        std::ofstream m(dir / "broken.tsv");
        m << "no-tab-here\n";
    }
    CHECK_THROWS_AS(io::read_manifest((dir / "broken.tsv").string()), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("sparse JSONL round-trips and validates") {
    const std::vector<io::NamedSparseVector> rows{{"a", {10, {{1, 0.5}, {7, 2.25}}}}, {"b", {10, {}}}};
    std::stringstream ss;
    io::write_sparse_jsonl(ss, rows);
    const auto back = io::read_sparse_jsonl(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "a");
    CHECK(back[0].vec == rows[0].vec);
    CHECK(back[1].vec.entries.empty());
    std::istringstream unordered(R"({"id":"x","v":5,"terms":[[3,1.0],[1,1.0]]})");
    CHECK_THROWS_AS(io::read_sparse_jsonl(unordered), FormatError);
}

TEST_CASE("binary reader reports offsets") {
    const std::vector<std::uint8_t> bytes{1, 2, 3};
    binary::Reader r(bytes);
    CHECK(r.get<std::uint16_t>("x") == 0x0201);
    try {
        r.get<std::uint32_t>("field");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 2);
    }
}

}
