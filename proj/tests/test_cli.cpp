#include "cli.hpp"

#include "lexipse/evalbench.hpp"
#include "lexipse/io.hpp"
#include "lexipse/lexindex.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace lexipse;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = lexipse::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t lines(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string l; std::getline(in, l);) ++n;
    return n;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with code 2") {
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"nope"}).code == 2);
    CHECK(invoke({"synth", "--out", "x.jsonl"}).code == 2);
    CHECK(invoke({"synth", "--out", "x.jsonl", "--vocab", "500", "--bogus"}).code == 2);
    CHECK(invoke({"train", "--data", "x", "--out", "y", "--phase", "3"}).code == 2);
    CHECK(invoke({"train", "--data", "x", "--out", "y", "--ablate", "everything"}).code == 2);
    CHECK(invoke({"train", "--data", "x", "--out", "y", "--phase", "2"}).code == 2);
}

TEST_CASE("help lists the flags and exits 0") {
    const auto r = invoke({"bench", "--help"});
    CHECK(r.code == 0);
    for (const char* flag : {"--index", "--queries", "--qrels", "--out", "--k", "--threads", "--warmup", "--duration", "--dense"})
        CHECK(r.out.find(flag) != std::string::npos);
    const auto t = invoke({"train", "--help"});
    for (const char* flag : {"--phase", "--ablate", "--lambda", "--tau", "--ema", "--queue", "--seed"})
        CHECK(t.out.find(flag) != std::string::npos);
}

TEST_CASE("synth is deterministic and counts records") {
    TempDir d("lexipse_cli_synth");
    REQUIRE(invoke({"synth", "--out", d / "a.jsonl", "--vocab", "500", "--topics", "10", "--pairs", "20", "--seed", "3"}).code == 0);
    REQUIRE(invoke({"synth", "--out", d / "b.jsonl", "--vocab", "500", "--topics", "10", "--pairs", "20", "--seed", "3"}).code == 0);
    CHECK(slurp(d / "a.jsonl") == slurp(d / "b.jsonl"));
    CHECK(lines(d / "a.jsonl") == 201);  // header plus one line per pair
    CHECK(invoke({"synth", "--out", d / "c.jsonl", "--vocab", "5"}).code == 2);
}

TEST_CASE("end-to-end pipeline") {
    TempDir d("lexipse_cli_pipeline");
    REQUIRE(invoke({"synth", "--out", d / "pairs.jsonl", "--vocab", "120", "--topics", "4", "--pairs", "10", "--seq-len", "8",
                 "--qrels-t2i", d / "t2i.tsv"})
                .code == 0);
    const std::vector<std::string> train{"train", "--data", d / "pairs.jsonl", "--out", d / "m.lxck", "--trace",
                                         d / "trace.jsonl", "--dim", "8", "--batch", "8", "--steps", "30",
                                         "--phase2-steps", "10", "--queue", "16", "--lr", "1"};
    const auto tr = invoke(train);
    REQUIRE(tr.code == 0);
    const auto summary = nlohmann::json::parse(tr.out);
    CHECK(summary.at("steps") == 40);
    CHECK(lines(d / "trace.jsonl") == 40);

    auto again = train;
    again[4] = d / "m2.lxck";
    again[6] = d / "trace2.jsonl";
    REQUIRE(invoke(again).code == 0);
    CHECK(slurp(d / "m.lxck") == slurp(d / "m2.lxck"));

    REQUIRE(invoke({"train", "--data", d / "pairs.jsonl", "--out", d / "p2.lxck", "--phase", "2", "--init", d / "m.lxck",
                 "--dim", "8", "--batch", "8", "--phase2-steps", "3", "--queue", "16"})
                .code == 0);

    REQUIRE(invoke({"encode", "--checkpoint", d / "m.lxck", "--data", d / "pairs.jsonl", "--modality", "image", "--out",
                 d / "img.jsonl", "--topk", "16"})
                .code == 0);
    REQUIRE(invoke({"encode", "--checkpoint", d / "m.lxck", "--data", d / "pairs.jsonl", "--modality", "text", "--out",
                 d / "txt.jsonl"})
                .code == 0);
    {
        std::ifstream in(d / "img.jsonl");
        for (const auto& v : read_quantized_jsonl(in)) {
            CHECK(v.terms.size() <= 16);
            for (const auto& t : v.terms) CHECK(t.weight >= 1);
        }
    }
    CHECK(invoke({"encode", "--out", d / "x.jsonl"}).code == 2);

    const auto ix = invoke({"index", "--in", d / "img.jsonl", "--out", d / "img.lxix", "--vocab", "120"});
    REQUIRE(ix.code == 0);
    const auto stats = nlohmann::json::parse(ix.out);
    const auto index = load_index(d / "img.lxix");
    CHECK(stats.at("total_postings") == index.total_postings());
    CHECK(stats.at("doc_count") == index.doc_count());

    REQUIRE(invoke({"search", "--index", d / "img.lxix", "--queries", d / "txt.jsonl", "--k", "10", "--out",
                 d / "results.jsonl", "--oracle"})
                .code == 0);
    const auto ev = invoke({"eval", "--results", d / "results.jsonl", "--qrels", d / "t2i.tsv"});
    REQUIRE(ev.code == 0);
    const auto rep = nlohmann::json::parse(ev.out);
    const double r1 = rep.at("recall").at("r1");
    const double r5 = rep.at("recall").at("r5");
    const double r10 = rep.at("recall").at("r10");
    CHECK(r1 <= r5);
    CHECK(r5 <= r10);

    const auto bench = invoke({"bench", "--index", d / "img.lxix", "--queries", d / "txt.jsonl", "--qrels", d / "t2i.tsv",
                            "--threads", "2", "--warmup", "0", "--duration", "0.05"});
    REQUIRE(bench.code == 0);
    const auto b = nlohmann::json::parse(bench.out);
    CHECK(b.at("threads") == 2);
    CHECK(b.at("hardware").contains("cpu_model"));
    CHECK(b.at("recall").at("r1") == rep.at("recall").at("r1"));
    CHECK(invoke({"bench", "--index", d / "img.lxix", "--queries", d / "txt.jsonl", "--duration", "0"}).code == 2);
    CHECK(invoke({"bench", "--index", d / "img.lxix", "--queries", d / "txt.jsonl", "--dense", "--warmup", "0",
               "--duration", "0.05"})
              .code == 0);
}

TEST_CASE("encode from logit files") {
    TempDir d("lexipse_cli_logits");
    io::write_logits(d / "zero.llgt", LogitMatrix(2, 4, std::vector<double>(8, 0.0)));
    io::write_logits(d / "some.llgt", LogitMatrix(2, 4, {0.5, -1, 3, 0, 1.0, 0, 0, 0.001}));
    {
        std::ofstream m(d / "manifest.tsv");
        m << "zero\tzero.llgt\nsome\tsome.llgt\n";
    }
    REQUIRE(invoke({"encode", "--manifest", d / "manifest.tsv", "--out", d / "q.jsonl"}).code == 0);
    std::ifstream in(d / "q.jsonl");
    const auto rows = read_quantized_jsonl(in);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].terms.empty());
    CHECK(rows[1].terms == std::vector<QuantizedTerm>{{0, 69}, {2, 138}});
}

TEST_CASE("index rejects duplicate ids and search oracle agrees") {
    TempDir d("lexipse_cli_index");
    {
        std::ofstream o(d / "dup.jsonl");
        o << R"({"id":"a","terms":[[1,2]]})" << '\n' << R"({"id":"a","terms":[[2,2]]})" << '\n';
    }
    CHECK(invoke({"index", "--in", d / "dup.jsonl", "--out", d / "dup.lxix"}).code == 1);
    {
        std::ofstream o(d / "docs.jsonl");
        o << R"({"id":"a","terms":[[1,2],[2,7]]})" << '\n' << R"({"id":"b","terms":[[3,4]]})" << '\n';
        std::ofstream q(d / "q.jsonl");
        q << R"({"id":"q","terms":[[1,50],[3,20]]})" << '\n' << R"({"id":"none","terms":[[9,1]]})" << '\n';
    }
    REQUIRE(invoke({"index", "--in", d / "docs.jsonl", "--out", d / "docs.lxix"}).code == 0);
    const auto r = invoke({"search", "--index", d / "docs.lxix", "--queries", d / "q.jsonl", "--k", "5", "--oracle"});
    REQUIRE(r.code == 0);
    std::istringstream in(r.out);
    const auto results = read_results_jsonl(in);
    REQUIRE(results.size() == 2);
    CHECK(results[0].result.hits == std::vector<ScoredDoc>{{"a", 100}, {"b", 80}});
    CHECK(results[1].result.hits.empty());
}

TEST_CASE("eval on a hand-counted case") {
    TempDir d("lexipse_cli_eval");
    {
        std::ofstream r(d / "r.jsonl");
        r << R"({"query":"q1","hits":[["a",5],["b",4]]})" << '\n' << R"({"query":"q2","hits":[["x",9],["y",1],["c",1]]})" << '\n';
        std::ofstream q(d / "qrels.tsv");
        q << "q1\ta\nq2\tc\n";
    }
    const auto e = invoke({"eval", "--results", d / "r.jsonl", "--qrels", d / "qrels.tsv", "--ks", "1,3"});
    REQUIRE(e.code == 0);
    const auto j = nlohmann::json::parse(e.out);
    CHECK(j.at("recall").at("r1") == 0.5);
    CHECK(j.at("recall").at("r3") == 1.0);
}

TEST_CASE("selfcheck exit codes") {
    CHECK(invoke({"selfcheck", "--instances", "5"}).code == 0);
    CHECK(invoke({"selfcheck", "--instances", "5", "--inject-sg-violation"}).code == 1);
}

}
