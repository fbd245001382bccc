#include "cli.hpp"

#include "lexipse/errors.hpp"
#include "lexipse/evalbench.hpp"
#include "lexipse/io.hpp"
#include "lexipse/lexindex.hpp"
#include "lexipse/log.hpp"
#include "lexipse/selfcheck.hpp"
#include "lexipse/synth.hpp"
#include "lexipse/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <memory>

namespace lexipse::cli {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    return out;
}

void finish(std::ofstream& f, const std::string& path) {
    f.flush();
    if (!f) throw Error("failed writing '" + path + "'");
}

SyntheticPairSet load_pairs(const std::string& path) {
    auto in = open_in(path);
    return read_pairs_jsonl(in);
}

std::vector<QuantizedLexiconVector> load_quantized(const std::string& path) {
    auto in = open_in(path);
    return read_quantized_jsonl(in);
}

// Writes to `path`, or to `out` when the path is empty.
void emit(const std::string& path, std::ostream& out, const std::function<void(std::ostream&)>& body) {
    if (path.empty()) {
        body(out);
        return;
    }
    auto f = open_out(path);
    body(f);
    finish(f, path);
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
    std::string out;
    std::string qrels_t2i;
    std::string qrels_i2t;
    std::size_t vocab = 0;
    SynthConfig cfg;
};

void add_synth(CLI::App& app, SynthArgs& a) {
    auto* sub = app.add_subcommand("synth", "Generate a synthetic paired image/text corpus");
    sub->add_option("--out", a.out, "Output pairs JSONL")->required();
    sub->add_option("--vocab", a.vocab, "Text vocabulary size (token 0 is [MASK])")->required();
    sub->add_option("--topics", a.cfg.num_topics, "Number of latent topics")->capture_default_str();
    sub->add_option("--pairs", a.cfg.pairs_per_topic, "Pairs per topic")->capture_default_str();
    sub->add_option("--seq-len", a.cfg.seq_len, "Tokens per sequence")->capture_default_str();
    sub->add_option("--alphabet", a.cfg.alphabet_size, "Tokens per topic alphabet (0 splits the vocabulary evenly)")
        ->capture_default_str();
    sub->add_option("--held-out", a.cfg.held_out_fraction, "Held-out fraction per topic")->capture_default_str();
    sub->add_option("--seed", a.cfg.seed, "Random seed")->capture_default_str();
    sub->add_option("--qrels-t2i", a.qrels_t2i, "Also write held-out text->image qrels TSV");
    sub->add_option("--qrels-i2t", a.qrels_i2t, "Also write held-out image->text qrels TSV");
}

int run_synth(SynthArgs& a, std::ostream& out) {
    a.cfg.vocab_size = a.vocab;
    if (a.cfg.num_topics == 0 || a.cfg.pairs_per_topic == 0 || a.cfg.seq_len == 0) {
        throw UsageError("--topics, --pairs and --seq-len must be >= 1");
    }
    if (!(a.cfg.held_out_fraction >= 0.0 && a.cfg.held_out_fraction < 1.0)) throw UsageError("--held-out must lie in [0, 1)");
    const auto set = synth_pairs(a.cfg);
    emit(a.out, out, [&](std::ostream& o) { write_pairs_jsonl(o, set); });
    auto write_qrels = [&](const std::string& path, bool t2i) {
        if (path.empty()) return;
        emit(path, out, [&](std::ostream& o) {
            for (const auto i : set.split(true)) {
                const auto& p = set.pairs[i];
                o << (t2i ? p.text_id() : p.image_id()) << '\t' << (t2i ? p.image_id() : p.text_id()) << '\n';
            }
        });
    };
    write_qrels(a.qrels_t2i, true);
    write_qrels(a.qrels_i2t, false);
    out << "wrote " << set.pairs.size() << " pairs (" << set.split(true).size() << " held out) to " << a.out << '\n';
    return kOk;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    std::string trace;
    std::string init;
    std::string phase = "both";
    std::vector<std::string> ablate;
    TrainConfig cfg;
};

void add_train(CLI::App& app, TrainArgs& a) {
    auto* sub = app.add_subcommand("train", "Run phase-1 and/or phase-2 pre-training on a pair set");
    auto& c = a.cfg;
    sub->add_option("--data", a.data, "Pairs JSONL from `synth`")->required();
    sub->add_option("--out", a.out, "Output checkpoint (LXCK)")->required();
    sub->add_option("--trace", a.trace, "Per-step metrics JSONL");
    sub->add_option("--init", a.init, "Phase-1 checkpoint to start phase 2 from");
    sub->add_option("--phase", a.phase, "Which phases to run")->check(CLI::IsMember({"1", "2", "both"}))->capture_default_str();
    sub->add_option("--ablate", a.ablate, "Drop objectives (repeatable)")
        ->check(CLI::IsMember({"self", "i2t", "t2i", "baco", "moco"}))
        ->delimiter(',');
    sub->add_option("--dim", c.dim, "Hidden size")->capture_default_str();
    sub->add_option("--batch", c.batch_size, "Batch size")->capture_default_str();
    sub->add_option("--steps", c.steps, "Phase-1 steps")->capture_default_str();
    sub->add_option("--phase2-steps", c.phase2_steps, "Phase-2 steps")->capture_default_str();
    sub->add_option("--lr", c.learning_rate, "SGD learning rate")->capture_default_str();
    sub->add_option("--grad-clip", c.grad_clip, "Global gradient-norm clip (0 disables)")->capture_default_str();
    sub->add_option("--tau", c.tau, "Contrastive temperature")->capture_default_str();
    sub->add_option("--lambda", c.lambda, "FLOPS regulariser weight")->capture_default_str();
    sub->add_option("--enc-mask", c.enc_mask_rate, "Encoder masking rate")->capture_default_str();
    sub->add_option("--dec-mask", c.dec_mask_rate, "Decoder masking rate")->capture_default_str();
    sub->add_option("--ema", c.ema_decay, "Momentum encoder decay")->capture_default_str();
    sub->add_option("--queue", c.queue_capacity, "Negative queue capacity")->capture_default_str();
    sub->add_option("--init-scale", c.init_scale, "Std of initial weights")->capture_default_str();
    sub->add_option("--eval-every", c.eval_every, "Held-out R@1 period in steps (0 = only at the end)")->capture_default_str();
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

int run_train(TrainArgs& a, std::ostream& out) {
    auto& c = a.cfg;
    c.phase = a.phase == "1" ? PhaseSelect::One : a.phase == "2" ? PhaseSelect::Two : PhaseSelect::Both;
    for (const auto& name : a.ablate) {
        if (name == "self") c.objectives.self_mlm = false;
        if (name == "i2t") c.objectives.i2t_mlm = false;
        if (name == "t2i") c.objectives.t2i_mlm = false;
        if (name == "baco") c.objectives.baco = false;
        if (name == "moco") c.objectives.moco = false;
    }
    if (c.steps == 0 && c.phase != PhaseSelect::Two) throw UsageError("--steps must be >= 1");
    if (c.phase == PhaseSelect::Two && a.init.empty()) throw UsageError("--phase 2 needs --init");
    if (c.phase != PhaseSelect::Two && !a.init.empty()) throw UsageError("--init is only used with --phase 2");
    if (c.phase == PhaseSelect::Two && !c.objectives.moco) throw UsageError("--phase 2 with --ablate moco has nothing to train");
    c.validate();

    const auto data = load_pairs(a.data);
    std::optional<ToyModel> init;
    if (!a.init.empty()) init = load_checkpoint(a.init);
    const TrainResult result = train(c, data, std::move(init));

    save_checkpoint(a.out, result.model);
    if (!a.trace.empty()) emit(a.trace, out, [&](std::ostream& o) { write_trace_jsonl(o, result.trace); });

    nlohmann::ordered_json summary;
    summary["steps"] = result.trace.size();
    summary["r1"] = result.final_eval.r1();
    summary["r1_t2i"] = result.final_eval.r1_t2i;
    summary["r1_i2t"] = result.final_eval.r1_i2t;
    summary["random_r1"] = result.final_eval.random_r1();
    summary["nnz_img"] = result.final_eval.nnz_img;
    summary["nnz_txt"] = result.final_eval.nnz_txt;
    out << summary.dump() << '\n';
    return kOk;
}

// ---- encode --------------------------------------------------------------

struct EncodeArgs {
    std::string out;
    std::string manifest;
    std::string checkpoint;
    std::string data;
    std::string modality = "text";
    std::string split = "held-out";
    std::size_t topk = 0;
};

void add_encode(CLI::App& app, EncodeArgs& a) {
    auto* sub = app.add_subcommand("encode", "Turn logits or a trained encoder into quantized sparse vectors");
    sub->add_option("--out", a.out, "Output quantized JSONL")->required();
    auto* manifest = sub->add_option("--manifest", a.manifest, "TSV of id<TAB>logit-file (LLGT)");
    auto* ckpt = sub->add_option("--checkpoint", a.checkpoint, "Trained checkpoint (LXCK)");
    sub->add_option("--data", a.data, "Pairs JSONL, with --checkpoint");
    sub->add_option("--modality", a.modality, "Encoder to use, with --checkpoint")
        ->check(CLI::IsMember({"image", "text"}))
        ->capture_default_str();
    sub->add_option("--split", a.split, "Pairs to encode, with --checkpoint")
        ->check(CLI::IsMember({"train", "held-out", "all"}))
        ->capture_default_str();
    sub->add_option("--topk", a.topk, "Keep only the K largest weights (0 keeps all)")->capture_default_str();
    manifest->excludes(ckpt);
    ckpt->excludes(manifest);
}

int run_encode(const EncodeArgs& a, std::ostream& out) {
    if (a.manifest.empty() == a.checkpoint.empty()) throw UsageError("give exactly one of --manifest or --checkpoint");
    if (!a.checkpoint.empty() && a.data.empty()) throw UsageError("--checkpoint needs --data");

    auto finish_vec = [&](const SparseLexiconVector& v, const std::string& id) {
        return quantize(a.topk ? top_k_sparsify(v, a.topk) : v, id);
    };
    std::vector<QuantizedLexiconVector> rows;
    if (!a.manifest.empty()) {
        for (const auto& [id, path] : io::read_manifest(a.manifest)) rows.push_back(finish_vec(saturate_pool(io::read_logits(path)), id));
    } else {
        const auto data = load_pairs(a.data);
        const ToyModel model = load_checkpoint(a.checkpoint);
        if (model.image.vocab_size() != data.vocab_size) throw ShapeError("checkpoint and data disagree on the vocabulary");
        const bool image = a.modality == "image";
        const ToyEncoder& enc = image ? model.image : model.text;
        for (std::size_t i = 0; i < data.pairs.size(); ++i) {
            const auto& p = data.pairs[i];
            if ((a.split == "train" && p.held_out) || (a.split == "held-out" && !p.held_out)) continue;
            rows.push_back(finish_vec(encode_sparse(enc, image ? p.image : p.text), image ? p.image_id() : p.text_id()));
        }
    }
    emit(a.out, out, [&](std::ostream& o) { write_quantized_jsonl(o, rows); });
    out << "encoded " << rows.size() << " vectors to " << a.out << '\n';
    return kOk;
}

// ---- index ---------------------------------------------------------------

struct IndexArgs {
    std::string in;
    std::string out;
    std::size_t vocab = kMaxIndexVocab;
};

void add_index(CLI::App& app, IndexArgs& a) {
    auto* sub = app.add_subcommand("index", "Build an inverted index (LXIX) from quantized vectors");
    sub->add_option("--in", a.in, "Quantized JSONL")->required();
    sub->add_option("--out", a.out, "Output index file")->required();
    sub->add_option("--vocab", a.vocab, "Vocabulary size (<= 65536)")->capture_default_str();
}

int run_index(const IndexArgs& a, std::ostream& out) {
    if (a.vocab == 0 || a.vocab > kMaxIndexVocab) throw UsageError("--vocab must lie in [1, 65536]");
    const auto corpus = load_quantized(a.in);
    const auto index = build_index(corpus, a.vocab);
    save_index(a.out, index);
    out << to_json(index_stats(index)).dump() << '\n';
    return kOk;
}

// ---- search --------------------------------------------------------------

struct SearchArgs {
    std::string index;
    std::string queries;
    std::string out;
    std::size_t k = 10;
    bool oracle = false;
};

void add_search(CLI::App& app, SearchArgs& a) {
    auto* sub = app.add_subcommand("search", "Run quantized queries against an index");
    sub->add_option("--index", a.index, "Index file (LXIX)")->required();
    sub->add_option("--queries", a.queries, "Quantized query JSONL")->required();
    sub->add_option("--k", a.k, "Results per query")->capture_default_str();
    sub->add_option("--out", a.out, "Results JSONL (stdout if omitted)");
    sub->add_flag("--oracle", a.oracle, "Cross-check every query against brute-force scoring");
}

int run_search(const SearchArgs& a, std::ostream& out, std::ostream& err) {
    if (a.k == 0) throw UsageError("--k must be >= 1");
    const auto index = load_index(a.index);
    const auto queries = load_quantized(a.queries);
    Searcher searcher(index);
    std::vector<RankedQuery> results;
    for (const auto& q : queries) results.push_back({q.id, searcher.search(q, a.k)});

    std::size_t mismatches = 0;
    if (a.oracle) {
        const auto corpus = index.forward();
        for (std::size_t i = 0; i < queries.size(); ++i) {
            if (brute_force_search(corpus, queries[i], a.k) != results[i].result) {
                err << "oracle mismatch for query '" << queries[i].id << "'\n";
                ++mismatches;
            }
        }
    }
    emit(a.out, out, [&](std::ostream& o) { write_results_jsonl(o, results); });
    if (mismatches) {
        err << mismatches << " of " << queries.size() << " queries disagree with brute force\n";
        return kFailure;
    }
    return kOk;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
    std::string results;
    std::string qrels;
    std::string out;
    std::vector<std::size_t> ks{1, 5, 10};
};

void add_eval(CLI::App& app, EvalArgs& a) {
    auto* sub = app.add_subcommand("eval", "Compute R@k of search results against qrels");
    sub->add_option("--results", a.results, "Results JSONL from `search`")->required();
    sub->add_option("--qrels", a.qrels, "TSV of query_id<TAB>relevant_id")->required();
    sub->add_option("--ks", a.ks, "Cutoffs, comma separated")->delimiter(',')->capture_default_str();
    sub->add_option("--out", a.out, "Report path (stdout if omitted)");
}

int run_eval(const EvalArgs& a, std::ostream& out) {
    if (a.ks.empty() || std::find(a.ks.begin(), a.ks.end(), 0) != a.ks.end()) throw UsageError("--ks must be >= 1");
    auto rin = open_in(a.results);
    const auto results = read_results_jsonl(rin);
    auto qin = open_in(a.qrels);
    const auto qrels = read_qrels(qin);
    const auto recall = recall_at_k(results, qrels, a.ks);
    nlohmann::json report;
    report["queries"] = results.size();
    for (const auto& [k, v] : recall) report["recall"]["r" + std::to_string(k)] = v;
    emit(a.out, out, [&](std::ostream& o) { o << report.dump(2) << '\n'; });
    return kOk;
}

// ---- bench ---------------------------------------------------------------

struct BenchArgs {
    std::string index;
    std::string queries;
    std::string qrels;
    std::string out;
    std::size_t k = 10;
    std::size_t threads = 1;
    double warmup = 0.5;
    double duration = 2.0;
    bool dense = false;
};

void add_bench(CLI::App& app, BenchArgs& a) {
    auto* sub = app.add_subcommand("bench", "Measure QPS and latency over an index");
    sub->add_option("--index", a.index, "Index file (LXIX)")->required();
    sub->add_option("--queries", a.queries, "Quantized query JSONL")->required();
    sub->add_option("--qrels", a.qrels, "Optional qrels; adds R@1/5/10 to the report");
    sub->add_option("--out", a.out, "Report path (stdout if omitted)");
    sub->add_option("--k", a.k, "Results per query")->capture_default_str();
    sub->add_option("--threads", a.threads, "Worker threads")->capture_default_str();
    sub->add_option("--warmup", a.warmup, "Warmup seconds")->capture_default_str();
    sub->add_option("--duration", a.duration, "Measured seconds")->capture_default_str();
    sub->add_flag("--dense", a.dense, "Benchmark the dense full-scan baseline over the same vectors");
}

int run_bench(const BenchArgs& a, std::ostream& out) {
    if (a.k == 0) throw UsageError("--k must be >= 1");
    if (a.threads == 0) throw UsageError("--threads must be >= 1");
    if (!(a.duration > 0.0)) throw UsageError("--duration must be positive");
    if (!(a.warmup >= 0.0)) throw UsageError("--warmup must be non-negative");
    const auto index = load_index(a.index);
    const auto queries = load_quantized(a.queries);
    if (queries.empty()) throw UsageError("--queries holds no queries");
    const QpsOptions opts{a.k, a.threads, std::chrono::duration<double>(a.warmup), std::chrono::duration<double>(a.duration)};

    BenchReport report;
    if (a.dense) {
        const DenseScanIndex dense(index.forward(), index.vocab_size());
        report = qps_bench_fn(queries.size(), opts, [&] {
            return [&](std::size_t q) {
                const auto r = dense.search(queries[q], a.k);
                asm volatile("" : : "g"(r.hits.data()) : "memory");
            };
        });
        report.index = index_stats(index);
    } else {
        report = qps_bench(index, queries, opts);
    }
    if (!a.qrels.empty()) {
        auto qin = open_in(a.qrels);
        const auto qrels = read_qrels(qin);
        Searcher searcher(index);
        std::vector<RankedQuery> ranked;
        for (const auto& q : queries) ranked.push_back({q.id, searcher.search(q, 10)});
        const std::size_t ks[] = {1, 5, 10};
        report.recall = recall_at_k(ranked, qrels, ks);
    }
    report.config = {{"index", a.index}, {"queries", a.queries}, {"k", a.k}, {"threads", a.threads},
                     {"warmup_s", a.warmup}, {"duration_s", a.duration}, {"engine", a.dense ? "dense-scan" : "inverted"}};
    report.hardware = hardware_metadata();
    emit(a.out, out, [&](std::ostream& o) { o << emit_report(report); });
    return kOk;
}

// ---- selfcheck -----------------------------------------------------------

struct SelfCheckArgs {
    SelfCheckOptions opts;
};

void add_selfcheck(CLI::App& app, SelfCheckArgs& a) {
    auto* sub = app.add_subcommand("selfcheck", "Finite-difference gradient suite and invariant battery");
    sub->add_option("--instances", a.opts.instances, "Random instances per check")->capture_default_str();
    sub->add_option("--seed", a.opts.seed, "Random seed")->capture_default_str();
    sub->add_flag("--inject-sg-violation", a.opts.inject_sg_violation,
                  "Remove the bottleneck stop-gradient to confirm the contract check catches it");
}

int run_selfcheck_cmd(const SelfCheckArgs& a, std::ostream& out) {
    if (a.opts.instances == 0) throw UsageError("--instances must be >= 1");
    const auto report = run_selfcheck(a.opts);
    for (const auto& c : report.checks) out << (c.passed ? "PASS  " : "FAIL  ") << c.name << "  " << c.detail << '\n';
    const auto failed = std::count_if(report.checks.begin(), report.checks.end(), [](const auto& c) { return !c.passed; });
    out << (failed ? std::to_string(failed) + " check(s) failed" : "all checks passed") << '\n';
    return failed ? kFailure : kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    init_logging();
    CLI::App app{"Lexicon-weighted sparse retrieval toolkit"};
    app.name("lexipse");
    app.require_subcommand(1);

    SynthArgs synth;
    TrainArgs train_args;
    EncodeArgs encode;
    IndexArgs index;
    SearchArgs search_args;
    EvalArgs eval;
    BenchArgs bench;
    SelfCheckArgs selfcheck;
    add_synth(app, synth);
    add_train(app, train_args);
    add_encode(app, encode);
    add_index(app, index);
    add_search(app, search_args);
    add_eval(app, eval);
    add_bench(app, bench);
    add_selfcheck(app, selfcheck);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        if (cmd == "synth") return run_synth(synth, out);
        if (cmd == "train") return run_train(train_args, out);
        if (cmd == "encode") return run_encode(encode, out);
        if (cmd == "index") return run_index(index, out);
        if (cmd == "search") return run_search(search_args, out, err);
        if (cmd == "eval") return run_eval(eval, out);
        if (cmd == "bench") return run_bench(bench, out);
        if (cmd == "selfcheck") return run_selfcheck_cmd(selfcheck, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const InvalidArgument& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const Divergence& e) {
        err << "training diverged at step " << e.step() << ": " << e.what() << '\n';
        return kFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    err << "unknown subcommand '" << cmd << "'\n";
    return kUsage;
}

}  // namespace lexipse::cli
