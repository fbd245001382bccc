#include "lexipse/synth.hpp"

#include "lexipse/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace lexipse {

std::vector<std::size_t> SyntheticPairSet::split(bool held_out) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].held_out == held_out) out.push_back(i);
    }
    return out;
}

SyntheticPairSet synth_pairs(const SynthConfig& cfg) {
    if (cfg.num_topics < 1 || cfg.pairs_per_topic < 1 || cfg.seq_len < 1 || cfg.vocab_size < 1) {
        throw InvalidArgument("synthetic data counts must all be >= 1");
    }
    if (!(cfg.held_out_fraction >= 0.0 && cfg.held_out_fraction < 1.0)) {
        throw InvalidArgument("held-out fraction must lie in [0, 1)");
    }
    // Token 0 is the mask token; the rest splits into num_topics alphabets and
    // a background pool that takes whatever is left.
    const std::size_t usable = cfg.vocab_size > 0 ? cfg.vocab_size - 1 : 0;
    const std::size_t alphabet = cfg.alphabet_size ? cfg.alphabet_size : usable / (cfg.num_topics + 1);
    if (alphabet < cfg.seq_len) {
        throw InvalidArgument("topic alphabets of " + std::to_string(alphabet) + " tokens are shorter than a sequence of " +
                              std::to_string(cfg.seq_len));
    }
    if (alphabet * cfg.num_topics >= usable) {
        throw InvalidArgument("vocabulary of " + std::to_string(cfg.vocab_size) + " is too small for " +
                              std::to_string(cfg.num_topics) + " disjoint topic alphabets of " +
                              std::to_string(alphabet) + " tokens plus background");
    }

    std::mt19937_64 rng(cfg.seed);
    SyntheticPairSet set;
    set.vocab_size = cfg.vocab_size;
    set.mask_token = 0;

    std::vector<TermId> shuffled(usable);
    std::iota(shuffled.begin(), shuffled.end(), TermId{1});
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (std::size_t t = 0; t < cfg.num_topics; ++t) {
        const auto first = shuffled.begin() + static_cast<std::ptrdiff_t>(t * alphabet);
        std::vector<TermId> a(first, first + static_cast<std::ptrdiff_t>(alphabet));
        std::sort(a.begin(), a.end());
        set.topic_alphabets.push_back(std::move(a));
    }
    const std::vector<TermId> background(shuffled.begin() + static_cast<std::ptrdiff_t>(cfg.num_topics * alphabet),
                                         shuffled.end());

    std::vector<TermId> to_image(cfg.vocab_size);
    std::iota(to_image.begin(), to_image.end(), TermId{0});
    std::shuffle(to_image.begin(), to_image.end(), rng);

    const std::size_t keys = std::max<std::size_t>(1, cfg.seq_len / 2);
    const auto held = static_cast<std::size_t>(
        std::floor(cfg.held_out_fraction * static_cast<double>(cfg.pairs_per_topic) + 0.5));
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    auto pick = [&rng](const std::vector<TermId>& pool) {
        std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
        return pool[d(rng)];
    };
    auto filler = [&](std::size_t topic) {
        const double u = coin(rng);
        if (u < 0.5 && !background.empty()) return pick(background);
        if (u < 0.75 || cfg.num_topics == 1) return pick(set.topic_alphabets[topic]);
        std::uniform_int_distribution<std::size_t> other(0, cfg.num_topics - 2);
        std::size_t t = other(rng);
        if (t >= topic) ++t;
        return pick(set.topic_alphabets[t]);
    };

    for (std::size_t topic = 0; topic < cfg.num_topics; ++topic) {
        for (std::size_t j = 0; j < cfg.pairs_per_topic; ++j) {
            PairSample s;
            char buf[32];
            std::snprintf(buf, sizeof buf, "%03zu-%04zu", topic, j);
            s.id = buf;
            s.topic = static_cast<std::uint32_t>(topic);
            s.held_out = j >= cfg.pairs_per_topic - held;

            std::vector<TermId> pool = set.topic_alphabets[topic];
            std::shuffle(pool.begin(), pool.end(), rng);
            for (std::size_t k = 0; k < keys; ++k) {
                s.text.push_back(pool[k]);
                s.image.push_back(to_image[pool[k]]);
            }
            while (s.text.size() < cfg.seq_len) s.text.push_back(filler(topic));
            while (s.image.size() < cfg.seq_len) s.image.push_back(to_image[filler(topic)]);
            std::shuffle(s.text.begin(), s.text.end(), rng);
            std::shuffle(s.image.begin(), s.image.end(), rng);
            set.pairs.push_back(std::move(s));
        }
    }
    return set;
}

void write_pairs_jsonl(std::ostream& out, const SyntheticPairSet& set) {
    out << nlohmann::json{{"vocab_size", set.vocab_size},
                          {"mask_token", set.mask_token},
                          {"topic_alphabets", set.topic_alphabets}}
               .dump()
        << '\n';
    for (const auto& p : set.pairs) {
        out << nlohmann::json{{"id", p.id},
                              {"topic", p.topic},
                              {"split", p.held_out ? "held_out" : "train"},
                              {"image", p.image},
                              {"text", p.text}}
                   .dump()
            << '\n';
    }
}

SyntheticPairSet read_pairs_jsonl(std::istream& in) {
    SyntheticPairSet set;
    std::string line;
    std::size_t lineno = 0;
    try {
        if (!std::getline(in, line)) throw FormatError("pair file is empty");
        ++lineno;
        const auto head = nlohmann::json::parse(line);
        set.vocab_size = head.at("vocab_size").get<std::size_t>();
        set.mask_token = head.at("mask_token").get<TermId>();
        set.topic_alphabets = head.at("topic_alphabets").get<std::vector<std::vector<TermId>>>();
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto obj = nlohmann::json::parse(line);
            PairSample p;
            p.id = obj.at("id").get<std::string>();
            p.topic = obj.at("topic").get<std::uint32_t>();
            p.held_out = obj.at("split").get<std::string>() == "held_out";
            p.image = obj.at("image").get<std::vector<TermId>>();
            p.text = obj.at("text").get<std::vector<TermId>>();
            for (const auto t : p.text) {
                if (t >= set.vocab_size) throw FormatError("pair '" + p.id + "' has a token outside the vocabulary");
            }
            for (const auto t : p.image) {
                if (t >= set.vocab_size) throw FormatError("pair '" + p.id + "' has a symbol outside the vocabulary");
            }
            set.pairs.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("pair file line " + std::to_string(lineno) + ": " + e.what());
    }
    return set;
}

}  // namespace lexipse
