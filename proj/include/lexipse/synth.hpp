#pragma once

#include "lexipse/common.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace lexipse {

/// One synthetic image-text pair. Image symbols live in their own alphabet of
/// `vocab_size` symbols and are tied to text tokens by a hidden permutation.
struct PairSample {
    std::string id;
    std::vector<TermId> image;
    std::vector<TermId> text;
    std::uint32_t topic = 0;
    bool held_out = false;

    std::string image_id() const { return "img-" + id; }
    std::string text_id() const { return "txt-" + id; }
    friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct SyntheticPairSet {
    std::size_t vocab_size = 0;
    /// Reserved text token used for masking; never emitted by the generator.
    TermId mask_token = 0;
    std::vector<std::vector<TermId>> topic_alphabets;
    std::vector<PairSample> pairs;

    std::vector<std::size_t> split(bool held_out) const;
    friend bool operator==(const SyntheticPairSet&, const SyntheticPairSet&) = default;
};

struct SynthConfig {
    std::size_t num_topics = 10;
    std::size_t pairs_per_topic = 20;
    std::size_t seq_len = 12;
    std::size_t vocab_size = 500;
    std::size_t alphabet_size = 16;  // tokens per topic; 0 splits the vocabulary evenly
    std::uint64_t seed = 7;
    double held_out_fraction = 0.2;
};

/// Each topic owns a disjoint text sub-alphabet. A pair draws seq_len/2 key
/// tokens from its topic; the text carries the keys, the image carries their
/// permuted symbols, and both are padded with independent filler drawn from
/// background tokens, the own topic, and distractor topics.
SyntheticPairSet synth_pairs(const SynthConfig& cfg);

/// JSONL: a header line with the vocabulary and alphabets, then one pair per line.
void write_pairs_jsonl(std::ostream& out, const SyntheticPairSet& set);
SyntheticPairSet read_pairs_jsonl(std::istream& in);

}  // namespace lexipse
