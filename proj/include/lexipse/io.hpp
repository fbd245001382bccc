#pragma once

#include "lexipse/sparse_repr.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace lexipse::io {

/// LLGT logit files: 16-byte header (magic, u16 version, u16 reserved, u32
/// rows, u32 vocab) followed by row-major little-endian f32 values.
std::vector<std::uint8_t> encode_logits(const LogitMatrix& logits);
LogitMatrix decode_logits(std::span<const std::uint8_t> bytes);
LogitMatrix read_logits(const std::string& path);
void write_logits(const std::string& path, const LogitMatrix& logits);

/// `id<TAB>path` lines. Relative paths are resolved against the manifest's directory.
std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path);

struct NamedSparseVector {
    std::string id;
    SparseLexiconVector vec;
};

/// Sparse-vector JSONL: {"id": ..., "v": vocab_size, "terms": [[term, weight], ...]}.
void write_sparse_jsonl(std::ostream& out, const std::vector<NamedSparseVector>& rows);
std::vector<NamedSparseVector> read_sparse_jsonl(std::istream& in);

}  // namespace lexipse::io
