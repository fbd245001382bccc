#pragma once

#include "lexipse/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace lexipse::binary {

/// Appends little-endian scalars to a byte buffer.
class Writer {
  public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_arithmetic_v<T>);
        if constexpr (std::is_floating_point_v<T>) {
            using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
            put(std::bit_cast<U>(value));
        } else {
            using U = std::make_unsigned_t<T>;
            auto u = static_cast<U>(value);
            for (std::size_t i = 0; i < sizeof(T); ++i) {
                bytes_.push_back(static_cast<std::uint8_t>(u & 0xFFu));
                if constexpr (sizeof(T) > 1) u = static_cast<U>(u >> 8);
            }
        }
    }

    void put_bytes(std::string_view raw) { bytes_.insert(bytes_.end(), raw.begin(), raw.end()); }

    std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }
    std::vector<std::uint8_t> take() noexcept { return std::move(bytes_); }

  private:
    std::vector<std::uint8_t> bytes_;
};

/// Reads little-endian scalars; every short read raises FormatError with the offset.
class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        static_assert(std::is_arithmetic_v<T>);
        require(sizeof(T), what);
        if constexpr (std::is_floating_point_v<T>) {
            using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
            return std::bit_cast<T>(get<U>(what));
        } else {
            using U = std::make_unsigned_t<T>;
            U u = 0;
            for (std::size_t i = 0; i < sizeof(T); ++i) {
                u = static_cast<U>(u | (static_cast<U>(bytes_[pos_ + i]) << (8 * i)));
            }
            pos_ += sizeof(T);
            return static_cast<T>(u);
        }
    }

    std::string get_string(std::size_t n, const char* what) {
        require(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void require(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, pos_);
    }

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    bool at_end() const noexcept { return pos_ == bytes_.size(); }

  private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace lexipse::binary
