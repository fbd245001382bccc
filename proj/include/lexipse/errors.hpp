#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lexipse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input data violates a type invariant (non-finite values, bad ordering).
class InvalidInput : public Error {
  public:
    using Error::Error;
};

/// A scalar argument is out of its allowed range.
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
  public:
    using Error::Error;
};

/// Vocabulary larger than the 16-bit term id space.
class UnsupportedVocab : public Error {
  public:
    using Error::Error;
};

/// Two corpus entries share an id.
class DuplicateId : public Error {
  public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class Divergence : public Error {
  public:
    Divergence(const std::string& what, std::size_t step) : Error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

  private:
    std::size_t step_;
};

/// Binary or text file does not follow its declared format.
class FormatError : public Error {
  public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    explicit FormatError(const std::string& what) : Error(what), offset_(0) {}
    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

}  // namespace lexipse
