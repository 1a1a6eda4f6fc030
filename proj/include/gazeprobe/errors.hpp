#pragma once

#include <stdexcept>
#include <string>

namespace gazeprobe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An op produced NaN or Inf. The message names the op.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (gaze files, corpora, alignment).
class DataError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public DataError {
 public:
  AlignmentError(const std::string& what, std::size_t offset)
      : DataError(what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Weight files, tokenizer files and model construction.
class ModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace gazeprobe
