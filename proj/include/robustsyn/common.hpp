#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace robustsyn {

// Compute dtype. The 64-bit build exists only for gradient-check tests.
#ifdef ROBUSTSYN_DOUBLE
using real = double;
#else
using real = float;
#endif

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf appeared in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Corrupt or inconsistent file contents (bad magic, checksum, truncated payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace robustsyn
