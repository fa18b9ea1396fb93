// Copyright 2026 The CENAS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CENAS_ERROR_HPP_
#define CENAS_ERROR_HPP_

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cenas {

/// Broad failure category. The CLI maps these onto process exit codes.
enum class ErrorKind { kConfig, kData, kCompute };

inline int exitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kData: return 3;
    case ErrorKind::kCompute: return 4;
  }
  return 4;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

/// Malformed or inconsistent input data. `offset` is the byte position in the
/// offending file when the error came from a binary loader, -1 otherwise.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what, long long offset = -1)
      : Error(ErrorKind::kData, what), offset_(offset) {}
  long long offset() const noexcept { return offset_; }

 private:
  long long offset_;
};

class ComputeError : public Error {
 public:
  explicit ComputeError(const std::string& what)
      : Error(ErrorKind::kCompute, what) {}
};

inline std::string shapeToString(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

class ShapeError : public ComputeError {
 public:
  ShapeError(int layer, std::vector<int> expected, std::vector<int> actual,
             const std::string& context = "")
      : ComputeError(format(layer, expected, actual, context)),
        layer_(layer),
        expected_(std::move(expected)),
        actual_(std::move(actual)) {}

  int layer() const noexcept { return layer_; }
  const std::vector<int>& expected() const noexcept { return expected_; }
  const std::vector<int>& actual() const noexcept { return actual_; }

 private:
  static std::string format(int layer, const std::vector<int>& expected,
                            const std::vector<int>& actual,
                            const std::string& context) {
    std::ostringstream os;
    os << "shape mismatch at layer " << layer;
    if (!context.empty()) os << " (" << context << ")";
    os << ": expected " << shapeToString(expected) << ", got "
       << shapeToString(actual);
    return os.str();
  }

  int layer_;
  std::vector<int> expected_;
  std::vector<int> actual_;
};

/// A loss or activation became NaN/Inf during training.
class NonFiniteError : public ComputeError {
 public:
  NonFiniteError(std::size_t batch, int layer)
      : ComputeError("non-finite value in batch " + std::to_string(batch) +
                     (layer < 0 ? std::string(" (loss)")
                                : " at layer " + std::to_string(layer))),
        batch_(batch),
        layer_(layer) {}
  std::size_t batch() const noexcept { return batch_; }
  /// -1 when only the loss itself was non-finite.
  int layer() const noexcept { return layer_; }

 private:
  std::size_t batch_;
  int layer_;
};

}  // namespace cenas

#endif  // CENAS_ERROR_HPP_
