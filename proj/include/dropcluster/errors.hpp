#pragma once

#include <stdexcept>
#include <string>

namespace dropcluster {

// Dataset or statistic asked for more than the data can support.
struct InsufficientDataError : std::runtime_error {
  explicit InsufficientDataError(const std::string& msg) : std::runtime_error(msg) {}
};

// A drop mask with no surviving elements cannot be renormalized.
struct DegenerateMaskError : std::runtime_error {
  explicit DegenerateMaskError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation requires state (cluster assignments, checkpoint fields) that is absent.
struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dropcluster
