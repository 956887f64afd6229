#pragma once

#include <stdexcept>
#include <string>

namespace mricolor {

/// Tensor rank/size/channel violations.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid or inconsistent configuration (flags, palette sizes, schema).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Dataset generation / loading failures; message names the offending path.
class DatasetError : public std::runtime_error {
 public:
  explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

/// Checkpoint format or fingerprint problems.
class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

/// Aborted training step (non-finite losses and the like).
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mricolor
