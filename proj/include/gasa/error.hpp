#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gasa {

enum class ErrorKind {
  ShapeMismatch,
  KernelTooLarge,
  InvalidProbability,
  NotScalar,
  InvalidConfig,
  InvalidSpacing,
  EmptyForeground,
  InvalidEpoch,
  InvalidSpec,
  IoError,
  FormatError,
  VersionMismatch,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::KernelTooLarge: return "KernelTooLarge";
    case ErrorKind::InvalidProbability: return "InvalidProbability";
    case ErrorKind::NotScalar: return "NotScalar";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidSpacing: return "InvalidSpacing";
    case ErrorKind::EmptyForeground: return "EmptyForeground";
    case ErrorKind::InvalidEpoch: return "InvalidEpoch";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
  }
  return "Unknown";
}

}  // namespace gasa
