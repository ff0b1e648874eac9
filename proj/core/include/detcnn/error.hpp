#pragma once

#include <stdexcept>
#include <string>

namespace detcnn {

/// Coarse classification of failures; the CLI maps these onto exit codes.
enum class ErrorKind {
  config,   // bad arguments, impossible architecture, shape mismatch
  data,     // missing/undecodable inputs, corrupt files
  numeric,  // NaN/Inf divergence during training
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& what) { return Error(ErrorKind::config, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }

}  // namespace detcnn
