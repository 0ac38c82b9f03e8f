#pragma once

#include <stdexcept>
#include <string>

namespace lsa {

// Degenerate numerics (zero-norm embeddings, singular covariance without shrinkage, ...).
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Configuration file problems; carries the offending field path.
class ConfigError : public std::runtime_error {
  public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error("config error at '" + field + "': " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

  private:
    std::string field_;
};

}  // namespace lsa
