#pragma once

#include <stdexcept>
#include <string>

namespace hmkg {

// Every failure raised by the library carries a stable machine-readable kind,
// which the CLI forwards verbatim in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define HMKG_DEFINE_ERROR(Name, tag) \
  class Name : public Error {        \
   public:                           \
    explicit Name(const std::string& message) : Error(tag, message) {} \
  };

HMKG_DEFINE_ERROR(DomainError, "domain")
HMKG_DEFINE_ERROR(ShapeError, "shape")
HMKG_DEFINE_ERROR(AlignmentError, "alignment")
HMKG_DEFINE_ERROR(IngestionError, "ingestion")
HMKG_DEFINE_ERROR(CompletenessError, "completeness")
HMKG_DEFINE_ERROR(ConfigError, "config")
HMKG_DEFINE_ERROR(TrainingError, "training")
HMKG_DEFINE_ERROR(UndefinedMetricError, "undefined_metric")

#undef HMKG_DEFINE_ERROR

}  // namespace hmkg
