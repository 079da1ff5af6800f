#pragma once

#include <stdexcept>
#include <string>

namespace pft {

// Every failure raised by the library derives from Error and carries a short
// machine-readable code; the CLI serialises (code, message, context) as JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, std::string context = {})
      : std::runtime_error(message), code_(std::move(code)), context_(std::move(context)) {}

  const std::string& code() const noexcept { return code_; }
  const std::string& context() const noexcept { return context_; }

 private:
  std::string code_;
  std::string context_;
};

#define PFT_DEFINE_ERROR(Name, Code)                                        \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& message, std::string context = {})     \
        : Error(Code, message, std::move(context)) {}                       \
  }

PFT_DEFINE_ERROR(ShapeError, "shape_mismatch");
PFT_DEFINE_ERROR(NumericError, "non_finite");
PFT_DEFINE_ERROR(ContractError, "contract_violation");
PFT_DEFINE_ERROR(DimensionError, "dimension_mismatch");
PFT_DEFINE_ERROR(ConfigError, "invalid_config");
PFT_DEFINE_ERROR(DataAccessError, "source_data_closed");
PFT_DEFINE_ERROR(DependencyError, "missing_dependency");
PFT_DEFINE_ERROR(IoError, "io_error");
PFT_DEFINE_ERROR(FormatError, "bad_format");
PFT_DEFINE_ERROR(ChecksumError, "crc_mismatch");
PFT_DEFINE_ERROR(VersionError, "version_mismatch");
PFT_DEFINE_ERROR(TruncatedError, "truncated_file");
PFT_DEFINE_ERROR(ManifestError, "manifest_mismatch");

#undef PFT_DEFINE_ERROR

}  // namespace pft
