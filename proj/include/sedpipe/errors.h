#pragma once

#include <stdexcept>
#include <string>

namespace sed {

// Base of every error thrown by the library. `is_usage()` separates
// configuration/usage mistakes (CLI exit code 2) from runtime failures (1).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, bool usage = false)
      : std::runtime_error(what), usage_(usage) {}
  bool is_usage() const { return usage_; }

 private:
  bool usage_;
};

#define SED_DEFINE_ERROR(Name, usage)                                   \
  class Name : public Error {                                           \
   public:                                                               \
    explicit Name(const std::string& what) : Error(what, usage) {}      \
  };

SED_DEFINE_ERROR(FormatError, false)
SED_DEFINE_ERROR(UnsupportedError, false)
SED_DEFINE_ERROR(ParseError, false)
SED_DEFINE_ERROR(VocabularyError, false)
SED_DEFINE_ERROR(RangeError, false)
SED_DEFINE_ERROR(ShapeError, false)
SED_DEFINE_ERROR(SizeError, false)
SED_DEFINE_ERROR(ChannelError, false)
SED_DEFINE_ERROR(StateError, false)
SED_DEFINE_ERROR(ClassError, false)
SED_DEFINE_ERROR(UndefinedReferenceError, false)
SED_DEFINE_ERROR(ManifestError, false)
SED_DEFINE_ERROR(IoError, false)
SED_DEFINE_ERROR(ConfigError, true)
SED_DEFINE_ERROR(UsageError, true)

#undef SED_DEFINE_ERROR

}  // namespace sed
