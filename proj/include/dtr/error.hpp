#pragma once

#include <stdexcept>
#include <string>

namespace dtr {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorClass {
  Config,     // bad configuration or usage (exit 2)
  Data,       // schema / structure / domain problems in the input data (exit 3)
  Numerical,  // fitting or positivity failures (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), class_(cls), kind_(std::move(kind)) {}

  ErrorClass error_class() const noexcept { return class_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorClass class_;
  std::string kind_;
};

#define DTR_DEFINE_ERROR(Name, Cls, Tag)                                  \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(Cls, Tag, what) {}     \
  };

DTR_DEFINE_ERROR(SchemaError, ErrorClass::Data, "schema error")
DTR_DEFINE_ERROR(ValueError, ErrorClass::Data, "value error")
DTR_DEFINE_ERROR(DomainError, ErrorClass::Data, "domain error")
DTR_DEFINE_ERROR(StructureError, ErrorClass::Data, "structure error")
DTR_DEFINE_ERROR(KeyError, ErrorClass::Data, "key error")
DTR_DEFINE_ERROR(AlignmentError, ErrorClass::Data, "alignment error")
DTR_DEFINE_ERROR(RangeError, ErrorClass::Config, "range error")
DTR_DEFINE_ERROR(ConfigError, ErrorClass::Config, "config error")
DTR_DEFINE_ERROR(FormatError, ErrorClass::Config, "format error")
DTR_DEFINE_ERROR(FormulaSyntaxError, ErrorClass::Config, "syntax error")
DTR_DEFINE_ERROR(UnsupportedError, ErrorClass::Config, "unsupported operation")
DTR_DEFINE_ERROR(FitError, ErrorClass::Numerical, "fit error")
DTR_DEFINE_ERROR(PositivityError, ErrorClass::Numerical, "positivity error")

#undef DTR_DEFINE_ERROR

// Throws an error of the same type with `context` prepended to the message.
[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context);

}  // namespace dtr
