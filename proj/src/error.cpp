#include "dtr/error.hpp"

namespace dtr {

void rethrow_with_context(const Error& e, const std::string& context) {
  std::string msg = e.what();
  const std::string prefix = e.kind() + ": ";
  if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
  msg = context + ": " + msg;
  const auto& k = e.kind();
  if (k == "schema error") throw SchemaError(msg);
  if (k == "value error") throw ValueError(msg);
  if (k == "domain error") throw DomainError(msg);
  if (k == "structure error") throw StructureError(msg);
  if (k == "key error") throw KeyError(msg);
  if (k == "alignment error") throw AlignmentError(msg);
  if (k == "range error") throw RangeError(msg);
  if (k == "config error") throw ConfigError(msg);
  if (k == "format error") throw FormatError(msg);
  if (k == "syntax error") throw FormulaSyntaxError(msg);
  if (k == "unsupported operation") throw UnsupportedError(msg);
  if (k == "fit error") throw FitError(msg);
  if (k == "positivity error") throw PositivityError(msg);
  throw Error(e.error_class(), k, msg);
}

}  // namespace dtr
