#include "croco/error.hpp"

#include <utility>

namespace croco {

namespace {

std::string format_message(const std::string& module, const std::string& field,
                           const std::string& message, const std::string& remedy) {
  std::string out = "[" + module + "]";
  if (!field.empty()) out += " " + field + ":";
  out += " " + message;
  if (!remedy.empty()) out += " (" + remedy + ")";
  return out;
}

}  // namespace

Error::Error(std::string module, std::string field, const std::string& message,
             const std::string& remedy)
    : std::runtime_error(format_message(module, field, message, remedy)),
      module_(std::move(module)),
      field_(std::move(field)) {}

}  // namespace croco
