#pragma once

#include <stdexcept>
#include <string>

namespace disasm {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  Input = 2,         // malformed or invalid input data
  ResourceCap = 3,   // configured size/step cap exceeded
  Incompatible = 4,  // artifact does not match the model it is used with
  Model = 5,         // internal model inconsistency
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_input(const std::string& msg) { throw Error(ErrorKind::Input, msg); }
[[noreturn]] inline void fail_model(const std::string& msg) { throw Error(ErrorKind::Model, msg); }

}  // namespace disasm
