#pragma once

#include <stdexcept>
#include <string>

namespace cimsim {

enum class ErrorKind {
  input_domain,  // argument outside the operation's domain
  contract,      // caller broke a precondition (mismatched indices, lengths)
  unsupported,   // configuration the hardware cannot express
  fit,           // degenerate calibration data
  data,          // malformed or inconsistent file contents
  invariant,     // a checked runtime invariant failed
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace cimsim
