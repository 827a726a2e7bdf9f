#pragma once

#include <string>
#include <string_view>

#include "ssair/ir.hpp"

namespace ssair {

class ParseError : public IrError {
 public:
  ParseError(int line, int column, const std::string& msg)
      : IrError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                msg),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_, column_;
};

/// Parses textual IR. Does not run `verify`; result types are inferred where
/// possible.
ProgramModule parse_ir(std::string_view text);

/// Canonical text. Values keep unique non-numeric names; all others print as
/// their definition-order index. Functions print in insertion order.
std::string print_ir(const ProgramModule& m);
std::string print_function(const Function& f);

/// Structural equality ignoring value ids and value/block names.
bool modules_equivalent(const ProgramModule& a, const ProgramModule& b);

}  // namespace ssair
