#pragma once

#include <string>
#include <vector>

#include "ssair/ir.hpp"

namespace ssair {

struct Diagnostic {
  std::string function;
  std::string block;  // empty for function- or module-level problems
  std::string message;

  std::string str() const;
};

/// Checks SSA well-formedness, types, CFG shape and the call graph.
/// An empty result means the module is valid.
std::vector<Diagnostic> verify(const ProgramModule& m);
std::vector<Diagnostic> verify_function(const Function& f, const ProgramModule& m);

/// Throws IrError carrying the first diagnostic.
void verify_or_throw(const ProgramModule& m);

}  // namespace ssair
