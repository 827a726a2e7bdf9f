#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ssair/ir.hpp"

namespace ssair {

struct CorpusOptions {
  int max_depth = 3;  // nesting of ifs and loops
  int max_trips = 8;
  int max_dim = 6;
  bool allow_tensors = true;
};

/// A random structured program: data-dependent branches, counted loops,
/// calls, tensor ops and fused maps over generated scalar functions. Values
/// are kept bounded so derivatives stay well conditioned.
struct CorpusProgram {
  ProgramModule module;
  std::string entry;
};

CorpusProgram generate_program(uint64_t seed, const CorpusOptions& opts = {});

/// f64 ~ U(-2, 2), tensor elements ~ U(-1, 1), i64 ~ U{0..8}, fair bools.
std::vector<RuntimeValue> random_args(const Function& f, std::mt19937_64& rng);

}  // namespace ssair
