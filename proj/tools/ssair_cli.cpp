#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "ssair/corpus.hpp"
#include "ssair/interp.hpp"
#include "ssair/ir_text.hpp"
#include "ssair/json_io.hpp"
#include "ssair/nn_train.hpp"
#include "ssair/oracle.hpp"
#include "ssair/reverse_ad.hpp"
#include "ssair/spmd.hpp"
#include "ssair/verify.hpp"

using namespace ssair;
using nlohmann::json;

namespace {

// exit 2
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(what + " is not valid JSON: " + e.what());
  }
}

ProgramModule load(const std::string& path) { return parse_ir(read_file(path)); }

const Function& entry_of(const ProgramModule& m, const std::string& name) {
  const Function* f = m.find(name);
  if (!f) throw UsageError("no function @" + name);
  return *f;
}

std::vector<RuntimeValue> read_args(const json& j, const Function& f) {
  json a = j;
  if (!a.is_array() && f.params.size() == 1) a = json::array({a});
  if (!a.is_array() || a.size() != f.params.size())
    throw UsageError("@" + f.name + " takes " + std::to_string(f.params.size()) + " arguments");
  std::vector<RuntimeValue> out;
  for (size_t i = 0; i < a.size(); ++i) {
    try {
      out.push_back(value_from_json(a[i], f.type(f.params[i])));
    } catch (const RuntimeError& e) {
      throw UsageError("argument " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

json results_json(const std::vector<RuntimeValue>& r) {
  if (r.size() == 1) return value_to_json(r[0]);
  json a = json::array();
  for (auto& v : r) a.push_back(value_to_json(v));
  return a;
}

std::vector<RuntimeValue> default_seeds(const Function& f) {
  std::vector<RuntimeValue> s;
  for (auto& t : f.results)
    if (t.is_f64()) s.push_back(1.0);
    else if (t.is_tensor()) s.push_back(DenseTensor::filled(t.shape, 1.0));
  return s;
}

std::vector<RuntimeValue> read_seeds(const std::string& text, const Function& f) {
  if (text.empty()) return default_seeds(f);
  json j = parse_json(text, "--seeds");
  if (!j.is_array()) j = json::array({j});
  std::vector<ValueType> diff;
  for (auto& t : f.results)
    if (t.is_float()) diff.push_back(t);
  if (j.size() != diff.size())
    throw UsageError("expected " + std::to_string(diff.size()) + " seeds, one per float result");
  std::vector<RuntimeValue> s;
  for (size_t i = 0; i < j.size(); ++i) {
    try {
      s.push_back(value_from_json(j[i], diff[i]));
    } catch (const RuntimeError& e) {
      throw UsageError("seed " + std::to_string(i) + ": " + e.what());
    }
  }
  return s;
}

int cmd_check(const std::string& file) {
  auto text = read_file(file);
  ProgramModule m;
  try {
    m = parse_ir(text);
  } catch (const ParseError& e) {
    std::cerr << file << ":" << e.what() << "\n";
    return 1;
  }
  auto diags = verify(m);
  for (auto& d : diags) std::cerr << d.str() << "\n";
  return diags.empty() ? 0 : 1;
}

struct GradcheckReport {
  int64_t trials = 0;
  double tape = 0, fd = 0;
};

GradcheckReport gradcheck(const ProgramModule& m, const std::string& entry, int64_t trials,
                          uint64_t seed, bool fault) {
  AdOptions opts;
  opts.fault_mul = fault;
  auto ap = build_adjoint(m, entry, opts);
  const Function& f = m.get(entry);
  std::mt19937_64 rng(seed);
  GradcheckReport r;
  int64_t attempts = 0;
  while (r.trials < trials) {
    if (++attempts > 20 * trials) throw RuntimeError("could not find inputs inside the function's domain");
    auto args = random_args(f, rng);
    auto seeds = default_seeds(f);
    std::vector<std::optional<RuntimeValue>> os(seeds.begin(), seeds.end());
    GradResult g;
    try {
      g = grad(ap, args, seeds);
    } catch (const DomainError&) {
      continue;
    }
    auto tb = tape_backprop(trace_eval(m, entry, args), os);
    auto fd = finite_diff_grad(m, entry, args, os);
    for (auto& c : g.cotangents) {
      r.tape = std::max(r.tape, relative_error(c.value, *tb[c.param_index]));
      r.fd = std::max(r.fd, relative_error(c.value, *fd[c.param_index]));
    }
    ++r.trials;
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ssair: SSA IR toolkit with reverse-mode AD and SPMD batching"};
  app.require_subcommand(1);
  std::string file, entry, args_text, seeds_text, config_text, out_path;
  int64_t trials = 10, lanes = 0;
  uint64_t seed = 0;
  bool emit_ir = false, fault = false;

  auto* check = app.add_subcommand("check", "parse and verify a module");
  check->add_option("file", file, "IR file")->required();

  auto* print = app.add_subcommand("print", "print a module in canonical form");
  print->add_option("file", file, "IR file")->required();

  auto* run = app.add_subcommand("run", "evaluate a function");
  run->add_option("file", file, "IR file")->required();
  run->add_option("--entry", entry, "function name")->required();
  run->add_option("--args", args_text, "JSON array of arguments")->required();

  auto* gradc = app.add_subcommand("grad", "reverse-mode gradient");
  gradc->add_option("file", file, "IR file")->required();
  gradc->add_option("--entry", entry, "function name")->required();
  gradc->add_option("--args", args_text, "JSON array of arguments");
  gradc->add_option("--seeds", seeds_text, "JSON array, one seed per float result (default 1)");
  gradc->add_flag("--emit-ir", emit_ir, "print the adjoint module instead of gradients");

  auto* gcheck = app.add_subcommand("gradcheck", "compare AD with the tape and finite differences");
  gcheck->add_option("file", file, "IR file")->required();
  gcheck->add_option("--entry", entry, "function name")->required();
  gcheck->add_option("--trials", trials, "number of random inputs");
  gcheck->add_option("--seed", seed, "random seed");
  gcheck->add_flag("--fault-mul", fault)->group("");

  auto* batch = app.add_subcommand("batch", "run a function over a batch of inputs");
  batch->add_option("file", file, "IR file")->required();
  batch->add_option("--entry", entry, "function name")->required();
  batch->add_option("-B", lanes, "batch size (default: number of argument sets)");
  batch->add_option("--args", args_text, "JSON array with one argument set per lane")->required();

  auto* train_dan = app.add_subcommand("train-dan", "train the two-headed demo model");
  train_dan->add_option("--config", config_text, "JSON object or path to a JSON file");
  train_dan->add_option("--out", out_path, "metrics file (JSON lines; default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*check) return cmd_check(file);
    if (*print) {
      std::cout << print_ir(load(file));
      return 0;
    }
    if (*run) {
      auto m = load(file);
      const auto& f = entry_of(m, entry);
      auto a = read_args(parse_json(args_text, "--args"), f);
      std::cout << results_json(eval_function(m, entry, a)).dump() << "\n";
      return 0;
    }
    if (*gradc) {
      auto m = load(file);
      const auto& f = entry_of(m, entry);
      verify_or_throw(m);
      auto ap = build_adjoint(m, entry);
      if (emit_ir) {
        std::cout << print_ir(ap.module);
        return 0;
      }
      if (args_text.empty()) throw UsageError("--args is required unless --emit-ir is given");
      auto a = read_args(parse_json(args_text, "--args"), f);
      auto g = grad(ap, a, read_seeds(seeds_text, f));
      json out = json::object();
      for (auto& c : g.cotangents) out[c.name] = value_to_json(c.value);
      std::cout << out.dump() << "\n";
      return 0;
    }
    if (*gcheck) {
      if (trials < 1) throw UsageError("--trials must be at least 1");
      auto m = load(file);
      entry_of(m, entry);
      verify_or_throw(m);
      auto r = gradcheck(m, entry, trials, seed, fault);
      const bool ok = r.tape <= 1e-12 && r.fd <= 1e-5;
      std::cout << json{{"trials", r.trials},
                        {"max_rel_err_tape", r.tape},
                        {"max_rel_err_fd", r.fd},
                        {"pass", ok}}
                       .dump()
                << "\n";
      return ok ? 0 : 1;
    }
    if (*batch) {
      auto m = load(file);
      const auto& f = entry_of(m, entry);
      json all = parse_json(args_text, "--args");
      if (!all.is_array()) throw UsageError("--args must be an array of argument sets");
      if (lanes == 0) lanes = static_cast<int64_t>(all.size());
      if (lanes < 1 || static_cast<size_t>(lanes) != all.size())
        throw UsageError("-B " + std::to_string(lanes) + " does not match " +
                         std::to_string(all.size()) + " argument sets");
      std::vector<std::vector<RuntimeValue>> per_lane;
      for (auto& a : all) per_lane.push_back(read_args(a, f));
      verify_or_throw(m);
      auto bp = vectorize(m, entry, lanes);
      json out = json::array();
      for (auto& r : run_batched(bp, per_lane)) out.push_back(results_json(r));
      std::cout << out.dump() << "\n";
      return 0;
    }
    if (*train_dan) {
      json cj = json::object();
      if (!config_text.empty()) {
        const bool inline_json = config_text.find('{') != std::string::npos;
        cj = parse_json(inline_json ? config_text : read_file(config_text), "--config");
      }
      DANConfig cfg;
      try {
        cfg = DANConfig::from_json(cj);
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
      auto text = metrics_jsonl(train(cfg));
      if (out_path.empty()) {
        std::cout << text;
      } else {
        std::ofstream o(out_path);
        if (!o) throw UsageError("cannot write '" + out_path + "'");
        o << text;
      }
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
