#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "ssair/ir_text.hpp"
#include "ssair/verify.hpp"

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(SSAIR_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string sample(const char* f) { return std::string(SSAIR_SAMPLES) + "/" + f; }

nlohmann::json js(const Result& r) { return nlohmann::json::parse(r.out); }

}  // namespace

TEST(Cli, CheckExitCodes) {
  EXPECT_EQ(run("check " + sample("mul.ssair")).code, 0);
  auto bad = run("check " + sample("bad_dominance.ssair"));
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(run("check /nonexistent/file.ssair").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("run " + sample("mul.ssair")).code, 2);
}

TEST(Cli, RunMul) {
  auto r = run("run " + sample("mul.ssair") + " --entry mul --args '[2.0, 3.0]'");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(js(r), 6.0);
}

TEST(Cli, BadInvocationIsUsageError) {
  EXPECT_EQ(run("run " + sample("mul.ssair") + " --entry mul --args '[2.0]'").code, 2);
  EXPECT_EQ(run("run " + sample("mul.ssair") + " --entry nope --args '[]'").code, 2);
  EXPECT_EQ(run("run " + sample("mul.ssair") + " --entry mul --args 'not json'").code, 2);
}

TEST(Cli, FailuresExitOne) {
  auto tmp = std::filesystem::temp_directory_path() / "ssair_cli_fail.ssair";
  std::ofstream(tmp) << R"(
func @lg(%x: f64) -> f64 {
^entry:
  %y = log %x
  ret %y
}

func @sq(%a: f64) -> f64 {
^entry:
  %r = mul %a, %a
  ret %r
}

func @jvp_user(%x: tensor<2xf64>) -> f64 {
^entry:
  %j = fused_jvp @sq %x
  %s = reduce_sum %j {axis = all}
  ret %s
}
)";
  EXPECT_EQ(run("run " + tmp.string() + " --entry lg --args '[-1.0]'").code, 1);
  auto g = run("grad " + tmp.string() + " --entry jvp_user --emit-ir");
  EXPECT_EQ(g.code, 1);
  std::filesystem::remove(tmp);
}

TEST(Cli, GradMul) {
  auto r = run("grad " + sample("mul.ssair") + " --entry mul --args '[2.0, 3.0]'");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(js(r), (nlohmann::json{{"x", 3.0}, {"y", 2.0}}));
  auto s = run("grad " + sample("mul.ssair") + " --entry mul --args '[2.0, 3.0]' --seeds '[2.0]'");
  EXPECT_EQ(js(s), (nlohmann::json{{"x", 6.0}, {"y", 4.0}}));
}

TEST(Cli, GradThroughLoopAndFusedMap) {
  auto r = run("grad " + sample("power_loop.ssair") + " --entry power --args '[2.0, 3]'");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(js(r)["x"], 12.0);
  auto f = run("grad " + sample("fused.ssair") +
               " --entry layer --args '[{\"shape\":[3],\"data\":[0,0,0]},"
               "{\"shape\":[3],\"data\":[0,0,0]}]'");
  ASSERT_EQ(f.code, 0);
  EXPECT_EQ(js(f)["x"]["data"], (nlohmann::json{1.0, 1.0, 1.0}));
}

TEST(Cli, EmitIrReparses) {
  auto r = run("grad " + sample("power_loop.ssair") + " --entry power --emit-ir");
  ASSERT_EQ(r.code, 0);
  auto m = ssair::parse_ir(r.out);
  EXPECT_TRUE(ssair::verify(m).empty());
  EXPECT_NE(m.find("power__pb"), nullptr);
}

TEST(Cli, PrintIsIdempotent) {
  auto a = run("print " + sample("fused.ssair"));
  ASSERT_EQ(a.code, 0);
  auto tmp = std::filesystem::temp_directory_path() / "ssair_cli_print.ssair";
  std::ofstream(tmp) << a.out;
  EXPECT_EQ(run("print " + tmp.string()).out, a.out);
  std::filesystem::remove(tmp);
}

TEST(Cli, Gradcheck) {
  auto r = run("gradcheck " + sample("power_loop.ssair") + " --entry power --trials 5");
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(js(r)["pass"].get<bool>());
  EXPECT_EQ(run("gradcheck " + sample("mul.ssair") + " --entry mul --trials 5 --fault-mul").code, 1);
  EXPECT_EQ(run("gradcheck " + sample("mul.ssair") + " --entry mul --trials 0").code, 2);
}

TEST(Cli, Batch) {
  auto r = run("batch " + sample("abs.ssair") + " --entry abs --args '[[-1.0],[2.0],[-3.0]]'");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(js(r), (nlohmann::json{1.0, 2.0, 3.0}));
  auto p = run("batch " + sample("power_loop.ssair") + " --entry power --args '[[2.0,1],[2.0,2],[2.0,3]]'");
  EXPECT_EQ(js(p), (nlohmann::json{2.0, 4.0, 8.0}));
  EXPECT_NE(run("batch " + sample("abs.ssair") + " --entry abs -B 2 --args '[[1.0]]'").code, 0);
}

TEST(Cli, TrainDanDeterministic) {
  const std::string cfg =
      "'{\"epochs\":2,\"n_train\":64,\"n_test\":50,\"n_probe\":50,\"layer_sizes\":[4,3]}'";
  auto a = run("train-dan --config " + cfg), b = run("train-dan --config " + cfg);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  std::istringstream in(a.out);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["epoch"], ++n);
    for (const char* k : {"c_loss", "d_loss", "class_acc", "domain_probe_acc"})
      EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(n, 2);
  EXPECT_EQ(run("train-dan --config '{\"lamda\":1}'").code, 2);
}
