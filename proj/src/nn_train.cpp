#include "ssair/nn_train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "ssair/interp.hpp"
#include "ssair/ir_text.hpp"
#include "ssair/json_io.hpp"

namespace ssair {

namespace {

std::string dims(std::initializer_list<int64_t> ds) {
  std::string s = "tensor<";
  for (auto d : ds) s += std::to_string(d) + "x";
  return s + "f64>";
}

std::string num(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  std::string s = os.str();
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

constexpr const char* kScalarFns = R"(
func @tanh_add(%z: f64, %b: f64) -> f64 {
^entry:
  %s = add %z, %b
  %r = tanh %s
  ret %r
}

func @flip(%y: f64) -> f64 {
^entry:
  %one = const f64 1.0
  %r = sub %one, %y
  ret %r
}

// binary cross-entropy of one prediction, clamped away from 0 and 1
func @bce(%p: f64, %y: f64) -> f64 {
^entry:
  %lo = const f64 1e-7
  %hi = const f64 0.9999999
  %small = lt %p, %lo
  br %small, ^low, ^mid
^low:
  jmp ^clamped(%lo)
^mid:
  %big = gt %p, %hi
  br %big, ^high, ^keep
^high:
  jmp ^clamped(%hi)
^keep:
  jmp ^clamped(%p)
^clamped(%q: f64):
  %one = const f64 1.0
  %lq = log %q
  %omq = sub %one, %q
  %lomq = log %omq
  %a = mul %y, %lq
  %omy = sub %one, %y
  %b = mul %omy, %lomq
  %s = add %a, %b
  %r = neg %s
  ret %r
}
)";

std::string param_list(const std::vector<int64_t>& sizes) {
  std::string s;
  for (size_t i = 1; i < sizes.size(); ++i)
    s += "%W" + std::to_string(i) + ": " + dims({sizes[i], sizes[i - 1]}) + ", %b" +
         std::to_string(i) + ": " + dims({sizes[i]}) + ", ";
  const int64_t h = sizes.back();
  for (const char* head : {"c", "d"})
    s += std::string("%W") + head + ": " + dims({1, h}) + ", %b" + head + ": " + dims({1}) + ", ";
  return s;
}

// Body computing %H (features) and %pc, %pd (head outputs, shape n) from %X (n x d).
std::string forward_body(const std::vector<int64_t>& sizes, int64_t n) {
  std::string s;
  std::string prev = "%X";
  for (size_t i = 1; i < sizes.size(); ++i) {
    auto k = std::to_string(i);
    s += "  %WT" + k + " = transpose %W" + k + "\n";
    s += "  %Z" + k + " = matmul " + prev + ", %WT" + k + "\n";
    s += "  %H" + k + " = fused_map @tanh_add %Z" + k + ", %b" + k + "\n";
    prev = "%H" + k;
  }
  s += "  %H = reshape " + prev + " {to = " + dims({n, sizes.back()}) + "}\n";
  for (const char* head : {"c", "d"}) {
    std::string h = head;
    s += "  %WT" + h + " = transpose %W" + h + "\n";
    s += "  %z" + h + " = matmul %H, %WT" + h + "\n";
    s += "  %zb" + h + " = add %z" + h + ", %b" + h + "\n";
    s += "  %zv" + h + " = reshape %zb" + h + " {to = " + dims({n}) + "}\n";
    s += "  %p" + h + " = sigmoid %zv" + h + "\n";
  }
  return s;
}

void check_sizes(const std::vector<int64_t>& sizes) {
  if (sizes.size() < 2) throw IrError("need an input size and at least one trunk layer");
  for (auto d : sizes)
    if (d < 1) throw IrError("layer sizes must be positive");
}

DenseTensor axpy(const DenseTensor& p, double a, const DenseTensor& g) {
  return elementwise_zip([a](std::span<const double> v) { return v[0] - a * v[1]; }, {&p, &g});
}

double sigmoid_d(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Batch {
  DenseTensor X, yc, yd;
};

Batch pack(std::span<const SyntheticSample> data) {
  const int64_t n = static_cast<int64_t>(data.size());
  const int64_t d = data[0].x.numel();
  std::vector<double> x, yc, yd;
  x.reserve(static_cast<size_t>(n * d));
  for (const auto& s : data) {
    x.insert(x.end(), s.x.data().begin(), s.x.data().end());
    yc.push_back(s.y_c);
    yd.push_back(s.y_d);
  }
  return {DenseTensor({n, d}, std::move(x)), DenseTensor({n}, std::move(yc)),
          DenseTensor({n}, std::move(yd))};
}

std::vector<int64_t> sizes_of(const ModelParams& p) {
  std::vector<int64_t> s{p.trunk.at(0).W.shape()[1]};
  for (auto& l : p.trunk) s.push_back(l.W.shape()[0]);
  return s;
}

// (pc, pd, features) for every sample
std::vector<RuntimeValue> evaluate(const ModelParams& p, std::span<const SyntheticSample> data) {
  auto sizes = sizes_of(p);
  ProgramModule m = parse_ir(kScalarFns);
  add_minibatch_ir(m, sizes, static_cast<int64_t>(data.size()));
  auto args = p.flatten();
  args.push_back(pack(data).X);
  return eval_function(m, "dan_eval", args);
}

}  // namespace

std::vector<RuntimeValue> ModelParams::flatten() const {
  std::vector<RuntimeValue> out;
  for (const auto* group : {&trunk, &class_head, &domain_head})
    for (const auto& l : *group) {
      out.push_back(l.W);
      out.push_back(l.b);
    }
  return out;
}

ModelParams ModelParams::unflatten(const ModelParams& like, std::span<const RuntimeValue> flat) {
  ModelParams p = like;
  size_t k = 0;
  for (auto* group : {&p.trunk, &p.class_head, &p.domain_head})
    for (auto& l : *group) {
      l.W = as_tensor(flat[k++]);
      l.b = as_tensor(flat[k++]);
    }
  return p;
}

void DANConfig::validate() const {
  auto bad = [](const std::string& m) { throw std::invalid_argument("invalid config: " + m); };
  if (!(lambda >= 0)) bad("lambda must be >= 0");
  if (!(lr > 0)) bad("lr must be > 0");
  if (epochs < 0) bad("epochs must be >= 0");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (!(rho >= 0 && rho <= 1)) bad("rho must lie in [0, 1]");
  if (n_train < 1 || n_test < 1 || n_probe < 2) bad("sample counts too small");
  if (layer_sizes.size() < 2) bad("layer_sizes needs an input size and a trunk width");
  for (auto d : layer_sizes)
    if (d < 2) bad("layer sizes must be >= 2");
}

DANConfig DANConfig::from_json(const nlohmann::json& j) {
  DANConfig c;
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (auto& [k, v] : j.items()) {
    if (k == "lambda") c.lambda = v.get<double>();
    else if (k == "lr") c.lr = v.get<double>();
    else if (k == "epochs") c.epochs = v.get<int64_t>();
    else if (k == "batch_size") c.batch_size = v.get<int64_t>();
    else if (k == "seed") c.seed = v.get<uint64_t>();
    else if (k == "rho") c.rho = v.get<double>();
    else if (k == "layer_sizes") c.layer_sizes = v.get<std::vector<int64_t>>();
    else if (k == "n_train") c.n_train = v.get<int64_t>();
    else if (k == "n_test") c.n_test = v.get<int64_t>();
    else if (k == "n_probe") c.n_probe = v.get<int64_t>();
    else if (k == "class_shift") c.class_shift = v.get<double>();
    else if (k == "domain_shift") c.domain_shift = v.get<double>();
    else if (k == "noise_sd") c.noise_sd = v.get<double>();
    else throw std::invalid_argument("unknown config key '" + k + "'");
  }
  c.validate();
  return c;
}

nlohmann::json DANConfig::to_json() const {
  return {{"lambda", lambda},   {"lr", lr},
          {"epochs", epochs},   {"batch_size", batch_size},
          {"seed", seed},       {"rho", rho},
          {"layer_sizes", layer_sizes}, {"n_train", n_train},
          {"n_test", n_test},   {"n_probe", n_probe},
          {"class_shift", class_shift}, {"domain_shift", domain_shift},
          {"noise_sd", noise_sd}};
}

std::vector<SyntheticSample> make_synthetic(const DANConfig& cfg, int64_t n, double rho,
                                            uint64_t stream) {
  std::seed_seq seq{static_cast<uint32_t>(cfg.seed), static_cast<uint32_t>(cfg.seed >> 32),
                    static_cast<uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const int64_t d = cfg.layer_sizes.at(0);
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    SyntheticSample s;
    s.y_c = u(rng) < 0.5 ? 1 : 0;
    s.y_d = u(rng) < rho ? s.y_c : 1 - s.y_c;
    std::vector<double> x(static_cast<size_t>(d));
    x[0] = (2 * s.y_c - 1) * cfg.class_shift + g(rng);
    x[1] = (2 * s.y_d - 1) * cfg.domain_shift + g(rng);
    for (int64_t k = 2; k < d; ++k) x[static_cast<size_t>(k)] = cfg.noise_sd * g(rng);
    s.x = DenseTensor({d}, std::move(x));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SyntheticSample> make_synthetic(const DANConfig& cfg) {
  return make_synthetic(cfg, cfg.n_train, cfg.rho, 0);
}

ProgramModule build_model_ir(const std::vector<int64_t>& sizes) {
  check_sizes(sizes);
  std::string t = kScalarFns;
  t += "\nfunc @model_forward(" + param_list(sizes) + "%x: " + dims({sizes[0]}) +
       ") -> (f64, f64) {\n^entry:\n";
  t += "  %X = reshape %x {to = " + dims({1, sizes[0]}) + "}\n";
  t += forward_body(sizes, 1);
  t += "  %yc = reshape %pc {to = f64}\n  %yd = reshape %pd {to = f64}\n  ret %yc, %yd\n}\n";
  return parse_ir(t);
}

void add_minibatch_ir(ProgramModule& m, const std::vector<int64_t>& sizes, int64_t n) {
  check_sizes(sizes);
  if (n < 1) throw IrError("minibatch needs at least one row");
  const std::string X = "%X: " + dims({n, sizes[0]});
  std::string t;
  t += "func @dan_loss(" + param_list(sizes) + X + ", %yc: " + dims({n}) + ", %yd: " +
       dims({n}) + ", %lambda: f64) -> (f64, f64) {\n^entry:\n";
  t += forward_body(sizes, n);
  t += "  %invn = const f64 " + num(1.0 / static_cast<double>(n)) + "\n";
  t += "  %ec = fused_map @bce %pc, %yc\n  %sc = reduce_sum %ec {axis = all}\n"
       "  %lc = mul %sc, %invn\n";
  t += "  %ydf = fused_map @flip %yd\n  %ef = fused_map @bce %pd, %ydf\n"
       "  %sf = reduce_sum %ef {axis = all}\n  %lf = mul %sf, %invn\n";
  t += "  %ed = fused_map @bce %pd, %yd\n  %sd = reduce_sum %ed {axis = all}\n"
       "  %d_loss = mul %sd, %invn\n";
  t += "  %conf = mul %lambda, %lf\n  %c_loss = add %lc, %conf\n  ret %c_loss, %d_loss\n}\n\n";
  t += "func @dan_eval(" + param_list(sizes) + X + ") -> (" + dims({n}) + ", " + dims({n}) +
       ", " + dims({n, sizes.back()}) + ") {\n^entry:\n";
  t += forward_body(sizes, n);
  t += "  ret %pc, %pd, %H\n}\n";
  ProgramModule add = parse_ir(std::string(kScalarFns) + t);
  for (auto& f : add.functions) m.put(std::move(f));
}

ModelParams init_params(const std::vector<int64_t>& sizes, uint64_t seed) {
  check_sizes(sizes);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::normal_distribution<double> g(0.0, 1.0);
  auto layer = [&](int64_t out, int64_t in) {
    std::vector<double> w(static_cast<size_t>(out * in));
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& x : w) x = scale * g(rng);
    return DenseLayerParams{DenseTensor({out, in}, std::move(w)), DenseTensor::zeros({out})};
  };
  ModelParams p;
  for (size_t i = 1; i < sizes.size(); ++i) p.trunk.push_back(layer(sizes[i], sizes[i - 1]));
  p.class_head.push_back(layer(1, sizes.back()));
  p.domain_head.push_back(layer(1, sizes.back()));
  return p;
}

DanLoss build_dan_loss(const std::vector<int64_t>& sizes, int64_t rows) {
  ProgramModule m = parse_ir(kScalarFns);
  add_minibatch_ir(m, sizes, rows);
  return {build_adjoint(m, "dan_loss"), rows};
}

std::vector<RuntimeValue> dan_gradient(const DanLoss& loss, const ModelParams& p,
                                       std::span<const SyntheticSample> batch, double lambda,
                                       StepMetrics* metrics) {
  if (batch.empty()) throw RuntimeError("empty minibatch");
  if (static_cast<int64_t>(batch.size()) != loss.rows)
    throw RuntimeError("minibatch has " + std::to_string(batch.size()) + " rows, loss expects " +
                       std::to_string(loss.rows));
  const auto& ap = loss.adjoint;
  auto args = p.flatten();
  const size_t np = args.size();
  Batch b = pack(batch);
  args.insert(args.end(), {b.X, b.yc, b.yd, lambda});
  auto fwd = eval_function(ap.module, ap.aug, args);
  if (metrics) *metrics = {as_f64(fwd[0]), as_f64(fwd[1])};
  // back-propagate c_loss and d_loss separately, then accumulate
  std::vector<std::optional<DenseTensor>> total(np);
  for (auto [sc, sd] : {std::pair{1.0, 0.0}, std::pair{0.0, 1.0}}) {
    std::vector<RuntimeValue> pb_args{fwd[2], fwd[3], sc, sd};
    auto cot = eval_function(ap.module, ap.pb, pb_args);
    for (size_t k = 0; k < ap.diff_params.size(); ++k) {
      const size_t i = ap.diff_params[k];
      if (i >= np) continue;
      const auto& c = as_tensor(cot[k]);
      total[i] = total[i] ? axpy(*total[i], -1.0, c) : c;
    }
  }
  std::vector<RuntimeValue> out;
  for (auto& t : total) out.push_back(std::move(*t));
  return out;
}

ModelParams dan_step(const DanLoss& loss, const ModelParams& p,
                     std::span<const SyntheticSample> batch, const DANConfig& cfg,
                     StepMetrics* metrics) {
  auto g = dan_gradient(loss, p, batch, cfg.lambda, metrics);
  auto flat = p.flatten();
  for (size_t i = 0; i < flat.size(); ++i) flat[i] = axpy(as_tensor(flat[i]), cfg.lr, as_tensor(g[i]));
  return ModelParams::unflatten(p, flat);
}

double class_accuracy(const ModelParams& p, std::span<const SyntheticSample> data) {
  auto out = evaluate(p, data);
  const auto& pc = as_tensor(out[0]);
  int64_t hit = 0;
  for (size_t i = 0; i < data.size(); ++i)
    hit += ((pc[static_cast<int64_t>(i)] > 0.5) == (data[i].y_c == 1));
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

double domain_probe_accuracy(const ModelParams& p, std::span<const SyntheticSample> fit,
                             std::span<const SyntheticSample> eval) {
  const auto hf = as_tensor(evaluate(p, fit)[2]);
  const auto he = as_tensor(evaluate(p, eval)[2]);
  const int64_t n = hf.shape()[0], k = hf.shape()[1];
  std::vector<double> mean(static_cast<size_t>(k)), sd(static_cast<size_t>(k));
  for (int64_t j = 0; j < k; ++j) {
    double s = 0, ss = 0;
    for (int64_t i = 0; i < n; ++i) s += hf[i * k + j];
    const double mu = s / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) ss += (hf[i * k + j] - mu) * (hf[i * k + j] - mu);
    mean[static_cast<size_t>(j)] = mu;
    sd[static_cast<size_t>(j)] = std::max(std::sqrt(ss / static_cast<double>(n)), 1e-12);
  }
  auto feature = [&](const DenseTensor& h, int64_t i, int64_t j) {
    return (h[i * k + j] - mean[static_cast<size_t>(j)]) / sd[static_cast<size_t>(j)];
  };
  // logistic regression, full-batch gradient descent
  std::vector<double> w(static_cast<size_t>(k + 1), 0.0);
  for (int it = 0; it < 500; ++it) {
    std::vector<double> gw(w.size(), 0.0);
    for (int64_t i = 0; i < n; ++i) {
      double z = w[static_cast<size_t>(k)];
      for (int64_t j = 0; j < k; ++j) z += w[static_cast<size_t>(j)] * feature(hf, i, j);
      const double r = sigmoid_d(z) - fit[static_cast<size_t>(i)].y_d;
      for (int64_t j = 0; j < k; ++j) gw[static_cast<size_t>(j)] += r * feature(hf, i, j);
      gw[static_cast<size_t>(k)] += r;
    }
    for (size_t j = 0; j < w.size(); ++j) w[j] -= 0.5 * gw[j] / static_cast<double>(n);
  }
  int64_t hit = 0;
  const int64_t ne = he.shape()[0];
  for (int64_t i = 0; i < ne; ++i) {
    double z = w[static_cast<size_t>(k)];
    for (int64_t j = 0; j < k; ++j) z += w[static_cast<size_t>(j)] * feature(he, i, j);
    hit += ((z > 0) == (eval[static_cast<size_t>(i)].y_d == 1));
  }
  return static_cast<double>(hit) / static_cast<double>(ne);
}

MetricsHistory train(const DANConfig& cfg) {
  cfg.validate();
  MetricsHistory h;
  h.final_params = init_params(cfg.layer_sizes, cfg.seed);
  if (cfg.epochs == 0) return h;
  const auto train_set = make_synthetic(cfg);
  const auto test_set = make_synthetic(cfg, cfg.n_test, cfg.rho, 1);
  // the probe sees balanced data, so y_d is not predictable from y_c
  const auto probe_fit = make_synthetic(cfg, cfg.n_probe, 0.5, 2);
  const auto probe_eval = make_synthetic(cfg, cfg.n_probe, 0.5, 3);

  std::map<int64_t, DanLoss> losses;
  auto loss_for = [&](int64_t rows) -> const DanLoss& {
    auto it = losses.find(rows);
    if (it == losses.end()) it = losses.emplace(rows, build_dan_loss(cfg.layer_sizes, rows)).first;
    return it->second;
  };
  std::mt19937_64 order_rng(cfg.seed + 4);
  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  ModelParams p = h.final_params;
  for (int64_t e = 1; e <= cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double cl = 0, dl = 0;
    int64_t batches = 0;
    std::vector<SyntheticSample> batch;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      batch.clear();
      for (size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      StepMetrics sm;
      p = dan_step(loss_for(static_cast<int64_t>(batch.size())), p, batch, cfg, &sm);
      cl += sm.c_loss;
      dl += sm.d_loss;
      ++batches;
    }
    EpochMetrics em;
    em.epoch = e;
    em.c_loss = cl / static_cast<double>(batches);
    em.d_loss = dl / static_cast<double>(batches);
    em.class_acc = class_accuracy(p, test_set);
    em.domain_probe_acc = domain_probe_accuracy(p, probe_fit, probe_eval);
    h.epochs.push_back(em);
  }
  h.final_params = p;
  return h;
}

std::string metrics_jsonl(const MetricsHistory& h) {
  std::string out;
  for (const auto& e : h.epochs) {
    nlohmann::ordered_json j{{"epoch", e.epoch},
                     {"c_loss", e.c_loss},
                     {"d_loss", e.d_loss},
                     {"class_acc", e.class_acc},
                     {"domain_probe_acc", e.domain_probe_acc}};
    out += j.dump() + "\n";
  }
  return out;
}

nlohmann::json params_to_json(const ModelParams& p) {
  auto group = [](const std::vector<DenseLayerParams>& ls) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& l : ls) a.push_back({{"W", value_to_json(l.W)}, {"b", value_to_json(l.b)}});
    return a;
  };
  return {{"trunk", group(p.trunk)},
          {"class_head", group(p.class_head)},
          {"domain_head", group(p.domain_head)}};
}

}  // namespace ssair
