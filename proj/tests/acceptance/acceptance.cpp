// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conv_oracle.hpp"
#include "detcnn/detrand.hpp"
#include "detcnn/gradcam.hpp"
#include "detcnn/imageio.hpp"
#include "detcnn/model_zoo.hpp"
#include "detcnn/weights_io.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace detcnn;
namespace fs = std::filesystem;
using support::quoted;

namespace {

const std::string kCli = DETCNN_CLI_PATH;
const fs::path kWork = ACCEPTANCE_WORKDIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct TrainRun {
  int code = -1;
  std::string output;
  std::string fingerprint;
  double seconds = 0;
  fs::path dir;
};

TrainRun train(const std::string& name, const std::string& args) {
  TrainRun r;
  r.dir = kWork / name;
  fs::remove_all(r.dir);
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = support::run_command(quoted(kCli) + " train " + args + " --out " + quoted(r.dir.string()));
  r.seconds = seconds_since(t0);
  r.code = res.code;
  r.output = res.output;
  const auto at = res.output.find("fingerprint ");
  if (at != std::string::npos) r.fingerprint = res.output.substr(at + 12, 64);
  return r;
}

nlohmann::json manifest(const TrainRun& r) { return nlohmann::json::parse(read_text_file(r.dir / "manifest.txt")); }

double best_val_acc(const TrainRun& r) {
  double best = 0;
  const auto m = manifest(r);
  for (const auto& e : m.at("epochs")) best = std::max(best, e.at("val_acc").get<double>());
  return best;
}

// Runs shared between criteria.
TrainRun g_det_a, g_det_b, g_conv_learn, g_xcp_learn;
const std::string kDetArgs = "--model convnet --synth 128 --pdim 80 --epochs 3 --seed 1001";
const std::string kLearnArgs = "--model convnet --synth 400 --pdim 80 --epochs 10";

Outcome crit1() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t conv = build_convnet(180).count_trainable();
  const std::size_t xcp = build_mini_xception(180, {}, XceptionVariant::cpu_det).count_trainable();
  const double s = seconds_since(t0);
  return {conv == 991041 && xcp == 718849 && s < 1.0, "convnet " + std::to_string(conv) + ", mini-xception " +
                                                          std::to_string(xcp) + ", " + fmt("%.3f s", s)};
}

Outcome crit2() {
  // a 64-pixel ConvNet cannot be built: the fifth 3x3 valid conv would get a 2x2 map
  const auto small = support::run_command(quoted(kCli) + " train --model convnet --synth 128 --pdim 64 --epochs 3 --out " +
                                          quoted((kWork / "pdim64").string()));
  const bool rejected = small.code == 2 && small.output.find("conv5") != std::string::npos;
  g_det_a = train("det_a", kDetArgs);
  g_det_b = train("det_b", kDetArgs);
  if (g_det_a.code != 0 || g_det_b.code != 0) return {false, "train failed: " + g_det_a.output + g_det_b.output};
  const bool same_fp = !g_det_a.fingerprint.empty() && g_det_a.fingerprint == g_det_b.fingerprint;
  const bool same_epochs = read_file(g_det_a.dir / "epochs.ndtxt") == read_file(g_det_b.dir / "epochs.ndtxt");
  const bool fast = g_det_a.seconds < 180 && g_det_b.seconds < 180;
  return {rejected && same_fp && same_epochs && fast,
          std::string("pdim 80 (pdim 64 ") + (rejected ? "rejected naming conv5" : "NOT rejected") + "), fingerprints " +
              (same_fp ? "equal " + g_det_a.fingerprint.substr(0, 16) : "differ") + ", epochs file " +
              (same_epochs ? "identical" : "differs") + ", " + fmt("%.1f s", g_det_a.seconds) + " per run"};
}

Outcome crit3() {
  const TrainRun t1 = train("threads1", kDetArgs + " --threads 1");
  const TrainRun t8 = train("threads8", kDetArgs + " --threads 8");
  if (t1.code != 0 || t8.code != 0) return {false, "train failed"};
  const bool eq = t1.fingerprint == t8.fingerprint && t1.fingerprint == g_det_a.fingerprint;
  return {eq, "threads 1 " + t1.fingerprint.substr(0, 16) + " vs threads 8 " + t8.fingerprint.substr(0, 16)};
}

Outcome crit4() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst64 = 0, worst32 = 0;
  std::string w64, w32;
  bool covered = true;
  for (LayerKind k : kAllLayerKinds) {
    bool found = false;
    for (const auto& c : gradcheck::cases()) found = found || c.cfg.kind == k;
    covered = covered && found;
  }
  for (const auto& c : gradcheck::cases()) {
    const double e64 = gradcheck::run<double>(c).max(), e32 = gradcheck::run<float>(c).max();
    if (e64 > worst64) {
      worst64 = e64;
      w64 = c.name;
    }
    if (e32 > worst32) {
      worst32 = e32;
      w32 = c.name;
    }
  }
  const double s = seconds_since(t0);
  return {covered && worst64 < 1e-6 && worst32 < 1e-2 && s < 30,
          std::to_string(gradcheck::cases().size()) + " cases" + (covered ? " covering every kind" : " MISSING kinds") +
              ", f64 max " + fmt("%.2e", worst64) + " (" + w64 + "), f32 max " + fmt("%.2e", worst32) + " (" + w32 +
              "), " + fmt("%.2f s", s)};
}

Outcome crit5() {
  DetRng rng(2024, "acceptance/conv-instances");
  int ok = 0, sep = 0;
  std::string first_bad;
  for (int i = 0; i < 100; ++i) {
    const auto inst = oracle::random_instance(rng);
    sep += inst.separable;
    std::string detail;
    if (oracle::matches(inst, static_cast<std::uint64_t>(i), &detail)) {
      ++ok;
    } else if (first_bad.empty()) {
      first_bad = detail;
    }
  }
  return {ok == 100, std::to_string(ok) + "/100 bit-exact (" + std::to_string(sep) + " separable)" +
                         (first_bad.empty() ? "" : "; first mismatch: " + first_bad)};
}

void set_param(ModelGraph& g, const std::string& name, std::vector<float> values) {
  for (auto& r : g.trainables()) {
    if (r.qualified_name() == name) std::copy(values.begin(), values.end(), r.param->value.data().begin());
  }
}

Outcome crit6() {
  // zero head: every gradient reaching the maps is zero
  ModelGraph z(Shape{8, 8, 3});
  z.add("conv", LayerConfig::conv2d(4, 3, 1, Padding::same, true, 2), {kInputNode});
  z.add("relu", LayerConfig::relu(), {"conv"});
  z.add("gap", LayerConfig::global_avg_pool(), {"relu"});
  z.add("dense", LayerConfig::dense(1, 2), {"gap"});
  z.add("sigmoid", LayerConfig::sigmoid(), {"dense"});
  z.set_output("sigmoid");
  set_param(z, "dense/kernel", {0, 0, 0, 0});
  const CamMap zc = grad_cam(z, support::random_tensor(Shape{8, 8, 3}, 1, "img", 0, 255), "conv", 1);
  const bool zero = std::all_of(zc.grid.data().begin(), zc.grid.data().end(), [](float v) { return v == 0.0f; });

  // scale covariance of the normalized map
  const Tensor a = support::random_tensor(Shape{6, 7, 5}, 2, "acts", 0.0, 3.0);
  const Tensor gr = support::random_tensor(Shape{6, 7, 5}, 2, "grads");
  const Tensor base = cam_grid(a, gr);
  double worst = 0;
  for (float c : {1e-3f, 0.37f, 3.0f, 1000.0f}) {
    Tensor s = a;
    for (float& v : s.data()) v *= c;
    const Tensor m = cam_grid(s, gr);
    for (std::size_t i = 0; i < m.size(); ++i) worst = std::max(worst, std::fabs(double(m[i]) - double(base[i])));
  }

  // single-channel toy: score = mean of the map, alpha = 1/16
  ModelGraph t(Shape{4, 4, 1});
  t.add("conv", LayerConfig::conv2d(1, 1, 1, Padding::valid, true, 1), {kInputNode});
  t.add("gap", LayerConfig::global_avg_pool(), {"conv"});
  t.set_output("gap");
  set_param(t, "conv/kernel", {1.0f});
  set_param(t, "conv/bias", {0.0f});
  const Tensor x = support::random_tensor(Shape{4, 4, 1}, 3, "cam-toy");
  const CamMap tc = grad_cam(t, x, "conv", 1);
  float alpha = 0.0f;
  for (int p = 0; p < 16; ++p) alpha += 1.0f / 16.0f;
  alpha = alpha / 16.0f;
  float m[16], peak = 0.0f;
  for (int p = 0; p < 16; ++p) {
    m[p] = std::max(0.0f, 0.0f + alpha * x[p]);
    peak = std::max(peak, m[p]);
  }
  bool exact = tc.grid.size() == 16;
  for (int p = 0; exact && p < 16; ++p) exact = tc.grid[p] == m[p] / peak;

  return {zero && worst < 1e-6 && exact, std::string("zero-gradient grid ") + (zero ? "all zero" : "NOT zero") +
                                             ", rescaling max diff " + fmt("%.2e", worst) + ", toy " +
                                             (exact ? "bit-exact" : "MISMATCH")};
}

Outcome crit7() {
  g_conv_learn = train("convnet_learn", kLearnArgs);
  g_xcp_learn = train("xception_learn", "--model mini-xception --synth 400 --pdim 64 --epochs 10 --batch 8");
  if (g_conv_learn.code != 0 || g_xcp_learn.code != 0) {
    return {false, "train failed: " + g_conv_learn.output.substr(0, 400) + g_xcp_learn.output.substr(0, 400)};
  }
  const double ca = best_val_acc(g_conv_learn), xa = best_val_acc(g_xcp_learn);
  const bool pass = ca >= 0.95 && xa >= 0.90 && g_conv_learn.seconds < 600 && g_xcp_learn.seconds < 600;
  return {pass, "convnet best val acc " + fmt("%.4f", ca) + " (" + fmt("%.0f s", g_conv_learn.seconds) +
                    "), mini-xception pdim 64 batch 8 best val acc " + fmt("%.4f", xa) + " (" +
                    fmt("%.0f s", g_xcp_learn.seconds) + ")"};
}

nlohmann::json compare_json(const fs::path& a, const fs::path& b, const std::string& name) {
  const fs::path out = kWork / (name + ".json");
  const auto r = support::run_command(quoted(kCli) + " compare --run-a " + quoted(a.string()) + " --run-b " +
                                      quoted(b.string()) + " --json " + quoted(out.string()));
  if (r.code != 0) return {};
  return nlohmann::json::parse(read_text_file(out));
}

Outcome crit8() {
  if (g_conv_learn.code != 0) return {false, "needs the learning run"};
  const auto self = compare_json(g_conv_learn.dir, g_conv_learn.dir, "compare_self");
  const TrainRun other = train("convnet_seed2002", kLearnArgs + " --seed 2002");
  if (other.code != 0 || self.is_null()) return {false, "compare or train failed"};
  const auto cross = compare_json(g_conv_learn.dir, other.dir, "compare_seeds");
  if (cross.is_null()) return {false, "compare failed"};
  const double da = std::fabs(cross.at("acc_delta").get<double>());
  const double diff = cross.at("max_abs_diff").get<double>();
  const bool pass = self.at("verdict") == "bit-identical" && cross.at("verdict") == "diverged" && da <= 0.05 &&
                    diff > 1e-2;
  return {pass, "self " + self.at("verdict").get<std::string>() + "; seeds 1001 vs 2002 " +
                    cross.at("verdict").get<std::string>() + ", accuracies " +
                    fmt("%.4f", cross.at("acc_a").get<double>()) + " vs " + fmt("%.4f", cross.at("acc_b").get<double>()) +
                    ", max |dw| " + fmt("%.4f", diff)};
}

Outcome crit9() {
  if (g_conv_learn.code != 0) return {false, "needs the learning run"};
  const fs::path img = kWork / "probe.ppm", cut = kWork / "probe_cut.ppm";
  write_ppm(img, synth_blobs(2, 120, 4242, "acceptance").items[0].image);
  const auto r = support::run_command(quoted(kCli) + " perturb --image " + quoted(img.string()) +
                                      " --crop 30,30,80,80 --out " + quoted(cut.string()) + " --run " +
                                      quoted(g_conv_learn.dir.string()));
  const bool pass = r.code == 0 && r.output.find("rank shifts") != std::string::npos &&
                    r.output.find("classes changing rank: ") != std::string::npos && fs::exists(cut);
  const auto at = r.output.find("classes changing rank: ");
  return {pass, "exit " + std::to_string(r.code) + ", report " +
                    (at == std::string::npos ? std::string("missing") : r.output.substr(at, r.output.find('\n', at) - at))};
}

Outcome crit10() {
  bool ok = true;
  std::string detail;
  for (const auto* run : {&g_det_a, &g_xcp_learn}) {
    if (run->code != 0) return {false, "needs the training runs"};
    const auto m = manifest(*run);
    ModelGraph g = build_model(parse_model_kind(m.at("model").get<std::string>()), m.at("pdim").get<std::size_t>());
    load_weights(g, run->dir / "weights.dcw");
    const fs::path again = kWork / (run->dir.filename().string() + "_resaved.dcw");
    save_weights(g, again);
    const bool same = read_file(run->dir / "weights.dcw") == read_file(again);
    auto bytes = read_file(again);
    bytes[bytes.size() / 2] ^= 0x04;
    bool rejected = false;
    try {
      (void)decode_tensors(bytes);
    } catch (const WeightsError& e) {
      rejected = e.fault() == WeightsFault::checksum;
    }
    ok = ok && same && rejected;
    detail += (detail.empty() ? "" : "; ") + m.at("model").get<std::string>() + " " +
              (same ? "byte-identical" : "DIFFERS") + ", corruption " + (rejected ? "rejected by checksum" : "ACCEPTED");
  }
  return {ok, detail};
}

}  // namespace

int main() {
  fs::create_directories(kWork);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"parameter counts", crit1},          {"run determinism", crit2},     {"thread-count invariance", crit3},
      {"gradient correctness", crit4},      {"conv/sepconv oracles", crit5}, {"grad-cam properties", crit6},
      {"learning sanity", crit7},           {"comparison semantics", crit8}, {"perturbation rank shifts", crit9},
      {"serialization", crit10},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2zu %-26s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
