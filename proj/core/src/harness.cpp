#include "detcnn/harness.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "detcnn/error.hpp"
#include "detcnn/tensor_ops.hpp"
#include "detcnn/weights_io.hpp"
#include <nlohmann/json.hpp>

#ifndef DETCNN_VERSION
#define DETCNN_VERSION "0.0.0"
#endif

namespace detcnn {

using nlohmann::json;

namespace {

std::string fmt8(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.8f", v);
  return buf;
}

json seeds_json(const SeedSet& s) {
  return {{"global", s.global},
          {"kernel", s.kernel},
          {"pointwise", s.pointwise},
          {"dropout", s.dropout},
          {"augmentation", s.augmentation}};
}

json dataset_json(const DatasetInfo& d) {
  return {{"source", d.source},
          {"digest", d.digest},
          {"size", d.size},
          {"class_names", d.class_names},
          {"balanced", d.balanced}};
}

DatasetInfo dataset_from(const json& j) {
  DatasetInfo d;
  d.source = j.at("source").get<std::string>();
  d.digest = j.at("digest").get<std::string>();
  d.size = j.at("size").get<std::size_t>();
  d.class_names = j.at("class_names").get<std::vector<std::string>>();
  d.balanced = j.at("balanced").get<bool>();
  return d;
}

json epoch_json(const EpochRecord& r, bool with_time) {
  json j = {{"epoch", r.epoch},
            {"train_loss", r.train_loss},
            {"train_acc", r.train_acc},
            {"val_loss", r.val_loss},
            {"val_acc", r.val_acc}};
  if (with_time) j["wall_time_s"] = r.wall_time_s;
  return j;
}

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        std::string v = line.substr(colon + 1);
        v.erase(0, v.find_first_not_of(' '));
        return v;
      }
    }
  }
  return "unknown";
}

}  // namespace

const char* engine_version() { return DETCNN_VERSION; }

DatasetInfo describe_dataset(const Dataset& ds, const std::string& source) {
  return {source, to_hex(ds.digest), ds.size(), ds.class_names, ds.balanced()};
}

std::string RunManifest::to_text() const {
  json j;
  j["engine_version"] = engine_version;
  j["model"] = model;
  j["pdim"] = pdim;
  j["seeds"] = seeds_json(seeds);
  j["data_seed"] = data_seed;
  j["config"] = {{"epochs", config.epochs},
                 {"batch_size", config.batch_size},
                 {"learning_rate", config.learning_rate},
                 {"rho", config.rho},
                 {"epsilon", config.epsilon},
                 {"seed", config.seed},
                 {"threads", config.threads},
                 {"optimizer", "rmsprop"},
                 {"loss", "binary_crossentropy"}};
  j["dataset"] = {{"train", dataset_json(train)}, {"val", dataset_json(val)}};
  j["environment"] = environment;
  j["settings"] = settings;
  j["epochs"] = json::array();
  for (const auto& e : epochs) j["epochs"].push_back(epoch_json(e, true));
  j["fingerprint"] = fingerprint;
  j["trainable_params"] = trainable_params;
  j["total_params"] = total_params;
  j["wall_time_s"] = wall_time_s;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw data_error(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    RunManifest m;
    m.engine_version = j.at("engine_version").get<std::string>();
    m.model = j.at("model").get<std::string>();
    m.pdim = j.at("pdim").get<std::size_t>();
    const json& s = j.at("seeds");
    m.seeds = {s.at("global").get<std::uint64_t>(), s.at("kernel").get<std::uint64_t>(),
               s.at("pointwise").get<std::uint64_t>(), s.at("dropout").get<std::uint64_t>(),
               s.at("augmentation").get<std::uint64_t>()};
    m.data_seed = j.at("data_seed").get<std::uint64_t>();
    const json& c = j.at("config");
    m.config.epochs = c.at("epochs").get<std::size_t>();
    m.config.batch_size = c.at("batch_size").get<std::size_t>();
    m.config.learning_rate = c.at("learning_rate").get<float>();
    m.config.rho = c.at("rho").get<float>();
    m.config.epsilon = c.at("epsilon").get<float>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.config.threads = c.at("threads").get<std::size_t>();
    m.train = dataset_from(j.at("dataset").at("train"));
    m.val = dataset_from(j.at("dataset").at("val"));
    m.environment = j.at("environment").get<std::map<std::string, std::string>>();
    m.settings = j.at("settings").get<std::map<std::string, std::string>>();
    for (const auto& e : j.at("epochs")) {
      EpochRecord r;
      r.epoch = e.at("epoch").get<std::size_t>();
      r.train_loss = e.at("train_loss").get<float>();
      r.train_acc = e.at("train_acc").get<float>();
      r.val_loss = e.at("val_loss").get<float>();
      r.val_acc = e.at("val_acc").get<float>();
      r.wall_time_s = e.value("wall_time_s", 0.0);
      m.epochs.push_back(r);
    }
    m.fingerprint = j.at("fingerprint").get<std::string>();
    m.trainable_params = j.at("trainable_params").get<std::size_t>();
    m.total_params = j.at("total_params").get<std::size_t>();
    m.wall_time_s = j.at("wall_time_s").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw data_error(std::string("manifest is missing fields: ") + e.what());
  }
}

std::map<std::string, std::string> capture_environment(std::size_t threads) {
  std::map<std::string, std::string> env;
  char host[256] = {};
  if (gethostname(host, sizeof host - 1) != 0) host[0] = '\0';
  env["hostname"] = host;
  env["cpu_model"] = cpu_model();
  env["threads"] = std::to_string(threads);
  env["hardware_concurrency"] = std::to_string(std::thread::hardware_concurrency());
  for (const char* name : {"TF_DETERMINISTIC_OPS", "TF_CUDNN_DETERMINISTIC", "PYTHONHASHSEED", "OMP_NUM_THREADS"}) {
    if (const char* v = std::getenv(name)) env["env." + std::string(name)] = v;
  }
  for (char** e = environ; e && *e; ++e) {
    const std::string kv = *e;
    if (kv.rfind("DET_", 0) == 0) {
      const auto eq = kv.find('=');
      env["env." + kv.substr(0, eq)] = eq == std::string::npos ? "" : kv.substr(eq + 1);
    }
  }
  return env;
}

std::string epoch_line(const EpochRecord& r) { return epoch_json(r, false).dump() + "\n"; }

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::bit_identical: return "bit-identical";
    case Verdict::numerically_close: return "numerically-close";
    case Verdict::diverged: return "diverged";
  }
  return "?";
}

CompareReport compare_weights(ModelGraph& a, ModelGraph& b, double tolerance) {
  const auto ta = snapshot(a), tb = snapshot(b);
  if (ta.size() != tb.size()) throw config_error("architecture mismatch: tensor counts differ");
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].name != tb[i].name || ta[i].value.shape() != tb[i].value.shape()) {
      throw config_error("architecture mismatch at '" + ta[i].name + "' " + ta[i].value.shape().str() + " vs '" +
                         tb[i].name + "' " + tb[i].value.shape().str());
    }
  }
  CompareReport r;
  r.tolerance = tolerance;
  r.fingerprint_a = to_hex(fingerprint(a));
  r.fingerprint_b = to_hex(fingerprint(b));
  bool close = true;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    float m = 0.0f;
    bool nan = false;
    for (std::size_t k = 0; k < ta[i].value.size(); ++k) {
      const float d = std::fabs(ta[i].value[k] - tb[i].value[k]);
      if (std::isnan(d)) nan = true;
      m = std::fmax(m, d);
    }
    if (nan || !(static_cast<double>(m) < tolerance)) close = false;
    r.diffs.push_back({ta[i].name, ta[i].value.shape(), nan ? NAN : m});
    r.max_abs_diff = std::fmax(r.max_abs_diff, m);
  }
  r.verdict = r.fingerprint_a == r.fingerprint_b ? Verdict::bit_identical
              : close                            ? Verdict::numerically_close
                                                 : Verdict::diverged;

  const NamedTensor* first4 = nullptr;
  const NamedTensor* last2 = nullptr;
  std::size_t i4 = 0, i2 = 0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!ta[i].trainable) continue;
    if (ta[i].value.shape().rank() == 4 && !first4) {
      first4 = &ta[i];
      i4 = i;
    }
    if (ta[i].value.shape().rank() == 2) {
      last2 = &ta[i];
      i2 = i;
    }
  }
  if (first4) {
    const Shape& s = first4->value.shape();
    WeightExcerpt ex{first4->name + "[:,:,0,0]", {}, {}};
    for (std::size_t y = 0; y < s[0]; ++y) {
      for (std::size_t x = 0; x < s[1]; ++x) {
        const std::size_t off = ((y * s[1] + x) * s[2]) * s[3];
        ex.a.push_back(ta[i4].value[off]);
        ex.b.push_back(tb[i4].value[off]);
      }
    }
    r.excerpts.push_back(std::move(ex));
  }
  if (last2) {
    const Shape& s = last2->value.shape();
    WeightExcerpt ex{last2->name + "[:32,0]", {}, {}};
    for (std::size_t k = 0; k < std::min<std::size_t>(32, s[0]); ++k) {
      ex.a.push_back(ta[i2].value[k * s[1]]);
      ex.b.push_back(tb[i2].value[k * s[1]]);
    }
    r.excerpts.push_back(std::move(ex));
  }
  return r;
}

std::string CompareReport::to_text() const {
  std::ostringstream os;
  char buf[160];
  os << "run A        " << run_a << "\n";
  os << "run B        " << run_b << "\n";
  os << "fingerprint A " << fingerprint_a << "\n";
  os << "fingerprint B " << fingerprint_b << "\n";
  std::snprintf(buf, sizeof buf, "%.1e", tolerance);
  os << "verdict      " << to_string(verdict) << " (tolerance " << buf << ")\n";
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(max_abs_diff));
  os << "max |A-B|    " << buf << "\n";
  if (acc_a && acc_b) {
    os << "val accuracy A " << fmt8(*acc_a) << "  B " << fmt8(*acc_b) << "  delta " << fmt8(*acc_b - *acc_a)
       << "\n";
  }
  os << "\n";
  std::snprintf(buf, sizeof buf, "%-32s %-16s %s\n", "tensor", "shape", "max_abs_diff");
  os << buf;
  for (const auto& d : diffs) {
    std::snprintf(buf, sizeof buf, "%-32s %-16s %.9g\n", d.name.c_str(), d.shape.str().c_str(),
                  static_cast<double>(d.max_abs));
    os << buf;
  }
  for (const auto& ex : excerpts) {
    os << "\n" << ex.title << "\n";
    for (const auto* v : {&ex.a, &ex.b}) {
      os << (v == &ex.a ? "  A:" : "  B:");
      for (float f : *v) os << " " << fmt8(f);
      os << "\n";
    }
  }
  if (!probs_a.empty()) {
    os << "\npredictions for " << image << "\n";
    std::snprintf(buf, sizeof buf, "%-16s %-12s %-12s\n", "class", "A", "B");
    os << buf;
    const auto rows = prediction_table(probs_a, class_names);
    for (const auto& row : rows) {
      std::snprintf(buf, sizeof buf, "%-16s %-12s %-12s\n", row.label.c_str(), fmt8(row.prob).c_str(),
                    fmt8(probs_b.at(row.index)).c_str());
      os << buf;
    }
  }
  if (cam) {
    os << "cam IoU " << fmt8(cam->iou) << "  center-of-mass shift " << fmt8(cam->com_shift) << " cells\n";
  }
  return os.str();
}

std::string CompareReport::to_json() const {
  json j;
  j["run_a"] = run_a;
  j["run_b"] = run_b;
  j["fingerprint_a"] = fingerprint_a;
  j["fingerprint_b"] = fingerprint_b;
  j["verdict"] = to_string(verdict);
  j["tolerance"] = tolerance;
  j["max_abs_diff"] = max_abs_diff;
  j["diffs"] = json::array();
  for (const auto& d : diffs) {
    j["diffs"].push_back({{"name", d.name}, {"shape", d.shape.dims()}, {"max_abs", d.max_abs}});
  }
  if (acc_a) j["acc_a"] = *acc_a;
  if (acc_b) j["acc_b"] = *acc_b;
  if (acc_a && acc_b) j["acc_delta"] = *acc_b - *acc_a;
  j["excerpts"] = json::array();
  for (const auto& ex : excerpts) j["excerpts"].push_back({{"title", ex.title}, {"a", ex.a}, {"b", ex.b}});
  if (!probs_a.empty()) {
    j["image"] = image;
    j["predictions"] = json::array();
    for (std::size_t i = 0; i < probs_a.size(); ++i) {
      j["predictions"].push_back(
          {{"class", i < class_names.size() ? class_names[i] : std::to_string(i)}, {"a", probs_a[i]}, {"b", probs_b.at(i)}});
    }
  }
  if (cam) j["cam"] = {{"iou", cam->iou}, {"com_shift", cam->com_shift}};
  return j.dump(2) + "\n";
}

std::vector<float> class_probabilities(ModelGraph& g, const Tensor& image, ThreadPool* pool) {
  const Tensor x = image.shape().rank() == g.input_shape().rank() ? image.reshaped(image.shape().batched(1)) : image;
  const Tensor out = predict(g, x, pool);
  if (out.size() == 1) return {1.0f - out[0], out[0]};
  return std::vector<float>(out.data().begin(), out.data().end());
}

std::vector<PredictionRow> prediction_table(const std::vector<float>& probs,
                                            const std::vector<std::string>& class_names, std::size_t k) {
  std::vector<PredictionRow> rows;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    rows.push_back({i < class_names.size() ? class_names[i] : "class" + std::to_string(i), i, probs[i]});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const PredictionRow& a, const PredictionRow& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    return a.index < b.index;
  });
  if (k > 0 && rows.size() > k) rows.resize(k);
  return rows;
}

std::string format_prediction_table(const std::vector<PredictionRow>& rows) {
  std::ostringstream os;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-6s %-16s %s\n", "rank", "class", "probability");
  os << buf;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%-6zu %-16s %s\n", i + 1, rows[i].label.c_str(), fmt8(rows[i].prob).c_str());
    os << buf;
  }
  return os.str();
}

std::vector<RankShift> rank_shifts(const std::vector<PredictionRow>& a, const std::vector<PredictionRow>& b) {
  std::map<std::size_t, RankShift> by_index;
  for (std::size_t r = 0; r < a.size(); ++r) {
    auto& s = by_index[a[r].index];
    s.label = a[r].label;
    s.index = a[r].index;
    s.rank_a = r + 1;
    s.prob_a = a[r].prob;
  }
  for (std::size_t r = 0; r < b.size(); ++r) {
    auto& s = by_index[b[r].index];
    s.label = b[r].label;
    s.index = b[r].index;
    s.rank_b = r + 1;
    s.prob_b = b[r].prob;
  }
  std::vector<RankShift> out;
  for (auto& [i, s] : by_index) out.push_back(s);
  return out;
}

std::string format_rank_shift_report(const std::vector<RankShift>& shifts) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %-9s %-9s %-12s %-12s %s\n", "class", "rank_a", "rank_b", "prob_a", "prob_b",
                "shift");
  os << buf;
  std::size_t moved = 0;
  for (const auto& s : shifts) {
    const long shift = static_cast<long>(s.rank_a) - static_cast<long>(s.rank_b);
    moved += shift != 0;
    std::snprintf(buf, sizeof buf, "%-16s %-9zu %-9zu %-12s %-12s %+ld\n", s.label.c_str(), s.rank_a, s.rank_b,
                  fmt8(s.prob_a).c_str(), fmt8(s.prob_b).c_str(), shift);
    os << buf;
  }
  for (const auto& s : shifts) {
    if (s.rank_a != s.rank_b) {
      os << s.label << " moved from place " << s.rank_a << " to place " << s.rank_b << "\n";
    }
  }
  os << "classes changing rank: " << moved << " of " << shifts.size() << "\n";
  return os.str();
}

namespace {

std::pair<double, double> center_of_mass(const Tensor& grid) {
  const std::size_t h = grid.shape()[0], w = grid.shape()[1];
  double total = 0.0, sy = 0.0, sx = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = grid[y * w + x];
      total += v;
      sy += v * static_cast<double>(y);
      sx += v * static_cast<double>(x);
    }
  }
  if (total <= 0.0) return {(static_cast<double>(h) - 1.0) / 2.0, (static_cast<double>(w) - 1.0) / 2.0};
  return {sy / total, sx / total};
}

Tensor resized_grid(const Tensor& g, std::size_t h, std::size_t w) {
  if (g.shape()[0] == h && g.shape()[1] == w) return g;
  return bilinear_resize(g.reshaped(Shape{g.shape()[0], g.shape()[1], 1}), h, w).reshaped(Shape{h, w});
}

}  // namespace

CamSimilarity cam_similarity(const CamMap& a, const CamMap& b) {
  if (a.grid.shape().rank() != 2 || b.grid.shape().rank() != 2) throw config_error("CAM grids must be [h,w]");
  const bool a_larger = a.grid.size() >= b.grid.size();
  const Shape& big = a_larger ? a.grid.shape() : b.grid.shape();
  const Tensor ga = resized_grid(a.grid, big[0], big[1]);
  const Tensor gb = resized_grid(b.grid, big[0], big[1]);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < ga.size(); ++i) {
    const bool ma = ga[i] >= 0.5f, mb = gb[i] >= 0.5f;
    inter += ma && mb;
    uni += ma || mb;
  }
  CamSimilarity s;
  s.iou = uni == 0 ? 1.0f : static_cast<float>(inter) / static_cast<float>(uni);
  const auto [ay, ax] = center_of_mass(ga);
  const auto [by, bx] = center_of_mass(gb);
  s.com_shift = static_cast<float>(std::sqrt((ay - by) * (ay - by) + (ax - bx) * (ax - bx)));
  return s;
}

}  // namespace detcnn
