#include "detcnn/commands.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "detcnn/gradcam.hpp"
#include "detcnn/imageio.hpp"
#include "detcnn/model_zoo.hpp"
#include "detcnn/parallel.hpp"
#include "detcnn/plot.hpp"
#include "detcnn/tensor_ops.hpp"
#include "detcnn/training.hpp"
#include "detcnn/weights_io.hpp"

namespace detcnn::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kWeightsFile = "weights.dcw";
constexpr const char* kOptimizerFile = "optimizer.dcw";
constexpr const char* kManifestFile = "manifest.txt";
constexpr const char* kEpochsFile = "epochs.ndtxt";
constexpr const char* kArchitectureFile = "architecture.txt";
constexpr const char* kPlotFile = "metrics.ppm";

/// Options whose resolved value and origin (flag, env, default) go into the
/// manifest.
class Settings {
 public:
  Settings(int argc, char** argv) : args_(argv + 1, argv + argc) {}

  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& flag, T& var, const std::string& env,
                   const std::string& help) {
    CLI::Option* o = app->add_option(flag, var, help)->envname(env)->capture_default_str();
    entries_.push_back({flag, env, [&var] {
                          std::ostringstream os;
                          os << var;
                          return os.str();
                        }});
    return o;
  }

  std::map<std::string, std::string> resolved() const {
    std::map<std::string, std::string> out;
    for (const auto& e : entries_) {
      const std::string value = e.value();
      std::string source = "default";
      if (given(e.flag)) {
        source = "flag";
      } else if (std::getenv(e.env.c_str()) != nullptr) {
        source = "env " + e.env;
      }
      out[e.flag.substr(2)] = value + " (" + source + ")";
    }
    return out;
  }

 private:
  struct Entry {
    std::string flag;
    std::string env;
    std::function<std::string()> value;
  };

  bool given(const std::string& flag) const {
    for (const auto& a : args_) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  }

  std::vector<std::string> args_;
  std::vector<Entry> entries_;
};

struct TrainArgs {
  std::string model = "convnet";
  std::string data;
  std::size_t synth = 0;
  std::size_t pdim = 180;
  std::size_t epochs = 10;
  std::size_t batch = 32;
  std::uint64_t seed = 1001;
  std::uint64_t data_seed = 1001;
  std::uint64_t kernel_seed = 1;
  std::uint64_t pointwise_seed = 2;
  std::uint64_t dropout_seed = 7001;
  std::uint64_t augment_seed = 1;
  std::size_t threads = 1;
  float lr = 1e-3f;
  float rho = 0.9f;
  float epsilon = 1e-7f;
  std::string out;
};

struct ExplainArgs {
  std::string run;
  std::string image;
  int cls = 1;
  std::string layer = "LAST";
  std::string out;
  std::string cam_txt;
  float alpha = 0.4f;
  std::size_t threads = 1;
};

struct CompareArgs {
  std::string run_a, run_b;
  std::string image;
  double tolerance = 1e-4;
  std::string json;
  std::size_t threads = 1;
};

struct PerturbArgs {
  std::string image;
  std::string crop;
  std::string fill;
  std::string out;
  std::string run;
  std::size_t threads = 1;
};

struct RunArgs {
  std::string run;
  std::string image;
  std::size_t threads = 1;
};

std::vector<double> parse_numbers(const std::string& text, std::size_t count, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw config_error(std::string(what) + ": '" + item + "' is not a number");
    }
  }
  if (out.size() != count) {
    throw config_error(std::string(what) + " needs " + std::to_string(count) + " comma-separated values, got " +
                       std::to_string(out.size()));
  }
  return out;
}

std::size_t to_coord(double v, const char* what) {
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw config_error(std::string(what) + " coordinates must be non-negative integers");
  }
  return static_cast<std::size_t>(v);
}

/// Decodes an image and resizes it to the model input.
Tensor model_input(const Tensor& image, const ModelGraph& g) {
  const Shape& in = g.input_shape();
  if (image.shape()[2] != in[2]) throw data_error("image has " + std::to_string(image.shape()[2]) + " channels");
  return bilinear_resize(image, in[0], in[1]);
}

std::vector<std::string> run_classes(const RunManifest& m) {
  return m.train.class_names.empty() ? std::vector<std::string>{"class0", "class1"} : m.train.class_names;
}

int cmd_train(const TrainArgs& a, const Settings& settings) {
  const auto t0 = std::chrono::steady_clock::now();
  if (a.data.empty() == (a.synth == 0)) throw config_error("give exactly one of --data DIR or --synth N");
  if (a.out.empty()) throw config_error("--out RUNDIR is required");

  SeedSet seeds;
  seeds.global = a.seed;
  seeds.kernel = a.kernel_seed;
  seeds.pointwise = a.pointwise_seed;
  seeds.dropout = a.dropout_seed;
  seeds.augmentation = a.augment_seed;
  const ModelKind kind = parse_model_kind(a.model);

  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.rho = a.rho;
  cfg.epsilon = a.epsilon;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  cfg.validate();

  ModelGraph g = build_model(kind, a.pdim, seeds);

  Dataset train_ds, val_ds;
  std::string train_src, val_src;
  ThreadPool pool(a.threads);
  if (a.synth > 0) {
    if (a.synth % 2 != 0) throw config_error("--synth needs an even count");
    std::size_t nval = a.synth / 2;
    nval = std::max<std::size_t>(2, nval - nval % 2);
    train_ds = synth_blobs(a.synth, a.pdim, a.data_seed, "synth/train");
    val_ds = synth_blobs(nval, a.pdim, a.data_seed, "synth/val");
    train_src = "synth/train:" + std::to_string(a.synth);
    val_src = "synth/val:" + std::to_string(nval);
  } else {
    const fs::path root(a.data);
    if (!fs::is_directory(root)) throw data_error("data directory '" + a.data + "' does not exist");
    const fs::path tr = root / "train";
    fs::path va = root / "val";
    if (!fs::is_directory(va)) va = root / "validation";
    if (!fs::is_directory(tr) || !fs::is_directory(va)) {
      throw data_error("data directory '" + a.data + "' must contain train/ and val/ subdirectories");
    }
    train_ds = load_dataset(tr, a.pdim, &pool);
    val_ds = load_dataset(va, a.pdim, &pool);
    if (train_ds.class_names != val_ds.class_names) throw data_error("train and val class directories differ");
    train_src = tr.string();
    val_src = va.string();
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  write_text_file(out / kArchitectureFile, g.architecture());
  {
    std::ofstream(out / kEpochsFile, std::ios::trunc);
  }

  RunManifest m;
  m.engine_version = engine_version();
  m.model = to_string(kind);
  m.pdim = a.pdim;
  m.seeds = seeds;
  m.data_seed = a.data_seed;
  m.config = cfg;
  m.train = describe_dataset(train_ds, train_src);
  m.val = describe_dataset(val_ds, val_src);
  m.environment = capture_environment(a.threads);
  m.settings = settings.resolved();
  m.trainable_params = g.count_trainable();
  m.total_params = g.count_total();

  RmsProp opt(cfg);
  std::vector<EpochRecord> records;
  auto on_epoch = [&](const EpochRecord& r) {
    records.push_back(r);
    std::ofstream(out / kEpochsFile, std::ios::app) << epoch_line(r);
    std::fprintf(stderr, "epoch %zu/%zu  loss %.6f  acc %.4f  val_loss %.6f  val_acc %.4f  (%.1fs)\n", r.epoch,
                 cfg.epochs, r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.wall_time_s);
  };
  try {
    train(g, train_ds, val_ds, cfg, opt, on_epoch);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::numeric) {
      m.epochs = records;
      m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      m.settings["aborted"] = e.what();
      write_text_file(out / kManifestFile, m.to_text());
    }
    throw;
  }

  save_weights(g, out / kWeightsFile);
  const auto state = opt.state(g);
  write_file(out / kOptimizerFile, encode_tensors(state));
  write_ppm(out / kPlotFile, render_metrics_plot(records));
  m.epochs = records;
  m.fingerprint = fingerprint_hex(g);
  m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text_file(out / kManifestFile, m.to_text());
  std::printf("fingerprint %s\n", m.fingerprint.c_str());
  return kOk;
}

int cmd_explain(const ExplainArgs& a) {
  LoadedRun run = load_run(a.run);
  const Tensor image = read_ppm(a.image);
  const Tensor x = model_input(image, run.graph);
  const std::string target = a.layer == "LAST" ? default_cam_target(run.graph) : a.layer;
  ThreadPool pool(a.threads);
  const CamMap cam = grad_cam(run.graph, x, target, a.cls, &pool);
  write_ppm(a.out, render_overlay(image, cam, a.alpha));
  if (!a.cam_txt.empty()) write_text_file(a.cam_txt, cam_to_text(cam));
  const auto rows = prediction_table(class_probabilities(run.graph, x, &pool), run_classes(run.manifest));
  std::printf("%s", format_prediction_table(rows).c_str());
  std::printf("grad-cam target %s class %d score %.8f grid %zux%zu\n", cam.target_layer.c_str(), cam.class_index,
              static_cast<double>(cam.class_score), cam.grid.shape()[0], cam.grid.shape()[1]);
  return kOk;
}

int cmd_compare(const CompareArgs& a) {
  LoadedRun ra = load_run(a.run_a);
  LoadedRun rb = load_run(a.run_b);
  CompareReport rep = compare_weights(ra.graph, rb.graph, a.tolerance);
  rep.run_a = a.run_a;
  rep.run_b = a.run_b;
  if (!ra.manifest.epochs.empty()) rep.acc_a = ra.manifest.epochs.back().val_acc;
  if (!rb.manifest.epochs.empty()) rep.acc_b = rb.manifest.epochs.back().val_acc;
  if (!a.image.empty()) {
    ThreadPool pool(a.threads);
    const Tensor image = read_ppm(a.image);
    const Tensor xa = model_input(image, ra.graph), xb = model_input(image, rb.graph);
    rep.image = a.image;
    rep.class_names = run_classes(ra.manifest);
    rep.probs_a = class_probabilities(ra.graph, xa, &pool);
    rep.probs_b = class_probabilities(rb.graph, xb, &pool);
    const CamMap ca = grad_cam(ra.graph, xa, default_cam_target(ra.graph), 1, &pool);
    const CamMap cb = grad_cam(rb.graph, xb, default_cam_target(rb.graph), 1, &pool);
    rep.cam = cam_similarity(ca, cb);
  }
  std::printf("%s", rep.to_text().c_str());
  if (!a.json.empty()) write_text_file(a.json, rep.to_json());
  return kOk;
}

int cmd_perturb(const PerturbArgs& a) {
  if (a.crop.empty() == a.fill.empty()) throw config_error("give exactly one of --crop or --fill");
  PerturbSpec spec;
  if (!a.crop.empty()) {
    const auto v = parse_numbers(a.crop, 4, "--crop");
    spec.op = PerturbSpec::Op::crop_rect;
    spec.x0 = to_coord(v[0], "--crop");
    spec.y0 = to_coord(v[1], "--crop");
    spec.x1 = to_coord(v[2], "--crop");
    spec.y1 = to_coord(v[3], "--crop");
  } else {
    const auto v = parse_numbers(a.fill, 7, "--fill");
    spec.op = PerturbSpec::Op::fill_rect;
    spec.x0 = to_coord(v[0], "--fill");
    spec.y0 = to_coord(v[1], "--fill");
    spec.x1 = to_coord(v[2], "--fill");
    spec.y1 = to_coord(v[3], "--fill");
    for (int c = 0; c < 3; ++c) {
      if (v[4 + c] < 0 || v[4 + c] > 255) throw config_error("--fill colour components must lie in [0,255]");
      spec.fill[c] = static_cast<float>(v[4 + c]);
    }
  }
  const Tensor image = read_ppm(a.image);
  const Tensor changed = perturb(image, spec);
  write_ppm(a.out, changed);
  if (!a.run.empty()) {
    LoadedRun run = load_run(a.run);
    ThreadPool pool(a.threads);
    // predict on what is stored on disk, so the report matches the file
    const Tensor reread = read_ppm(a.out);
    const auto names = run_classes(run.manifest);
    const auto ta = prediction_table(class_probabilities(run.graph, model_input(image, run.graph), &pool), names);
    const auto tb = prediction_table(class_probabilities(run.graph, model_input(reread, run.graph), &pool), names);
    std::printf("original %s\n%s\nperturbed %s\n%s\n", a.image.c_str(), format_prediction_table(ta).c_str(),
                a.out.c_str(), format_prediction_table(tb).c_str());
    std::printf("rank shifts\n%s", format_rank_shift_report(rank_shifts(ta, tb)).c_str());
  }
  return kOk;
}

int cmd_predict(const RunArgs& a) {
  LoadedRun run = load_run(a.run);
  ThreadPool pool(a.threads);
  const Tensor x = model_input(read_ppm(a.image), run.graph);
  const auto rows = prediction_table(class_probabilities(run.graph, x, &pool), run_classes(run.manifest));
  std::printf("%s", format_prediction_table(rows).c_str());
  return kOk;
}

int cmd_fingerprint(const RunArgs& a) {
  LoadedRun run = load_run(a.run);
  std::printf("%s\n", fingerprint_hex(run.graph).c_str());
  return kOk;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return kConfig;
    case ErrorKind::data: return kData;
    case ErrorKind::numeric: return kNumeric;
    case ErrorKind::internal: return kOther;
  }
  return kOther;
}

LoadedRun load_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw data_error("run directory '" + dir.string() + "' does not exist");
  const fs::path mpath = dir / kManifestFile, wpath = dir / kWeightsFile;
  if (!fs::exists(mpath) || !fs::exists(wpath)) {
    throw data_error("run directory '" + dir.string() + "' holds no trained model (" + kManifestFile + " and " +
                     kWeightsFile + " required)");
  }
  RunManifest m = RunManifest::from_text(read_text_file(mpath));
  ModelGraph g = build_model(parse_model_kind(m.model), m.pdim, m.seeds);
  load_weights(g, wpath);
  return {std::move(m), std::move(g)};
}

int run(int argc, char** argv) {
  CLI::App app{"Deterministic CNN training, Grad-CAM and run comparison"};
  app.require_subcommand(1);
  Settings settings(argc, argv);

  TrainArgs ta;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model and write a run directory");
  settings.add(train_cmd, "--model", ta.model, "DET_MODEL", "convnet, mini-xception or mini-xception-gpu");
  settings.add(train_cmd, "--data", ta.data, "DET_DATA", "Directory with train/ and val/ class folders of .ppm");
  settings.add(train_cmd, "--synth", ta.synth, "DET_SYNTH", "Use N synthetic blob images (validation: N/2)");
  settings.add(train_cmd, "--pdim", ta.pdim, "DET_PDIM", "Input edge length in pixels");
  settings.add(train_cmd, "--epochs", ta.epochs, "DET_EPOCHS", "Training epochs");
  settings.add(train_cmd, "--batch", ta.batch, "DET_BATCH", "Batch size");
  settings.add(train_cmd, "--seed", ta.seed, "DET_SEED", "Global seed (dense/conv init, shuffling)");
  settings.add(train_cmd, "--data-seed", ta.data_seed, "DET_DATA_SEED", "Seed of the synthetic dataset");
  settings.add(train_cmd, "--kernel-seed", ta.kernel_seed, "DET_KERNEL_SEED", "mini Xception kernel init seed");
  settings.add(train_cmd, "--pointwise-seed", ta.pointwise_seed, "DET_POINTWISE_SEED",
               "mini Xception pointwise init seed");
  settings.add(train_cmd, "--dropout-seed", ta.dropout_seed, "DET_DROPOUT_SEED", "Dropout seed");
  settings.add(train_cmd, "--augment-seed", ta.augment_seed, "DET_AUGMENT_SEED", "Augmentation seed");
  settings.add(train_cmd, "--threads", ta.threads, "DET_THREADS", "Worker threads");
  settings.add(train_cmd, "--lr", ta.lr, "DET_LR", "RMSprop learning rate");
  settings.add(train_cmd, "--rho", ta.rho, "DET_RHO", "RMSprop decay");
  settings.add(train_cmd, "--epsilon", ta.epsilon, "DET_EPSILON", "RMSprop epsilon");
  settings.add(train_cmd, "--out", ta.out, "DET_OUT", "Run directory to create");

  ExplainArgs ea;
  CLI::App* explain_cmd = app.add_subcommand("explain", "Grad-CAM overlay for one image");
  explain_cmd->add_option("--run", ea.run, "Run directory")->required();
  explain_cmd->add_option("--image", ea.image, "Input .ppm")->required();
  explain_cmd->add_option("--class", ea.cls, "Class index")->capture_default_str();
  explain_cmd->add_option("--layer", ea.layer, "Target node id or LAST")->capture_default_str();
  explain_cmd->add_option("--out", ea.out, "Overlay .ppm to write")->required();
  explain_cmd->add_option("--cam-txt", ea.cam_txt, "Also write the CAM grid as text");
  explain_cmd->add_option("--alpha", ea.alpha, "Overlay opacity")->capture_default_str();
  explain_cmd->add_option("--threads", ea.threads, "Worker threads")->capture_default_str();

  CompareArgs ca;
  CLI::App* compare_cmd = app.add_subcommand("compare", "Compare the weights of two runs");
  compare_cmd->add_option("--run-a", ca.run_a, "First run directory")->required();
  compare_cmd->add_option("--run-b", ca.run_b, "Second run directory")->required();
  compare_cmd->add_option("--image", ca.image, "Also compare predictions and CAMs on this .ppm");
  compare_cmd->add_option("--tolerance", ca.tolerance, "numerically-close threshold")->capture_default_str();
  compare_cmd->add_option("--json", ca.json, "Write the report as JSON");
  compare_cmd->add_option("--threads", ca.threads, "Worker threads")->capture_default_str();

  PerturbArgs pa;
  CLI::App* perturb_cmd = app.add_subcommand("perturb", "Crop or fill a rectangle of an image");
  perturb_cmd->add_option("--image", pa.image, "Input .ppm")->required();
  perturb_cmd->add_option("--crop", pa.crop, "x0,y0,x1,y1: delete those rows/columns and resize back");
  perturb_cmd->add_option("--fill", pa.fill, "x0,y0,x1,y1,r,g,b: paint the rectangle");
  perturb_cmd->add_option("--out", pa.out, "Output .ppm")->required();
  perturb_cmd->add_option("--run", pa.run, "Print prediction tables and rank shifts with this run");
  perturb_cmd->add_option("--threads", pa.threads, "Worker threads")->capture_default_str();

  RunArgs pr;
  CLI::App* predict_cmd = app.add_subcommand("predict", "Print the prediction table for one image");
  predict_cmd->add_option("--run", pr.run, "Run directory")->required();
  predict_cmd->add_option("--image", pr.image, "Input .ppm")->required();
  predict_cmd->add_option("--threads", pr.threads, "Worker threads")->capture_default_str();

  RunArgs fa;
  CLI::App* fp_cmd = app.add_subcommand("fingerprint", "Print the weight fingerprint of a run");
  fp_cmd->add_option("--run", fa.run, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*train_cmd) return cmd_train(ta, settings);
    if (*explain_cmd) return cmd_explain(ea);
    if (*compare_cmd) return cmd_compare(ca);
    if (*perturb_cmd) return cmd_perturb(pa);
    if (*predict_cmd) return cmd_predict(pr);
    if (*fp_cmd) return cmd_fingerprint(fa);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kOther;
}

}  // namespace detcnn::cli
