#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "detcnn/detrand.hpp"
#include "detcnn/gradcam.hpp"
#include "detcnn/graph.hpp"
#include "detcnn/training.hpp"

namespace detcnn {

class ThreadPool;

const char* engine_version();

struct DatasetInfo {
  std::string source;
  std::string digest;  // hex
  std::size_t size = 0;
  std::vector<std::string> class_names;
  bool balanced = false;
};

DatasetInfo describe_dataset(const Dataset& ds, const std::string& source);

/// Everything that determines a run plus what it produced. Serialized as JSON
/// with sorted keys, two-space indent, trailing newline.
struct RunManifest {
  std::string engine_version;
  std::string model;
  std::size_t pdim = 0;
  SeedSet seeds;
  std::uint64_t data_seed = 0;
  TrainConfig config;
  DatasetInfo train;
  DatasetInfo val;
  std::map<std::string, std::string> environment;
  std::map<std::string, std::string> settings;  // resolved option -> "value (source)"
  std::vector<EpochRecord> epochs;
  std::string fingerprint;
  std::size_t trainable_params = 0;
  std::size_t total_params = 0;
  double wall_time_s = 0.0;

  std::string to_text() const;
  static RunManifest from_text(const std::string& text);
};

/// Hostname, CPU model, thread counts and the determinism-related environment
/// variables (DET_*, TF_DETERMINISTIC_OPS, TF_CUDNN_DETERMINISTIC,
/// PYTHONHASHSEED, OMP_NUM_THREADS) that are set.
std::map<std::string, std::string> capture_environment(std::size_t threads);

/// One JSON object per line with epoch, losses and accuracies. Wall time is
/// left out so that identical runs give identical lines.
std::string epoch_line(const EpochRecord& r);

enum class Verdict { bit_identical, numerically_close, diverged };
const char* to_string(Verdict v);

struct TensorDiff {
  std::string name;
  Shape shape;
  float max_abs = 0.0f;
};

struct WeightExcerpt {
  std::string title;
  std::vector<float> a;
  std::vector<float> b;
};

struct PredictionRow {
  std::string label;
  std::size_t index = 0;
  float prob = 0.0f;
};

struct CamSimilarity {
  float iou = 0.0f;
  float com_shift = 0.0f;  // grid cells
};

struct CompareReport {
  std::string run_a, run_b;
  std::string fingerprint_a, fingerprint_b;
  Verdict verdict = Verdict::diverged;
  double tolerance = 1e-4;
  std::vector<TensorDiff> diffs;
  float max_abs_diff = 0.0f;
  std::optional<float> acc_a, acc_b;  // final validation accuracy
  std::vector<WeightExcerpt> excerpts;
  std::string image;
  std::vector<std::string> class_names;
  std::vector<float> probs_a, probs_b;  // per class index
  std::optional<CamSimilarity> cam;

  /// Human-readable table.
  std::string to_text() const;
  /// Machine-readable JSON (sorted keys).
  std::string to_json() const;
};

/// Per-tensor max-abs differences and verdict. The verdict is bit-identical
/// exactly when the fingerprints match, numerically-close when every
/// difference is below `tolerance`, diverged otherwise. Excerpts: the first
/// rank-4 trainable sliced [:,:,0,0] and the last rank-2 trainable sliced
/// [:32,0]. Throws config_error when the registries differ.
CompareReport compare_weights(ModelGraph& a, ModelGraph& b, double tolerance = 1e-4);

/// Class probabilities of one [H,W,C] image: {1-p, p} for a single sigmoid
/// output, the raw outputs otherwise.
std::vector<float> class_probabilities(ModelGraph& g, const Tensor& image, ThreadPool* pool = nullptr);

/// Descending probability, ties by class index; at most k rows (k = 0: all).
std::vector<PredictionRow> prediction_table(const std::vector<float>& probs,
                                            const std::vector<std::string>& class_names, std::size_t k = 0);
std::string format_prediction_table(const std::vector<PredictionRow>& rows);

struct RankShift {
  std::string label;
  std::size_t index = 0;
  std::size_t rank_a = 0, rank_b = 0;  // 1-based
  float prob_a = 0.0f, prob_b = 0.0f;
};

/// Rank of every class in both tables, in class-index order.
std::vector<RankShift> rank_shifts(const std::vector<PredictionRow>& a, const std::vector<PredictionRow>& b);
std::string format_rank_shift_report(const std::vector<RankShift>& shifts);

/// IoU of the {grid >= 0.5} masks (1 when both are empty) and the distance
/// between value-weighted centers of mass (geometric center for an all-zero
/// grid). Grids of different size: the smaller is bilinearly resized to the
/// larger first.
CamSimilarity cam_similarity(const CamMap& a, const CamMap& b);

}  // namespace detcnn
