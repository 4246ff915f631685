#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "r2t/model.hpp"
#include "r2t/pipeline.hpp"
#include "r2t/policies.hpp"
#include "r2t/scene.hpp"

namespace r2t {

inline constexpr int kApThresholds = 9;  // 0.1, 0.2, ..., 0.9

struct PRPoint {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
};

/// Precision/recall of pred >= t against gt at the nine thresholds.
/// Throws ContractError if a prediction lies outside [0,1].
std::vector<PRPoint> pr_curve(std::span<const float> pred, std::span<const uint8_t> gt);

/// Step integration of the monotone precision envelope over the PR points.
double average_precision(std::span<const float> pred, std::span<const uint8_t> gt);

struct EvalRecord {
  std::string policy;
  double budget = 0;
  double kb_label = 0;
  long bytes = 0;
  std::string occlusion = "medium";
  double drop_rate = 0;
  uint64_t seed = 0;
  double ap = 0;
};

struct CellSpec {
  PolicyKind policy = PolicyKind::kR2T;
  double budget = 0.5;
  Occlusion occlusion = Occlusion::kMedium;
  double drop_rate = 0;
};

struct SceneScore {
  double ap = 0;      // mean over receivers
  double bytes = 0;   // mean over receivers
};

/// Per-scene scores; scenes are evaluated in parallel, each on its own tape.
std::vector<SceneScore> score_scenes(const Model<float>& model, const std::vector<PreparedScene>& scenes,
                                     const ForwardOptions& opt);

/// Macro-average AP (receivers, then scenes) and mean bytes per receiver.
EvalRecord evaluate_cell(const Model<float>& model, const std::vector<PreparedScene>& scenes, const CellSpec& cell,
                         uint64_t seed);

enum class SweepAxis { kBandwidth, kOcclusion, kDrop };
std::string to_string(SweepAxis a);
SweepAxis parse_axis(const std::string& name);

std::vector<CellSpec> sweep_cells(SweepAxis axis);

/// Runs every cell of an axis. `test_scenes` are the stored (medium
/// occlusion) test scenes; the occlusion axis regenerates them per level.
std::vector<EvalRecord> run_sweep(const Model<float>& model, const std::vector<Scene>& test_scenes, SweepAxis axis,
                                  uint64_t seed);

// ---- CSV ----
std::string records_header();
std::string format_record(const EvalRecord& r);
void write_records(const std::filesystem::path& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_records(const std::filesystem::path& path);

struct SummaryRow {
  EvalRecord key;  // seed and ap unused
  double ap_mean = 0;
  double ap_std = 0;  // sample standard deviation, 0 for one seed
  int n_seeds = 0;
};

/// Groups records by every column except seed and ap, in first-seen order.
std::vector<SummaryRow> summarize(const std::vector<EvalRecord>& records);
std::string format_summary(const std::vector<SummaryRow>& rows);
/// Plain-text table: policies as rows, the axis that varies as columns.
std::string format_table(const std::vector<SummaryRow>& rows);

}  // namespace r2t
