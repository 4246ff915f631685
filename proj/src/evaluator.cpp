#include "r2t/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "r2t/binary_io.hpp"

namespace r2t {

namespace fs = std::filesystem;

std::vector<PRPoint> pr_curve(std::span<const float> pred, std::span<const uint8_t> gt) {
  if (pred.size() != gt.size()) throw ContractError("pr_curve: prediction and ground truth sizes differ");
  for (float p : pred)
    if (!(p >= 0.0f && p <= 1.0f)) throw ContractError("pr_curve: prediction outside [0,1]");
  long positives = 0;
  for (uint8_t g : gt) positives += g ? 1 : 0;
  std::vector<PRPoint> out;
  for (int i = 1; i <= kApThresholds; ++i) {
    const double t = i / 10.0;
    long tp = 0, fp = 0;
    for (size_t c = 0; c < pred.size(); ++c) {
      if (pred[c] < t) continue;
      if (gt[c]) ++tp;
      else ++fp;
    }
    PRPoint p;
    p.threshold = t;
    p.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
    p.recall = positives > 0 ? static_cast<double>(tp) / static_cast<double>(positives) : 1.0;
    out.push_back(p);
  }
  return out;
}

double average_precision(std::span<const float> pred, std::span<const uint8_t> gt) {
  std::vector<PRPoint> pts = pr_curve(pred, gt);
  std::stable_sort(pts.begin(), pts.end(), [](const PRPoint& a, const PRPoint& b) { return a.recall < b.recall; });
  std::vector<double> envelope(pts.size());
  double best = 0;
  for (size_t j = pts.size(); j-- > 0;) {
    best = std::max(best, pts[j].precision);
    envelope[j] = best;
  }
  double ap = 0, prev = 0;
  for (size_t j = 0; j < pts.size(); ++j) {
    ap += (pts[j].recall - prev) * envelope[j];
    prev = pts[j].recall;
  }
  return ap;
}

std::vector<SceneScore> score_scenes(const Model<float>& model, const std::vector<PreparedScene>& scenes,
                                     const ForwardOptions& opt) {
  std::vector<SceneScore> out(scenes.size());
#pragma omp parallel
  {
    ag::Tape<float> tape;
    tape.set_grad_enabled(false);
#pragma omp for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(scenes.size()); ++i) {
      tape.clear();
      const auto res = forward_scene(tape, model, scenes[i], opt);
      const auto& gt = scenes[i].scene.gt_binary;
      double ap = 0, bytes = 0;
      std::vector<float> prob(gt.size());
      for (size_t r = 0; r < res.logits.size(); ++r) {
        const auto& lg = res.logits[r].value();
        for (size_t c = 0; c < prob.size(); ++c) prob[c] = 1.0f / (1.0f + std::exp(-lg[c]));
        ap += average_precision(prob, gt);
        bytes += static_cast<double>(res.bytes[r]);
      }
      const double n = static_cast<double>(res.logits.size());
      out[i] = {ap / n, bytes / n};
    }
  }
  return out;
}

EvalRecord evaluate_cell(const Model<float>& model, const std::vector<PreparedScene>& scenes, const CellSpec& cell,
                         uint64_t seed) {
  ForwardOptions opt;
  opt.policy = cell.policy;
  opt.budget = cell.budget;
  opt.drop_rate = cell.drop_rate;
  opt.seed = seed;
  const auto scores = score_scenes(model, scenes, opt);
  double ap = 0, bytes = 0;
  for (const auto& s : scores) {
    ap += s.ap;
    bytes += s.bytes;
  }
  EvalRecord r;
  r.policy = to_string(cell.policy);
  r.budget = cell.budget;
  r.kb_label = cell.budget * 24.0;
  r.occlusion = to_string(cell.occlusion);
  r.drop_rate = cell.drop_rate;
  r.seed = seed;
  if (!scores.empty()) {
    r.ap = ap / static_cast<double>(scores.size());
    r.bytes = std::lround(bytes / static_cast<double>(scores.size()));
  }
  return r;
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::kBandwidth: return "bandwidth";
    case SweepAxis::kOcclusion: return "occlusion";
    case SweepAxis::kDrop: return "drop";
  }
  return "?";
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "bandwidth") return SweepAxis::kBandwidth;
  if (name == "occlusion") return SweepAxis::kOcclusion;
  if (name == "drop") return SweepAxis::kDrop;
  throw std::invalid_argument("unknown sweep axis '" + name + "' (expected bandwidth|occlusion|drop)");
}

std::vector<CellSpec> sweep_cells(SweepAxis axis) {
  std::vector<CellSpec> cells;
  switch (axis) {
    case SweepAxis::kBandwidth:
      for (double b : {0.1, 0.5, 1.0})
        for (PolicyKind p : kAllPolicies)
          if (p != PolicyKind::kNoComm) cells.push_back({p, b, Occlusion::kMedium, 0.0});
      cells.push_back({PolicyKind::kNoComm, 0.0, Occlusion::kMedium, 0.0});
      break;
    case SweepAxis::kOcclusion:
      for (Occlusion o : {Occlusion::kLow, Occlusion::kMedium, Occlusion::kHigh})
        for (PolicyKind p : kAllPolicies) cells.push_back({p, 0.5, o, 0.0});
      break;
    case SweepAxis::kDrop:
      for (double d : {0.0, 0.1, 0.2, 0.3, 0.5})
        for (PolicyKind p : {PolicyKind::kR2T, PolicyKind::kWhere2Comm, PolicyKind::kIc3Net, PolicyKind::kConfidence})
          cells.push_back({p, 0.5, Occlusion::kMedium, d});
      break;
  }
  return cells;
}

std::vector<EvalRecord> run_sweep(const Model<float>& model, const std::vector<Scene>& test_scenes, SweepAxis axis,
                                  uint64_t seed) {
  std::map<Occlusion, std::vector<PreparedScene>> prepared;
  auto scenes_for = [&](Occlusion level) -> const std::vector<PreparedScene>& {
    auto it = prepared.find(level);
    if (it != prepared.end()) return it->second;
    std::vector<Scene> regen;
    regen.reserve(test_scenes.size());
    for (const Scene& s : test_scenes) regen.push_back(s.config.occlusion == level ? s : with_occlusion(s, level));
    return prepared.emplace(level, prepare_scenes(std::move(regen))).first->second;
  };
  std::vector<EvalRecord> out;
  for (const CellSpec& cell : sweep_cells(axis)) out.push_back(evaluate_cell(model, scenes_for(cell.occlusion), cell, seed));
  return out;
}

// ---------------------------------------------------------------- CSV

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string short_num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string key_columns(const EvalRecord& r) {
  return r.policy + "," + short_num(r.budget) + "," + short_num(r.kb_label) + "," + std::to_string(r.bytes) + "," +
         r.occlusion + "," + short_num(r.drop_rate);
}

}  // namespace

std::string records_header() { return "policy,budget,kb_label,bytes,occlusion,drop_rate,seed,ap"; }

std::string format_record(const EvalRecord& r) {
  return key_columns(r) + "," + std::to_string(r.seed) + "," + num(r.ap);
}

void write_records(const fs::path& path, const std::vector<EvalRecord>& records) {
  std::string text = records_header() + "\n";
  for (const auto& r : records) text += format_record(r) + "\n";
  atomic_write(path, text);
}

std::vector<EvalRecord> read_records(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != records_header())
    throw std::invalid_argument(path.string() + ": not a results CSV (header mismatch)");
  std::vector<EvalRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected 8 fields");
    EvalRecord r;
    try {
      r.policy = f[0];
      r.budget = std::stod(f[1]);
      r.kb_label = std::stod(f[2]);
      r.bytes = std::stol(f[3]);
      r.occlusion = f[4];
      r.drop_rate = std::stod(f[5]);
      r.seed = std::stoull(f[6]);
      r.ap = std::stod(f[7]);
    } catch (const std::logic_error&) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
    out.push_back(r);
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<EvalRecord>& records) {
  std::vector<SummaryRow> rows;
  std::map<std::string, size_t> index;
  std::vector<std::vector<double>> values;
  for (const auto& r : records) {
    const std::string key = key_columns(r);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, rows.size()).first;
      SummaryRow row;
      row.key = r;
      rows.push_back(row);
      values.emplace_back();
    }
    values[it->second].push_back(r.ap);
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& v = values[i];
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    rows[i].ap_mean = mean;
    rows[i].ap_std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    rows[i].n_seeds = static_cast<int>(v.size());
  }
  return rows;
}

std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::string text = "policy,budget,kb_label,bytes,occlusion,drop_rate,ap_mean,ap_std,n_seeds\n";
  for (const auto& r : rows)
    text += key_columns(r.key) + "," + num(r.ap_mean) + "," + num(r.ap_std) + "," + std::to_string(r.n_seeds) + "\n";
  return text;
}

std::string format_table(const std::vector<SummaryRow>& rows) {
  if (rows.empty()) return "(no rows)\n";
  std::set<double> drops;
  std::set<std::string> occlusions;
  for (const auto& r : rows) {
    drops.insert(r.key.drop_rate);
    occlusions.insert(r.key.occlusion);
  }
  enum { kByBudget, kByOcclusion, kByDrop } mode = kByBudget;
  if (occlusions.size() > 1) mode = kByOcclusion;
  else if (drops.size() > 1) mode = kByDrop;

  auto column_of = [&](const SummaryRow& r) -> std::string {
    std::ostringstream os;
    switch (mode) {
      case kByBudget:
        if (r.key.policy == "nocomm") return "*";
        os << std::setprecision(3) << r.key.budget * 100 << "% (" << std::fixed << std::setprecision(1)
           << r.key.kb_label << " KB)";
        return os.str();
      case kByOcclusion: return r.key.occlusion;
      case kByDrop: os << std::setprecision(3) << r.key.drop_rate * 100 << "% drop"; return os.str();
    }
    return "";
  };

  std::vector<std::string> columns, policies;
  std::map<std::pair<std::string, std::string>, std::string> cells;
  for (const auto& r : rows) {
    const std::string col = column_of(r);
    if (col != "*" && std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
    if (std::find(policies.begin(), policies.end(), r.key.policy) == policies.end()) policies.push_back(r.key.policy);
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << r.ap_mean << "+-" << r.ap_std;
    cells[{r.key.policy, col}] = os.str();
  }
  std::ostringstream os;
  const int w0 = 14, w = 16;
  os << std::left << std::setw(w0) << "policy";
  for (const auto& c : columns) os << " | " << std::setw(std::max<int>(w, static_cast<int>(c.size()))) << c;
  os << "\n";
  for (const auto& p : policies) {
    os << std::left << std::setw(w0) << p;
    for (const auto& c : columns) {
      auto it = cells.find({p, c});
      // budget-independent rows (nocomm) repeat in every column
      if (it == cells.end()) it = cells.find({p, "*"});
      const std::string v = it == cells.end() ? "-" : it->second;
      os << " | " << std::setw(std::max<int>(w, static_cast<int>(c.size()))) << v;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace r2t
