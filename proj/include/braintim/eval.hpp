#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "braintim/actions.hpp"
#include "braintim/error.hpp"
#include "braintim/metrics.hpp"
#include "braintim/model.hpp"
#include "braintim/train.hpp"

namespace braintim {

// The branch whose heads give a configuration's reported accuracy: the
// visual branch whenever it exists.
inline Modality headline_branch(const ModelConfig& cfg) {
  return cfg.has_visual() ? Modality::Visual : Modality::Brain;
}

// ---------------------------------------------------------------------------
// Ablation grid

struct AblationCell {
  Fusion fusion = Fusion::Temporal;
  bool embedding = true;
  bool tim = true;
  // Unset for unimodal cells, where the modality embedding does not apply.
  std::optional<bool> modality;

  std::string group() const {
    switch (fusion) {
      case Fusion::BrainOnly: return "brain-only";
      case Fusion::VisualOnly: return "visual-only";
      case Fusion::Temporal: return "fused";
      case Fusion::Spatial: return "fused-spatial";
    }
    return "unknown";
  }

  std::string label() const {
    std::string s = group() + ":g=" + (embedding ? "1" : "0") + " I=" + (tim ? "1" : "0");
    if (modality) s += std::string(" m=") + (*modality ? "1" : "0");
    return s;
  }
};

// Column order: brain-only and visual-only over (g, I) in
// {00, 10, 01, 11}; fused over (g, I, m) in {000, 100, 010, 001, 111}.
inline std::vector<AblationCell> ablation_grid() {
  std::vector<AblationCell> grid;
  for (Fusion f : {Fusion::BrainOnly, Fusion::VisualOnly}) {
    for (auto [g, i] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}}) {
      grid.push_back({f, g, i, std::nullopt});
    }
  }
  for (auto [g, i, m] : {std::tuple{false, false, false}, {true, false, false}, {false, true, false},
                         {false, false, true}, {true, true, true}}) {
    grid.push_back({Fusion::Temporal, g, i, m});
  }
  return grid;
}

// Throws ConfigError naming the offending toggle.
inline void validate_cell(const AblationCell& cell, const ModelConfig& base) {
  const bool unimodal = cell.fusion == Fusion::VisualOnly || cell.fusion == Fusion::BrainOnly;
  if (unimodal && cell.modality) {
    throw ConfigError("ablation cell " + cell.label() + ": toggle m (modality embedding) only applies to fused cells");
  }
  if (!unimodal && !cell.modality) {
    throw ConfigError("ablation cell " + cell.label() + ": fused cells must set toggle m (modality embedding)");
  }
  if (!cell.embedding) {
    const bool vis = cell.fusion != Fusion::BrainOnly;
    const bool brn = cell.fusion != Fusion::VisualOnly;
    if ((vis && base.visual_dim != base.dim) || (brn && base.brain_dim != base.dim)) {
      throw ConfigError("ablation cell " + cell.label() +
                        ": toggle g (embedding layer) off requires feature widths equal to dim " +
                        std::to_string(base.dim));
    }
  }
}

inline ModelConfig apply_cell(const ModelConfig& base, const AblationCell& cell) {
  validate_cell(cell, base);
  ModelConfig c = base;
  c.fusion = cell.fusion;
  c.use_embedding = cell.embedding;
  c.use_tim = cell.tim;
  c.use_modality = cell.modality.value_or(false);
  c.validate();
  return c;
}

struct AblationRow {
  std::size_t cell = 0;
  std::uint64_t seed = 0;
  std::map<BranchTask, double> test_accuracy;
};

struct AblationTable {
  std::vector<AblationCell> cells;
  std::vector<ModelConfig> configs;
  std::vector<AblationRow> rows;
  // Per cell, the headline branch's aggregate over seeds, per task.
  std::vector<std::map<Task, MeanStd>> summary;
};

inline AblationTable run_ablation_grid(const std::vector<Sample>& samples, const Partition& part,
                                       const ModelConfig& base, const TrainConfig& tc,
                                       const std::vector<AblationCell>& grid,
                                       const std::vector<std::uint64_t>& seeds, std::ostream* progress = nullptr) {
  if (grid.empty()) throw ConfigError("ablation grid is empty");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  AblationTable table;
  table.cells = grid;
  for (const auto& cell : grid) table.configs.push_back(apply_cell(base, cell));
  for (std::size_t c = 0; c < grid.size(); ++c) {
    std::vector<std::map<BranchTask, double>> per_seed;
    for (auto seed : seeds) {
      TrainConfig t = tc;
      t.seed = seed;
      const auto run = train_run(samples, part, table.configs[c], t);
      table.rows.push_back({c, seed, run.test.accuracy});
      per_seed.push_back(run.test.accuracy);
      if (progress) {
        const auto b = headline_branch(table.configs[c]);
        *progress << grid[c].label() << " seed=" << seed;
        for (const auto& [task, n] : table.configs[c].class_counts) {
          *progress << " " << to_string(task) << "=" << run.test.accuracy.at({b, task});
        }
        *progress << "\n";
      }
    }
    const auto agg = aggregate_accuracy(per_seed);
    std::map<Task, MeanStd> s;
    for (const auto& [task, n] : table.configs[c].class_counts) s[task] = agg.at({headline_branch(table.configs[c]), task});
    table.summary.push_back(s);
  }
  return table;
}

namespace detail {

inline std::string fmt(double v, const char* spec = "%.4f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string toggle(bool on) { return on ? "on" : "off"; }

}  // namespace detail

// Wide table: one column per cell, toggle rows, then per-seed, mean and std
// accuracy rows (percent) for `task` on each cell's headline branch.
inline void write_ablation_table(std::ostream& os, const AblationTable& t, Task task = Task::Action) {
  os << "row";
  for (const auto& c : t.cells) os << "," << c.label();
  os << "\ngroup";
  for (const auto& c : t.cells) os << "," << c.group();
  os << "\nembedding_g";
  for (const auto& c : t.cells) os << "," << detail::toggle(c.embedding);
  os << "\ntim_I";
  for (const auto& c : t.cells) os << "," << detail::toggle(c.tim);
  os << "\nmodality_m";
  for (const auto& c : t.cells) os << "," << (c.modality ? detail::toggle(*c.modality) : "-");
  os << "\n";
  std::vector<std::uint64_t> seeds;
  for (const auto& r : t.rows) {
    if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
  }
  for (auto seed : seeds) {
    os << "seed_" << seed;
    for (std::size_t c = 0; c < t.cells.size(); ++c) {
      os << ",";
      for (const auto& r : t.rows) {
        if (r.cell == c && r.seed == seed) os << detail::fmt(100.0 * r.test_accuracy.at({headline_branch(t.configs[c]), task}));
      }
    }
    os << "\n";
  }
  os << to_string(task) << "_acc_mean";
  for (const auto& s : t.summary) os << "," << detail::fmt(100.0 * s.at(task).mean);
  os << "\n" << to_string(task) << "_acc_std";
  for (const auto& s : t.summary) os << "," << detail::fmt(100.0 * s.at(task).std);
  os << "\n";
}

// Long table: one row per cell, seed, branch and task.
inline void write_ablation_rows(std::ostream& os, const AblationTable& t) {
  os << "cell,group,g,I,m,seed,branch,task,accuracy\n";
  for (const auto& r : t.rows) {
    const auto& c = t.cells[r.cell];
    for (const auto& [key, acc] : r.test_accuracy) {
      os << c.label() << "," << c.group() << "," << detail::toggle(c.embedding) << "," << detail::toggle(c.tim) << ","
         << (c.modality ? detail::toggle(*c.modality) : "-") << "," << r.seed << "," << to_string(key.first) << ","
         << to_string(key.second) << "," << detail::fmt(acc, "%.17g") << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Report files

inline std::vector<std::string> class_names(Task task) {
  std::vector<std::string> out;
  if (task == Task::Verb) {
    for (auto n : kVerbNames) out.emplace_back(n);
  } else {
    for (const auto& a : kActions) out.emplace_back(a.name);
  }
  return out;
}

// Verbs are listed in display order (the two activity clusters adjacent);
// actions in id order.
inline std::vector<int> display_order(Task task, int n) {
  std::vector<int> order;
  if (task == Task::Verb && n == kVerbCount) {
    order.assign(kVerbDisplayOrder.begin(), kVerbDisplayOrder.end());
  } else {
    for (int i = 0; i < n; ++i) order.push_back(i);
  }
  return order;
}

inline void write_confusion(std::ostream& os, const TaskReport& r, Task task) {
  const int n = static_cast<int>(r.confusion.rows());
  const auto names = class_names(task);
  const auto order = display_order(task, n);
  auto name = [&](int i) { return i < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(i)] : std::to_string(i); };
  os << "true\\predicted";
  for (int j : order) os << "," << name(j);
  os << ",support\n";
  for (int i : order) {
    os << name(i);
    double support = 0.0;
    for (int j = 0; j < n; ++j) support += r.counts(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    for (int j : order) os << "," << detail::fmt(r.confusion(static_cast<std::size_t>(i), static_cast<std::size_t>(j)), "%.6f");
    os << "," << support << "\n";
  }
}

inline constexpr const char* kResultsHeader = "seed,split,branch,task,loss,accuracy";

inline void write_results(std::ostream& os, std::uint64_t seed, const std::string& split, const SplitMetrics& m,
                          bool header = true) {
  if (header) os << kResultsHeader << "\n";
  for (const auto& [key, acc] : m.accuracy) {
    os << seed << "," << split << "," << to_string(key.first) << "," << to_string(key.second) << ","
       << detail::fmt(m.loss.at(key), "%.17g") << "," << detail::fmt(acc, "%.17g") << "\n";
  }
}

inline void write_report(std::ostream& os, const EvalReport& report) {
  os << "branch,task,accuracy,support\n";
  for (const auto& [key, r] : report.tasks) {
    os << to_string(key.first) << "," << to_string(key.second) << "," << detail::fmt(r.accuracy, "%.17g") << ","
       << r.support << "\n";
  }
}

struct ResultKey {
  std::string split, branch, task;
  auto operator<=>(const ResultKey&) const = default;
};

// Groups result rows from several files by (split, branch, task) and
// aggregates accuracy over seeds.
inline std::map<ResultKey, MeanStd> aggregate_result_files(const std::vector<std::filesystem::path>& files) {
  std::map<ResultKey, std::vector<double>> cols;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw DataError("cannot read " + f.string());
    std::string line;
    std::getline(in, line);
    if (line != kResultsHeader) throw ParseError(f.string() + ": unexpected header");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> fields;
      std::stringstream ss(line);
      std::string x;
      while (std::getline(ss, x, ',')) fields.push_back(x);
      if (fields.size() != 6) throw ParseError(f.string() + ": malformed row '" + line + "'");
      try {
        cols[{fields[1], fields[2], fields[3]}].push_back(std::stod(fields[5]));
      } catch (const std::exception&) {
        throw ParseError(f.string() + ": accuracy is not numeric in '" + line + "'");
      }
    }
  }
  std::map<ResultKey, MeanStd> out;
  for (const auto& [k, xs] : cols) out.emplace(k, mean_std(xs));
  return out;
}

inline void write_summary(std::ostream& os, const std::map<ResultKey, MeanStd>& summary) {
  os << "split,branch,task,n,mean,std\n";
  for (const auto& [k, m] : summary) {
    os << k.split << "," << k.branch << "," << k.task << "," << m.n << "," << detail::fmt(m.mean, "%.6f") << ","
       << detail::fmt(m.std, "%.6f") << "\n";
  }
}

}  // namespace braintim
