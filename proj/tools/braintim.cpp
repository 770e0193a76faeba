// braintim: data generation, feature caching, training and evaluation.
//
//   braintim <command> [--config FILE] [--key=value ...]
//
// Every configuration key can be overridden on the command line. The
// resolved configuration is written to `resolved.conf` in the output
// directory of each command.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "braintim/braintim.hpp"

namespace fs = std::filesystem;
using namespace braintim;

namespace {

struct Loaded {
  std::vector<SessionEntry> entries;
  std::vector<Sample> samples;
  Partition part;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void echo_config(const RunConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  open_out(dir / "resolved.conf") << format_key_values(to_kv(c));
}

Loaded load(const RunConfig& c, int queries) {
  Loaded l;
  l.entries = read_dataset(c.data_dir);
  if (l.entries.empty()) throw DataError("dataset " + c.data_dir + " has no sessions");
  for (const auto& e : l.entries) l.samples.push_back(make_sample(e.session, c.features, queries));
  const auto keys = session_keys(l.entries);
  const auto split = make_splits(keys, c.split_mode, c.held_out_scenes);
  check_split(keys, split);
  l.part = partition_sessions(keys, split);
  return l;
}

const std::vector<std::size_t>& split_indices(const Partition& p, const std::string& name) {
  if (name == "train") return p.train;
  if (name == "val") return p.val;
  return p.test;
}

void write_confusions(const fs::path& dir, const EvalReport& report) {
  for (const auto& [key, r] : report.tasks) {
    auto out = open_out(dir / ("confusion_" + to_string(key.first) + "_" + to_string(key.second) + ".csv"));
    write_confusion(out, r, key.second);
  }
}

void print_summary(const std::string& what, const std::map<BranchTask, double>& acc) {
  std::cout << what;
  for (const auto& [key, a] : acc) std::cout << " " << to_string(key.first) << "/" << to_string(key.second) << "=" << a;
  std::cout << "\n";
}

int cmd_gen(const RunConfig& c) {
  const auto entries = generate_dataset(c.generator);
  write_dataset(c.data_dir, entries);
  echo_config(c, c.data_dir);
  std::cout << "wrote " << entries.size() << " sessions to " << c.data_dir << "\n";
  return 0;
}

int cmd_prep(const RunConfig& c) {
  auto entries = read_dataset(c.data_dir);
  for (auto& e : entries) cache_features(e.session, c.features);
  write_dataset(c.data_dir, entries);
  echo_config(c, c.data_dir);
  std::cout << "cached features for " << entries.size() << " sessions in " << c.data_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& c) {
  const fs::path out = c.out_dir;
  echo_config(c, out);
  const auto data = load(c, c.model.queries);
  auto log = open_out(out / "train_log.csv");
  const auto run = train_run(data.samples, data.part, c.model, c.train, &log);
  write_checkpoint(out / "model.ckpt", c.model, run.params);
  auto results = open_out(out / "results.csv");
  write_results(results, run.seed, "train", run.train);
  write_results(results, run.seed, "val", run.val, false);
  write_results(results, run.seed, "test", run.test, false);
  const auto report = make_report(c.model, run.test.predictions);
  auto rep = open_out(out / "report.csv");
  write_report(rep, report);
  write_confusions(out, report);
  print_summary("test", run.test.accuracy);
  return 0;
}

int cmd_sweep(const RunConfig& c) {
  const fs::path out = c.out_dir;
  echo_config(c, out);
  const auto data = load(c, c.model.queries);
  const auto sweep = run_seed_sweep(data.samples, data.part, c.model, c.train, c.seeds);
  for (const auto& w : sweep.warnings) std::cerr << "warning: " << w << "\n";
  std::vector<fs::path> files;
  for (const auto& run : sweep.runs) {
    const auto dir = out / ("seed_" + std::to_string(run.seed));
    fs::create_directories(dir);
    auto log = open_out(dir / "train_log.csv");
    log << kLogHeader << "\n";
    for (const auto& row : run.log) write_log_row(log, row);
    files.push_back(dir / "results.csv");
    auto results = open_out(files.back());
    write_results(results, run.seed, "test", run.test);
  }
  auto summary = open_out(out / "summary.csv");
  write_summary(summary, aggregate_result_files(files));
  for (const auto& [key, ms] : sweep.test_accuracy) {
    std::cout << to_string(key.first) << "/" << to_string(key.second) << " " << ms.mean << " +- " << ms.std << " (n="
              << ms.n << ")\n";
  }
  return 0;
}

int cmd_ablate(const RunConfig& c) {
  const fs::path out = c.out_dir;
  echo_config(c, out);
  const auto data = load(c, c.model.queries);
  const auto table = run_ablation_grid(data.samples, data.part, c.model, c.train, ablation_grid(), c.seeds, &std::cout);
  for (const auto& [task, n] : c.model.class_counts) {
    auto wide = open_out(out / ("ablation_" + to_string(task) + ".csv"));
    write_ablation_table(wide, table, task);
  }
  auto rows = open_out(out / "ablation_rows.csv");
  write_ablation_rows(rows, table);
  return 0;
}

int cmd_eval(const RunConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("eval needs io.checkpoint");
  const fs::path out = c.out_dir;
  echo_config(c, out);
  const auto ckpt = read_checkpoint(c.checkpoint);
  const auto data = load(c, ckpt.config.queries);
  const auto m = evaluate(ckpt.config, ckpt.params, data.samples, split_indices(data.part, c.eval_split), c.train.lambda);
  const auto report = make_report(ckpt.config, m.predictions);
  auto rep = open_out(out / "report.csv");
  write_report(rep, report);
  auto results = open_out(out / "results.csv");
  write_results(results, c.train.seed, c.eval_split, m);
  write_confusions(out, report);
  print_summary(c.eval_split, m.accuracy);
  return 0;
}

int cmd_report(const RunConfig& c, const std::vector<std::string>& files) {
  std::vector<fs::path> paths(files.begin(), files.end());
  if (paths.empty()) {
    for (const auto& f : detail::split(c.results, ',')) paths.emplace_back(f);
  }
  if (paths.empty()) throw ConfigError("report needs result files (arguments or io.results)");
  const fs::path out = c.out_dir;
  echo_config(c, out);
  const auto summary = aggregate_result_files(paths);
  auto file = open_out(out / "summary.csv");
  write_summary(file, summary);
  write_summary(std::cout, summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"braintim: multimodal action recognition on video and brain-signal sessions"};
  app.require_subcommand(1);
  std::string config;
  std::vector<std::string> files;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "write a synthetic dataset"},
      {"prep", "cache window features into the session files"},
      {"train", "train one model"},
      {"sweep", "train over sweep.seeds and aggregate"},
      {"ablate", "run the component ablation grid"},
      {"eval", "evaluate a checkpoint on one split"},
      {"report", "aggregate result files into a summary table"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config,-c", config, "key = value configuration file");
    sub->allow_extras();
    sub->footer("Any configuration key may be given as --key=value.");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    KeyValues kv;
    if (!config.empty()) kv = read_key_values(config);
    std::vector<std::string> overrides;
    for (const auto& x : sub->remaining()) {
      if (x.rfind("--", 0) == 0) {
        overrides.push_back(x);
      } else if (name == "report") {
        files.push_back(x);
      } else {
        throw ConfigError("unexpected argument '" + x + "'");
      }
    }
    apply_overrides(kv, overrides);
    const RunConfig c = read_run_config(kv);
    if (name == "gen") return cmd_gen(c);
    if (name == "prep") return cmd_prep(c);
    if (name == "train") return cmd_train(c);
    if (name == "sweep") return cmd_sweep(c);
    if (name == "ablate") return cmd_ablate(c);
    if (name == "eval") return cmd_eval(c);
    return cmd_report(c, files);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
