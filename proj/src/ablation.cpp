#include "pgds/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "pgds/common.hpp"
#include "pgds/evaluate.hpp"
#include "pgds/plot.hpp"
#include "pgds/trainer.hpp"

#include "json.hpp"

namespace pgds {

namespace fs = std::filesystem;

namespace {

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

struct MeanStd {
  double mean = 0.0, std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(sq / static_cast<double>(xs.size()));
  return out;
}

}  // namespace

void validate(const AblationSpec& spec) {
  PGDS_CHECK_ARG(spec.parameter == "lambda" || spec.parameter == "php_depth",
                 "unknown sweep parameter '", spec.parameter, "'");
  PGDS_CHECK_ARG(!spec.values.empty(), "sweep needs at least one value");
  PGDS_CHECK_ARG(!spec.seeds.empty(), "sweep needs at least one seed");
  for (double v : spec.values) {
    if (spec.parameter == "lambda") {
      PGDS_CHECK_ARG(v >= 0.0 && v <= 1.0, "lambda value ", v, " outside [0,1]");
    } else {
      PGDS_CHECK_ARG(v == 1.0 || v == 2.0 || v == 3.0, "php_depth value ", v,
                     " must be 1, 2, or 3");
    }
  }
  validate(spec.base);
}

std::size_t trainable_param_count(const PGDSConfig& cfg) {
  PGDSModel model(cfg);
  std::size_t total = 0;
  for (const auto& p : model.trainable_params()) total += p.value->size();
  return total;
}

namespace {

PGDSConfig cell_config(const AblationSpec& spec, double value, std::uint64_t seed) {
  PGDSConfig cfg = spec.base;
  if (spec.parameter == "lambda") {
    cfg.guide_weight = value;
  } else {
    cfg.php_stages = php_stages_for_depth(static_cast<int>(value));
  }
  cfg.seed = seed;
  return cfg;
}

void run_cell(const AblationSpec& spec, const Dataset& ds, const std::string& pose_path,
              const std::string& out_dir, AblationCell& cell) {
  const std::string cell_dir = out_dir + "/" + spec.parameter + "_" + format_value(cell.value) +
                               "_s" + std::to_string(cell.seed);
  try {
    const PGDSConfig cfg = cell_config(spec, cell.value, cell.seed);
    TrainResult tr = train(cfg, ds, pose_path, cell_dir);
    auto model = load_model_checkpoint(tr.checkpoint_path);
    MetricsReport std_report = evaluate_dataset(*model, ds, "standard");
    MetricsReport cc_report = evaluate_dataset(*model, ds, "cc");
    write_metrics_json(cell_dir + "/metrics_standard.json", std_report);
    write_metrics_json(cell_dir + "/metrics_cc.json", cc_report);
    cell.ok = true;
    cell.map_standard = std_report.map;
    cell.r1_standard = std_report.rank1;
    cell.map_cc = cc_report.map;
    cell.r1_cc = cc_report.rank1;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
}

}  // namespace

AblationTable run_ablation(const AblationSpec& spec, const Dataset& ds,
                           const std::string& pose_checkpoint_path, const std::string& out_dir,
                           int parallel) {
  validate(spec);
  PGDS_CHECK_ARG(parallel >= 1, "parallel cell count must be at least 1");
  PGDS_CHECK_ARG(parallel == 1 || !spec.base.strict_deterministic,
                 "strict-deterministic sweeps must run sequentially");
  fs::create_directories(out_dir);

  AblationTable table;
  table.parameter = spec.parameter;
  for (double value : spec.values) {
    for (std::uint64_t seed : spec.seeds) {
      AblationCell cell;
      cell.value = value;
      cell.seed = seed;
      table.cells.push_back(cell);
    }
  }

  if (parallel == 1) {
    for (auto& cell : table.cells) run_cell(spec, ds, pose_checkpoint_path, out_dir, cell);
  } else {
    std::vector<std::thread> workers;
    const int n_threads = std::min<int>(parallel, static_cast<int>(table.cells.size()));
    for (int t = 0; t < n_threads; ++t) {
      workers.emplace_back([&, t] {
        for (std::size_t i = static_cast<std::size_t>(t); i < table.cells.size();
             i += static_cast<std::size_t>(n_threads)) {
          run_cell(spec, ds, pose_checkpoint_path, out_dir, table.cells[i]);
        }
      });
    }
    for (auto& w : workers) w.join();
  }

  for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
    AblationRow row;
    row.value = spec.values[vi];
    row.trainable_params = trainable_param_count(cell_config(spec, row.value, spec.base.seed));
    std::vector<double> ms, rs, mc, rc;
    for (std::size_t si = 0; si < spec.seeds.size(); ++si) {
      const AblationCell& cell = table.cells[vi * spec.seeds.size() + si];
      if (!cell.ok) {
        ++row.failed_runs;
        continue;
      }
      ++row.ok_runs;
      ms.push_back(cell.map_standard);
      rs.push_back(cell.r1_standard);
      mc.push_back(cell.map_cc);
      rc.push_back(cell.r1_cc);
    }
    const MeanStd a = mean_std(ms), b = mean_std(rs), c = mean_std(mc), d = mean_std(rc);
    row.mean_map_standard = a.mean;
    row.std_map_standard = a.std;
    row.mean_r1_standard = b.mean;
    row.std_r1_standard = b.std;
    row.mean_map_cc = c.mean;
    row.std_map_cc = c.std;
    row.mean_r1_cc = d.mean;
    row.std_r1_cc = d.std;
    table.rows.push_back(row);
  }
  return table;
}

void write_ablation_json(const std::string& path, const AblationTable& table) {
  nlohmann::ordered_json j;
  j["parameter"] = table.parameter;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) {
    nlohmann::ordered_json row;
    row["value"] = r.value;
    row["trainable_params"] = r.trainable_params;
    row["ok_runs"] = r.ok_runs;
    row["failed_runs"] = r.failed_runs;
    row["map_standard"] = {{"mean", r.mean_map_standard}, {"std", r.std_map_standard}};
    row["r1_standard"] = {{"mean", r.mean_r1_standard}, {"std", r.std_r1_standard}};
    row["map_cc"] = {{"mean", r.mean_map_cc}, {"std", r.std_map_cc}};
    row["r1_cc"] = {{"mean", r.mean_r1_cc}, {"std", r.std_r1_cc}};
    j["rows"].push_back(row);
  }
  j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : table.cells) {
    nlohmann::ordered_json cell;
    cell["value"] = c.value;
    cell["seed"] = c.seed;
    cell["ok"] = c.ok;
    if (!c.ok) cell["error"] = c.error;
    if (c.ok) {
      cell["map_standard"] = c.map_standard;
      cell["r1_standard"] = c.r1_standard;
      cell["map_cc"] = c.map_cc;
      cell["r1_cc"] = c.r1_cc;
    }
    j["cells"].push_back(cell);
  }
  std::ofstream out(path, std::ios::trunc);
  PGDS_CHECK_IO(out.good(), "cannot write ablation table ", path);
  out << j.dump(2) << '\n';
}

std::string format_ablation_text(const AblationTable& table) {
  std::ostringstream oss;
  oss << "sweep: " << table.parameter << "\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %-12s %-6s %-16s %-16s %-16s %-16s\n", "value",
                "params", "runs", "mAP", "R1", "mAP-cc", "R1-cc");
  oss << line;
  for (const auto& r : table.rows) {
    if (r.ok_runs == 0) {
      std::snprintf(line, sizeof(line), "%-10s %-12zu %d/%d   FAILED\n",
                    format_value(r.value).c_str(), r.trainable_params, r.ok_runs,
                    r.ok_runs + r.failed_runs);
      oss << line;
      continue;
    }
    std::snprintf(line, sizeof(line),
                  "%-10s %-12zu %d/%d   %.4f+-%.4f  %.4f+-%.4f  %.4f+-%.4f  %.4f+-%.4f\n",
                  format_value(r.value).c_str(), r.trainable_params, r.ok_runs,
                  r.ok_runs + r.failed_runs, r.mean_map_standard, r.std_map_standard,
                  r.mean_r1_standard, r.std_r1_standard, r.mean_map_cc, r.std_map_cc,
                  r.mean_r1_cc, r.std_r1_cc);
    oss << line;
  }
  return oss.str();
}

namespace {

struct RunData {
  std::string name;
  std::vector<double> steps, combined;
  // (label, cmc) per metrics file in filename order
  std::vector<std::pair<std::string, std::vector<double>>> cmcs;
  std::vector<std::pair<std::string, double>> maps;
};

}  // namespace

std::string run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  PGDS_CHECK_ARG(!run_dirs.empty(), "no runs");
  fs::create_directories(out_dir);

  std::vector<std::string> warnings;
  std::vector<RunData> runs;
  for (const auto& dir : run_dirs) {
    const std::string log_path = dir + "/train_log.jsonl";
    if (!fs::exists(log_path)) {
      warnings.push_back("run " + dir + " skipped: no train_log.jsonl");
      continue;
    }
    RunData run;
    run.name = fs::path(dir).filename().string();
    if (run.name.empty()) run.name = dir;

    std::ifstream log(log_path);
    std::string line;
    while (std::getline(log, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("step") || !j.contains("combined")) continue;
      run.steps.push_back(j["step"].get<double>());
      run.combined.push_back(j["combined"].get<double>());
    }
    if (run.steps.empty()) {
      warnings.push_back("run " + dir + " skipped: empty training log");
      continue;
    }

    std::vector<std::string> json_files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".json") json_files.push_back(entry.path().string());
    }
    std::sort(json_files.begin(), json_files.end());
    for (const auto& f : json_files) {
      std::ifstream in(f);
      auto j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded() || !j.contains("cmc") || !j.contains("map")) continue;
      std::string label = fs::path(f).stem().string();
      run.cmcs.emplace_back(label, j["cmc"].get<std::vector<double>>());
      run.maps.emplace_back(label, j["map"].get<double>());
    }
    runs.push_back(std::move(run));
  }

  std::ostringstream md;
  md << "# Training report\n\n";
  for (const auto& w : warnings) md << "> warning: " << w << "\n";
  if (!warnings.empty()) md << "\n";

  if (!runs.empty()) {
    std::vector<PlotSeries> loss_series;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      PlotSeries s;
      s.label = runs[i].name;
      s.xs = runs[i].steps;
      s.ys = runs[i].combined;
      s.color = series_color(static_cast<int>(i));
      loss_series.push_back(std::move(s));
    }
    render_line_plot(out_dir + "/loss_curves.png", loss_series, "combined loss", "step",
                     "loss");
    md << "![loss curves](loss_curves.png)\n\n";

    std::vector<PlotSeries> cmc_series;
    int color = 0;
    for (const auto& run : runs) {
      for (const auto& [label, cmc] : run.cmcs) {
        PlotSeries s;
        s.label = run.name + "/" + label;
        for (std::size_t k = 0; k < cmc.size(); ++k) {
          s.xs.push_back(static_cast<double>(k + 1));
          s.ys.push_back(cmc[k]);
        }
        s.color = series_color(color++);
        cmc_series.push_back(std::move(s));
      }
    }
    if (!cmc_series.empty()) {
      render_line_plot(out_dir + "/cmc.png", cmc_series, "CMC", "rank", "accuracy");
      md << "![cmc](cmc.png)\n\n";
    }

    md << "| run | steps | final combined | metrics |\n";
    md << "|---|---|---|---|\n";
    for (const auto& run : runs) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f", run.combined.back());
      md << "| " << run.name << " | " << run.steps.size() << " | " << buf << " | ";
      for (std::size_t i = 0; i < run.maps.size(); ++i) {
        char mb[96];
        std::snprintf(mb, sizeof(mb), "%s mAP %.4f", run.maps[i].first.c_str(),
                      run.maps[i].second);
        md << (i ? "; " : "") << mb;
      }
      md << " |\n";
    }
  }

  const std::string text = md.str();
  std::ofstream out(out_dir + "/report.md", std::ios::trunc);
  PGDS_CHECK_IO(out.good(), "cannot write report to ", out_dir);
  out << text;
  return text;
}

}  // namespace pgds
