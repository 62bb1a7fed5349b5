// Command-line front end: run one configuration, sweep a key over a list,
// compare the three interpolation schemes, or verify gradients.

#include <CLI11.hpp>

#include <cstdio>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <topomulti/artifacts.hpp>
#include <topomulti/config.hpp>
#include <topomulti/gradcheck.hpp>
#include <topomulti/problem.hpp>

namespace {

using namespace topomulti;

std::string format_vector(const std::vector<double>& v) {
  std::string s = "[";
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.4f", v[i]);
    if (i) s += ' ';
    s += buf;
  }
  return s + "]";
}

void print_iteration(const IterationRecord& rec) {
  std::printf("it %4d  c %10.6f  V %s  gray %s  change %.4f  beta %g\n", rec.iteration,
              rec.compliance, format_vector(rec.volumes).c_str(),
              format_vector(rec.grayness).c_str(), rec.change, rec.beta);
  std::fflush(stdout);
}

struct RunSummary {
  double compliance = 0.0;
  std::vector<double> volumes;
  std::vector<double> gray;
};

RunSummary execute(const RunConfig& cfg, bool verbose) {
  const RunResult result =
      run_optimization(cfg.problem, cfg.opt, verbose ? print_iteration : IterationCallback{});
  const BuiltProblem built = build_problem(cfg.problem);
  emit_artifacts(result.history, result.design, built.grid, cfg.out_dir, cfg.write_vtk);
  RunSummary s;
  s.compliance = result.history.records.back().compliance;
  s.volumes = result.history.records.back().volumes;
  s.gray = grayness(result.design);
  return s;
}

int cmd_run(const std::string& cfg_path, const std::string& out_override) {
  RunConfig cfg = load_config(cfg_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  const RunSummary s = execute(cfg, true);
  std::printf("final compliance %.6f  V %s  gray %s\n", s.compliance,
              format_vector(s.volumes).c_str(), format_vector(s.gray).c_str());
  std::printf("artifacts written to %s\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_sweep(const std::string& cfg_path, const std::string& key,
              const std::string& values_csv, const std::string& out_override) {
  const RunConfig base = [&] {
    RunConfig c = load_config(cfg_path);
    if (!out_override.empty()) c.out_dir = out_override;
    return c;
  }();

  std::vector<std::string> values;
  for (std::size_t start = 0; start <= values_csv.size();) {
    std::size_t comma = values_csv.find(',', start);
    if (comma == std::string::npos) comma = values_csv.size();
    values.push_back(values_csv.substr(start, comma - start));
    start = comma + 1;
    if (comma == values_csv.size()) break;
  }
  if (values.empty()) {
    std::fprintf(stderr, "sweep: no values given\n");
    return 1;
  }

  std::vector<RunConfig> configs;
  for (const auto& v : values) {
    RunConfig cfg = base;
    try {
      apply_config_key(cfg, key, v);
      cfg.problem.validate();
      cfg.opt.validate();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "sweep: key '%s' = '%s': %s\n", key.c_str(), v.c_str(), e.what());
      return 1;
    }
    cfg.out_dir = base.out_dir + "/sweep_" + key + "_" + v;
    configs.push_back(std::move(cfg));
  }

  // independent runs; nothing shared, so dispatch them concurrently
  std::vector<std::future<RunSummary>> futures;
  futures.reserve(configs.size());
  for (const auto& cfg : configs)
    futures.push_back(std::async(std::launch::async, [&cfg] { return execute(cfg, false); }));

  std::error_code ec;
  std::filesystem::create_directories(base.out_dir, ec);
  const std::string csv_path = base.out_dir + "/sweep.csv";
  std::ofstream csv(csv_path);
  if (!csv) {
    std::fprintf(stderr, "sweep: cannot write '%s'\n", csv_path.c_str());
    return 1;
  }
  csv << key << ",compliance";
  for (std::size_t i = 1; i <= base.opt.materials.moduli.size(); ++i) csv << ",grayness_" << i;
  csv << "\n";
  std::printf("%-12s %-12s %s\n", key.c_str(), "compliance", "grayness");
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const RunSummary s = futures[i].get();
    csv << values[i];
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", s.compliance);
    csv << ',' << buf;
    for (double g : s.gray) {
      std::snprintf(buf, sizeof buf, "%.10g", g);
      csv << ',' << buf;
    }
    csv << "\n";
    std::printf("%-12s %-12.6f %s\n", values[i].c_str(), s.compliance,
                format_vector(s.gray).c_str());
  }
  std::printf("summary written to %s\n", csv_path.c_str());
  return 0;
}

int cmd_compare(const std::string& cfg_path, const std::string& out_override) {
  RunConfig base = load_config(cfg_path);
  if (!out_override.empty()) base.out_dir = out_override;

  const Scheme schemes[] = {Scheme::pnorm_mapping, Scheme::extended_simp, Scheme::dmo};
  std::vector<RunConfig> configs;
  for (Scheme s : schemes) {
    RunConfig cfg = base;
    cfg.opt.scheme = s;
    cfg.out_dir = base.out_dir + "/compare_" + scheme_name(s);
    configs.push_back(std::move(cfg));
  }
  std::vector<std::future<RunSummary>> futures;
  for (const auto& cfg : configs)
    futures.push_back(std::async(std::launch::async, [&cfg] { return execute(cfg, false); }));

  std::error_code ec;
  std::filesystem::create_directories(base.out_dir, ec);
  const std::string csv_path = base.out_dir + "/compare.csv";
  std::ofstream csv(csv_path);
  if (!csv) {
    std::fprintf(stderr, "compare: cannot write '%s'\n", csv_path.c_str());
    return 1;
  }
  csv << "scheme,compliance";
  for (std::size_t i = 1; i <= base.opt.materials.moduli.size(); ++i) csv << ",grayness_" << i;
  csv << "\n";
  std::printf("%-16s %-12s %s\n", "scheme", "compliance", "grayness");
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const RunSummary s = futures[i].get();
    csv << scheme_name(schemes[i]);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", s.compliance);
    csv << ',' << buf;
    for (double g : s.gray) {
      std::snprintf(buf, sizeof buf, "%.10g", g);
      csv << ',' << buf;
    }
    csv << "\n";
    std::printf("%-16s %-12.6f %s\n", scheme_name(schemes[i]), s.compliance,
                format_vector(s.gray).c_str());
  }
  std::printf("summary written to %s\n", csv_path.c_str());
  return 0;
}

int cmd_gradcheck(unsigned seed) {
  const GradCheckReport report = run_gradient_checks(seed);
  for (const auto& e : report.entries)
    std::printf("[%s] %-36s max rel err %.3e (tol %.0e)\n", e.pass ? "PASS" : "FAIL",
                e.name.c_str(), e.max_rel_err, e.tolerance);
  if (!report.all_pass()) {
    std::fprintf(stderr, "gradcheck: failures detected\n");
    return 1;
  }
  std::printf("gradcheck: all checks passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-material topology optimization benchmarks"};
  app.require_subcommand(1);

  std::string cfg_path, out_dir, sweep_key, sweep_values;
  unsigned seed = 1234;

  auto* run = app.add_subcommand("run", "run one configuration");
  run->add_option("config", cfg_path, "configuration file")->required();
  run->add_option("--out", out_dir, "output directory (overrides the config)");

  auto* sweep = app.add_subcommand("sweep", "vary one key over a list of values");
  sweep->add_option("config", cfg_path, "configuration file")->required();
  sweep->add_option("--key", sweep_key, "configuration key to vary")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep->add_option("--out", out_dir, "output directory (overrides the config)");

  auto* compare = app.add_subcommand("compare", "run all three schemes on one problem");
  compare->add_option("config", cfg_path, "configuration file")->required();
  compare->add_option("--out", out_dir, "output directory (overrides the config)");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference sensitivity checks");
  gradcheck->add_option("--seed", seed, "random seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(cfg_path, out_dir);
    if (sweep->parsed()) return cmd_sweep(cfg_path, sweep_key, sweep_values, out_dir);
    if (compare->parsed()) return cmd_compare(cfg_path, out_dir);
    if (gradcheck->parsed()) return cmd_gradcheck(seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
