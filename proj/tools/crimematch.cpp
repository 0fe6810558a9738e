#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "crimematch/charts.hpp"
#include "crimematch/config.hpp"
#include "crimematch/csv.hpp"
#include "crimematch/error.hpp"
#include "crimematch/pipeline.hpp"
#include "crimematch/synth.hpp"

namespace cm = crimematch;

namespace {

struct RunOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out;
  int threads = -1;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("-c,--config", o.config_file, "JSON run configuration");
  cmd->add_option("--set", o.overrides, "Override a configuration key (dotted.key=value)")->take_all();
  cmd->add_option("-o,--out", o.out, "Output directory (overrides output_dir)");
  cmd->add_option("-j,--threads", o.threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
}

cm::config::RunConfig load_config(const RunOptions& o) {
  auto overrides = o.overrides;
  if (o.threads >= 0) overrides.push_back("threads=" + std::to_string(o.threads));
  auto config = cm::config::load(o.config_file, overrides);
  if (!o.out.empty()) config.output_dir = std::filesystem::absolute(o.out);
  else config.output_dir = config.resolve(config.output_dir);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crimematch: learned-metric matching analysis of structures and crime"};
  app.require_subcommand(1);

  cm::synth::SynthSpec spec;
  std::string synth_out = "synth";
  std::string profile = "uniform";
  std::size_t n_relevant = 5;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with known effects");
  synth->add_option("-o,--out", synth_out, "Output directory")->capture_default_str();
  synth->add_option("--tracts", spec.n_tracts, "Number of tracts")->capture_default_str();
  synth->add_option("--covariates", spec.n_covariates, "Number of covariates")->capture_default_str();
  synth->add_option("--relevant", n_relevant, "Leading covariates that drive the baseline")->capture_default_str();
  synth->add_option("--tau", spec.tau, "Constant treatment effect")->capture_default_str();
  synth->add_option("--tau-coefficients", spec.tau_coefficients, "Linear CATE coefficients, one per covariate");
  synth->add_option("--baseline-scale", spec.baseline_scale, "Baseline coefficient scale")->capture_default_str();
  synth->add_option("--confounding", spec.confounding_strength, "Confounding strength")->capture_default_str();
  synth->add_option("--noise", spec.noise_sd, "Outcome noise standard deviation")->capture_default_str();
  synth->add_option("--profile", profile, "Crime profile: uniform or peaked-at-structures")->capture_default_str();
  synth->add_option("--population", spec.population, "Residents per tract")->capture_default_str();
  synth->add_option("--rate-offset", spec.rate_offset, "Offset added to every outcome")->capture_default_str();
  synth->add_option("--structures-per-treated", spec.structures_per_treated, "Structures in each treated tract")
      ->capture_default_str();
  synth->add_option("--border", spec.border_m, "Width (m) of a crime-only band around the grid")->capture_default_str();
  synth->add_option("--seed", spec.seed, "Seed")->capture_default_str();

  const std::vector<std::pair<const char*, const char*>> stages = {
      {"ingest", "Load raw inputs into the analysis table"},
      {"treat", "Binarize structure counts into treatment labels"},
      {"match", "Learn metrics and build consensus matched groups"},
      {"estimate", "Estimate CATEs, their variances and the ATE"},
      {"density", "Compute crime-density curves around structures"},
      {"heterogeneity", "Scan CATEs for covariate heterogeneity"},
      {"run", "Run every stage and write report.json"},
  };
  RunOptions run_opts;
  std::vector<CLI::App*> stage_cmds;
  for (const auto& [name, help] : stages) {
    auto* cmd = app.add_subcommand(name, help);
    add_run_options(cmd, run_opts);
    stage_cmds.push_back(cmd);
  }
  auto* charts = app.add_subcommand("charts", "Render SVG charts from a finished run");
  add_run_options(charts, run_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cm::exit_code(cm::ErrorKind::config);
  }

  try {
    if (synth->parsed()) {
      spec.relevant.resize(n_relevant);
      std::iota(spec.relevant.begin(), spec.relevant.end(), std::size_t{0});
      spec.crime_profile = cm::synth::parse_crime_profile(profile);
      const auto data = cm::synth::generate(spec);
      cm::synth::write_dataset(data, synth_out);
      std::cout << "wrote " << data.tracts.size() << " tracts, " << data.crimes.size() << " crimes, "
                << data.structures.size() << " structures to " << synth_out << "; true ATE "
                << cm::csv::format_double(data.truth.true_ate) << "\n";
      return 0;
    }

    const auto config = load_config(run_opts);
    cm::pipeline::Log log;
    log.echo = true;
    if (charts->parsed()) {
      const auto text = cm::csv::read_file(cm::pipeline::report_file(config));
      const auto report = nlohmann::ordered_json::parse(text, nullptr, false);
      if (report.is_discarded()) throw cm::Error(cm::ErrorKind::data, "charts", "report.json is not valid JSON");
      std::vector<std::string> chart_log;
      const auto written = cm::charts::emit_charts(report, config.output_dir, chart_log);
      for (const auto& line : chart_log) std::cerr << line << "\n";
      std::cout << "wrote " << written.size() << " charts\n";
      return 0;
    }
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "ingest") cm::pipeline::stage_ingest(config, log);
    if (name == "treat") cm::pipeline::stage_treat(config, log);
    if (name == "match") cm::pipeline::stage_match(config, log);
    if (name == "estimate") cm::pipeline::stage_estimate(config, log);
    if (name == "density") cm::pipeline::stage_density(config, log);
    if (name == "heterogeneity") cm::pipeline::stage_heterogeneity(config, log);
    if (name == "run") {
      const auto report = cm::pipeline::run_pipeline(config, log);
      for (const auto& s : report["structures"]) {
        std::cout << s["name"].get<std::string>() << ": ATE " << cm::csv::format_double(s["estimate"]["ate"].get<double>())
                  << " over " << s["estimate"]["n_estimates"].get<std::size_t>() << " units\n";
      }
      if (config.charts) {
        std::vector<std::string> chart_log;
        cm::charts::emit_charts(report, config.output_dir, chart_log);
        for (const auto& line : chart_log) std::cerr << line << "\n";
      }
    }
    return 0;
  } catch (const cm::Error& e) {
    std::cerr << "error [" << cm::to_string(e.kind()) << "] " << e.what() << "\n";
    return cm::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error [data] " << e.what() << "\n";
    return cm::exit_code(cm::ErrorKind::data);
  }
}
