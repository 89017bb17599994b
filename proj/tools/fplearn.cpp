// fplearn: run fictitious-play experiments from JSON configurations.
//
// Exit codes: 0 success, 1 invalid input (configuration, arguments,
// manifests), 2 runtime failure of an engine.

#include <cstdio>
#include <cstdlib>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fpl/experiment.hpp"
#include "fpl_presets.hpp"

namespace {

constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

const fpl::presets::Entry* find_preset(const std::string& name) {
  for (const auto& e : fpl::presets::kAll) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void print_manifest(const fpl::Manifest& m) {
  std::cout << m.name << " (" << m.engine << ", seed " << m.seed << ") -> " << m.dir.string() << '\n';
  for (const auto& f : m.files) std::cout << "  " << f.path << "  " << f.sha256.substr(0, 16) << "  " << f.bytes << " B\n";
  for (const auto& [k, v] : m.metadata.items()) std::cout << "  " << k << " = " << v.dump() << '\n';
}

// Runs `replicates` copies with seeds seed, seed+1, ... concurrently, each in
// its own rep-NNN subdirectory. One replicate writes straight into `out`.
void run_replicated(const fpl::ExperimentConfig& cfg, const std::filesystem::path& out, int replicates) {
  if (replicates <= 1) {
    print_manifest(fpl::run_experiment(cfg, out));
    return;
  }
  std::vector<std::future<fpl::Manifest>> jobs;
  for (int r = 0; r < replicates; ++r) {
    fpl::ExperimentConfig rep = cfg;
    rep.params.seed = cfg.params.seed + static_cast<std::uint64_t>(r);
    char sub[32];
    std::snprintf(sub, sizeof sub, "rep-%03d", r);
    jobs.push_back(std::async(std::launch::async, [rep, dir = out / sub] { return fpl::run_experiment(rep, dir); }));
  }
  std::string first_error;
  for (auto& j : jobs) {
    try {
      print_manifest(j.get());
    } catch (const std::exception& e) {
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw std::runtime_error(first_error);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fplearn: fictitious-play learning in large populations"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int replicates = 1;
  auto* simulate = app.add_subcommand("simulate", "Run an experiment configuration");
  simulate->add_option("--config", config_path, "JSON configuration file")->required();
  auto* seed_opt = simulate->add_option("--seed", seed, "Override the configured seed");
  simulate->add_option("--out", out_dir, "Output directory");
  simulate->add_option("--replicates", replicates, "Independent seeds to run concurrently")->check(CLI::PositiveNumber);

  std::string manifest_a, manifest_b, metric = "lambda", report_path;
  double tmin = -INFINITY, tmax = INFINITY;
  auto* compare = app.add_subcommand("compare", "Compare the observables of two runs");
  compare->add_option("--a", manifest_a, "First manifest.json")->required();
  compare->add_option("--b", manifest_b, "Second manifest.json")->required();
  compare->add_option("--metric", metric, "lambda, mean_br or mean_prior")
      ->check(CLI::IsMember({"lambda", "mean_br", "mean_prior"}));
  compare->add_option("--tmin", tmin, "Start of the compared window");
  compare->add_option("--tmax", tmax, "End of the compared window");
  compare->add_option("--out", report_path, "Write the report as JSON");

  std::string preset_name, preset_out;
  std::uint64_t preset_seed = 0;
  auto* preset = app.add_subcommand("preset", "Run a bundled preset by name");
  preset->add_option("name", preset_name, "Preset name (see list-presets)")->required();
  preset->add_option("--out", preset_out, "Output directory");
  auto* preset_seed_opt = preset->add_option("--seed", preset_seed, "Override the preset seed");

  auto* list = app.add_subcommand("list-presets", "List bundled presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  const char* env_out = std::getenv("FPLEARN_OUT_DIR");
  try {
    if (*simulate) {
      auto cfg = fpl::load_config(config_path);
      if (*seed_opt) cfg.params.seed = seed;
      run_replicated(cfg, fpl::resolve_output_dir(out_dir, env_out, cfg), replicates);
    } else if (*compare) {
      const auto report = fpl::compare_runs(manifest_a, manifest_b, metric, tmin, tmax);
      std::printf("metric %s over t in [%g, %g], %zu points\n", report.metric.c_str(), report.t_min, report.t_max,
                  report.points);
      for (std::size_t i = 0; i < report.sup.size(); ++i) {
        std::printf("  component %zu: sup %.6g  rms %.6g\n", i + 1, report.sup[i], report.rms[i]);
      }
      std::printf("  overall:     sup %.6g  rms %.6g\n", report.sup_all, report.rms_all);
      if (!report_path.empty()) {
        std::ofstream os(report_path, std::ios::binary);
        os << report.to_json().dump(2) << '\n';
        if (!os) throw std::runtime_error("cannot write " + report_path);
      }
    } else if (*preset) {
      const auto* entry = find_preset(preset_name);
      if (entry == nullptr) {
        std::cerr << "error: unknown preset '" << preset_name << "' (try list-presets)\n";
        return kExitInvalid;
      }
      auto cfg = fpl::parse_config(entry->text, std::string(entry->name) + ".json");
      if (*preset_seed_opt) cfg.params.seed = preset_seed;
      print_manifest(fpl::run_experiment(cfg, fpl::resolve_output_dir(preset_out, env_out, cfg)));
    } else if (*list) {
      for (const auto& e : fpl::presets::kAll) {
        const auto doc = nlohmann::json::parse(e.text);
        std::cout << e.name << "  [" << doc.value("engine", "") << "]  " << doc.value("description", "") << '\n';
      }
    }
  } catch (const fpl::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const fpl::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
