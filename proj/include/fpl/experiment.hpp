#pragma once

// Experiment configuration, dispatch to the engines, artifact manifests and
// run comparison.
//
// A configuration is one JSON document:
//
//   {
//     "schema": "fplearn.experiment/1",
//     "name": "fig1-abm",
//     "payoff": [[0, 1], [1, 0]],
//     "labels": ["L", "R"],
//     "engine": "abm" | "meanfield" | "box" | "brd" | "meanbr2x2",
//     "initial": {"kind": "uniform_box", "lo": [0, 3], "hi": [1, 4]},
//     "params": {"N": 1000, "h": 0.001, "mu": 0, "horizon_t": 20, ...},
//     "output": {"dir": "out/fig1-abm", "final_state": true, "svg": true}
//   }
//
// Unknown keys are rejected at every level. See README.md for the full
// parameter table.

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fpl/abm.hpp"
#include "fpl/error.hpp"
#include "fpl/game.hpp"
#include "fpl/initial.hpp"
#include "fpl/meanfield.hpp"
#include "fpl/observables.hpp"
#include "fpl/reduced.hpp"
#include "fpl/svg.hpp"

namespace fpl {

inline constexpr std::string_view kConfigSchema = "fplearn.experiment/1";
inline constexpr std::string_view kManifestSchema = "fplearn.manifest/1";

enum class Engine { Abm, MeanField, Box, Brd, MeanBr2x2 };

inline const char* to_string(Engine e) {
  switch (e) {
    case Engine::Abm: return "abm";
    case Engine::MeanField: return "meanfield";
    case Engine::Box: return "box";
    case Engine::Brd: return "brd";
    case Engine::MeanBr2x2: return "meanbr2x2";
  }
  return "?";
}

struct ExperimentParams {
  std::size_t agents = 0;     // N, abm
  std::size_t particles = 0;  // M, meanfield
  double h = 0.0;
  double mu = 0.0;
  double dt = 0.0;
  double horizon_t = 0.0;
  double sample_every = 0.1;
  std::uint64_t seed = 0;
  bool diffusion = false;
  TieRule tie{};
  OdeMethod method = OdeMethod::Euler;
  InitMode init_mode = InitMode::Random;
  double l = 1.0;           // constant overlap length, meanbr2x2
  bool l_from_box = false;  // measure l(t) from the box trajectory instead
  std::vector<double> br0{1.0, 0.0};
};

struct OutputOptions {
  std::string dir;
  bool final_state = true;
  bool svg = true;
};

struct ExperimentConfig {
  std::string name;
  Game game;
  Engine engine;
  std::optional<InitialDistribution> initial;
  ExperimentParams params;
  OutputOptions output;
};

namespace detail {

using json = nlohmann::json;

inline std::string line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_.empty() ? "document" : path_, "must be an object");
  }

  void allow(std::initializer_list<std::string_view> keys) const {
    const std::set<std::string_view> known(keys);
    for (const auto& [k, v] : obj_.items()) {
      if (!known.contains(k)) fail(key(k), "unknown key");
    }
  }

  bool has(const std::string& k) const { return obj_.contains(k); }
  const json& raw(const std::string& k) const { return obj_.at(k); }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError("'" + where + "': " + what);
  }
  std::string key(std::string_view k) const { return path_.empty() ? std::string(k) : path_ + "." + std::string(k); }

  double number(const std::string& k) const {
    require(k);
    const auto& v = obj_.at(k);
    if (!v.is_number()) fail(key(k), "must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(key(k), "must be finite");
    return d;
  }
  double number_or(const std::string& k, double fallback) const { return has(k) ? number(k) : fallback; }

  std::uint64_t integer(const std::string& k) const {
    require(k);
    const auto& v = obj_.at(k);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(key(k), "must be a nonnegative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean_or(const std::string& k, bool fallback) const {
    if (!has(k)) return fallback;
    if (!obj_.at(k).is_boolean()) fail(key(k), "must be true or false");
    return obj_.at(k).get<bool>();
  }

  std::string string(const std::string& k) const {
    require(k);
    if (!obj_.at(k).is_string()) fail(key(k), "must be a string");
    return obj_.at(k).get<std::string>();
  }
  std::string string_or(const std::string& k, std::string fallback) const {
    return has(k) ? string(k) : std::move(fallback);
  }

  std::vector<double> numbers(const std::string& k) const {
    require(k);
    const auto& v = obj_.at(k);
    if (!v.is_array()) fail(key(k), "must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(key(k), "must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  void require(const std::string& k) const {
    if (!has(k)) fail(key(k), "required key is missing");
  }

 private:
  const json& obj_;
  std::string path_;
};

inline InitialDistribution parse_initial(const Reader& r) {
  const std::string kind = r.string("kind");
  try {
    if (kind == "uniform_box") {
      r.allow({"kind", "lo", "hi"});
      return UniformBox{r.numbers("lo"), r.numbers("hi")};
    }
    if (kind == "point_mass") {
      r.allow({"kind", "x"});
      return PointMass{r.numbers("x")};
    }
    if (kind == "lattice") {
      r.allow({"kind", "lo", "hi", "counts"});
      Lattice lat{r.numbers("lo"), r.numbers("hi"), {}};
      for (double c : r.numbers("counts")) {
        if (c < 1 || c != std::floor(c)) Reader::fail(r.key("counts"), "must be positive integers");
        lat.counts.push_back(static_cast<std::size_t>(c));
      }
      return lat;
    }
  } catch (const ConfigError&) {
    throw;
  }
  Reader::fail(r.key("kind"), "must be one of uniform_box, point_mass, lattice");
}

inline Engine parse_engine(const std::string& s) {
  if (s == "abm") return Engine::Abm;
  if (s == "meanfield") return Engine::MeanField;
  if (s == "box") return Engine::Box;
  if (s == "brd") return Engine::Brd;
  if (s == "meanbr2x2") return Engine::MeanBr2x2;
  Reader::fail("engine", "must be one of abm, meanfield, box, brd, meanbr2x2");
}

// The square box encoded by a uniform_box initial distribution.
inline Box square_box(const InitialDistribution& init, const std::string& why) {
  const auto* ub = std::get_if<UniformBox>(&init);
  if (ub == nullptr || ub->lo.size() != 2) Reader::fail("initial", why + " needs a 2-D uniform_box");
  const double sx = ub->hi[0] - ub->lo[0], sy = ub->hi[1] - ub->lo[1];
  if (std::abs(sx - sy) > 1e-12 * std::max(1.0, sx)) Reader::fail("initial", why + " needs a square box");
  return Box{{0.5 * (ub->lo[0] + ub->hi[0]), 0.5 * (ub->lo[1] + ub->hi[1])}, sx};
}

}  // namespace detail

/// Parses and validates a configuration document. Defaults: tie =
/// lowest_index, diffusion off, method euler, sample_every 0.1, seed 0.
inline ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>") {
  using detail::json;
  using detail::Reader;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": parse error at " + detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0) + ": " +
                      e.what());
  }
  try {
    const Reader root(doc, "");
    root.allow({"schema", "name", "description", "payoff", "labels", "engine", "initial", "params", "output"});
    if (root.string("schema") != kConfigSchema) {
      Reader::fail("schema", "unsupported schema (expected " + std::string(kConfigSchema) + ")");
    }

    // Game.
    root.require("payoff");
    const json& pj = root.raw("payoff");
    if (!pj.is_array() || pj.size() < 2) Reader::fail("payoff", "must be an n x n array with n >= 2");
    std::vector<std::vector<double>> rows;
    for (const auto& row : pj) {
      if (!row.is_array() || row.size() != pj.size()) Reader::fail("payoff", "must be a square n x n array");
      std::vector<double> r;
      for (const auto& v : row) {
        if (!v.is_number()) Reader::fail("payoff", "entries must be numbers");
        r.push_back(v.get<double>());
      }
      rows.push_back(std::move(r));
    }
    std::vector<std::string> labels;
    if (root.has("labels")) {
      const json& lj = root.raw("labels");
      if (!lj.is_array() || lj.size() != rows.size()) Reader::fail("labels", "must list one name per action");
      for (const auto& l : lj) {
        if (!l.is_string()) Reader::fail("labels", "must be strings");
        labels.push_back(l.get<std::string>());
      }
    }
    std::optional<Game> game;
    try {
      game.emplace(Game::from_rows(rows, labels));
    } catch (const InvalidArgument& e) {
      Reader::fail("payoff", e.what());
    }
    const std::size_t n = game->actions();

    const Engine engine = detail::parse_engine(root.string("engine"));
    ExperimentConfig cfg{root.string_or("name", "experiment"), *game, engine, std::nullopt, {}, {}};

    if (root.has("initial")) {
      cfg.initial = detail::parse_initial(Reader(root.raw("initial"), "initial"));
      try {
        validate(*cfg.initial);
      } catch (const InvalidArgument& e) {
        Reader::fail("initial", e.what());
      }
      if (dimension(*cfg.initial) != n) Reader::fail("initial", "dimension does not match the payoff matrix");
    }

    // Parameters.
    root.require("params");
    const Reader pr(root.raw("params"), "params");
    pr.allow({"N", "M", "h", "mu", "dt", "horizon_t", "sample_every", "seed", "diffusion", "tie", "method",
              "init_mode", "l", "br0"});
    auto& p = cfg.params;
    p.horizon_t = pr.number("horizon_t");
    if (!(p.horizon_t > 0.0)) Reader::fail("params.horizon_t", "must be positive");
    p.sample_every = pr.number_or("sample_every", 0.1);
    if (!(p.sample_every > 0.0)) Reader::fail("params.sample_every", "must be positive");
    p.mu = pr.number_or("mu", 0.0);
    if (p.mu < 0.0) Reader::fail("params.mu", "must be nonnegative");
    if (pr.has("h")) {
      p.h = pr.number("h");
      if (!(p.h > 0.0)) Reader::fail("params.h", "learning increment must be positive");
      if (p.mu * p.h > 1.0) Reader::fail("params.mu", "memory factor mu*h must lie in [0, 1]");
    }
    if (pr.has("dt")) {
      p.dt = pr.number("dt");
      if (!(p.dt > 0.0)) Reader::fail("params.dt", "must be positive");
    }
    if (pr.has("seed")) p.seed = pr.integer("seed");
    p.diffusion = pr.boolean_or("diffusion", false);
    const std::string tie = pr.string_or("tie", "lowest_index");
    if (tie == "lowest_index") {
      p.tie = TieRule::lowest_index();
    } else if (tie == "uniform") {
      p.tie = TieRule::uniform();
    } else {
      Reader::fail("params.tie", "must be lowest_index or uniform");
    }
    const std::string method = pr.string_or("method", "euler");
    if (method == "euler") {
      p.method = OdeMethod::Euler;
    } else if (method == "rk4") {
      p.method = OdeMethod::RK4;
    } else {
      Reader::fail("params.method", "must be euler or rk4");
    }
    const std::string init_mode = pr.string_or("init_mode", "random");
    if (init_mode == "random") {
      p.init_mode = InitMode::Random;
    } else if (init_mode == "lattice") {
      p.init_mode = InitMode::Lattice;
    } else {
      Reader::fail("params.init_mode", "must be random or lattice");
    }

    auto need_initial = [&] {
      if (!cfg.initial) Reader::fail("initial", std::string("required by engine ") + to_string(engine));
    };
    auto need = [&](const char* key) { pr.require(key); };
    auto forbid = [&](std::initializer_list<const char*> keys) {
      for (const char* k : keys) {
        if (pr.has(k)) Reader::fail(std::string("params.") + k, std::string("not used by engine ") + to_string(engine));
      }
    };
    switch (engine) {
      case Engine::Abm:
        need_initial();
        need("N");
        need("h");
        forbid({"M", "dt", "diffusion", "method", "init_mode", "l", "br0"});
        p.agents = pr.integer("N");
        if (p.agents < 2) Reader::fail("params.N", "needs at least 2 agents");
        break;
      case Engine::MeanField:
        need_initial();
        need("M");
        need("dt");
        forbid({"N", "method", "l", "br0"});
        p.particles = pr.integer("M");
        if (p.particles < 1) Reader::fail("params.M", "needs at least 1 particle");
        if (p.diffusion && !pr.has("h")) Reader::fail("params.h", "required when diffusion is on");
        break;
      case Engine::Box:
        need_initial();
        need("dt");
        forbid({"N", "M", "diffusion", "init_mode", "l", "br0"});
        if (p.mu != 0.0) Reader::fail("params.mu", "the translating-box model requires mu = 0");
        detail::square_box(*cfg.initial, "engine box");
        try {
          mixed_ne_2x2(cfg.game);
        } catch (const InvalidArgument& e) {
          Reader::fail("payoff", std::string("engine box: ") + e.what());
        }
        break;
      case Engine::Brd:
        need_initial();
        need("dt");
        forbid({"N", "M", "diffusion", "init_mode", "l", "br0"});
        break;
      case Engine::MeanBr2x2:
        need("dt");
        forbid({"N", "M", "diffusion", "init_mode"});
        if (n != 2) Reader::fail("payoff", "engine meanbr2x2 needs a 2x2 game");
        if (pr.has("l")) {
          const auto& lj = pr.raw("l");
          if (lj.is_string() && lj.get<std::string>() == "box") {
            p.l_from_box = true;
            need_initial();
            detail::square_box(*cfg.initial, "l = \"box\"");
            try {
              mixed_ne_2x2(cfg.game);
            } catch (const InvalidArgument& e) {
              Reader::fail("payoff", std::string("l = \"box\": ") + e.what());
            }
          } else {
            p.l = pr.number("l");
            if (p.l < 0.0) Reader::fail("params.l", "must be nonnegative or \"box\"");
          }
        }
        if (pr.has("br0")) p.br0 = pr.numbers("br0");
        try {
          MeanBR check(p.br0);
        } catch (const std::exception& e) {
          Reader::fail("params.br0", e.what());
        }
        break;
    }

    if (root.has("output")) {
      const Reader out(root.raw("output"), "output");
      out.allow({"dir", "final_state", "svg"});
      cfg.output.dir = out.string_or("dir", "");
      cfg.output.final_state = out.boolean_or("final_state", true);
      cfg.output.svg = out.boolean_or("svg", true);
    }
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open configuration file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  std::string role;
  std::string sha256;
  std::size_t bytes = 0;
};

struct Manifest {
  std::filesystem::path dir;
  std::string name;
  std::string engine;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> files;
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json doc;
    doc["schema"] = kManifestSchema;
    doc["name"] = name;
    doc["engine"] = engine;
    doc["seed"] = seed;
    doc["files"] = nlohmann::json::array();
    for (const auto& f : files) {
      doc["files"].push_back({{"path", f.path}, {"role", f.role}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    }
    doc["metadata"] = metadata;
    return doc;
  }

  const ManifestEntry* find_role(const std::string& role) const {
    for (const auto& f : files) {
      if (f.role == role) return &f;
    }
    return nullptr;
  }
};

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("manifest " + path.string() + ": " + e.what());
  }
  if (doc.value("schema", "") != kManifestSchema) throw InvalidArgument("not a manifest: " + path.string());
  Manifest m;
  m.dir = path.parent_path();
  m.name = doc.value("name", "");
  m.engine = doc.value("engine", "");
  m.seed = doc.value("seed", std::uint64_t{0});
  for (const auto& f : doc.at("files")) {
    m.files.push_back({f.at("path"), f.at("role"), f.at("sha256"), f.at("bytes")});
  }
  m.metadata = doc.value("metadata", nlohmann::json::object());
  return m;
}

namespace detail {

// Collects written files; removes them again unless commit() is called.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }
  ArtifactWriter(const ArtifactWriter&) = delete;
  ArtifactWriter& operator=(const ArtifactWriter&) = delete;
  ~ArtifactWriter() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : written_) std::filesystem::remove(dir_ / f, ec);
  }

  ManifestEntry write(const std::string& name, const std::string& role, const std::string& content) {
    const auto path = dir_ / name;
    written_.push_back(name);
    std::ofstream out(path, std::ios::binary);
    out << content;
    out.close();
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return {name, role, sha256_hex(content), content.size()};
  }

  void commit() { committed_ = true; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> written_;
  bool committed_ = false;
};

// Index of the first sample at or after each multiple of `every`, plus the last.
inline std::vector<std::size_t> sample_indices(const std::vector<double>& times, double every) {
  std::vector<std::size_t> out;
  if (times.empty()) return out;
  const double t0 = times.front();
  std::size_t k = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double target = t0 + static_cast<double>(k) * every;
    if (times[i] >= target - 1e-9 * std::max(1.0, std::abs(target))) {
      out.push_back(i);
      while (t0 + static_cast<double>(k) * every <= times[i] + 1e-9 * std::max(1.0, std::abs(times[i]))) ++k;
    }
  }
  if (out.back() != times.size() - 1) out.push_back(times.size() - 1);
  return out;
}

// Mean of x / |x|_1 over a 2-D square by the midpoint rule on a 64 x 64 grid.
inline std::vector<double> box_mean_belief(const Box& box) {
  constexpr int kGrid = 64;
  double acc0 = 0.0;
  for (int i = 0; i < kGrid; ++i) {
    const double x = box.lo(0) + (i + 0.5) * box.side / kGrid;
    for (int j = 0; j < kGrid; ++j) {
      const double y = box.lo(1) + (j + 0.5) * box.side / kGrid;
      acc0 += x / (x + y);
    }
  }
  const double l0 = acc0 / (kGrid * kGrid);
  return {l0, 1.0 - l0};
}

inline std::string observables_text(const ObservableSeries& s) {
  std::ostringstream os;
  write_observables_csv(os, s);
  return os.str();
}

inline std::string solution_text(const OdeSolution& sol) {
  std::ostringstream os;
  write_solution_csv(os, sol);
  return os.str();
}

inline std::optional<Box> predicted_box(const ExperimentConfig& cfg) {
  if (cfg.game.actions() != 2 || cfg.params.mu != 0.0 || !cfg.initial) return std::nullopt;
  try {
    const Box box0 = square_box(*cfg.initial, "prediction");
    mixed_ne_2x2(cfg.game);
    const auto sol = integrate_box_center(box0, cfg.game, 1e-3, cfg.params.horizon_t, OdeMethod::Euler);
    return Box{sol.states.back(), box0.side};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline SvgOverlays overlays_for(const ExperimentConfig& cfg, const std::string& title,
                                nlohmann::json& metadata) {
  SvgOverlays ov;
  ov.title = title;
  if (const auto box = predicted_box(cfg)) {
    ov.boxes.push_back({box->lo(0), box->lo(1), box->hi(0), box->hi(1), "red"});
    metadata["predicted_box_center"] = box->center;
  }
  return ov;
}

inline double fitted_decay_rate(const OdeSolution& sol, double t_lo, double t_hi, std::span<const double> target) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  for (std::size_t k = 0; k < sol.times.size(); ++k) {
    const double t = sol.times[k];
    if (t < t_lo || t > t_hi) continue;
    double d2 = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) d2 += std::pow(sol.states[k][i] - target[i], 2);
    if (d2 <= 0.0) continue;
    const double y = 0.5 * std::log(d2);
    sx += t, sy += y, sxx += t * t, sxy += t * y;
    ++m;
  }
  if (m < 2) return std::nan("");
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return -slope;
}

}  // namespace detail

/// Least-squares rate r of |y(t) - target| ~ C exp(-r t) over [t_lo, t_hi].
inline double fitted_decay_rate(const OdeSolution& sol, double t_lo, double t_hi, std::span<const double> target) {
  return detail::fitted_decay_rate(sol, t_lo, t_hi, target);
}

/// Runs the configured engine, writes its artifacts and manifest.json into
/// `out_dir` and returns the manifest. Artifacts written before a failure
/// are removed.
inline Manifest run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  detail::ArtifactWriter writer(out_dir);
  Manifest man;
  man.dir = out_dir;
  man.name = cfg.name;
  man.engine = to_string(cfg.engine);
  man.seed = cfg.params.seed;
  const auto& p = cfg.params;
  const Game& game = cfg.game;
  const std::size_t n = game.actions();
  auto& meta = man.metadata;
  meta["rng_version"] = kRngVersion;

  try {
    switch (cfg.engine) {
      case Engine::Abm: {
        Population pop = init_population(p.agents, n, *cfg.initial, p.seed);
        const LearningParams lp{p.h, p.mu};
        const auto series = run_abm(pop, game, lp, p.horizon_t, p.sample_every, p.tie);
        man.files.push_back(writer.write("observables.csv", "observables", detail::observables_text(series)));
        meta["rounds"] = pop.play_count();
        if (cfg.output.final_state) {
          std::ostringstream os;
          os << "agent_id";
          for (std::size_t i = 1; i <= n; ++i) os << ",x_" << i;
          os << '\n';
          for (std::size_t k = 0; k < pop.agents(); ++k) {
            os << k;
            for (double v : pop.prior(k)) os << ',' << format_number(v);
            os << '\n';
          }
          man.files.push_back(writer.write("final_state.csv", "final_state", os.str()));
        }
        if (cfg.output.svg && n == 2) {
          const auto ov = detail::overlays_for(cfg, cfg.name + " (t = " + format_number(p.horizon_t) + ")", meta);
          man.files.push_back(writer.write("final_state.svg", "scatter", render_svg_scatter(pop.flat(), 2, ov)));
        }
        break;
      }
      case Engine::MeanField: {
        Ensemble ens = init_ensemble(*cfg.initial, p.particles, p.seed, p.init_mode);
        const auto initial_support = support_metrics(ens);
        MeanFieldOptions opt;
        opt.mu = p.mu;
        opt.h = p.h;
        opt.dt = p.dt;
        opt.horizon_t = p.horizon_t;
        opt.sample_every = p.sample_every;
        opt.diffusion = p.diffusion;
        opt.tie = p.tie;
        opt.noise_seed = p.seed;
        const auto series = run_meanfield(ens, game, opt);
        const auto final_support = support_metrics(ens);
        man.files.push_back(writer.write("observables.csv", "observables", detail::observables_text(series)));
        meta["clip_events"] = ens.clip_events();
        meta["initial_diameter"] = initial_support.diameter;
        meta["final_diameter"] = final_support.diameter;
        meta["diameter_method"] = final_support.diameter_method;
        if (cfg.output.final_state) {
          std::ostringstream os;
          os << "particle_id,weight";
          for (std::size_t i = 1; i <= n; ++i) os << ",x_" << i;
          os << '\n';
          for (std::size_t k = 0; k < ens.size(); ++k) {
            os << k << ',' << format_number(ens.weights()[k]);
            for (double v : ens.position(k)) os << ',' << format_number(v);
            os << '\n';
          }
          man.files.push_back(writer.write("final_ensemble.csv", "final_state", os.str()));
        }
        if (cfg.output.svg && n == 2) {
          const auto ov = detail::overlays_for(cfg, cfg.name + " (t = " + format_number(p.horizon_t) + ")", meta);
          man.files.push_back(writer.write("final_ensemble.svg", "scatter", render_svg_scatter(ens.positions(), 2, ov)));
        }
        break;
      }
      case Engine::Box: {
        const Box box0 = detail::square_box(*cfg.initial, "engine box");
        const auto sol = integrate_box_center(box0, game, p.dt, p.horizon_t, p.method);
        man.files.push_back(writer.write("trajectory.csv", "trajectory", detail::solution_text(sol)));
        ObservableSeries series;
        series.n = 2;
        for (std::size_t k : detail::sample_indices(sol.times, p.sample_every)) {
          const Box b{sol.states[k], box0.side};
          ObservableRecord rec;
          rec.t = sol.times[k];
          rec.lambda = detail::box_mean_belief(b);
          rec.mean_br = box_mean_br_2x2(b, game).values();
          rec.mean_prior = b.center;
          rec.bbox_lo = {b.lo(0), b.lo(1)};
          rec.bbox_hi = {b.hi(0), b.hi(1)};
          series.push(std::move(rec));
        }
        man.files.push_back(writer.write("observables.csv", "observables", detail::observables_text(series)));
        meta["final_center"] = sol.states.back();
        break;
      }
      case Engine::Brd: {
        const auto m0 = mean_point(*cfg.initial);
        double s0 = 0.0;
        for (double v : m0) s0 += v;
        const auto sol = integrate_brd(Belief(m0), s0, p.mu, game, p.dt, p.horizon_t, p.method, p.tie);
        man.files.push_back(writer.write("trajectory.csv", "trajectory", detail::solution_text(sol)));
        ObservableSeries series;
        series.n = n;
        for (std::size_t k : detail::sample_indices(sol.times, p.sample_every)) {
          const auto& y = sol.states[k];
          ObservableRecord rec;
          rec.t = sol.times[k];
          rec.lambda.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n));
          rec.mean_br.assign(n, 0.0);
          accumulate_best_response(game, rec.lambda, p.tie, 1.0, rec.mean_br);
          for (double v : rec.lambda) rec.mean_prior.push_back(v * y[n]);
          rec.bbox_lo = rec.mean_prior;
          rec.bbox_hi = rec.mean_prior;
          series.push(std::move(rec));
        }
        man.files.push_back(writer.write("observables.csv", "observables", detail::observables_text(series)));
        meta["final_lambda"] = std::vector<double>(sol.states.back().begin(), sol.states.back().begin() + static_cast<std::ptrdiff_t>(n));
        break;
      }
      case Engine::MeanBr2x2: {
        std::function<double(double)> schedule = [l = p.l](double) { return l; };
        if (p.l_from_box) {
          const Box box0 = detail::square_box(*cfg.initial, "l = \"box\"");
          auto centers = std::make_shared<OdeSolution>(
              integrate_box_center(box0, game, p.dt, p.horizon_t, OdeMethod::Euler));
          schedule = [centers, side = box0.side, dt = p.dt](double t) {
            const auto k = std::min(centers->states.size() - 1, static_cast<std::size_t>(std::max(0.0, t / dt + 1e-9)));
            return overlap_length(Box{centers->states[k], side});
          };
          // When the box first meets the diagonal, and the smallest l(t) afterwards.
          double l_min = INFINITY;
          for (std::size_t k = 0; k < centers->states.size(); ++k) {
            const double l = overlap_length(Box{centers->states[k], box0.side});
            if (l_min == INFINITY && l > 0.0) meta["l_positive_from_t"] = centers->times[k];
            if (l > 0.0 || l_min != INFINITY) l_min = std::min(l_min, l);
          }
          if (l_min != INFINITY) meta["l_min_after"] = l_min;
        }
        const auto sol = integrate_meanbr_2x2(MeanBR(p.br0), schedule, p.dt, p.horizon_t, p.method);
        man.files.push_back(writer.write("trajectory.csv", "trajectory", detail::solution_text(sol)));
        const std::vector<double> target{0.5, 0.5};
        const double rate = fitted_decay_rate(sol, 0.5, std::min(4.0, p.horizon_t), target);
        if (std::isfinite(rate)) meta["decay_rate"] = rate;
        meta["final_brbar"] = sol.states.back();
        break;
      }
    }
    const std::string text = man.to_json().dump(2) + "\n";
    writer.write("manifest.json", "manifest", text);
    writer.commit();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("engine ") + to_string(cfg.engine) + " failed: " + e.what());
  }
  return man;
}

/// Output directory: the --out flag, else $FPLEARN_OUT_DIR, else the
/// configured output.dir, else out/<name>.
inline std::filesystem::path resolve_output_dir(const std::string& flag, const char* env,
                                                const ExperimentConfig& cfg) {
  if (!flag.empty()) return flag;
  if (env != nullptr && *env != '\0') return env;
  if (!cfg.output.dir.empty()) return cfg.output.dir;
  return std::filesystem::path("out") / cfg.name;
}

// ---------------------------------------------------------------------------
// Comparison of observable series.

struct MetricComparison {
  std::string metric;
  double t_min = 0.0, t_max = 0.0;
  std::size_t points = 0;
  std::vector<double> sup, rms;  // per component
  double sup_all = 0.0, rms_all = 0.0;

  nlohmann::json to_json() const {
    return {{"metric", metric}, {"t_min", t_min}, {"t_max", t_max}, {"points", points},
            {"sup", sup},       {"rms", rms},     {"sup_all", sup_all}, {"rms_all", rms_all}};
  }
};

inline std::string metric_prefix(const std::string& metric) {
  if (metric == "lambda") return "lambda_";
  if (metric == "mean_br" || metric == "brbar") return "brbar_";
  if (metric == "mean_prior") return "mean_prior_";
  throw InvalidArgument("unknown metric '" + metric + "' (expected lambda, mean_br or mean_prior)");
}

inline CsvTable to_table(const ObservableSeries& series) {
  std::ostringstream os;
  write_observables_csv(os, series);
  std::istringstream is(os.str());
  return read_csv(is);
}

namespace detail {

inline std::vector<std::size_t> metric_columns(const CsvTable& t, const std::string& prefix) {
  std::vector<std::size_t> cols;
  for (std::size_t i = 1;; ++i) {
    const auto it = std::find(t.header.begin(), t.header.end(), prefix + std::to_string(i));
    if (it == t.header.end()) break;
    cols.push_back(static_cast<std::size_t>(it - t.header.begin()));
  }
  return cols;
}

inline double interpolate(const CsvTable& t, std::size_t tcol, std::size_t col, double at) {
  const auto& rows = t.rows;
  auto it = std::lower_bound(rows.begin(), rows.end(), at, [tcol](const auto& r, double v) { return r[tcol] < v; });
  if (it == rows.end()) return rows.back()[col];
  if (it == rows.begin() || (*it)[tcol] == at) return (*it)[col];
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (at - lo[tcol]) / (hi[tcol] - lo[tcol]);
  return lo[col] + w * (hi[col] - lo[col]);
}

}  // namespace detail

/// Sup and RMS differences of `metric` between two observable tables, on the
/// union of both time grids inside the common range (optionally narrowed to
/// [t_from, t_to]), with linear interpolation.
inline MetricComparison compare_tables(const CsvTable& a, const CsvTable& b, const std::string& metric,
                                       double t_from = -INFINITY, double t_to = INFINITY) {
  const std::string prefix = metric_prefix(metric);
  const auto ca = detail::metric_columns(a, prefix), cb = detail::metric_columns(b, prefix);
  if (ca.empty() || cb.empty()) throw InvalidArgument("metric '" + metric + "' missing from an observables table");
  if (ca.size() != cb.size()) {
    throw InvalidArgument("metric '" + metric + "' has " + std::to_string(ca.size()) + " components in A but " +
                          std::to_string(cb.size()) + " in B");
  }
  const std::size_t ta = a.column("t"), tb = b.column("t");
  if (a.rows.empty() || b.rows.empty()) throw InvalidArgument("empty observables table");
  const double lo = std::max({a.rows.front()[ta], b.rows.front()[tb], t_from});
  const double hi = std::min({a.rows.back()[ta], b.rows.back()[tb], t_to});
  if (lo > hi) throw InvalidArgument("disjoint time ranges for metric '" + metric + "'");

  std::vector<double> grid;
  for (const auto& r : a.rows) {
    if (r[ta] >= lo && r[ta] <= hi) grid.push_back(r[ta]);
  }
  for (const auto& r : b.rows) {
    if (r[tb] >= lo && r[tb] <= hi) grid.push_back(r[tb]);
  }
  if (grid.empty()) grid.push_back(lo);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  MetricComparison out;
  out.metric = metric;
  out.t_min = lo;
  out.t_max = hi;
  out.points = grid.size();
  out.sup.assign(ca.size(), 0.0);
  out.rms.assign(ca.size(), 0.0);
  double total = 0.0;
  for (double t : grid) {
    for (std::size_t i = 0; i < ca.size(); ++i) {
      const double d = std::abs(detail::interpolate(a, ta, ca[i], t) - detail::interpolate(b, tb, cb[i], t));
      out.sup[i] = std::max(out.sup[i], d);
      out.rms[i] += d * d;
      total += d * d;
    }
  }
  for (std::size_t i = 0; i < ca.size(); ++i) {
    out.sup_all = std::max(out.sup_all, out.sup[i]);
    out.rms[i] = std::sqrt(out.rms[i] / static_cast<double>(grid.size()));
  }
  out.rms_all = std::sqrt(total / static_cast<double>(grid.size() * ca.size()));
  return out;
}

inline CsvTable load_observables(const Manifest& m) {
  const ManifestEntry* e = m.find_role("observables");
  if (e == nullptr) throw InvalidArgument("manifest '" + m.name + "' has no observables file");
  std::ifstream in(m.dir / e->path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + (m.dir / e->path).string());
  return read_csv(in);
}

inline MetricComparison compare_runs(const std::filesystem::path& manifest_a, const std::filesystem::path& manifest_b,
                                     const std::string& metric, double t_from = -INFINITY, double t_to = INFINITY) {
  return compare_tables(load_observables(read_manifest(manifest_a)), load_observables(read_manifest(manifest_b)), metric,
                        t_from, t_to);
}

}  // namespace fpl
