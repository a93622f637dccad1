// Command-line front end: config ingestion, experiment orchestration and
// CSV/JSON emission for the adaptive-resampling SMC library.

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "asmc/coupling.hpp"
#include "asmc/engine.hpp"
#include "asmc/exact.hpp"
#include "asmc/io.hpp"
#include "asmc/model.hpp"
#include "asmc/stats.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

class UnknownKey : public asmc::Error {
 public:
  explicit UnknownKey(const std::string& key) : Error("unknown config key: " + key) {}
};

class MissingField : public asmc::Error {
 public:
  explicit MissingField(const std::string& key) : Error("missing config field: " + key) {}
};

class TypeMismatch : public asmc::Error {
 public:
  explicit TypeMismatch(const std::string& key) : Error("config field has wrong type: " + key) {}
};

struct ExperimentConfig {
  std::string model_path;
  std::string criterion = "cv2";  // cv2 | entropy | fixed
  std::vector<double> thresholds;
  std::vector<double> threshold_range;  // [lower, upper] when randomized
  std::vector<int> schedule;            // fixed boundaries
  std::vector<int> n_list;
  int replicates = 500;
  std::optional<std::uint64_t> seed;  // explicit, never wall clock
  int blocks = 0;                     // coupled boundaries to compare (0 = all)
  int block = -1;                     // boundary index for experiments (-1 = pick)
  std::vector<double> epsilon_grid;
  std::string out = ".";
  std::string resampler = "select";
  std::uint64_t enum_cap = 1000000;
  std::vector<double> f;  // test function values per state
  std::vector<int> m_list = {1, 2, 4};
  double sigma1_override = 0.0;  // diagnostic: forces the concentration bound

  // the output directory is deliberately not part of the hash: the same
  // experiment written elsewhere must produce the same bytes
  json canonical() const {
    json j;
    j["model"] = model_path;
    j["criterion"] = criterion;
    j["threshold"] = thresholds;
    j["threshold_range"] = threshold_range;
    j["schedule"] = schedule;
    j["n"] = n_list;
    j["replicates"] = replicates;
    j["seed"] = seed ? json(*seed) : json();
    j["blocks"] = blocks;
    j["block"] = block;
    j["epsilon_grid"] = epsilon_grid;
    j["resampler"] = resampler;
    j["enum_cap"] = enum_cap;
    j["f"] = f;
    j["m_list"] = m_list;
    j["sigma1_override"] = sigma1_override;
    return j;
  }

  std::string hash() const { return asmc::hex64(asmc::fnv1a(canonical().dump())); }
};

template <typename T>
std::vector<T> scalar_or_array(const json& value, const std::string& key) {
  std::vector<T> out;
  if (value.is_array()) {
    for (const auto& v : value) {
      if (!v.is_number()) throw TypeMismatch(key);
      out.push_back(v.get<T>());
    }
  } else if (value.is_number()) {
    out.push_back(value.get<T>());
  } else {
    throw TypeMismatch(key);
  }
  return out;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw asmc::Error("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw asmc::Error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw asmc::Error("config must be a JSON object");

  ExperimentConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "model") {
      if (!value.is_string()) throw TypeMismatch(key);
      cfg.model_path = value.get<std::string>();
    } else if (key == "criterion") {
      if (!value.is_string()) throw TypeMismatch(key);
      cfg.criterion = value.get<std::string>();
    } else if (key == "threshold") {
      cfg.thresholds = scalar_or_array<double>(value, key);
    } else if (key == "threshold_range") {
      cfg.threshold_range = scalar_or_array<double>(value, key);
    } else if (key == "schedule") {
      cfg.schedule = scalar_or_array<int>(value, key);
    } else if (key == "n") {
      cfg.n_list = scalar_or_array<int>(value, key);
    } else if (key == "replicates") {
      if (!value.is_number_integer()) throw TypeMismatch(key);
      cfg.replicates = value.get<int>();
    } else if (key == "seed") {
      if (!value.is_number_unsigned() && !value.is_number_integer()) throw TypeMismatch(key);
      cfg.seed = value.get<std::uint64_t>();
    } else if (key == "blocks") {
      if (!value.is_number_integer()) throw TypeMismatch(key);
      cfg.blocks = value.get<int>();
    } else if (key == "block") {
      if (!value.is_number_integer()) throw TypeMismatch(key);
      cfg.block = value.get<int>();
    } else if (key == "epsilon_grid") {
      cfg.epsilon_grid = scalar_or_array<double>(value, key);
    } else if (key == "out") {
      if (!value.is_string()) throw TypeMismatch(key);
      cfg.out = value.get<std::string>();
    } else if (key == "resampler") {
      if (!value.is_string()) throw TypeMismatch(key);
      cfg.resampler = value.get<std::string>();
    } else if (key == "enum_cap") {
      if (!value.is_number()) throw TypeMismatch(key);
      cfg.enum_cap = value.get<std::uint64_t>();
    } else if (key == "f") {
      cfg.f = scalar_or_array<double>(value, key);
    } else if (key == "m_list") {
      cfg.m_list = scalar_or_array<int>(value, key);
    } else if (key == "sigma1_override") {
      if (!value.is_number()) throw TypeMismatch(key);
      cfg.sigma1_override = value.get<double>();
    } else {
      throw UnknownKey(key);
    }
  }
  return cfg;
}

asmc::ResamplerKind resampler_kind(const ExperimentConfig& cfg) {
  if (cfg.resampler == "select") return asmc::ResamplerKind::select;
  if (cfg.resampler == "multinomial") return asmc::ResamplerKind::multinomial;
  throw asmc::Error("resampler must be select or multinomial");
}

asmc::CriterionKind criterion_kind(const ExperimentConfig& cfg) {
  if (cfg.criterion == "cv2") return asmc::CriterionKind::cv2;
  if (cfg.criterion == "entropy") return asmc::CriterionKind::entropy;
  throw asmc::Error("criterion must be cv2, entropy or fixed");
}

std::uint64_t require_seed(const ExperimentConfig& cfg) {
  if (!cfg.seed) throw MissingField("seed");
  return *cfg.seed;
}

asmc::FiniteModel require_model(const ExperimentConfig& cfg) {
  if (cfg.model_path.empty()) throw MissingField("model");
  return asmc::load_model(cfg.model_path);
}

int require_n(const ExperimentConfig& cfg) {
  if (cfg.n_list.empty()) throw MissingField("n");
  return cfg.n_list.front();
}

asmc::Vector test_function(const ExperimentConfig& cfg, int num_states) {
  if (cfg.f.empty()) {
    asmc::Vector f(static_cast<std::size_t>(num_states), 0.0);
    f[num_states > 1 ? 1 : 0] = 1.0;
    return f;
  }
  if (cfg.f.size() != static_cast<std::size_t>(num_states))
    throw asmc::Error("test function must list one value per state");
  return cfg.f;
}

// Thresholds for the oracle/run/experiments: explicit levels, or a band
// sampled once per block index from the threshold keys.
std::vector<double> resolve_thresholds(const ExperimentConfig& cfg, const asmc::FiniteModel& m) {
  if (!cfg.threshold_range.empty()) {
    if (cfg.threshold_range.size() != 2) throw asmc::Error("threshold_range needs two values");
    const asmc::KeyedRng rng(require_seed(cfg), 0);
    return asmc::sample_thresholds(rng, cfg.threshold_range[0], cfg.threshold_range[1],
                                   m.horizon);
  }
  if (cfg.thresholds.empty()) throw MissingField("threshold");
  return cfg.thresholds;
}

asmc::BlockSchedule resolve_schedule(const ExperimentConfig& cfg, const asmc::FiniteModel& m) {
  if (cfg.criterion == "fixed") {
    if (cfg.schedule.empty()) throw MissingField("schedule");
    return asmc::fixed_schedule(m, cfg.schedule);
  }
  return asmc::deterministic_times(m, criterion_kind(cfg), resolve_thresholds(cfg, m));
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  return dir + "/" + name;
}

void write_json(const std::string& path, const json& j) {
  asmc::write_file_atomic(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

int cmd_validate(const ExperimentConfig& cfg) {
  const asmc::FiniteModel m = require_model(cfg);
  std::printf("ok: %d states, horizon %d\n", m.num_states, m.horizon);
  return 0;
}

int cmd_oracle(const ExperimentConfig& cfg) {
  const asmc::FiniteModel m = require_model(cfg);
  const asmc::BlockSchedule schedule = resolve_schedule(cfg, m);
  const asmc::ConstantsReport consts = asmc::constants(m, schedule);
  const std::string hash = cfg.hash();

  asmc::CsvBuilder sched_csv;
  sched_csv.header({"block", "t_n", "truncated"});
  for (std::size_t n = 0; n < schedule.times.size(); ++n) {
    const bool trunc = schedule.truncated && n + 1 == schedule.times.size();
    sched_csv.row({asmc::CsvBuilder::cell(static_cast<int>(n)),
                   asmc::CsvBuilder::cell(schedule.times[n]), trunc ? "1" : "0"});
  }
  sched_csv.comment("config_hash=" + hash);
  asmc::write_file_atomic(join_path(cfg.out, "schedule.csv"), sched_csv.str());

  asmc::CsvBuilder curves;
  curves.header({"block", "s", "value"});
  for (std::size_t b = 0; b < schedule.criterion_curves.size(); ++b)
    for (std::size_t j = 0; j < schedule.criterion_curves[b].size(); ++j)
      curves.row({asmc::CsvBuilder::cell(static_cast<int>(b)),
                  asmc::CsvBuilder::cell(schedule.times[b] + 1 + static_cast<int>(j)),
                  asmc::CsvBuilder::cell(schedule.criterion_curves[b][j])});
  curves.comment("config_hash=" + hash);
  asmc::write_file_atomic(join_path(cfg.out, "criterion_curves.csv"), curves.str());

  asmc::CsvBuilder consts_csv;
  consts_csv.header({"row", "p", "n", "q_pn", "beta_pn", "sigma1", "sigma2", "sigma_sq",
                     "sigma_tilde_sq"});
  for (int p = 0; p <= consts.num_blocks; ++p)
    for (int n = p; n <= consts.num_blocks; ++n)
      consts_csv.row(
          {"pair", asmc::CsvBuilder::cell(p), asmc::CsvBuilder::cell(n),
           asmc::CsvBuilder::cell(
               consts.q_pn[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)]),
           asmc::CsvBuilder::cell(
               consts.beta_pn[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)]),
           "", "", "", ""});
  for (int n = 0; n <= consts.num_blocks; ++n)
    consts_csv.row({"sigma", "", asmc::CsvBuilder::cell(n), "", "",
                    asmc::CsvBuilder::cell(consts.sigma1[static_cast<std::size_t>(n)]),
                    asmc::CsvBuilder::cell(consts.sigma2[static_cast<std::size_t>(n)]),
                    asmc::CsvBuilder::cell(consts.sigma_sq[static_cast<std::size_t>(n)]),
                    asmc::CsvBuilder::cell(consts.sigma_tilde_sq[static_cast<std::size_t>(n)])});
  for (std::size_t p = 0; p < consts.delta.size(); ++p)
    consts_csv.row({"mixing", asmc::CsvBuilder::cell(static_cast<int>(p)), "",
                    asmc::CsvBuilder::cell(consts.delta[p]),
                    asmc::CsvBuilder::cell(consts.block_ratio[p]), "", "", "", ""});
  consts_csv.comment("config_hash=" + hash);
  asmc::write_file_atomic(join_path(cfg.out, "constants.csv"), consts_csv.str());

  std::string eps_text;
  if (schedule.num_complete_blocks() > 0) {
    const double eps = asmc::epsilon_m(schedule, schedule.num_complete_blocks() - 1);
    eps_text = asmc::format_double(eps) + "\n";
  } else {
    eps_text = "nan\n";
  }
  asmc::write_file_atomic(join_path(cfg.out, "epsilon.txt"), eps_text);
  return 0;
}

int cmd_run(const ExperimentConfig& cfg) {
  const asmc::FiniteModel m = require_model(cfg);
  const int n = require_n(cfg);
  const std::uint64_t seed = require_seed(cfg);

  asmc::CriterionSpec spec;
  spec.resampler = resampler_kind(cfg);
  if (cfg.criterion == "fixed") {
    if (cfg.schedule.empty()) throw MissingField("schedule");
    spec = asmc::CriterionSpec::fixed_times(cfg.schedule, spec.resampler);
  } else {
    spec.kind = criterion_kind(cfg);
    if (!cfg.threshold_range.empty()) {
      if (cfg.threshold_range.size() != 2) throw asmc::Error("threshold_range needs two values");
      spec.randomized = true;
      spec.lower = cfg.threshold_range[0];
      spec.upper = cfg.threshold_range[1];
    } else {
      if (cfg.thresholds.empty()) throw MissingField("threshold");
      spec.thresholds = cfg.thresholds;
    }
  }

  const asmc::RunRecord record = asmc::run_adaptive(m, spec, n, seed, 0);
  const std::string hash = cfg.hash();

  json out;
  out["config_hash"] = hash;
  out["n"] = n;
  out["seed"] = seed;
  out["resampling_times"] = record.resampling_times;
  out["final_truncated"] = record.final_truncated;
  out["log_gamma"] = record.log_gamma;
  out["gamma"] = record.gamma();
  out["thresholds_used"] = record.thresholds_used;
  json blocks = json::array();
  for (const asmc::BoundaryRecord& b : record.boundaries) {
    json jb;
    jb["block"] = b.block;
    jb["time"] = b.time;
    jb["truncated"] = b.truncated;
    jb["mean_weight"] = b.mean_weight;
    if (b.block > 0 && std::isfinite(b.threshold)) jb["threshold"] = b.threshold;
    if (b.block > 0 && std::isfinite(b.criterion)) {
      jb["criterion"] = b.criterion;
      jb["ess"] = b.ess;
    }
    jb["pre_hist"] = b.pre_hist;
    if (!b.post_hist.empty()) jb["post_hist"] = b.post_hist;
    blocks.push_back(jb);
  }
  out["blocks"] = blocks;
  write_json(join_path(cfg.out, "run.json"), out);

  asmc::CsvBuilder est;
  std::vector<std::string> header = {"time"};
  for (int x = 0; x < m.num_states; ++x) header.push_back("est_state_" + std::to_string(x));
  header.push_back("criterion");
  est.header(header);
  for (std::size_t s = 0; s < record.weighted_estimates.size(); ++s) {
    std::vector<std::string> cells = {asmc::CsvBuilder::cell(static_cast<int>(s))};
    for (double v : record.weighted_estimates[s]) cells.push_back(asmc::CsvBuilder::cell(v));
    cells.push_back(std::isnan(record.criterion_trace[s])
                        ? ""
                        : asmc::CsvBuilder::cell(record.criterion_trace[s]));
    est.row(cells);
  }
  est.comment("config_hash=" + hash);
  asmc::write_file_atomic(join_path(cfg.out, "estimates.csv"), est.str());
  return 0;
}

int cmd_couple(const ExperimentConfig& cfg) {
  const asmc::FiniteModel m = require_model(cfg);
  const std::uint64_t seed = require_seed(cfg);
  if (cfg.criterion == "fixed") throw asmc::Error("couple needs an adaptive criterion");
  if (cfg.n_list.empty()) throw MissingField("n");

  asmc::CriterionSpec spec;
  spec.kind = criterion_kind(cfg);
  spec.resampler = resampler_kind(cfg);
  spec.thresholds = resolve_thresholds(cfg, m);
  const asmc::BlockSchedule schedule = asmc::deterministic_times(m, spec.kind, spec.thresholds);
  if (schedule.num_complete_blocks() < 1)
    throw asmc::Error("the schedule has no complete block to couple on");
  const int blocks = cfg.blocks > 0 ? std::min(cfg.blocks, schedule.num_complete_blocks())
                                    : schedule.num_complete_blocks();

  const asmc::FailureSweep sweep =
      asmc::failure_sweep(m, spec, schedule, blocks, cfg.n_list, cfg.replicates, seed);
  const std::string hash = cfg.hash();

  asmc::CsvBuilder csv;
  csv.header({"N", "failures", "R", "freq", "wilson_lo", "wilson_hi"});
  for (const asmc::SweepPoint& p : sweep.points)
    csv.row({asmc::CsvBuilder::cell(p.n_particles), asmc::CsvBuilder::cell(p.failures),
             asmc::CsvBuilder::cell(p.replicates), asmc::CsvBuilder::cell(p.freq),
             asmc::CsvBuilder::cell(p.wilson_lo), asmc::CsvBuilder::cell(p.wilson_hi)});
  csv.comment("config_hash=" + hash);
  asmc::write_file_atomic(join_path(cfg.out, "coupling.csv"), csv.str());

  json fit;
  fit["config_hash"] = hash;
  fit["blocks"] = blocks;
  fit["epsilon_m"] = asmc::epsilon_m(schedule, blocks - 1);
  fit["points_used"] = sweep.points_used;
  if (sweep.fit_valid) {
    fit["slope"] = sweep.slope;
    fit["intercept"] = sweep.intercept;
  } else {
    fit["slope"] = nullptr;
    fit["intercept"] = nullptr;
  }
  write_json(join_path(cfg.out, "coupling_fit.json"), fit);
  return 0;
}

int default_block(const ExperimentConfig& cfg, const asmc::BlockSchedule& schedule) {
  if (cfg.block >= 0) {
    if (cfg.block > schedule.num_complete_blocks())
      throw asmc::Error("block index beyond the schedule");
    return cfg.block;
  }
  return std::min(3, schedule.num_complete_blocks());
}

int cmd_concentrate(const ExperimentConfig& cfg) {
  const asmc::FiniteModel m = require_model(cfg);
  const asmc::BlockSchedule schedule = resolve_schedule(cfg, m);
  const asmc::Vector f = test_function(cfg, m.num_states);
  const int block = default_block(cfg, schedule);
  asmc::Vector grid = cfg.epsilon_grid;
  if (grid.empty()) grid = {0.02, 0.05, 0.08, 0.11, 0.14, 0.17, 0.2};

  asmc::TailReport report =
      asmc::tail_experiment(m, schedule, f, block, grid, require_n(cfg), cfg.replicates,
                            require_seed(cfg), resampler_kind(cfg));
  if (cfg.sigma1_override > 0.0) {
    // diagnostic hook: recompute the bound column under a forced constant
    report.sigma1 = cfg.sigma1_override;
    for (std::size_t i = 0; i < report.eps_grid.size(); ++i)
      report.bounds[i] =
          std::min(1.0, asmc::bound_main(report.eps_grid[i], report.n_particles, report.sigma1));
    report.pass = asmc::tail_verdict(report);
  }
  const std::string hash = cfg.hash();

  asmc::CsvBuilder csv;
  csv.header({"epsilon", "count", "freq", "wilson_upper", "bound"});
  for (std::size_t i = 0; i < report.eps_grid.size(); ++i)
    csv.row({asmc::CsvBuilder::cell(report.eps_grid[i]),
             asmc::CsvBuilder::cell(report.exceed_counts[i]),
             asmc::CsvBuilder::cell(report.frequencies[i]),
             asmc::CsvBuilder::cell(report.wilson_upper[i]),
             asmc::CsvBuilder::cell(report.bounds[i])});
  csv.comment("config_hash=" + hash);
  asmc::write_file_atomic(join_path(cfg.out, "concentrate.csv"), csv.str());

  json verdict;
  verdict["config_hash"] = hash;
  verdict["pass"] = report.pass;
  verdict["block"] = report.block;
  verdict["n"] = report.n_particles;
  verdict["replicates"] = report.replicates;
  verdict["sigma1"] = report.sigma1;
  write_json(join_path(cfg.out, "verdict.json"), verdict);
  return report.pass ? 0 : 2;
}

int cmd_bias(const ExperimentConfig& cfg) {
  const asmc::FiniteModel m = require_model(cfg);
  const asmc::BlockSchedule schedule = resolve_schedule(cfg, m);
  const asmc::Vector f = test_function(cfg, m.num_states);
  const int block = default_block(cfg, schedule);

  const asmc::BiasReport report =
      asmc::bias_and_lm_experiment(m, schedule, f, block, require_n(cfg), cfg.replicates,
                                   cfg.m_list, require_seed(cfg), resampler_kind(cfg));
  const std::string hash = cfg.hash();

  asmc::CsvBuilder csv;
  csv.header({"quantity", "order", "value", "se", "bound", "pass"});
  csv.row({"scaled_bias", "",
           asmc::CsvBuilder::cell(report.n_particles * std::abs(report.bias)),
           asmc::CsvBuilder::cell(report.n_particles * report.se_bias),
           asmc::CsvBuilder::cell(report.sigma1), report.bias_pass ? "1" : "0"});
  for (const asmc::LmPoint& p : report.lm)
    csv.row({"lm", asmc::CsvBuilder::cell(p.order), asmc::CsvBuilder::cell(p.value),
             asmc::CsvBuilder::cell(p.se), asmc::CsvBuilder::cell(p.bound),
             p.pass ? "1" : "0"});
  csv.comment("config_hash=" + hash);
  asmc::write_file_atomic(join_path(cfg.out, "bias.csv"), csv.str());

  json verdict;
  verdict["config_hash"] = hash;
  verdict["pass"] = report.pass;
  verdict["block"] = report.block;
  verdict["bias"] = report.bias;
  verdict["sigma1"] = report.sigma1;
  verdict["sigma2"] = report.sigma2;
  write_json(join_path(cfg.out, "verdict.json"), verdict);
  return report.pass ? 0 : 2;
}

int cmd_localfield(const ExperimentConfig& cfg) {
  const asmc::FiniteModel m = require_model(cfg);
  const asmc::BlockSchedule schedule = resolve_schedule(cfg, m);
  const asmc::Vector f = test_function(cfg, m.num_states);
  const int block = default_block(cfg, schedule);

  const asmc::LocalFieldReport report =
      asmc::local_field_experiment(m, schedule, f, block, require_n(cfg), cfg.replicates,
                                   cfg.m_list, require_seed(cfg), resampler_kind(cfg));
  const std::string hash = cfg.hash();

  asmc::CsvBuilder csv;
  csv.header({"quantity", "order", "value", "se", "reference", "pass"});
  csv.row({"mean", "", asmc::CsvBuilder::cell(report.mean),
           asmc::CsvBuilder::cell(report.se_mean), "0", report.mean_pass ? "1" : "0"});
  csv.row({"variance", "", asmc::CsvBuilder::cell(report.variance),
           asmc::CsvBuilder::cell(report.se_variance),
           asmc::CsvBuilder::cell(report.exact_variance), report.variance_pass ? "1" : "0"});
  for (const asmc::LmPoint& p : report.lm)
    csv.row({"lm", asmc::CsvBuilder::cell(p.order), asmc::CsvBuilder::cell(p.value),
             asmc::CsvBuilder::cell(p.se), asmc::CsvBuilder::cell(p.bound),
             p.pass ? "1" : "0"});
  csv.comment("config_hash=" + hash);
  asmc::write_file_atomic(join_path(cfg.out, "localfield.csv"), csv.str());

  json verdict;
  verdict["config_hash"] = hash;
  verdict["pass"] = report.pass;
  verdict["block"] = report.block;
  verdict["exact_variance"] = report.exact_variance;
  verdict["empirical_variance"] = report.variance;
  write_json(join_path(cfg.out, "verdict.json"), verdict);
  return report.pass ? 0 : 2;
}

int cmd_clt(const ExperimentConfig& cfg) {
  const asmc::FiniteModel m = require_model(cfg);
  const asmc::BlockSchedule schedule = resolve_schedule(cfg, m);
  const asmc::Vector f = test_function(cfg, m.num_states);
  const int block = default_block(cfg, schedule);

  const asmc::CltReport report =
      asmc::clt_experiment(m, schedule, f, block, require_n(cfg), cfg.replicates,
                           require_seed(cfg), resampler_kind(cfg), cfg.enum_cap);
  const std::string hash = cfg.hash();

  asmc::CsvBuilder csv;
  csv.header({"quantity", "value"});
  csv.row({"exact_variance", asmc::CsvBuilder::cell(report.exact_variance)});
  csv.row({"empirical_variance", asmc::CsvBuilder::cell(report.empirical_variance)});
  csv.row({"se_variance", asmc::CsvBuilder::cell(report.se_variance)});
  csv.row({"ratio", asmc::CsvBuilder::cell(report.ratio)});
  csv.row({"skewness", asmc::CsvBuilder::cell(report.skewness)});
  csv.row({"excess_kurtosis", asmc::CsvBuilder::cell(report.excess_kurtosis)});
  csv.comment("config_hash=" + hash);
  asmc::write_file_atomic(join_path(cfg.out, "clt.csv"), csv.str());

  json verdict;
  verdict["config_hash"] = hash;
  verdict["pass"] = report.pass;
  verdict["block"] = report.block;
  verdict["ratio"] = report.ratio;
  write_json(join_path(cfg.out, "verdict.json"), verdict);
  return report.pass ? 0 : 2;
}

struct BoundArgs {
  double epsilon = 0.1;
  double n = 1024;
  double sigma1 = 4.0;
  double sigma_sq = 4.0;
  double sigma_tilde_sq = 4.0;
  double rho = 0.05;
  double delta = 0.5;
  double r_bar = 1.0;
  double r_under = 1.0;
  int m = 1;
};

int cmd_bounds(const BoundArgs& a) {
  std::printf("main:             %s\n",
              asmc::format_double(asmc::bound_main(a.epsilon, a.n, a.sigma1)).c_str());
  std::printf(
      "improved:         %s\n",
      asmc::format_double(asmc::bound_improved(a.epsilon, a.n, a.sigma_sq, a.sigma1)).c_str());
  std::printf("fk743:            %s\n",
              asmc::format_double(asmc::bound_fk743(a.epsilon, a.n, a.sigma_tilde_sq)).c_str());
  std::printf("uniform_quantile: %s\n",
              asmc::format_double(
                  asmc::uniform_quantile(a.rho, a.n, a.delta, a.r_bar, a.r_under, a.m))
                  .c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive-resampling SMC experiments"};
  app.require_subcommand(1);

  // --config is resolved before flag binding so flags override file values
  std::string config_path;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];

  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = parse_config_file(config_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  std::string config_echo;  // consumed during the pre-scan
  std::uint64_t seed_flag = 0;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_echo, "JSON config file");
    sub->add_option("--model", cfg.model_path, "model JSON file");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--seed", seed_flag, "base seed")->each([&](const std::string&) {
      cfg.seed = seed_flag;
    });
    sub->add_option("--criterion", cfg.criterion, "cv2 | entropy | fixed");
    sub->add_option("--threshold", cfg.thresholds, "threshold level(s)")->delimiter(',');
    sub->add_option("--threshold-range", cfg.threshold_range,
                    "uniform threshold band: lower,upper")
        ->delimiter(',')
        ->expected(2);
    sub->add_option("--schedule", cfg.schedule, "fixed resampling times (starting at 0)")->delimiter(',');
    sub->add_option("--resampler", cfg.resampler, "select | multinomial");
    sub->add_option("--replicates", cfg.replicates, "independent replicates");
    sub->add_option("--block", cfg.block, "boundary index under study");
    sub->add_option("--enum-cap", cfg.enum_cap, "within-block enumeration cap");
    sub->add_option("--f", cfg.f, "test function values per state")->delimiter(',');
  };

  CLI::App* validate = app.add_subcommand("validate", "check a model file");
  add_common(validate);

  CLI::App* oracle = app.add_subcommand("oracle", "exact schedule, curves, constants, epsilon");
  add_common(oracle);

  CLI::App* run = app.add_subcommand("run", "one particle-system run");
  add_common(run);
  run->add_option("--n", cfg.n_list, "particle count")->delimiter(',');

  CLI::App* couple = app.add_subcommand("couple", "coupling-failure sweep over N");
  add_common(couple);
  couple->add_option("--n-list", cfg.n_list, "particle counts")->delimiter(',');
  couple->add_option("--blocks", cfg.blocks, "boundaries compared");

  CLI::App* concentrate = app.add_subcommand("concentrate", "tail-bound experiment");
  add_common(concentrate);
  concentrate->add_option("--n", cfg.n_list, "particle count")->delimiter(',');
  concentrate->add_option("--epsilon-grid", cfg.epsilon_grid, "tail levels")->delimiter(',');
  concentrate->add_option("--sigma1-override", cfg.sigma1_override,
                          "diagnostic: force the bound constant");

  CLI::App* bias = app.add_subcommand("bias", "bias and moment-bound experiment");
  add_common(bias);
  bias->add_option("--n", cfg.n_list, "particle count")->delimiter(',');
  bias->add_option("--m-list", cfg.m_list, "moment orders")->delimiter(',');

  CLI::App* localfield = app.add_subcommand("localfield", "one-step local field experiment");
  add_common(localfield);
  localfield->add_option("--n", cfg.n_list, "particle count")->delimiter(',');
  localfield->add_option("--m-list", cfg.m_list, "moment orders")->delimiter(',');

  CLI::App* clt = app.add_subcommand("clt", "fluctuation variance experiment");
  add_common(clt);
  clt->add_option("--n", cfg.n_list, "particle count")->delimiter(',');

  BoundArgs bound_args;
  CLI::App* bounds = app.add_subcommand("bounds", "print the closed-form bound values");
  bounds->add_option("--epsilon", bound_args.epsilon, "tail level");
  bounds->add_option("--n", bound_args.n, "particle count");
  bounds->add_option("--sigma1", bound_args.sigma1, "series constant");
  bounds->add_option("--sigma-sq", bound_args.sigma_sq, "squared-series constant");
  bounds->add_option("--sigma-tilde-sq", bound_args.sigma_tilde_sq, "squared-sum constant");
  bounds->add_option("--rho", bound_args.rho, "exceedance probability");
  bounds->add_option("--delta", bound_args.delta, "one-block mixing constant");
  bounds->add_option("--rbar", bound_args.r_bar, "block weight ratio bound");
  bounds->add_option("--runder", bound_args.r_under, "within-window ratio bound");
  bounds->add_option("--m", bound_args.m, "mixing window length");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(cfg);
    if (oracle->parsed()) return cmd_oracle(cfg);
    if (run->parsed()) return cmd_run(cfg);
    if (couple->parsed()) return cmd_couple(cfg);
    if (concentrate->parsed()) return cmd_concentrate(cfg);
    if (bias->parsed()) return cmd_bias(cfg);
    if (localfield->parsed()) return cmd_localfield(cfg);
    if (clt->parsed()) return cmd_clt(cfg);
    if (bounds->parsed()) return cmd_bounds(bound_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
