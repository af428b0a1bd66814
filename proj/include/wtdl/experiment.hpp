#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "wtdl/data_model.hpp"
#include "wtdl/dgp.hpp"
#include "wtdl/errors.hpp"
#include "wtdl/inference.hpp"
#include "wtdl/pipeline.hpp"
#include "wtdl/rng.hpp"

namespace wtdl {

enum class Estimator { wtdl, oracle, no_crossfit };

inline const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::wtdl: return "wtdl";
    case Estimator::oracle: return "oracle";
    case Estimator::no_crossfit: return "no_crossfit";
  }
  return "?";
}

inline Estimator parse_estimator(const std::string& s) {
  if (s == "wtdl") return Estimator::wtdl;
  if (s == "oracle") return Estimator::oracle;
  if (s == "no_crossfit") return Estimator::no_crossfit;
  throw DomainError("unknown estimator '" + s + "'");
}

/// Estimators with confidence intervals.
inline bool has_intervals(Estimator e) { return e != Estimator::no_crossfit; }

struct StudyConfig {
  DgpConfig dgp;
  int m = 2;
  LambdaMethod lambda_method = LambdaMethod::theory;
  double lambda_constant = 1.0;
  int cv_folds = 5;
  WeightMode weight_mode = WeightMode::constant_per_arm;
  double weight_floor = 1e-3;
  double alpha = 0.05;
  int replications = 200;
  std::uint64_t master_seed = 0;
  int parallelism = 1;
  std::vector<Estimator> estimators{Estimator::wtdl};
  std::optional<double> ridge_outcome;
  std::optional<double> ridge_propensity;
  std::optional<double> clip;  // defaults to dgp.propensity_clip

  /// Test hook: multiplies every standard error. Not serialized.
  double se_scale = 1.0;

  [[nodiscard]] PipelineSettings pipeline(std::uint64_t seed) const {
    PipelineSettings s;
    s.m = m;
    s.nuisance.ridge_outcome = ridge_outcome;
    s.nuisance.ridge_propensity = ridge_propensity;
    s.nuisance.clip = clip.value_or(dgp.propensity_clip);
    s.weight_mode = weight_mode;
    s.weight_floor = weight_floor;
    s.inference.lambda.method = lambda_method;
    s.inference.lambda.constant = lambda_constant;
    s.inference.lambda.cv_folds = cv_folds;
    s.inference.nodewise = s.inference.lambda;
    s.inference.alpha = alpha;
    s.seed = seed;
    return s;
  }
};

/// The default study: n = 400, p = 600, s0 = 5, m = 2, rho = 0.3, unit
/// noise, beta = (3, 2, 1.5, 1, 0.5), 200 replications. Outcome dense part
/// of norm 3, randomized treatment, a heavy propensity ridge (p exceeds the
/// training rows) and lambda constant 0.5.
inline StudyConfig desk_preset() {
  StudyConfig c;
  c.dgp = DgpConfig{};
  c.dgp.outcome_dense_scale = 3.0;
  c.dgp.propensity_strength = 0.0;
  c.lambda_constant = 0.5;
  c.ridge_propensity = 1e4;
  return c;
}

inline void validate(const StudyConfig& c) {
  validate(c.dgp);
  if (c.replications < 1) throw DomainError("study config: replications must be >= 1");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw DomainError("study config: alpha must lie in (0, 1)");
  if (c.m < 2) throw DomainError("study config: m must be >= 2");
  if (c.parallelism < 1) throw DomainError("study config: parallelism must be >= 1");
  if (!(c.weight_floor > 0.0)) throw DomainError("study config: weight_floor must be > 0");
  if (c.estimators.empty() ||
      std::find(c.estimators.begin(), c.estimators.end(), Estimator::wtdl) == c.estimators.end()) {
    throw DomainError("study config: estimators must include wtdl");
  }
}

inline void to_json(nlohmann::json& j, const StudyConfig& c) {
  std::vector<std::string> est;
  for (auto e : c.estimators) est.emplace_back(to_string(e));
  j = nlohmann::json{{"dgp", c.dgp},
                     {"m", c.m},
                     {"lambda_method", to_string(c.lambda_method)},
                     {"lambda_constant", c.lambda_constant},
                     {"cv_folds", c.cv_folds},
                     {"weight_mode", to_string(c.weight_mode)},
                     {"weight_floor", c.weight_floor},
                     {"alpha", c.alpha},
                     {"replications", c.replications},
                     {"master_seed", c.master_seed},
                     {"parallelism", c.parallelism},
                     {"estimators", est}};
  if (c.ridge_outcome) j["ridge_outcome"] = *c.ridge_outcome;
  if (c.ridge_propensity) j["ridge_propensity"] = *c.ridge_propensity;
  if (c.clip) j["clip"] = *c.clip;
}

inline void from_json(const nlohmann::json& j, StudyConfig& c) {
  detail::reject_unknown_keys(
      j,
      {"dgp", "m", "lambda_method", "lambda_constant", "cv_folds", "weight_mode", "weight_floor",
       "alpha", "replications", "master_seed", "parallelism", "estimators", "ridge_outcome",
       "ridge_propensity", "clip"},
      "study config");
  if (j.contains("dgp")) c.dgp = j.at("dgp").get<DgpConfig>();
  detail::read_key(j, "m", c.m);
  if (j.contains("lambda_method")) c.lambda_method = parse_lambda_method(j.at("lambda_method").get<std::string>());
  detail::read_key(j, "lambda_constant", c.lambda_constant);
  detail::read_key(j, "cv_folds", c.cv_folds);
  if (j.contains("weight_mode")) c.weight_mode = parse_weight_mode(j.at("weight_mode").get<std::string>());
  detail::read_key(j, "weight_floor", c.weight_floor);
  detail::read_key(j, "alpha", c.alpha);
  detail::read_key(j, "replications", c.replications);
  detail::read_key(j, "master_seed", c.master_seed);
  detail::read_key(j, "parallelism", c.parallelism);
  if (j.contains("estimators")) {
    c.estimators.clear();
    for (const auto& e : j.at("estimators")) c.estimators.push_back(parse_estimator(e.get<std::string>()));
  }
  const auto read_optional = [&](const char* key, std::optional<double>& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<double>();
  };
  read_optional("ridge_outcome", c.ridge_outcome);
  read_optional("ridge_propensity", c.ridge_propensity);
  read_optional("clip", c.clip);
}

inline StudyConfig read_study_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  StudyConfig c;
  try {
    c = j.get<StudyConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  validate(c);
  return c;
}

/// Outcome of one estimator on one replication.
struct ReplicationRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  Estimator estimator = Estimator::wtdl;
  bool ok = false;
  std::string error;
  Vector beta_lasso;
  Vector b;   // empty for estimators without intervals
  Vector se;  // "
  std::vector<Interval> ci;
  double l1_error = 0.0;
  double pred_error = 0.0;
  double delta_norm = std::numeric_limits<double>::quiet_NaN();
  double wall_time = 0.0;  // seconds; the only non-deterministic field
};

inline std::uint64_t replication_seed(std::uint64_t master_seed, int rep) {
  return derive_seed(master_seed, static_cast<std::uint64_t>(rep));
}

namespace detail {

inline void fill_from(ReplicationRecord& rec, const WtdlResult& res, double se_scale) {
  rec.beta_lasso = res.estimate.beta_lasso;
  rec.b = res.estimate.b;
  rec.se = res.estimate.se * se_scale;
  rec.ci = se_scale == 1.0 ? res.estimate.ci
                           : confidence_intervals(rec.b, rec.se, res.estimate.alpha);
}

}  // namespace detail

/// Runs every configured estimator on replication r's dataset. Errors are
/// captured in the records, never thrown.
inline std::vector<ReplicationRecord> run_replication(const StudyConfig& config, int rep) {
  using clock = std::chrono::steady_clock;
  const std::uint64_t seed = replication_seed(config.master_seed, rep);
  std::vector<ReplicationRecord> out;
  for (auto e : config.estimators) {
    ReplicationRecord rec;
    rec.rep = rep;
    rec.seed = seed;
    rec.estimator = e;
    out.push_back(rec);
  }

  Simulation sim;
  try {
    DgpConfig dgp = config.dgp;
    dgp.seed = seed;
    sim = generate(dgp);
    require_valid(sim.observed);
  } catch (const std::exception& ex) {
    for (auto& rec : out) rec.error = std::string("data generation: ") + ex.what();
    return out;
  }
  const auto& obs = sim.observed;
  const auto& gt = sim.truth;
  const PipelineSettings settings = config.pipeline(derive_seed(seed, 100));

  for (auto& rec : out) {
    const auto start = clock::now();
    try {
      switch (rec.estimator) {
        case Estimator::wtdl: {
          const auto res = estimate_wtdl(obs, settings);
          detail::fill_from(rec, res, config.se_scale);
          const auto diag = diagnostics(res.fit, res.inverse, res.problem, obs, gt);
          rec.l1_error = diag.l1_error;
          rec.pred_error = diag.pred_error;
          rec.delta_norm = diag.delta_norm;
          break;
        }
        case Estimator::oracle: {
          const auto res = oracle_estimator(obs, gt, seeded(settings.inference, settings.seed));
          detail::fill_from(rec, res, config.se_scale);
          const auto diag = diagnostics(res.fit, res.inverse, res.problem, obs, gt);
          rec.l1_error = diag.l1_error;
          rec.pred_error = diag.pred_error;
          rec.delta_norm = diag.delta_norm;
          break;
        }
        case Estimator::no_crossfit: {
          IndexVector all(static_cast<std::size_t>(obs.n()));
          for (Eigen::Index i = 0; i < obs.n(); ++i) all[static_cast<std::size_t>(i)] = i;
          const auto full = fit_nuisances(obs, all, 0, settings.nuisance);
          const auto fit =
              dr_catelasso_no_crossfit(obs, full, seeded(settings.inference, settings.seed),
                                       settings.weight_mode, settings.weight_floor);
          rec.beta_lasso = fit.beta;
          const Vector err = fit.beta - gt.beta0;
          rec.l1_error = err.lpNorm<1>();
          // prediction error on the unweighted design for this baseline
          rec.pred_error = (obs.x * err).squaredNorm() / static_cast<double>(obs.n());
          break;
        }
      }
      rec.ok = true;
    } catch (const std::exception& ex) {
      rec.ok = false;
      rec.error = ex.what();
    }
    rec.wall_time = std::chrono::duration<double>(clock::now() - start).count();
  }
  return out;
}

struct EstimatorSummary {
  Estimator estimator = Estimator::wtdl;
  int successes = 0;
  int failures = 0;
  Vector coverage;            // per coefficient, over successful replications
  Vector mean_bias_b;
  Vector mean_bias_beta_lasso;
  Vector rmse_b;
  Vector rmse_beta_lasso;
  Vector mean_ci_width;
  double mean_delta_norm = std::numeric_limits<double>::quiet_NaN();
  double mean_l1_error = 0.0;
  double mean_pred_error = 0.0;
};

struct SimulationReport {
  StudyConfig config;
  Vector beta0;
  std::vector<ReplicationRecord> records;  // ordered by (rep, estimator order)
  std::vector<EstimatorSummary> summary;
};

inline bool covers(const Interval& ci, double value) { return ci.first <= value && value <= ci.second; }

/// Aggregates the successful records of `estimator`, visiting them in the
/// order given.
inline EstimatorSummary summarize(const std::vector<ReplicationRecord>& records,
                                  const Vector& beta0, Estimator estimator) {
  EstimatorSummary s;
  s.estimator = estimator;
  const auto p = beta0.size();
  const bool ci = has_intervals(estimator);
  Vector cover = Vector::Zero(p), bias_b = Vector::Zero(p), bias_l = Vector::Zero(p);
  Vector sq_b = Vector::Zero(p), sq_l = Vector::Zero(p), width = Vector::Zero(p);
  double delta = 0.0, l1 = 0.0, pred = 0.0;
  for (const auto& r : records) {
    if (r.estimator != estimator) continue;
    if (!r.ok) {
      ++s.failures;
      continue;
    }
    ++s.successes;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double el = r.beta_lasso(j) - beta0(j);
      bias_l(j) += el;
      sq_l(j) += el * el;
      if (ci) {
        const auto& iv = r.ci[static_cast<std::size_t>(j)];
        const double eb = r.b(j) - beta0(j);
        bias_b(j) += eb;
        sq_b(j) += eb * eb;
        width(j) += iv.second - iv.first;
        cover(j) += covers(iv, beta0(j)) ? 1.0 : 0.0;
      }
    }
    delta += r.delta_norm;
    l1 += r.l1_error;
    pred += r.pred_error;
  }
  if (s.successes == 0) return s;
  const double k = s.successes;
  s.mean_bias_beta_lasso = bias_l / k;
  s.rmse_beta_lasso = (sq_l / k).cwiseSqrt();
  if (ci) {
    s.coverage = cover / k;
    s.mean_bias_b = bias_b / k;
    s.rmse_b = (sq_b / k).cwiseSqrt();
    s.mean_ci_width = width / k;
    s.mean_delta_norm = delta / k;
  }
  s.mean_l1_error = l1 / k;
  s.mean_pred_error = pred / k;
  return s;
}

inline std::vector<EstimatorSummary> summarize_all(const std::vector<ReplicationRecord>& records,
                                                   const Vector& beta0,
                                                   const std::vector<Estimator>& estimators) {
  std::vector<EstimatorSummary> out;
  for (auto e : estimators) out.push_back(summarize(records, beta0, e));
  return out;
}

/// Runs replications 0..R-1 on up to `parallelism` worker threads. Each
/// replication writes only its own slot, so the report does not depend on
/// scheduling.
inline SimulationReport run_study(const StudyConfig& config) {
  validate(config);
  const int reps = config.replications;
  std::vector<std::vector<ReplicationRecord>> slots(static_cast<std::size_t>(reps));
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int r = next.fetch_add(1); r < reps; r = next.fetch_add(1)) {
      slots[static_cast<std::size_t>(r)] = run_replication(config, r);
    }
  };
  const int threads = std::min(config.parallelism, reps);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SimulationReport report;
  report.config = config;
  DgpConfig dgp = config.dgp;
  dgp.n = 1;  // beta0 does not depend on n or the seed
  report.beta0 = generate(dgp).truth.beta0;
  for (auto& slot : slots) {
    for (auto& rec : slot) report.records.push_back(std::move(rec));
  }
  report.summary = summarize_all(report.records, report.beta0, config.estimators);

  bool any_ok = false;
  for (const auto& rec : report.records) any_ok = any_ok || (rec.ok && rec.estimator == Estimator::wtdl);
  if (!any_ok) {
    std::string first = report.records.empty() ? "" : report.records.front().error;
    throw NumericalError("all replications failed; first error: " + first);
  }
  return report;
}

inline nlohmann::json summary_json(const std::vector<EstimatorSummary>& summary) {
  const auto vec = [](const Vector& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
    return a;
  };
  const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json out = nlohmann::json::object();
  for (const auto& s : summary) {
    out[to_string(s.estimator)] = {{"successes", s.successes},
                                   {"failures", s.failures},
                                   {"coverage", vec(s.coverage)},
                                   {"mean_bias_b", vec(s.mean_bias_b)},
                                   {"mean_bias_beta_lasso", vec(s.mean_bias_beta_lasso)},
                                   {"rmse_b", vec(s.rmse_b)},
                                   {"rmse_beta_lasso", vec(s.rmse_beta_lasso)},
                                   {"mean_ci_width", vec(s.mean_ci_width)},
                                   {"mean_delta_norm", num(s.mean_delta_norm)},
                                   {"mean_l1_error", num(s.mean_l1_error)},
                                   {"mean_pred_error", num(s.mean_pred_error)}};
  }
  return out;
}

inline constexpr const char* kRecordsHeader =
    "rep,estimator,j,beta0_j,beta_lasso_j,b_j,se_j,ci_lo,ci_hi,covered,l1_error,pred_error,"
    "delta_norm";

/// One row per successful (replication, estimator, coefficient); j is
/// 1-based. Estimators without intervals leave b_j..covered empty.
inline void write_records(const SimulationReport& report, std::ostream& out) {
  using detail::format_double;
  out << kRecordsHeader << '\n';
  for (const auto& r : report.records) {
    if (!r.ok) continue;
    const bool ci = has_intervals(r.estimator);
    for (Eigen::Index j = 0; j < report.beta0.size(); ++j) {
      out << r.rep << ',' << to_string(r.estimator) << ',' << (j + 1) << ','
          << format_double(report.beta0(j)) << ',' << format_double(r.beta_lasso(j)) << ',';
      if (ci) {
        const auto& iv = r.ci[static_cast<std::size_t>(j)];
        out << format_double(r.b(j)) << ',' << format_double(r.se(j)) << ','
            << format_double(iv.first) << ',' << format_double(iv.second) << ','
            << (covers(iv, report.beta0(j)) ? 1 : 0);
      } else {
        out << ",,,,";
      }
      out << ',' << format_double(r.l1_error) << ',' << format_double(r.pred_error) << ',';
      if (std::isfinite(r.delta_norm)) out << format_double(r.delta_norm);
      out << '\n';
    }
  }
}

/// records.csv, summary.json (summary, failures, config echo without
/// parallelism) and
/// timings.csv (wall-clock, kept apart from the deterministic outputs).
inline void write_report(const SimulationReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());
  const auto open = [&](const std::string& name) {
    const auto path = (fs::path(out_dir) / name).string();
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    return f;
  };
  {
    auto f = open("records.csv");
    write_records(report, f);
    if (!f.flush()) throw IoError("write to records.csv failed");
  }
  {
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& r : report.records) {
      if (!r.ok) failures.push_back({{"rep", r.rep}, {"estimator", to_string(r.estimator)}, {"error", r.error}});
    }
    nlohmann::json config = report.config;
    config.erase("parallelism");  // results do not depend on it
    nlohmann::json j = {{"summary", summary_json(report.summary)},
                        {"failures", failures},
                        {"config", config}};
    auto f = open("summary.json");
    f << j.dump(2) << '\n';
    if (!f.flush()) throw IoError("write to summary.json failed");
  }
  {
    auto f = open("timings.csv");
    f << "rep,estimator,seed,wall_time\n";
    for (const auto& r : report.records) {
      f << r.rep << ',' << to_string(r.estimator) << ',' << r.seed << ','
        << detail::format_double(r.wall_time) << '\n';
    }
  }
}

/// Rebuilds records and beta0 from a records.csv stream.
inline std::pair<std::vector<ReplicationRecord>, Vector> read_records(std::istream& in,
                                                                      std::vector<Estimator>& order) {
  std::string line;
  if (!std::getline(in, line) || line != kRecordsHeader) {
    throw FormatError(std::string("records file: expected header '") + kRecordsHeader + "'");
  }
  struct Row {
    int rep;
    Estimator est;
    Eigen::Index j;
    std::vector<std::string> f;
  };
  std::vector<Row> rows;
  Eigen::Index p = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto parts = detail::split_commas(line);
    if (parts.size() != 13) {
      throw FormatError("records file: line " + std::to_string(line_no) + " has " +
                        std::to_string(parts.size()) + " fields, expected 13");
    }
    Row row;
    row.f.assign(parts.begin(), parts.end());
    double rep = 0, j = 0;
    if (!detail::parse_double(parts[0], rep) || !detail::parse_double(parts[2], j)) {
      throw ParseError("records file: bad rep/j at line " + std::to_string(line_no));
    }
    row.rep = static_cast<int>(rep);
    row.j = static_cast<Eigen::Index>(j) - 1;
    row.est = parse_estimator(std::string(parts[1]));
    p = std::max(p, row.j + 1);
    rows.push_back(std::move(row));
  }

  const auto num = [&](const std::string& s, std::size_t ln) {
    double v = 0.0;
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (!detail::parse_double(s, v)) throw ParseError("records file: bad number '" + s + "' near row " + std::to_string(ln));
    return v;
  };

  Vector beta0 = Vector::Zero(p);
  std::vector<ReplicationRecord> records;
  order.clear();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& row = rows[k];
    if (std::find(order.begin(), order.end(), row.est) == order.end()) order.push_back(row.est);
    if (records.empty() || records.back().rep != row.rep || records.back().estimator != row.est) {
      ReplicationRecord rec;
      rec.rep = row.rep;
      rec.estimator = row.est;
      rec.ok = true;
      rec.beta_lasso = Vector::Zero(p);
      if (has_intervals(row.est)) {
        rec.b = Vector::Zero(p);
        rec.se = Vector::Zero(p);
        rec.ci.assign(static_cast<std::size_t>(p), {0.0, 0.0});
      }
      rec.l1_error = num(row.f[10], k);
      rec.pred_error = num(row.f[11], k);
      rec.delta_norm = num(row.f[12], k);
      records.push_back(std::move(rec));
    }
    auto& rec = records.back();
    beta0(row.j) = num(row.f[3], k);
    rec.beta_lasso(row.j) = num(row.f[4], k);
    if (has_intervals(row.est)) {
      rec.b(row.j) = num(row.f[5], k);
      rec.se(row.j) = num(row.f[6], k);
      rec.ci[static_cast<std::size_t>(row.j)] = {num(row.f[7], k), num(row.f[8], k)};
    }
  }
  return {std::move(records), std::move(beta0)};
}

/// Summary recomputed from a records.csv file alone.
inline nlohmann::json recompute_summary(const std::string& records_path) {
  std::ifstream in(records_path);
  if (!in) throw IoError("cannot open '" + records_path + "' for reading");
  std::vector<Estimator> order;
  auto [records, beta0] = read_records(in, order);
  return nlohmann::json{{"summary", summary_json(summarize_all(records, beta0, order))}};
}

/// Settings for running the estimator on user data.
struct EstimateOptions {
  int m = 2;
  LambdaMethod lambda_method = LambdaMethod::theory;
  WeightMode weight_mode = WeightMode::constant_per_arm;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::optional<double> ridge_outcome;
  std::optional<double> ridge_propensity;
};

inline PipelineSettings pipeline_settings(const EstimateOptions& o) {
  PipelineSettings s;
  s.m = o.m;
  s.nuisance.ridge_outcome = o.ridge_outcome;
  s.nuisance.ridge_propensity = o.ridge_propensity;
  s.weight_mode = o.weight_mode;
  s.inference.lambda.method = o.lambda_method;
  s.inference.nodewise = s.inference.lambda;
  s.inference.alpha = o.alpha;
  s.seed = o.seed;
  return s;
}

inline WtdlEstimate estimate_from_data(const ObservationSet& obs, const EstimateOptions& o) {
  require_valid(obs);
  return estimate_wtdl(obs, pipeline_settings(o)).estimate;
}

inline WtdlEstimate estimate_from_csv(const std::string& path, const EstimateOptions& o) {
  const auto obs = read_csv(path);
  try {
    require_valid(obs);
  } catch (const DomainError& e) {
    throw DomainError(path + ": " + e.what());
  }
  return estimate_from_data(obs, o);
}

}  // namespace wtdl
