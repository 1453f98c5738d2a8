#include "pdmis/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "pdmis/errors.hpp"

namespace pdmis {

namespace {

enum StreamTag : std::uint64_t { kMeans = 1, kSamples = 2, kPartition = 3, kSelection = 4 };

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string normalize_key(std::string key) {
  key = trim(key);
  while (!key.empty() && key.front() == '-') key.erase(key.begin());
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const std::string v = trim(value);
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw ParseError("invalid value for '" + key + "': '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v.empty() || v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ParseError("invalid value for '" + key + "': '" + value + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) out.push_back(parse_number<std::size_t>(key, item));
  if (out.empty()) throw ParseError("empty list for '" + key + "'");
  return out;
}

void apply_setting(ExperimentConfig& cfg, const std::string& raw_key, const std::string& value) {
  const std::string key = normalize_key(raw_key);
  if (key == "n-proposals") {
    cfg.n_proposals = parse_number<std::size_t>(key, value);
  } else if (key == "sigma") {
    cfg.sigma = parse_number<double>(key, value);
  } else if (key == "box-lo") {
    cfg.box_lo = parse_number<double>(key, value);
  } else if (key == "box-hi") {
    cfg.box_hi = parse_number<double>(key, value);
  } else if (key == "p-values") {
    cfg.p_values = parse_list(key, value);
  } else if (key == "runs") {
    cfg.n_runs = parse_number<std::size_t>(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "dim") {
    cfg.dim = parse_number<std::size_t>(key, value);
  } else if (key == "out") {
    cfg.output_path = trim(value);
  } else if (key == "plot") {
    cfg.plot_path = trim(value);
  } else if (key == "svg") {
    cfg.svg_path = trim(value);
  } else if (key == "fixed-means") {
    cfg.fixed_means = parse_bool(key, value);
  } else if (key == "workers") {
    cfg.workers = parse_number<unsigned>(key, value);
  } else if (key == "threshold") {
    cfg.threshold = parse_number<double>(key, value);
  } else if (key == "reps") {
    cfg.reps = parse_number<std::size_t>(key, value);
  } else if (key == "quick") {
    parse_bool(key, value);  // handled as a preset in load_config
  } else {
    throw ParseError("unknown setting '" + raw_key + "'");
  }
}

bool wants_quick(const Settings& s) {
  bool quick = false;
  for (const auto& [k, v] : s) {
    if (normalize_key(k) == "quick") quick = parse_bool(k, v);
  }
  return quick;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace

// --- configuration ----------------------------------------------------------

std::vector<std::size_t> default_p_values(std::size_t n) {
  std::vector<std::size_t> out;
  for (std::size_t p = n; p >= 1; p /= 2) out.push_back(p);
  return out;
}

std::vector<std::size_t> ExperimentConfig::resolved_p_values() const {
  return p_values.empty() ? default_p_values(n_proposals) : p_values;
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.n_proposals < 1) throw InvalidConfig("InvalidConfig: n-proposals must be >= 1");
  if (!(cfg.sigma > 0.0) || !std::isfinite(cfg.sigma)) {
    throw InvalidConfig("InvalidConfig: sigma must be > 0");
  }
  if (!(cfg.box_lo < cfg.box_hi)) throw InvalidConfig("InvalidConfig: box-lo must be < box-hi");
  if (cfg.n_runs < 1) throw InvalidConfig("InvalidConfig: runs must be >= 1");
  if (cfg.dim != reference_mixture().dim()) {
    throw InvalidConfig("InvalidConfig: dim " + std::to_string(cfg.dim) +
                        " does not match the target dimension " +
                        std::to_string(reference_mixture().dim()));
  }
  for (std::size_t p : cfg.p_values) {
    if (p < 1 || p > cfg.n_proposals) {
      throw InvalidConfig("InvalidConfig: P = " + std::to_string(p) + " outside [1, " +
                          std::to_string(cfg.n_proposals) + "]");
    }
  }
  if (!(cfg.threshold > 0.0)) throw InvalidConfig("InvalidConfig: threshold must be > 0");
  if (cfg.reps < 2) throw InvalidConfig("InvalidConfig: reps must be >= 2");
}

Settings parse_config_text(std::string_view text) {
  Settings out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ParseError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), trim(std::string_view(body).substr(eq + 1)));
  }
  return out;
}

ExperimentConfig load_config(const Settings& file, const Settings& flags) {
  ExperimentConfig cfg;
  if (wants_quick(file) || wants_quick(flags)) {
    cfg.n_proposals = 1024;
    cfg.n_runs = 200;
  }
  for (const auto& [k, v] : file) apply_setting(cfg, k, v);
  for (const auto& [k, v] : flags) apply_setting(cfg, k, v);
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path, const Settings& flags) {
  Settings file;
  if (!path.empty()) {
    const std::string text = read_file(path);
    try {
      file = parse_config_text(text);
    } catch (const ParseError& e) {
      throw ParseError(path + ": " + e.what());
    }
  }
  return load_config(file, flags);
}

// --- replications -----------------------------------------------------------

Realization make_realization(const ExperimentConfig& cfg, std::size_t run_index) {
  validate_config(cfg);
  RandomStream means = cfg.fixed_means ? RandomStream::derive(cfg.seed, {kMeans})
                                       : RandomStream::derive(cfg.seed, {run_index, kMeans});
  const Matrix cov =
      Matrix::Identity(static_cast<Eigen::Index>(cfg.dim), static_cast<Eigen::Index>(cfg.dim)) *
      (cfg.sigma * cfg.sigma);

  Realization r;
  r.proposals.reserve(cfg.n_proposals);
  for (std::size_t i = 0; i < cfg.n_proposals; ++i) {
    Point mu(static_cast<Eigen::Index>(cfg.dim));
    for (Eigen::Index d = 0; d < mu.size(); ++d) mu[d] = means.uniform(cfg.box_lo, cfg.box_hi);
    r.proposals.emplace_back(std::move(mu), cov);
  }
  RandomStream draws = RandomStream::derive(cfg.seed, {run_index, kSamples});
  r.samples = draw_samples(r.proposals, draws);
  return r;
}

RandomStream partition_stream(const ExperimentConfig& cfg, std::size_t run_index,
                              std::size_t p_slot) {
  return RandomStream::derive(cfg.seed, {run_index, kPartition, p_slot});
}

std::vector<RunEstimate> run_replication(const ExperimentConfig& cfg, std::size_t run_index) {
  const Realization real = make_realization(cfg, run_index);
  const TargetDensity target = TargetDensity::from_mixture(reference_mixture());
  const auto ps = cfg.resolved_p_values();
  const MomentFn f = identity_moment();

  std::vector<RunEstimate> out;
  out.reserve(ps.size());
  for (std::size_t k = 0; k < ps.size(); ++k) {
    RandomStream rng = partition_stream(cfg, run_index, k);
    const Partition part = partition_random_blocks(cfg.n_proposals, ps[k], rng);
    const WeightedSamples ws = compute_weights(target, real.proposals, part, real.samples);
    const EstimateResult est = estimate_moment(ws, f);
    out.push_back({ps[k], est.moment, est.z_hat, ws.proposal_evals});
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const auto ps = cfg.resolved_p_values();
  const std::size_t runs = cfg.n_runs;
  std::vector<std::vector<RunEstimate>> per_run(runs);

  unsigned workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, runs));

  if (workers <= 1) {
    for (std::size_t r = 0; r < runs; ++r) per_run[r] = run_replication(cfg, r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t r = next++; r < runs; r = next++) per_run[r] = run_replication(cfg, r);
          } catch (...) {
            errors[w] = std::current_exception();
            next = runs;
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const Point truth = reference_mean();
  const double z_true = 1.0;
  ExperimentResult result;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    ResultRow row;
    row.p = ps[k];
    if (cfg.n_proposals % ps[k] == 0) row.m_nominal = cfg.n_proposals / ps[k];
    row.evals = per_run.front()[k].evals;
    double se_mean = 0.0;
    double se_z = 0.0;
    for (std::size_t r = 0; r < runs; ++r) {
      const RunEstimate& e = per_run[r][k];
      se_mean += (e.moment - truth).squaredNorm() / static_cast<double>(truth.size());
      se_z += (e.z_hat - z_true) * (e.z_hat - z_true);
      if (e.evals != row.evals) throw Error("run_experiment: inconsistent evaluation counts");
    }
    row.mse_mean = se_mean / static_cast<double>(runs);
    row.mse_z = se_z / static_cast<double>(runs);
    result.rows.push_back(row);
  }

  const auto full = std::find(ps.begin(), ps.end(), std::size_t{1});
  if (full != ps.end() && runs >= 2) {
    const auto k = static_cast<std::size_t>(full - ps.begin());
    const double nr = static_cast<double>(runs);
    TruthCheck tc;
    tc.mean_estimate = Eigen::VectorXd::Zero(truth.size());
    for (std::size_t r = 0; r < runs; ++r) {
      tc.mean_estimate += per_run[r][k].moment;
      tc.z_estimate += per_run[r][k].z_hat;
    }
    tc.mean_estimate /= nr;
    tc.z_estimate /= nr;
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(truth.size());
    double ssz = 0.0;
    for (std::size_t r = 0; r < runs; ++r) {
      ss += (per_run[r][k].moment - tc.mean_estimate).cwiseAbs2();
      ssz += std::pow(per_run[r][k].z_hat - tc.z_estimate, 2);
    }
    tc.mean_stderr = (ss / (nr - 1.0) / nr).cwiseSqrt();
    tc.z_stderr = std::sqrt(ssz / (nr - 1.0) / nr);
    tc.consistent = std::abs(tc.z_estimate - z_true) <= 4.0 * tc.z_stderr;
    for (Eigen::Index d = 0; d < truth.size(); ++d) {
      tc.consistent =
          tc.consistent && std::abs(tc.mean_estimate[d] - truth[d]) <= 4.0 * tc.mean_stderr[d];
    }
    result.truth_check = std::move(tc);
  }
  return result;
}

// --- output -----------------------------------------------------------------

std::string format_csv(const std::vector<ResultRow>& rows) {
  std::string out = "P,M,mse_mean,mse_z,evaluations\n";
  for (const auto& r : rows) {
    out += std::to_string(r.p);
    out += ',';
    if (r.m_nominal) out += std::to_string(*r.m_nominal);
    out += ',';
    out += format_double(r.mse_mean);
    out += ',';
    out += format_double(r.mse_z);
    out += ',';
    out += std::to_string(r.evals);
    out += '\n';
  }
  return out;
}

void write_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  write_file(path, format_csv(rows));
}

std::vector<ResultRow> parse_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || trim(line) != "P,M,mse_mean,mse_z,evaluations") {
    throw ParseError("csv: missing or unexpected header");
  }
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(trim(line));
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() == 4 && line.back() == ',') cells.emplace_back();
    if (cells.size() != 5) {
      throw ParseError("csv line " + std::to_string(lineno) + ": expected 5 fields");
    }
    const std::string where = "csv line " + std::to_string(lineno);
    ResultRow r;
    r.p = parse_number<std::size_t>(where, cells[0]);
    if (!trim(cells[1]).empty()) r.m_nominal = parse_number<std::size_t>(where, cells[1]);
    r.mse_mean = parse_number<double>(where, cells[2]);
    r.mse_z = parse_number<double>(where, cells[3]);
    r.evals = parse_number<std::uint64_t>(where, cells[4]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<ResultRow> read_csv(const std::string& path) { return parse_csv(read_file(path)); }

namespace {

std::vector<ResultRow> sorted_by_evals(std::vector<ResultRow> rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ResultRow& a, const ResultRow& b) { return a.evals < b.evals; });
  return rows;
}

}  // namespace

void write_plot_data(const std::vector<ResultRow>& rows, const std::string& path,
                     const std::string& svg_path) {
  if (rows.empty()) throw InvalidSize("write_plot_data: no rows");
  std::string out = "# evaluations mse_mean\n";
  for (const auto& r : sorted_by_evals(rows)) {
    out += std::to_string(r.evals) + ' ' + format_double(r.mse_mean) + '\n';
  }
  write_file(path, out);
  if (!svg_path.empty()) write_file(svg_path, render_svg(rows));
}

std::string render_svg(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw InvalidSize("render_svg: no rows");
  const auto pts = sorted_by_evals(rows);
  constexpr double W = 640, H = 420, L = 80, R = 20, T = 20, B = 60;

  auto log_range = [](double lo, double hi) {
    double a = std::floor(std::log10(lo));
    double b = std::ceil(std::log10(hi));
    if (b <= a) b = a + 1.0;
    return std::pair{a, b};
  };
  double xmin = 1e300, xmax = 0, ymin = 1e300, ymax = 0;
  for (const auto& r : pts) {
    xmin = std::min(xmin, static_cast<double>(r.evals));
    xmax = std::max(xmax, static_cast<double>(r.evals));
    const double y = std::max(r.mse_mean, 1e-300);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  const auto [xa, xb] = log_range(std::max(xmin, 1.0), std::max(xmax, 1.0));
  const auto [ya, yb] = log_range(ymin, ymax);
  auto sx = [&](double x) { return L + (std::log10(std::max(x, 1.0)) - xa) / (xb - xa) * (W - L - R); };
  auto sy = [&](double y) {
    return H - B - (std::log10(std::max(y, 1e-300)) - ya) / (yb - ya) * (H - T - B);
  };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\""
    << H - T - B << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double e = xa; e <= xb; e += 1.0) {
    const double x = sx(std::pow(10.0, e));
    s << "<line x1=\"" << x << "\" y1=\"" << H - B << "\" x2=\"" << x << "\" y2=\"" << H - B + 5
      << "\" stroke=\"black\"/><text x=\"" << x << "\" y=\"" << H - B + 20
      << "\" text-anchor=\"middle\">1e" << e << "</text>\n";
  }
  for (double e = ya; e <= yb; e += 1.0) {
    const double y = sy(std::pow(10.0, e));
    s << "<line x1=\"" << L - 5 << "\" y1=\"" << y << "\" x2=\"" << L << "\" y2=\"" << y
      << "\" stroke=\"black\"/><text x=\"" << L - 8 << "\" y=\"" << y + 4
      << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15
    << "\" text-anchor=\"middle\">proposal evaluations</text>\n";
  s << "<text x=\"20\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
    << (T + H - B) / 2 << ")\">MSE of E[X]</text>\n";
  s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (const auto& r : pts) s << sx(static_cast<double>(r.evals)) << ',' << sy(r.mse_mean) << ' ';
  s << "\"/>\n";
  for (const auto& r : pts) {
    s << "<circle cx=\"" << sx(static_cast<double>(r.evals)) << "\" cy=\"" << sy(r.mse_mean)
      << "\" r=\"3\" fill=\"#1f77b4\"><title>P=" << r.p << "</title></circle>\n";
  }
  s << "</svg>\n";
  return s.str();
}

// --- select-p and variance check ---------------------------------------------

SelectionResult run_selection(const ExperimentConfig& cfg) {
  const Realization real = make_realization(cfg, 0);
  const TargetDensity target = TargetDensity::from_mixture(reference_mixture());
  const auto schedule = cfg.resolved_p_values();
  RandomStream rng = RandomStream::derive(cfg.seed, {0, kSelection});
  return select_num_mixtures(target, real.proposals, real.samples, identity_moment(), schedule,
                             cfg.threshold, rng);
}

VarianceCheckProblem variance_check_problem() {
  auto g1 = [](double mean, double sd) {
    return Gaussian(Point::Constant(1, mean), Matrix::Constant(1, 1, sd * sd));
  };
  std::vector<Gaussian> target_parts;
  target_parts.push_back(g1(-3.0, 1.0));
  target_parts.push_back(g1(4.0, 0.7));

  std::vector<Gaussian> proposals;
  for (int k = 0; k < 8; ++k) proposals.push_back(g1(-6.5 + 2.0 * k, 4.0));
  return {Mixture(std::move(target_parts)), std::move(proposals), {8, 4, 2, 1}};
}

VarianceCheckResult run_variance_check(std::size_t reps, std::uint64_t seed) {
  if (reps < 2) throw InvalidSize("run_variance_check: need at least two replications");
  const VarianceCheckProblem prob = variance_check_problem();
  const TargetDensity target = TargetDensity::from_mixture(prob.target);
  const std::size_t n = prob.proposals.size();

  std::vector<Partition> parts;
  for (std::size_t p : prob.p_values) parts.push_back(partition_contiguous_blocks(n, p));

  const MomentFn f = [](const Point& x) -> Eigen::VectorXd {
    Eigen::VectorXd out(2);
    out << x[0], 1.0;
    return out;
  };

  const std::size_t k = parts.size();
  std::vector<double> sum_m(k, 0.0), sum2_m(k, 0.0), sum_z(k, 0.0), sum2_z(k, 0.0);
  for (std::size_t r = 0; r < reps; ++r) {
    RandomStream rng = RandomStream::derive(seed, {r, kSamples});
    const std::vector<Point> samples = draw_samples(prob.proposals, rng);
    for (std::size_t c = 0; c < k; ++c) {
      const Eigen::VectorXd est =
          estimate_unnormalized(compute_weights(target, prob.proposals, parts[c], samples), f);
      sum_m[c] += est[0];
      sum2_m[c] += est[0] * est[0];
      sum_z[c] += est[1];
      sum2_z[c] += est[1] * est[1];
    }
  }

  VarianceCheckResult out;
  out.p_values = prob.p_values;
  out.reps = reps;
  const double nr = static_cast<double>(reps);
  for (std::size_t c = 0; c < k; ++c) {
    out.var_mean.push_back((sum2_m[c] - sum_m[c] * sum_m[c] / nr) / (nr - 1.0));
    out.var_z.push_back((sum2_z[c] - sum_z[c] * sum_z[c] / nr) / (nr - 1.0));
  }
  return out;
}

bool variance_ordered(const std::vector<double>& var_by_decreasing_p, double slack) {
  for (std::size_t k = 1; k < var_by_decreasing_p.size(); ++k) {
    if (var_by_decreasing_p[k] > (1.0 + slack) * var_by_decreasing_p[k - 1]) return false;
  }
  return true;
}

}  // namespace pdmis
