#include "pdmis/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>
#include <memory>

#include "pdmis/errors.hpp"

namespace pdmis {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double combine(double log_target, double log_psi, std::size_t i) {
  if (log_target == kNegInf) return kNegInf;
  if (log_psi == kNegInf) {
    throw NonFiniteWeight("compute_weights: sample " + std::to_string(i) +
                          " has positive target density but zero mixture density");
  }
  const double lw = log_target - log_psi;
  if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity()) {
    throw NonFiniteWeight("compute_weights: non-finite weight for sample " + std::to_string(i));
  }
  return lw;
}

// Fills log_w[i] for every i in `subset`. log_q(j, i) returns log q_j(x_i);
// it is called in subset order for each sample so the log-sum-exp reduction
// order is fixed.
// Returns the number of log_q calls made.
template <class LogQ>
std::uint64_t weigh_subset(const IndexSet& subset, std::span<const double> log_target,
                           LogQ&& log_q, std::span<double> log_w, std::vector<double>& buf) {
  const double log_m = std::log(static_cast<double>(subset.size()));
  buf.resize(subset.size());
  std::uint64_t calls = 0;
  for (std::size_t i : subset) {
    for (std::size_t k = 0; k < subset.size(); ++k) buf[k] = log_q(subset[k], i);
    calls += subset.size();
    log_w[i] = combine(log_target[i], log_sum_exp(buf) - log_m, i);
  }
  return calls;
}

void check_inputs(const TargetDensity& target, std::span<const Gaussian> proposals,
                  const Partition& partition, std::size_t n_samples) {
  const std::size_t n = proposals.size();
  if (n == 0) throw InvalidSize("compute_weights: no proposals");
  if (partition.n_total() != n || n_samples != n) {
    throw NotAPartition("compute_weights: partition covers " +
                        std::to_string(partition.n_total()) + " indices but there are " +
                        std::to_string(n) + " proposals and " + std::to_string(n_samples) +
                        " samples");
  }
  for (const auto& q : proposals) {
    if (q.dim() != target.dim()) {
      throw DimensionMismatch("compute_weights: proposal dimension " + std::to_string(q.dim()) +
                              " differs from target dimension " + std::to_string(target.dim()));
    }
  }
}

void check_samples(std::span<const Point> samples, std::size_t dim) {
  for (const auto& x : samples) {
    if (static_cast<std::size_t>(x.size()) != dim) {
      throw DimensionMismatch("sample dimension " + std::to_string(x.size()) +
                              " differs from problem dimension " + std::to_string(dim));
    }
  }
}

// Splits subsets into at most `workers` contiguous ranges of similar cost.
std::vector<std::pair<std::size_t, std::size_t>> split_by_cost(const Partition& part,
                                                               unsigned workers) {
  const std::uint64_t total = part.eval_cost();
  const std::uint64_t share = (total + workers - 1) / workers;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t begin = 0;
  std::uint64_t acc = 0;
  for (std::size_t p = 0; p < part.num_subsets(); ++p) {
    acc += static_cast<std::uint64_t>(part.subset(p).size()) * part.subset(p).size();
    if (acc >= share || p + 1 == part.num_subsets()) {
      ranges.emplace_back(begin, p + 1);
      begin = p + 1;
      acc = 0;
    }
  }
  return ranges;
}

}  // namespace

MomentFn identity_moment() {
  return [](const Point& x) -> Eigen::VectorXd { return x; };
}

MomentFn constant_moment() {
  return [](const Point&) -> Eigen::VectorXd { return Eigen::VectorXd::Ones(1); };
}

std::vector<Point> draw_samples(std::span<const Gaussian> proposals, RandomStream& rng) {
  if (proposals.empty()) throw InvalidSize("draw_samples: no proposals");
  const std::size_t n = proposals.front().dim();
  std::vector<Point> out;
  out.reserve(proposals.size());
  for (const auto& q : proposals) {
    if (q.dim() != n) throw DimensionMismatch("draw_samples: proposals differ in dimension");
    out.push_back(q.sample(rng));
  }
  return out;
}

WeightedSamples compute_weights(const TargetDensity& target, std::span<const Gaussian> proposals,
                                const Partition& partition, std::vector<Point> samples,
                                unsigned workers) {
  check_inputs(target, proposals, partition, samples.size());
  check_samples(samples, target.dim());

  const std::size_t n = proposals.size();
  std::vector<double> log_target(n);
  std::vector<double> log_w(n);

  struct Counts {
    std::uint64_t proposal = 0;
    std::uint64_t target = 0;
  };
  auto work = [&](std::size_t first, std::size_t last) {
    Counts c;
    std::vector<double> buf;
    auto log_q = [&](std::size_t j, std::size_t i) {
      return proposals[j].logpdf_unchecked(samples[i].data());
    };
    for (std::size_t p = first; p < last; ++p) {
      const auto& subset = partition.subset(p);
      for (std::size_t i : subset) log_target[i] = target.logpdf(samples[i]);
      c.target += subset.size();
      c.proposal += weigh_subset(subset, log_target, log_q, log_w, buf);
    }
    return c;
  };

  Counts total;
  workers = std::max(1u, workers);
  if (workers == 1 || partition.num_subsets() == 1) {
    total = work(0, partition.num_subsets());
  } else {
    const auto ranges = split_by_cost(partition, workers);
    std::vector<std::exception_ptr> errors(ranges.size());
    std::vector<Counts> partial(ranges.size());
    {
      std::vector<std::jthread> threads;
      for (std::size_t r = 0; r < ranges.size(); ++r) {
        threads.emplace_back([&, r] {
          try {
            partial[r] = work(ranges[r].first, ranges[r].second);
          } catch (...) {
            errors[r] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (const auto& c : partial) {
      total.proposal += c.proposal;
      total.target += c.target;
    }
  }

  WeightedSamples ws;
  ws.samples = std::move(samples);
  ws.log_weights = std::move(log_w);
  ws.partition = partition;
  ws.proposal_evals = total.proposal;
  ws.target_evals = total.target;
  return ws;
}

EstimateResult estimate_moment(const WeightedSamples& ws, const MomentFn& f) {
  const std::size_t n = ws.size();
  if (n == 0 || ws.log_weights.size() != n) throw InvalidSize("estimate_moment: empty sample set");
  const double hi = *std::max_element(ws.log_weights.begin(), ws.log_weights.end());
  if (hi == kNegInf) throw AllWeightsZero("estimate_moment: every importance weight is zero");

  double norm = 0.0;
  Eigen::VectorXd acc;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::exp(ws.log_weights[i] - hi);
    if (w == 0.0) continue;
    const Eigen::VectorXd fx = f(ws.samples[i]);
    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(fx.size());
    acc += w * fx;
    norm += w;
  }

  EstimateResult r;
  r.moment = acc / norm;
  r.z_hat = std::exp(hi + std::log(norm) - std::log(static_cast<double>(n)));
  r.proposal_evals = ws.proposal_evals;
  r.target_evals = ws.target_evals;
  return r;
}

Eigen::VectorXd estimate_unnormalized(const WeightedSamples& ws, const MomentFn& f) {
  const std::size_t n = ws.size();
  if (n == 0) throw InvalidSize("estimate_unnormalized: empty sample set");
  Eigen::VectorXd acc;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd fx = f(ws.samples[i]);
    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(fx.size());
    const double w = std::exp(ws.log_weights[i]);
    if (w != 0.0) acc += w * fx;
  }
  return acc / static_cast<double>(n);
}

std::uint64_t proposal_eval_cost(const Partition& partition) { return partition.eval_cost(); }

double relative_change(const EstimateResult& previous, const EstimateResult& current) {
  auto rel = [](double before, double after) {
    const double diff = std::abs(after - before);
    if (diff == 0.0) return 0.0;
    return diff / std::max(std::abs(before), std::numeric_limits<double>::min());
  };
  double change = rel(previous.z_hat, current.z_hat);
  const auto k = std::min(previous.moment.size(), current.moment.size());
  for (Eigen::Index c = 0; c < k; ++c) {
    change = std::max(change, rel(previous.moment[c], current.moment[c]));
  }
  return change;
}

SelectionResult select_num_mixtures(const TargetDensity& target,
                                    std::span<const Gaussian> proposals,
                                    std::span<const Point> samples, const MomentFn& f,
                                    std::span<const std::size_t> schedule, double threshold,
                                    RandomStream& rng) {
  const std::size_t n = proposals.size();
  if (schedule.empty()) throw ScheduleInvalid("select_num_mixtures: empty schedule");
  if (schedule.front() != n) {
    throw ScheduleInvalid("select_num_mixtures: schedule must start at P = N = " +
                          std::to_string(n));
  }
  for (std::size_t k = 1; k < schedule.size(); ++k) {
    if (schedule[k] >= schedule[k - 1] || schedule[k] < 1) {
      throw ScheduleInvalid("select_num_mixtures: schedule must be strictly decreasing and >= 1");
    }
  }
  if (!(threshold > 0.0)) throw ScheduleInvalid("select_num_mixtures: threshold must be > 0");
  if (samples.size() != n) throw InvalidSize("select_num_mixtures: need one sample per proposal");
  for (const auto& q : proposals) {
    if (q.dim() != target.dim()) throw DimensionMismatch("select_num_mixtures: proposal dimension");
  }
  check_samples(samples, target.dim());

  std::vector<double> log_target(n);
  for (std::size_t i = 0; i < n; ++i) log_target[i] = target.logpdf(samples[i]);

  // log q_j(x_i) by (sample, proposal); rows are allocated on first use and
  // NaN marks a pair not evaluated yet.
  std::vector<std::unique_ptr<double[]>> cache(n);
  std::uint64_t distinct = 0;
  std::uint64_t step_new = 0;
  auto log_q = [&](std::size_t j, std::size_t i) {
    auto& row = cache[i];
    if (!row) {
      row = std::make_unique<double[]>(n);
      std::fill_n(row.get(), n, std::numeric_limits<double>::quiet_NaN());
    }
    double& slot = row[j];
    if (std::isnan(slot)) {
      slot = proposals[j].logpdf_unchecked(samples[i].data());
      ++step_new;
      ++distinct;
    }
    return slot;
  };

  SelectionResult result;
  std::vector<Point> sample_copy(samples.begin(), samples.end());
  std::vector<double> buf;
  for (std::size_t num : schedule) {
    Partition part = partition_random_blocks(n, num, rng);
    step_new = 0;
    std::vector<double> log_w(n);
    std::uint64_t requested = 0;
    for (const auto& subset : part.subsets()) {
      requested += weigh_subset(subset, log_target, log_q, log_w, buf);
    }

    WeightedSamples ws;
    ws.samples = sample_copy;
    ws.log_weights = std::move(log_w);
    ws.partition = part;
    ws.proposal_evals = requested;
    ws.target_evals = n;

    SelectionStep step;
    step.num_mixtures = num;
    step.estimate = estimate_moment(ws, f);
    step.partition = std::move(part);
    step.new_evals = step_new;
    step.change = result.trace.empty()
                      ? std::numeric_limits<double>::quiet_NaN()
                      : relative_change(result.trace.back().estimate, step.estimate);
    result.trace.push_back(std::move(step));
    if (result.trace.size() > 1 && result.trace.back().change < threshold) {
      result.converged = true;
      break;
    }
  }
  result.partition = result.trace.back().partition;
  result.distinct_evals = distinct;
  result.target_evals = n;
  return result;
}

}  // namespace pdmis
