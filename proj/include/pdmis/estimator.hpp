#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pdmis/density.hpp"
#include "pdmis/partition.hpp"

namespace pdmis {

/// Samples x_i ~ q_i together with their log importance weights under a
/// given partition of the proposals.
struct WeightedSamples {
  std::vector<Point> samples;
  /// log w_i; finite or -inf, never NaN or +inf.
  std::vector<double> log_weights;
  Partition partition;
  /// Proposal density evaluations spent: sum_p |S_p|^2.
  std::uint64_t proposal_evals = 0;
  /// Target evaluations spent: N.
  std::uint64_t target_evals = 0;

  std::size_t size() const { return samples.size(); }
};

struct EstimateResult {
  /// Self-normalized estimate of E[f(X)].
  Eigen::VectorXd moment;
  /// Unbiased estimate of the normalizing constant, (1/N) sum w_i.
  double z_hat = 0.0;
  std::uint64_t proposal_evals = 0;
  std::uint64_t target_evals = 0;
};

/// Vector-valued test function f.
using MomentFn = std::function<Eigen::VectorXd(const Point&)>;

/// f(x) = x.
MomentFn identity_moment();
/// f(x) = 1.
MomentFn constant_moment();

/// One draw from every proposal, in index order.
std::vector<Point> draw_samples(std::span<const Gaussian> proposals, RandomStream& rng);

/// Partial deterministic-mixture weights. For i in S_p:
///
///   log w_i = log pi(x_i) - log( (1/|S_p|) sum_{j in S_p} q_j(x_i) )
///
/// The singleton partition gives standard MIS weights, the full partition
/// gives full deterministic-mixture weights.
///
/// A sample that every proposal of its group and the target assign zero
/// density gets weight 0. A sample with positive target density but zero
/// group density raises NonFiniteWeight.
///
/// `workers` > 1 splits the subsets over threads; the result does not depend
/// on the worker count.
WeightedSamples compute_weights(const TargetDensity& target, std::span<const Gaussian> proposals,
                                const Partition& partition, std::vector<Point> samples,
                                unsigned workers = 1);

/// Self-normalized estimate sum w_i f(x_i) / sum w_j and z_hat. Throws
/// AllWeightsZero when no weight is positive.
EstimateResult estimate_moment(const WeightedSamples& ws, const MomentFn& f);

/// (1/N) sum w_i f(x_i). Only meaningful when the target is normalized.
Eigen::VectorXd estimate_unnormalized(const WeightedSamples& ws, const MomentFn& f);

/// sum_p |S_p|^2.
std::uint64_t proposal_eval_cost(const Partition& partition);

/// Largest relative change between two estimates, over the moment components
/// and z_hat.
double relative_change(const EstimateResult& previous, const EstimateResult& current);

struct SelectionStep {
  std::size_t num_mixtures = 0;
  Partition partition;
  EstimateResult estimate;
  /// Relative change w.r.t. the previous step; NaN for the first step.
  double change = 0.0;
  /// Proposal evaluations that were not already cached.
  std::uint64_t new_evals = 0;
};

struct SelectionResult {
  Partition partition;
  std::vector<SelectionStep> trace;
  /// Distinct (sample, proposal) pairs evaluated over the whole schedule.
  std::uint64_t distinct_evals = 0;
  std::uint64_t target_evals = 0;
  bool converged = false;
};

/// Chooses the number of mixtures by walking a decreasing schedule of P
/// values, starting at P = N, with a fresh random-blocks partition at each
/// step. Stops at the first step whose estimate moves by less than
/// `threshold` (relative) from the previous one and returns that step's
/// partition; otherwise returns the last one. Every q_j(x_i) is evaluated at
/// most once across the schedule.
///
/// Throws ScheduleInvalid when the schedule is empty, does not start at N,
/// is not strictly decreasing, or when threshold <= 0.
SelectionResult select_num_mixtures(const TargetDensity& target,
                                    std::span<const Gaussian> proposals,
                                    std::span<const Point> samples, const MomentFn& f,
                                    std::span<const std::size_t> schedule, double threshold,
                                    RandomStream& rng);

}  // namespace pdmis
