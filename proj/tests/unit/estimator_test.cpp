#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pdmis/errors.hpp"
#include "pdmis/estimator.hpp"
#include "pdmis/harness.hpp"
#include "test_util.hpp"

using namespace pdmis;
using testutil::point;

namespace {

Gaussian g1(double mean, double sd) {
  return Gaussian(Point::Constant(1, mean), Matrix::Constant(1, 1, sd * sd));
}

// A partition drawn by assigning every index to one of k labels at random
// (sizes unconstrained), so uneven groups are covered too.
Partition random_assignment(std::size_t n, RandomStream& rng) {
  const std::size_t k = 1 + rng.index(n);
  std::vector<IndexSet> groups(k);
  for (std::size_t i = 0; i < n; ++i) groups[rng.index(k)].push_back(i);
  std::erase_if(groups, [](const IndexSet& s) { return s.empty(); });
  return Partition::from_subsets(std::move(groups), n);
}

std::vector<std::vector<double>> to_std(const std::vector<Point>& xs) {
  std::vector<std::vector<double>> out;
  for (const auto& x : xs) out.push_back(testutil::to_std(x));
  return out;
}

}  // namespace

TEST(DrawSamples, MatchesSequentialGaussianDraws) {
  const std::vector<Gaussian> qs{g1(0, 1), g1(3, 2), g1(-1, 0.5)};
  RandomStream a(6), b(6);
  const auto xs = draw_samples(qs, a);
  ASSERT_EQ(xs.size(), 3u);
  for (std::size_t i = 0; i < qs.size(); ++i) EXPECT_EQ(xs[i], qs[i].sample(b));

  RandomStream c(6), d(6);
  const std::vector<Gaussian> one{g1(2, 1)};
  EXPECT_EQ(draw_samples(one, c).front(), one.front().sample(d));
}

TEST(DrawSamples, IdenticalProposalsGiveCltMean) {
  const std::vector<Gaussian> qs(20000, g1(1.5, 2.0));
  RandomStream rng(31);
  const auto xs = draw_samples(qs, rng);
  double sum = 0;
  for (const auto& x : xs) sum += x[0];
  EXPECT_LT(std::abs(sum / 20000 - 1.5), 4.0 * 2.0 / std::sqrt(20000.0));
}

TEST(DrawSamples, RejectsMixedDimensions) {
  const std::vector<Gaussian> qs{g1(0, 1), Gaussian(Point::Zero(2), Matrix::Identity(2, 2))};
  RandomStream rng(1);
  EXPECT_THROW(draw_samples(qs, rng), DimensionMismatch);
}

TEST(ComputeWeights, TargetEqualToProposalGivesUnitWeight) {
  const Gaussian q(point({0.5, -1}), Matrix::Identity(2, 2) * 2.0);
  const TargetDensity target = TargetDensity::from_gaussian(q);
  const std::vector<Gaussian> qs{q};
  RandomStream rng(8);
  const auto ws = compute_weights(target, qs, partition_full(1), draw_samples(qs, rng));
  EXPECT_NEAR(ws.log_weights[0], 0.0, 1e-14);
  const auto est = estimate_moment(ws, identity_moment());
  EXPECT_NEAR(est.z_hat, 1.0, 1e-14);
  EXPECT_EQ(est.moment, ws.samples[0]);
  EXPECT_EQ(estimate_unnormalized(ws, identity_moment()), ws.samples[0]);
}

TEST(ComputeWeights, DuplicateProposalsAreInvariantToPartition) {
  const std::vector<Gaussian> qs(12, g1(0.3, 1.7));
  const TargetDensity target = TargetDensity::from_mixture(Mixture({g1(-1, 1), g1(2, 0.5)}));
  RandomStream rng(12);
  const auto xs = draw_samples(qs, rng);
  const auto base = compute_weights(target, qs, partition_singleton(12), xs);
  for (std::size_t p : {1u, 2u, 3u, 5u, 12u}) {
    const auto ws = compute_weights(target, qs, partition_random_blocks(12, p, rng), xs);
    for (std::size_t i = 0; i < 12; ++i) {
      EXPECT_LT(testutil::rel_err(std::exp(ws.log_weights[i]), std::exp(base.log_weights[i])),
                1e-12);
    }
  }
}

TEST(ComputeWeights, MatchesDoubleLoopOracleOnSmallExample) {
  const std::vector<oracle::Gauss> oq{{{-2}, {1.0}}, {{0}, {2.0}}, {{1}, {0.5}}, {{3}, {1.5}}};
  const std::vector<oracle::Gauss> ot{{{0}, {1.0}}, {{2}, {0.25}}};
  std::vector<Gaussian> qs;
  for (const auto& g : oq) qs.push_back(testutil::to_gaussian(g));
  const TargetDensity target = TargetDensity::from_mixture(
      Mixture({testutil::to_gaussian(ot[0]), testutil::to_gaussian(ot[1])}));
  const std::vector<Point> xs{point({-1.5}), point({0.4}), point({1.2}), point({2.7})};
  const Partition part = Partition::from_subsets({{0, 2}, {1, 3}}, 4);

  const auto ws = compute_weights(target, qs, part, xs);
  const auto want = oracle::weights(ot, oq, part.subsets(), to_std(xs));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_LT(testutil::rel_err(std::exp(static_cast<long double>(ws.log_weights[i])), want[i]),
              1e-12);
  }
}

// Property: for random problems with N <= 16 and arbitrary partitions the
// weights agree with the linear-space double loop.
TEST(ComputeWeightsProperty, MatchesOracleOnRandomInstances) {
  RandomStream rng(2718);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 1 + rng.index(2);
    const std::size_t n = 1 + rng.index(16);
    std::vector<oracle::Gauss> oq, ot;
    for (std::size_t i = 0; i < n; ++i) oq.push_back(testutil::random_gauss(rng, dim));
    for (int k = 0; k < 3; ++k) ot.push_back(testutil::random_gauss(rng, dim));
    std::vector<Gaussian> qs, ts;
    for (const auto& g : oq) qs.push_back(testutil::to_gaussian(g));
    for (const auto& g : ot) ts.push_back(testutil::to_gaussian(g));
    const TargetDensity target = TargetDensity::from_mixture(Mixture(ts));
    const auto xs = draw_samples(qs, rng);
    const Partition part = trial % 2 ? random_assignment(n, rng)
                                     : partition_random_blocks(n, 1 + rng.index(n), rng);

    const auto ws = compute_weights(target, qs, part, xs);
    const auto want = oracle::weights(ot, oq, part.subsets(), to_std(xs));
    for (std::size_t i = 0; i < n; ++i) {
      if (want[i] < 1e-280L || !std::isfinite(static_cast<double>(want[i]))) continue;
      EXPECT_LT(testutil::rel_err(std::exp(static_cast<long double>(ws.log_weights[i])), want[i]),
                1e-12)
          << "trial " << trial << " i " << i;
    }
  }
}

TEST(ComputeWeights, SpecializesToStandardAndFullMixtureWeights) {
  RandomStream rng(55);
  std::vector<oracle::Gauss> oq;
  std::vector<Gaussian> qs;
  for (int i = 0; i < 10; ++i) {
    oq.push_back(testutil::random_gauss(rng, 2));
    qs.push_back(testutil::to_gaussian(oq.back()));
  }
  const auto ot = oracle::reference_components();
  const TargetDensity target = TargetDensity::from_mixture(reference_mixture());
  const auto xs = draw_samples(qs, rng);

  const auto s_mis = compute_weights(target, qs, partition_singleton(10), xs);
  const auto f_dm = compute_weights(target, qs, partition_full(10), xs);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto x = testutil::to_std(xs[i]);
    const long double pi = oracle::mixture_pdf(ot, x);
    if (pi < 1e-280L) continue;
    const long double standard = pi / oracle::pdf(oq[i], x);
    const long double mixture = pi / oracle::mixture_pdf(oq, x);
    EXPECT_LT(testutil::rel_err(std::exp(static_cast<long double>(s_mis.log_weights[i])), standard),
              1e-12);
    EXPECT_LT(testutil::rel_err(std::exp(static_cast<long double>(f_dm.log_weights[i])), mixture),
              1e-12);
  }
}

TEST(ComputeWeights, InvariantToOrderWithinSubsets) {
  RandomStream rng(8);
  std::vector<Gaussian> qs;
  for (int i = 0; i < 9; ++i) qs.push_back(testutil::to_gaussian(testutil::random_gauss(rng, 2)));
  const TargetDensity target = TargetDensity::from_mixture(reference_mixture());
  const auto xs = draw_samples(qs, rng);
  const auto a = compute_weights(target, qs, Partition::from_subsets({{0, 4, 7}, {1, 2, 3, 5}, {6, 8}}, 9), xs);
  const auto b = compute_weights(target, qs, Partition::from_subsets({{8, 6}, {7, 0, 4}, {5, 3, 2, 1}}, 9), xs);
  EXPECT_EQ(a.log_weights, b.log_weights);
}

TEST(ComputeWeights, ResultIndependentOfWorkerCount) {
  RandomStream rng(81);
  std::vector<Gaussian> qs;
  for (int i = 0; i < 64; ++i) qs.push_back(testutil::to_gaussian(testutil::random_gauss(rng, 2)));
  const TargetDensity target = TargetDensity::from_mixture(reference_mixture());
  const auto xs = draw_samples(qs, rng);
  const Partition part = partition_random_blocks(64, 8, rng);
  const auto one = compute_weights(target, qs, part, xs, 1);
  for (unsigned w : {2u, 3u, 8u}) {
    const auto many = compute_weights(target, qs, part, xs, w);
    EXPECT_EQ(many.log_weights, one.log_weights);
    EXPECT_EQ(many.proposal_evals, one.proposal_evals);
    EXPECT_EQ(many.target_evals, one.target_evals);
  }
}

TEST(ComputeWeights, CountsEvaluations) {
  RandomStream rng(3);
  std::vector<Gaussian> qs;
  for (int i = 0; i < 30; ++i) qs.push_back(testutil::to_gaussian(testutil::random_gauss(rng, 2)));
  const TargetDensity target = TargetDensity::from_mixture(reference_mixture());
  const auto xs = draw_samples(qs, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Partition part = random_assignment(30, rng);
    const auto before = target.eval_count();
    const auto ws = compute_weights(target, qs, part, xs, 1 + trial % 3);
    EXPECT_EQ(ws.proposal_evals, proposal_eval_cost(part));
    EXPECT_EQ(ws.target_evals, 30u);
    EXPECT_EQ(target.eval_count() - before, 30u);
  }
}

TEST(ComputeWeights, RejectsMismatchedInputs) {
  const std::vector<Gaussian> qs{g1(0, 1), g1(1, 1)};
  const TargetDensity target = TargetDensity::from_gaussian(g1(0, 1));
  EXPECT_THROW(compute_weights(target, qs, partition_full(3), {point({0}), point({1})}),
               NotAPartition);
  EXPECT_THROW(compute_weights(target, qs, partition_full(2), {point({0})}), NotAPartition);
  EXPECT_THROW(compute_weights(target, qs, partition_full(2), {point({0}), point({1, 2})}),
               DimensionMismatch);
  const TargetDensity target2 = TargetDensity::from_mixture(reference_mixture());
  EXPECT_THROW(compute_weights(target2, qs, partition_full(2), {point({0}), point({1})}),
               DimensionMismatch);
}

TEST(ComputeWeights, ZeroDensityPolicy) {
  const std::vector<Gaussian> qs{g1(0, 1)};
  const std::vector<Point> far{point({1e200})};  // every Gaussian underflows to log 0

  const TargetDensity both_zero = TargetDensity::from_gaussian(g1(0, 1));
  const auto ws = compute_weights(both_zero, qs, partition_full(1), far);
  EXPECT_EQ(ws.log_weights[0], -INFINITY);
  EXPECT_THROW(estimate_moment(ws, identity_moment()), AllWeightsZero);

  const TargetDensity flat(1, [](const Point&) { return 0.0; });
  EXPECT_THROW(compute_weights(flat, qs, partition_full(1), far), NonFiniteWeight);
}

TEST(EstimateMoment, ConstantFunctionIsExactlyOne) {
  RandomStream rng(21);
  std::vector<Gaussian> qs;
  for (int i = 0; i < 50; ++i) qs.push_back(testutil::to_gaussian(testutil::random_gauss(rng, 2)));
  const TargetDensity target = TargetDensity::from_mixture(reference_mixture());
  const auto xs = draw_samples(qs, rng);
  for (std::size_t p : {1u, 7u, 50u}) {
    const auto ws = compute_weights(target, qs, partition_random_blocks(50, p, rng), xs);
    if (std::all_of(ws.log_weights.begin(), ws.log_weights.end(),
                    [](double v) { return v == -INFINITY; })) {
      continue;
    }
    EXPECT_EQ(estimate_moment(ws, constant_moment()).moment[0], 1.0);
  }
}

TEST(EstimateMoment, SelfNormalizedFormula) {
  WeightedSamples ws;
  ws.samples = {point({1.0}), point({3.0}), point({-2.0})};
  ws.log_weights = {std::log(1.0), std::log(3.0), -INFINITY};
  const auto est = estimate_moment(ws, identity_moment());
  EXPECT_NEAR(est.moment[0], (1.0 * 1 + 3.0 * 3) / 4.0, 1e-15);
  EXPECT_NEAR(est.z_hat, 4.0 / 3.0, 1e-15);
  const auto unnorm = estimate_unnormalized(ws, identity_moment());
  EXPECT_NEAR(unnorm[0], (1.0 + 9.0) / 3.0, 1e-15);
  EXPECT_NEAR(estimate_unnormalized(ws, constant_moment())[0], est.z_hat, 1e-15);
}

TEST(EstimateMoment, StableForHugeLogWeights) {
  WeightedSamples ws;
  ws.samples = {point({1.0}), point({2.0})};
  ws.log_weights = {1000.0, 1000.0 + std::log(3.0)};
  const auto est = estimate_moment(ws, identity_moment());
  EXPECT_NEAR(est.moment[0], 1.75, 1e-12);
}

TEST(EstimateMoment, ZHatIsUnbiasedForNormalizedTarget) {
  const auto prob = variance_check_problem();
  const TargetDensity target = TargetDensity::from_mixture(prob.target);
  const std::size_t n = prob.proposals.size();
  constexpr int kReps = 10000;
  for (std::size_t p : {8u, 2u, 1u}) {
    const Partition part = partition_contiguous_blocks(n, p);
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < kReps; ++r) {
      RandomStream rng = RandomStream::derive(404, {static_cast<std::uint64_t>(r)});
      const double z =
          estimate_moment(compute_weights(target, prob.proposals, part, draw_samples(prob.proposals, rng)),
                          constant_moment())
              .z_hat;
      sum += z;
      sum2 += z * z;
    }
    const double mean = sum / kReps;
    const double se = std::sqrt((sum2 / kReps - mean * mean) / (kReps - 1));
    EXPECT_LT(std::abs(mean - 1.0), 4.0 * se) << "P=" << p;
  }
}

// Empirical variance ordering with an arbitrary (non-nested) random grouping:
// full mixture <= any partial mixture <= standard MIS.
TEST(EstimateUnnormalized, PartialMixtureVarianceIsBracketed) {
  const auto prob = variance_check_problem();
  const TargetDensity target = TargetDensity::from_mixture(prob.target);
  const std::size_t n = prob.proposals.size();
  RandomStream prng(5);
  const Partition partial = partition_random_blocks(n, 3, prng);
  const std::vector<Partition> parts{partition_singleton(n), partial, partition_full(n)};
  std::vector<double> s(3, 0.0), s2(3, 0.0);
  constexpr int kReps = 4000;
  for (int r = 0; r < kReps; ++r) {
    RandomStream rng = RandomStream::derive(77, {static_cast<std::uint64_t>(r)});
    const auto xs = draw_samples(prob.proposals, rng);
    for (int k = 0; k < 3; ++k) {
      const double v =
          estimate_unnormalized(compute_weights(target, prob.proposals, parts[k], xs), identity_moment())[0];
      s[k] += v;
      s2[k] += v * v;
    }
  }
  std::vector<double> var(3);
  for (int k = 0; k < 3; ++k) var[k] = (s2[k] - s[k] * s[k] / kReps) / (kReps - 1);
  EXPECT_TRUE(variance_ordered(var, 0.05)) << var[0] << " " << var[1] << " " << var[2];
}

TEST(RelativeChange, MaxOverComponents) {
  EstimateResult a, b;
  a.moment = point({1.0, 2.0});
  b.moment = point({1.1, 2.0});
  a.z_hat = 1.0;
  b.z_hat = 1.05;
  EXPECT_NEAR(relative_change(a, b), 0.1, 1e-12);
  EXPECT_EQ(relative_change(a, a), 0.0);
}

TEST(SelectNumMixtures, SingleStepSchedule) {
  RandomStream rng(1);
  std::vector<Gaussian> qs;
  for (int i = 0; i < 16; ++i) qs.push_back(testutil::to_gaussian(testutil::random_gauss(rng, 2)));
  const TargetDensity target = TargetDensity::from_mixture(reference_mixture());
  const auto xs = draw_samples(qs, rng);
  const std::vector<std::size_t> schedule{16};
  const auto sel = select_num_mixtures(target, qs, xs, identity_moment(), schedule, 0.01, rng);
  EXPECT_EQ(sel.trace.size(), 1u);
  EXPECT_EQ(sel.partition, partition_singleton(16));
  EXPECT_FALSE(sel.converged);
}

TEST(SelectNumMixtures, IdenticalProposalsStopAfterSecondStep) {
  const std::vector<Gaussian> qs(32, g1(0.0, 3.0));
  const TargetDensity target = TargetDensity::from_gaussian(g1(1.0, 1.0));
  RandomStream rng(2);
  const auto xs = draw_samples(qs, rng);
  const std::vector<std::size_t> schedule{32, 16, 8, 4, 2, 1};
  const auto sel = select_num_mixtures(target, qs, xs, identity_moment(), schedule, 0.01, rng);
  EXPECT_EQ(sel.trace.size(), 2u);
  EXPECT_TRUE(sel.converged);
  EXPECT_EQ(sel.partition.num_subsets(), 16u);
  EXPECT_LT(sel.trace[1].change, 1e-12);
}

TEST(SelectNumMixtures, RejectsBadSchedules) {
  const std::vector<Gaussian> qs(4, g1(0.0, 1.0));
  const TargetDensity target = TargetDensity::from_gaussian(g1(0.0, 1.0));
  RandomStream rng(3);
  const auto xs = draw_samples(qs, rng);
  auto run = [&](std::vector<std::size_t> s, double thr = 0.01) {
    return select_num_mixtures(target, qs, xs, identity_moment(), s, thr, rng);
  };
  EXPECT_THROW(run({}), ScheduleInvalid);
  EXPECT_THROW(run({2, 1}), ScheduleInvalid);
  EXPECT_THROW(run({4, 4, 1}), ScheduleInvalid);
  EXPECT_THROW(run({4, 2, 3}), ScheduleInvalid);
  EXPECT_THROW(run({4, 2, 0}), ScheduleInvalid);
  EXPECT_THROW(run({4, 2}, 0.0), ScheduleInvalid);
}

TEST(SelectNumMixtures, TraceMatchesIndependentEstimatesAndCachesEvaluations) {
  RandomStream rng(44);
  const std::size_t n = 64;
  std::vector<Gaussian> qs;
  for (std::size_t i = 0; i < n; ++i) {
    Point mu(2);
    mu << rng.uniform(-20, 20), rng.uniform(-20, 20);
    qs.emplace_back(mu, Matrix::Identity(2, 2) * 25.0);
  }
  const TargetDensity target = TargetDensity::from_mixture(reference_mixture());
  const auto xs = draw_samples(qs, rng);
  const auto schedule = default_p_values(n);
  const auto sel = select_num_mixtures(target, qs, xs, identity_moment(), schedule, 1e-9, rng);

  std::uint64_t new_total = 0;
  for (const auto& step : sel.trace) {
    const auto direct = estimate_moment(compute_weights(target, qs, step.partition, xs), identity_moment());
    EXPECT_EQ(direct.moment, step.estimate.moment);
    EXPECT_EQ(direct.z_hat, step.estimate.z_hat);
    EXPECT_EQ(step.estimate.proposal_evals, step.partition.eval_cost());
    EXPECT_EQ(step.partition.num_subsets(), step.num_mixtures);
    new_total += step.new_evals;
  }
  EXPECT_EQ(new_total, sel.distinct_evals);
  EXPECT_LE(sel.distinct_evals, n * n);
  // The diagonal is shared by every step, so the cache saves work.
  std::uint64_t nominal = 0;
  for (const auto& step : sel.trace) nominal += step.partition.eval_cost();
  EXPECT_LT(sel.distinct_evals, nominal);
}
