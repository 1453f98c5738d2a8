#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pdmis/random.hpp"

namespace pdmis {

using IndexSet = std::vector<std::size_t>;

/// Disjoint cover S_1, ..., S_P of the proposal indices {0, ..., N-1}.
///
/// Indices are zero based. The representation is canonical: each subset is
/// sorted ascending and subsets are ordered by their smallest index, so two
/// partitions describing the same grouping compare equal.
class Partition {
 public:
  /// Validates and canonicalizes. Throws NotAPartition naming the first
  /// violated property.
  static Partition from_subsets(std::vector<IndexSet> subsets, std::size_t n_total);

  std::size_t n_total() const { return group_of_.size(); }
  std::size_t num_subsets() const { return subsets_.size(); }
  const std::vector<IndexSet>& subsets() const { return subsets_; }
  const IndexSet& subset(std::size_t p) const { return subsets_[p]; }
  /// Subset number containing proposal `i`.
  std::size_t group_of(std::size_t i) const { return group_of_[i]; }

  /// Proposal evaluations needed to weight every sample: sum_p |S_p|^2.
  std::uint64_t eval_cost() const;

  /// Every subset has the same size M (so eval_cost() == P * M^2).
  bool equal_sized() const;

  /// Re-checks all invariants; throws NotAPartition on violation.
  void validate() const;

  friend bool operator==(const Partition&, const Partition&) = default;

  /// Empty placeholder (N = 0); not a valid partition.
  Partition() = default;

 private:
  std::vector<IndexSet> subsets_;
  std::vector<std::size_t> group_of_;
};

/// Checks that `subsets` is a partition of {0, ..., n_total-1}: indices in
/// range, no subset empty, no overlap, no gap. Throws NotAPartition whose
/// message names the violated property.
void validate_subsets(const std::vector<IndexSet>& subsets, std::size_t n_total);

/// {{0}, {1}, ..., {N-1}}: standard MIS weighting.
Partition partition_singleton(std::size_t n);

/// {{0, ..., N-1}}: full deterministic-mixture weighting.
Partition partition_full(std::size_t n);

/// Random clustering: a uniform permutation of the indices cut into P
/// contiguous blocks. The first N mod P blocks get ceil(N/P) indices, the rest
/// floor(N/P).
Partition partition_random_blocks(std::size_t n, std::size_t p, RandomStream& rng);

/// Consecutive index blocks {0..M-1}, {M..2M-1}, ... with the same size rule
/// as partition_random_blocks. Successive halvings of P give nested
/// partitions when P divides N.
Partition partition_contiguous_blocks(std::size_t n, std::size_t p);

/// J x T proposal grid, index i = t*J + j. One subset per iteration t holding
/// its J proposals (population-per-iteration denominators, cost J^2 T).
Partition partition_grid_spatial(std::size_t j, std::size_t t);

/// J x T proposal grid, index i = t*J + j. One subset per chain j holding its
/// T proposals over time (cost J T^2; the J = 1 case is a full temporal mixture).
Partition partition_grid_temporal(std::size_t j, std::size_t t);

/// "{{0,1},{2,3}}".
std::string to_string(const Partition& p);

/// Inverse of to_string. Whitespace is ignored. Throws ParseError or NotAPartition.
Partition parse_partition(std::string_view text, std::size_t n_total);

}  // namespace pdmis
