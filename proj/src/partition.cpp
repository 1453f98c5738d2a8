#include "pdmis/partition.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <numeric>

#include "pdmis/errors.hpp"

namespace pdmis {

void validate_subsets(const std::vector<IndexSet>& subsets, std::size_t n_total) {
  if (n_total < 1) throw NotAPartition("NotAPartition(empty index set): N must be >= 1");
  std::vector<bool> seen(n_total, false);
  std::size_t covered = 0;
  for (std::size_t p = 0; p < subsets.size(); ++p) {
    if (subsets[p].empty()) {
      throw NotAPartition("NotAPartition(empty subset): subset " + std::to_string(p) + " is empty");
    }
    for (std::size_t i : subsets[p]) {
      if (i >= n_total) {
        throw NotAPartition("NotAPartition(index out of range): index " + std::to_string(i) +
                            " >= N=" + std::to_string(n_total));
      }
      if (seen[i]) {
        throw NotAPartition("NotAPartition(overlap): index " + std::to_string(i) +
                            " appears more than once");
      }
      seen[i] = true;
      ++covered;
    }
  }
  if (covered != n_total) {
    const auto gap = std::find(seen.begin(), seen.end(), false) - seen.begin();
    throw NotAPartition("NotAPartition(coverage gap): index " + std::to_string(gap) +
                        " is in no subset");
  }
}

Partition Partition::from_subsets(std::vector<IndexSet> subsets, std::size_t n_total) {
  validate_subsets(subsets, n_total);
  for (auto& s : subsets) std::sort(s.begin(), s.end());
  std::sort(subsets.begin(), subsets.end(),
            [](const IndexSet& a, const IndexSet& b) { return a.front() < b.front(); });
  Partition out;
  out.group_of_.assign(n_total, 0);
  for (std::size_t p = 0; p < subsets.size(); ++p) {
    for (std::size_t i : subsets[p]) out.group_of_[i] = p;
  }
  out.subsets_ = std::move(subsets);
  return out;
}

std::uint64_t Partition::eval_cost() const {
  std::uint64_t cost = 0;
  for (const auto& s : subsets_) cost += static_cast<std::uint64_t>(s.size()) * s.size();
  return cost;
}

bool Partition::equal_sized() const {
  return std::all_of(subsets_.begin(), subsets_.end(),
                     [&](const IndexSet& s) { return s.size() == subsets_.front().size(); });
}

void Partition::validate() const {
  validate_subsets(subsets_, group_of_.size());
  for (std::size_t p = 0; p < subsets_.size(); ++p) {
    for (std::size_t i : subsets_[p]) {
      if (group_of_[i] != p) {
        throw NotAPartition("NotAPartition(group map): index " + std::to_string(i) +
                            " maps to the wrong subset");
      }
    }
  }
}

namespace {

void require_size(bool ok, const char* what) {
  if (!ok) throw InvalidSize(what);
}

// Cuts `order` into p blocks; the first n % p blocks are one longer.
std::vector<IndexSet> cut_blocks(const std::vector<std::size_t>& order, std::size_t p) {
  const std::size_t n = order.size();
  const std::size_t base = n / p;
  const std::size_t extra = n % p;
  std::vector<IndexSet> subsets(p);
  std::size_t pos = 0;
  for (std::size_t b = 0; b < p; ++b) {
    const std::size_t len = base + (b < extra ? 1 : 0);
    subsets[b].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                      order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return subsets;
}

}  // namespace

Partition partition_singleton(std::size_t n) {
  require_size(n >= 1, "partition_singleton: N must be >= 1");
  std::vector<IndexSet> subsets(n);
  for (std::size_t i = 0; i < n; ++i) subsets[i] = {i};
  return Partition::from_subsets(std::move(subsets), n);
}

Partition partition_full(std::size_t n) {
  require_size(n >= 1, "partition_full: N must be >= 1");
  IndexSet all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return Partition::from_subsets({std::move(all)}, n);
}

Partition partition_random_blocks(std::size_t n, std::size_t p, RandomStream& rng) {
  require_size(n >= 1, "partition_random_blocks: N must be >= 1");
  require_size(p >= 1 && p <= n, "partition_random_blocks: need 1 <= P <= N");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  return Partition::from_subsets(cut_blocks(order, p), n);
}

Partition partition_contiguous_blocks(std::size_t n, std::size_t p) {
  require_size(n >= 1, "partition_contiguous_blocks: N must be >= 1");
  require_size(p >= 1 && p <= n, "partition_contiguous_blocks: need 1 <= P <= N");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return Partition::from_subsets(cut_blocks(order, p), n);
}

Partition partition_grid_spatial(std::size_t j, std::size_t t) {
  require_size(j >= 1 && t >= 1, "partition_grid_spatial: J and T must be >= 1");
  std::vector<IndexSet> subsets(t);
  for (std::size_t it = 0; it < t; ++it) {
    for (std::size_t c = 0; c < j; ++c) subsets[it].push_back(it * j + c);
  }
  return Partition::from_subsets(std::move(subsets), j * t);
}

Partition partition_grid_temporal(std::size_t j, std::size_t t) {
  require_size(j >= 1 && t >= 1, "partition_grid_temporal: J and T must be >= 1");
  std::vector<IndexSet> subsets(j);
  for (std::size_t c = 0; c < j; ++c) {
    for (std::size_t it = 0; it < t; ++it) subsets[c].push_back(it * j + c);
  }
  return Partition::from_subsets(std::move(subsets), j * t);
}

std::string to_string(const Partition& p) {
  std::string out = "{";
  for (std::size_t s = 0; s < p.num_subsets(); ++s) {
    if (s) out += ',';
    out += '{';
    const auto& set = p.subset(s);
    for (std::size_t k = 0; k < set.size(); ++k) {
      if (k) out += ',';
      out += std::to_string(set[k]);
    }
    out += '}';
  }
  out += '}';
  return out;
}

Partition parse_partition(std::string_view text, std::size_t n_total) {
  std::string compact;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) compact += c;
  }
  auto fail = [&](std::size_t pos) -> ParseError {
    return ParseError("parse_partition: unexpected input at offset " + std::to_string(pos));
  };
  std::size_t pos = 0;
  auto expect = [&](char c) {
    if (pos >= compact.size() || compact[pos] != c) throw fail(pos);
    ++pos;
  };

  std::vector<IndexSet> subsets;
  expect('{');
  while (pos < compact.size() && compact[pos] == '{') {
    ++pos;
    IndexSet set;
    while (pos < compact.size() && compact[pos] != '}') {
      std::size_t value = 0;
      const char* first = compact.data() + pos;
      const auto [ptr, ec] = std::from_chars(first, compact.data() + compact.size(), value);
      if (ec != std::errc{}) throw fail(pos);
      set.push_back(value);
      pos += static_cast<std::size_t>(ptr - first);
      if (pos < compact.size() && compact[pos] == ',') ++pos;
    }
    expect('}');
    subsets.push_back(std::move(set));
    if (pos < compact.size() && compact[pos] == ',') ++pos;
  }
  expect('}');
  if (pos != compact.size()) throw fail(pos);
  return Partition::from_subsets(std::move(subsets), n_total);
}

}  // namespace pdmis
