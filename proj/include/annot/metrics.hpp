#pragma once

#include <cstddef>
#include <span>

namespace annot::eval {

struct ConfusionCounts {
  std::size_t tp{0}, fp{0}, tn{0}, fn{0};

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct Metrics {
  double precision{0.0};
  double recall{0.0};
  double f1{0.0};
  // Set when a ratio had a zero denominator and was reported as 0.
  bool degenerate{false};
};

Metrics metrics(const ConfusionCounts& counts);

// truth/predicted are aligned; true = target.
ConfusionCounts confusion(std::span<const bool> truth, std::span<const bool> predicted);

} // namespace annot::eval
