#include "annot/metrics.hpp"

#include "annot/error.hpp"

namespace annot::eval {

Metrics metrics(const ConfusionCounts& c) {
  Metrics m;
  const double tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) {
    m.precision = tp / static_cast<double>(c.tp + c.fp);
  } else {
    m.degenerate = true;
  }
  if (c.tp + c.fn > 0) {
    m.recall = tp / static_cast<double>(c.tp + c.fn);
  } else {
    m.degenerate = true;
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.degenerate = true;
  }
  return m;
}

ConfusionCounts confusion(std::span<const bool> truth, std::span<const bool> predicted) {
  if (truth.size() != predicted.size()) throw Error(Errc::ShapeMismatch, "truth and prediction lengths differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) {
      predicted[i] ? ++c.tp : ++c.fn;
    } else {
      predicted[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

} // namespace annot::eval
