#include "annot/error.hpp"
#include "annot/refine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace annot::refine {

void FeatureTable::add(const std::string& image_id, std::vector<double> values) {
  if (rows.empty() && dimension == 0) dimension = values.size();
  if (values.size() != dimension)
    throw Error(Errc::MalformedFile, "feature row " + image_id + " has dimension " + std::to_string(values.size()) +
                                         ", expected " + std::to_string(dimension));
  for (double v : values)
    if (!std::isfinite(v)) throw Error(Errc::MalformedFile, "feature row " + image_id + " holds a non-finite value");
  rows[image_id] = std::move(values);
}

std::string features_to_csv(const FeatureTable& table) {
  std::string out = "image_id";
  for (std::size_t d = 0; d < table.dimension; ++d) out += ",f" + std::to_string(d);
  out += '\n';
  char buf[32];
  for (const auto& [id, row] : table.rows) {
    out += id;
    for (double v : row) {
      std::snprintf(buf, sizeof(buf), ",%.9g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

FeatureTable features_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("image_id", 0) != 0)
    throw Error(Errc::MalformedFile, "features.csv must start with an image_id header");
  const auto dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  FeatureTable table;
  table.dimension = dim;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, cell;
    std::getline(row, id, ',');
    std::vector<double> values;
    values.reserve(dim);
    while (std::getline(row, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(Errc::MalformedFile, "features.csv: bad value for " + id);
      }
    }
    table.add(id, std::move(values));
  }
  return table;
}

std::string category_of(const std::string& image_id) {
  const auto pos = image_id.rfind('_');
  return pos == std::string::npos ? image_id : image_id.substr(0, pos);
}

FeatureTable synthetic_features(const std::vector<std::string>& image_ids, const std::string& target_category,
                                const SyntheticFeatureConfig& cfg) {
  std::map<std::string, std::vector<std::string>> by_category;
  for (const auto& id : image_ids) by_category[category_of(id)].push_back(id);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  FeatureTable table;
  table.dimension = cfg.dimension;
  // Iteration over the ordered map keeps draws independent of input order.
  for (const auto& [category, ids] : by_category) {
    const bool target = category == target_category;
    std::vector<double> centre(cfg.dimension);
    for (auto& c : centre) c = gauss(rng) * cfg.centre_spread;
    if (target) {
      // The target category sits away from the cloud of other categories.
      for (auto& c : centre) c += cfg.target_offset * cfg.centre_spread;
    }
    const double spread = target ? cfg.target_spread : cfg.nontarget_spread;
    for (const auto& id : ids) {
      std::vector<double> row(cfg.dimension);
      for (std::size_t d = 0; d < cfg.dimension; ++d) row[d] = centre[d] + gauss(rng) * spread;
      table.add(id, std::move(row));
    }
  }
  return table;
}

} // namespace annot::refine
