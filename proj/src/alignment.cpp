#include "plrefine/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "plrefine/error.hpp"
#include "plrefine/text.hpp"

namespace plr {
namespace {

double squared_distance(const RoiFeature& a, const RoiFeature& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    const double d = a.values[k] - b.values[k];
    s += d * d;
  }
  return s;
}

void check_dimensions(std::span<const RoiFeature> a, std::span<const RoiFeature> b) {
  std::optional<std::size_t> dim;
  for (auto set : {a, b}) {
    for (const RoiFeature& f : set) {
      if (!dim) dim = f.values.size();
      if (f.values.size() != *dim) throw InvalidArgument("RoI feature dimensions differ within a batch");
    }
  }
}

void check_pair(const RoiFeature& anchor, std::span<const RoiFeature> pool) {
  for (const RoiFeature& f : pool) {
    if (f.values.size() != anchor.values.size()) throw InvalidArgument("RoI feature dimension mismatch");
  }
}

std::string domain_name(Domain d) { return d == Domain::Source ? "source" : "target"; }

Domain parse_domain(const std::string& s) {
  if (s == "source") return Domain::Source;
  if (s == "target") return Domain::Target;
  throw DataError("unknown domain '" + s + "'");
}

}  // namespace

RoiFeature::RoiFeature(std::vector<double> values_, Domain domain_, Category category_)
    : values(std::move(values_)), domain(domain_), category(category_) {
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("RoI feature entries must be finite");
  }
}

void TripletConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("triplet margin alpha must be > 0");
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("trade-off eta must lie in (0, 1)");
}

double feature_distance(const RoiFeature& a, const RoiFeature& b) {
  if (a.values.size() != b.values.size()) throw InvalidArgument("RoI feature dimension mismatch");
  return std::sqrt(squared_distance(a, b));
}

std::optional<std::size_t> hardest_positive(const RoiFeature& anchor, std::span<const RoiFeature> pool,
                                            std::optional<std::size_t> exclude) {
  check_pair(anchor, pool);
  std::optional<std::size_t> best;
  double best_d = -1.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].category != anchor.category || exclude == i) continue;
    const double d = squared_distance(anchor, pool[i]);
    if (d > best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

std::optional<std::size_t> hardest_negative(const RoiFeature& anchor, std::span<const RoiFeature> pool) {
  check_pair(anchor, pool);
  std::optional<std::size_t> best;
  double best_d = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].category == anchor.category) continue;
    const double d = squared_distance(anchor, pool[i]);
    if (!best || d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

double triplet_loss_pair(std::span<const RoiFeature> anchors, std::span<const RoiFeature> pool, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("triplet margin alpha must be > 0");
  check_dimensions(anchors, pool);
  const bool same_sequence = anchors.data() == pool.data() && anchors.size() == pool.size();
  double loss = 0.0;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const auto p = hardest_positive(anchors[a], pool, same_sequence ? std::optional<std::size_t>(a) : std::nullopt);
    const auto n = hardest_negative(anchors[a], pool);
    if (!p || !n) continue;
    const double term =
        std::sqrt(squared_distance(anchors[a], pool[*p])) - std::sqrt(squared_distance(anchors[a], pool[*n])) + alpha;
    loss += std::max(term, 0.0);
  }
  return loss;
}

TripletLoss total_triplet_loss(std::span<const RoiFeature> source, std::span<const RoiFeature> target, double alpha) {
  TripletLoss out;
  out.intra = triplet_loss_pair(source, source, alpha) + triplet_loss_pair(target, target, alpha);
  out.inter = triplet_loss_pair(source, target, alpha) + triplet_loss_pair(target, source, alpha);
  out.total = out.intra + out.inter;
  return out;
}

double combined_loss(double det_loss, double triplet_total, const TripletConfig& cfg) {
  cfg.validate();
  return det_loss + cfg.eta * triplet_total;
}

void write_features_csv(std::ostream& out, std::span<const RoiFeature> features) {
  const std::size_t dim = features.empty() ? 0 : features.front().values.size();
  out << "domain,category";
  for (std::size_t k = 0; k < dim; ++k) out << ",f" << k;
  out << '\n';
  for (const RoiFeature& f : features) {
    if (f.values.size() != dim) throw InvalidArgument("RoI feature dimensions differ within a batch");
    out << domain_name(f.domain) << ',' << category_name(f.category);
    for (double v : f.values) out << ',' << format_real(v);
    out << '\n';
  }
}

std::vector<RoiFeature> read_features_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split(line, ',');
  if (header.size() < 2 || header[0] != "domain" || header[1] != "category") {
    throw FormatError("feature CSV must start with 'domain,category'");
  }
  const std::size_t dim = header.size() - 2;
  std::vector<RoiFeature> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != dim + 2) {
      throw FormatError("feature CSV line " + std::to_string(line_no) + ": expected " + std::to_string(dim + 2) +
                        " columns");
    }
    std::vector<double> values;
    values.reserve(dim);
    for (std::size_t k = 0; k < dim; ++k) values.push_back(parse_real(cells[k + 2]));
    try {
      out.emplace_back(std::move(values), parse_domain(cells[0]), parse_category(cells[1]));
    } catch (const InvalidArgument& e) {
      throw DataError("feature CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace plr
