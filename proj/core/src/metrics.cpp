#include "dsnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "dsnet/error.hpp"

namespace dsnet::metrics {
namespace {

void check_labels(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size()) throw ValidationError("metrics: label and prediction counts differ");
  if (truth.empty()) throw ValidationError("metrics: empty input");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= static_cast<int>(kNumClasses) || pred[i] < 0 ||
        pred[i] >= static_cast<int>(kNumClasses)) {
      throw ValidationError("metrics: label out of range");
    }
  }
}

}  // namespace

std::array<double, kNumClasses> per_class_recall(std::span<const int> truth, std::span<const int> pred) {
  check_labels(truth, pred);
  std::array<long, kNumClasses> hit{}, total{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++total[static_cast<std::size_t>(truth[i])];
    if (truth[i] == pred[i]) ++hit[static_cast<std::size_t>(truth[i])];
  }
  std::array<double, kNumClasses> r{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    r[c] = total[c] == 0 ? -1.0 : static_cast<double>(hit[c]) / static_cast<double>(total[c]);
  }
  return r;
}

double uar(std::span<const int> truth, std::span<const int> pred) {
  const auto r = per_class_recall(truth, pred);
  double s = 0.0;
  int present = 0;
  for (double v : r) {
    if (v >= 0.0) {
      s += v;
      ++present;
    }
  }
  return s / present;
}

long ConfusionMatrix::support(std::size_t cls) const {
  long s = 0;
  for (long v : counts[cls]) s += v;
  return s;
}

std::array<std::array<double, kNumClasses>, kNumClasses> ConfusionMatrix::row_normalized() const {
  std::array<std::array<double, kNumClasses>, kNumClasses> out{};
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    const long s = support(r);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      out[r][c] = s == 0 ? 0.0 : static_cast<double>(counts[r][c]) / static_cast<double>(s);
    }
  }
  return out;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred) {
  check_labels(truth, pred);
  ConfusionMatrix m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++m.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  }
  return m;
}

double silhouette(std::span<const double> points, std::size_t dim, std::span<const int> labels) {
  const std::size_t n = labels.size();
  if (dim == 0 || points.size() != n * dim) throw ShapeError("silhouette: points do not match labels");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw ValidationError("silhouette: need at least two clusters");

  std::vector<int> cluster_index(n);
  std::map<int, std::size_t> index_of;
  for (const auto& [label, count] : sizes) index_of.emplace(label, index_of.size());
  for (std::size_t i = 0; i < n; ++i) cluster_index[i] = static_cast<int>(index_of[labels[i]]);
  std::vector<std::size_t> count(sizes.size());
  for (const auto& [label, c] : sizes) count[index_of[label]] = c;

  double total = 0.0;
  std::vector<double> dist_sum(sizes.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = points[i * dim + k] - points[j * dim + k];
        d2 += diff * diff;
      }
      dist_sum[static_cast<std::size_t>(cluster_index[j])] += std::sqrt(d2);
    }
    const auto own = static_cast<std::size_t>(cluster_index[i]);
    if (count[own] < 2) continue;
    const double a = dist_sum[own] / static_cast<double>(count[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < count.size(); ++c) {
      if (c != own) b = std::min(b, dist_sum[c] / static_cast<double>(count[c]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

}  // namespace dsnet::metrics
