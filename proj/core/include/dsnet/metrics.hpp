#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace dsnet::metrics {

inline constexpr std::size_t kNumClasses = 4;

/// Unweighted average recall over the classes present in `truth`.
double uar(std::span<const int> truth, std::span<const int> pred);

// Per-class recall; classes absent from `truth` report -1.
std::array<double, kNumClasses> per_class_recall(std::span<const int> truth, std::span<const int> pred);

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::array<std::array<long, kNumClasses>, kNumClasses> counts{};

  long support(std::size_t cls) const;
  // Row-stochastic view; all-zero rows stay zero.
  std::array<std::array<double, kNumClasses>, kNumClasses> row_normalized() const;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred);

/// Mean silhouette coefficient with Euclidean distance. `points` is
/// row-major n×dim. Points in singleton clusters score 0; a pair of
/// identical points gives a = b = 0 and also scores 0.
double silhouette(std::span<const double> points, std::size_t dim, std::span<const int> labels);

}  // namespace dsnet::metrics
