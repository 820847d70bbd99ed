#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "fullface/error.hpp"
#include "fullface/evaluation.hpp"

namespace fullface {
namespace {

struct Run {
  std::vector<int> assignment;
  std::vector<double> centroids;
  std::vector<double> history;
  double objective = 0.0;
};

double assign(std::span<const double> values, const std::vector<double>& centroids,
              std::vector<int>& assignment) {
  double objective = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double d = (values[i] - centroids[c]) * (values[i] - centroids[c]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    assignment[i] = best;
    objective += best_d;
  }
  return objective;
}

Run lloyd(std::span<const double> values, std::vector<double> centroids, int max_iterations) {
  Run run;
  run.assignment.assign(values.size(), -1);
  std::vector<int> previous;
  const std::size_t k = centroids.size();
  for (int it = 0; it < max_iterations; ++it) {
    previous = run.assignment;
    run.history.push_back(assign(values, centroids, run.assignment));
    if (run.assignment == previous) break;
    std::vector<double> sum(k, 0.0);
    std::vector<int> count(k, 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      sum[run.assignment[i]] += values[i];
      ++count[run.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) centroids[c] = sum[c] / count[c];
    }
  }
  run.objective = assign(values, centroids, run.assignment);
  run.centroids = std::move(centroids);
  return run;
}

// Optimal contiguous partition of the sorted values (exact for 1D k-means).
std::vector<double> exact_start(std::span<const double> values, int k) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  std::vector<double> s(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s[i + 1] = s[i] + v[i];
    s2[i + 1] = s2[i] + v[i] * v[i];
  }
  auto cost = [&](std::size_t i, std::size_t j) {  // segment [i, j)
    const double m = static_cast<double>(j - i);
    const double sum = s[j] - s[i];
    return std::max(0.0, (s2[j] - s2[i]) - sum * sum / m);
  };
  const double inf = std::numeric_limits<double>::infinity();
  const auto kk = static_cast<std::size_t>(k);
  std::vector<std::vector<double>> d(kk + 1, std::vector<double>(n + 1, inf));
  std::vector<std::vector<std::size_t>> from(kk + 1, std::vector<std::size_t>(n + 1, 0));
  d[0][0] = 0.0;
  for (std::size_t m = 1; m <= kk; ++m) {
    for (std::size_t j = m; j <= n; ++j) {
      for (std::size_t i = m - 1; i < j; ++i) {
        const double c = d[m - 1][i] + cost(i, j);
        if (c < d[m][j]) {
          d[m][j] = c;
          from[m][j] = i;
        }
      }
    }
  }
  std::vector<double> centroids(kk);
  std::size_t j = n;
  for (std::size_t m = kk; m >= 1; --m) {
    const std::size_t i = from[m][j];
    centroids[m - 1] = (s[j] - s[i]) / static_cast<double>(j - i);
    j = i;
  }
  return centroids;
}

std::vector<double> plus_plus_start(std::span<const double> values, int k, std::mt19937_64& rng) {
  std::vector<double> centroids;
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  centroids.push_back(values[pick(rng)]);
  std::vector<double> d2(values.size());
  while (static_cast<int>(centroids.size()) < k) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centroids) best = std::min(best, (values[i] - c) * (values[i] - c));
      d2[i] = best;
    }
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0.0)) {
      centroids.push_back(values[pick(rng)]);
      continue;
    }
    std::discrete_distribution<std::size_t> weighted(d2.begin(), d2.end());
    centroids.push_back(values[weighted(rng)]);
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans_1d(std::span<const double> values, const KMeansOptions& options) {
  if (options.k < 1) throw ValidationError("k-means needs k >= 1");
  if (static_cast<std::size_t>(options.k) > values.size()) {
    throw ValidationError("k-means with k = " + std::to_string(options.k) + " but only " +
                          std::to_string(values.size()) + " values");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("k-means values must be finite");
  }
  if (options.max_iterations < 1) throw ValidationError("k-means needs max_iterations >= 1");

  Run best = lloyd(values, exact_start(values, options.k), options.max_iterations);
  std::mt19937_64 rng(options.seed);
  for (int r = 0; r < options.restarts; ++r) {
    Run run = lloyd(values, plus_plus_start(values, options.k, rng), options.max_iterations);
    if (run.objective < best.objective) best = std::move(run);
  }

  std::vector<int> order(static_cast<std::size_t>(options.k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return best.centroids[a] < best.centroids[b]; });
  std::vector<int> rank(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r);

  KMeansResult result;
  result.objective = best.objective;
  result.objective_history = std::move(best.history);
  result.centroids.resize(order.size());
  result.sizes.assign(order.size(), 0);
  for (std::size_t r = 0; r < order.size(); ++r) result.centroids[r] = best.centroids[order[r]];
  result.assignment.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    result.assignment[i] = rank[best.assignment[i]];
    ++result.sizes[result.assignment[i]];
  }
  result.empty_clusters =
      static_cast<int>(std::count(result.sizes.begin(), result.sizes.end(), 0));
  return result;
}

}  // namespace fullface
