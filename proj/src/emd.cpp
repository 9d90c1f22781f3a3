#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lasdiff/error.hpp"
#include "lasdiff/metrics.hpp"

namespace lasdiff {

std::vector<int> solve_assignment(const std::vector<double>& cost, int n) {
  // Shortest augmenting path with row/column potentials, O(n^3).
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[static_cast<size_t>(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

namespace {

std::vector<double> distance_matrix(const PointSet& p, const PointSet& q) {
  const size_t n = p.size();
  std::vector<double> cost(n * n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) cost[i * n + j] = norm(p[i] - q[j]);
  }
  return cost;
}

void check_sizes(const PointSet& p, const PointSet& q) {
  if (p.empty() || q.empty()) throw Error("empty-point-set");
  if (p.size() != q.size()) throw Error("size-mismatch", "emd requires equally sized point sets");
}

}  // namespace

double emd_exact(const PointSet& p, const PointSet& q) {
  check_sizes(p, q);
  const int n = static_cast<int>(p.size());
  const auto cost = distance_matrix(p, q);
  const auto assignment = solve_assignment(cost, n);
  double total = 0;
  for (int i = 0; i < n; ++i) total += cost[static_cast<size_t>(i) * n + assignment[i]];
  return total / n;
}

// Forward auction with epsilon scaling. The matching is within n * eps of
// optimal; eps ends at 1e-3 of the mean row minimum, which lower-bounds the
// optimal mean cost.
double emd_auction(const PointSet& p, const PointSet& q) {
  check_sizes(p, q);
  const size_t n = p.size();
  const auto cost = distance_matrix(p, q);
  const double max_cost = *std::max_element(cost.begin(), cost.end());
  if (max_cost == 0) return 0;
  double row_min_mean = 0;
  for (size_t i = 0; i < n; ++i) {
    row_min_mean += *std::min_element(cost.begin() + i * n, cost.begin() + (i + 1) * n);
  }
  row_min_mean /= n;
  const double eps_final = std::max(1e-3 * row_min_mean, 1e-7 * max_cost);

  std::vector<double> price(n, 0.0);
  std::vector<long> owner(n, -1), assigned(n, -1);
  for (double eps = max_cost / 4; ; eps = std::max(eps / 5, eps_final)) {
    std::fill(owner.begin(), owner.end(), -1);
    std::fill(assigned.begin(), assigned.end(), -1);
    std::vector<size_t> unassigned(n);
    std::iota(unassigned.begin(), unassigned.end(), 0);
    while (!unassigned.empty()) {
      const size_t i = unassigned.back();
      unassigned.pop_back();
      double best = -std::numeric_limits<double>::infinity(), second = best;
      size_t best_j = 0;
      for (size_t j = 0; j < n; ++j) {
        const double value = -cost[i * n + j] - price[j];
        if (value > best) {
          second = best;
          best = value;
          best_j = j;
        } else if (value > second) {
          second = value;
        }
      }
      const double increment = (n == 1 ? 0.0 : best - second) + eps;
      price[best_j] += increment;
      if (owner[best_j] >= 0) {
        assigned[owner[best_j]] = -1;
        unassigned.push_back(static_cast<size_t>(owner[best_j]));
      }
      owner[best_j] = static_cast<long>(i);
      assigned[i] = static_cast<long>(best_j);
    }
    if (eps <= eps_final) break;
  }
  double total = 0;
  for (size_t i = 0; i < n; ++i) total += cost[i * n + static_cast<size_t>(assigned[i])];
  return total / n;
}

EmdResult emd(const PointSet& p, const PointSet& q, size_t exact_limit) {
  check_sizes(p, q);
  if (p.size() <= exact_limit) return {emd_exact(p, q), false, "hungarian"};
  return {emd_auction(p, q), true, "auction"};
}

}  // namespace lasdiff
