#include "mrnet/objective.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace mrnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Jonker-Volgenant style O(n^3) solver for a square matrix given through an
// accessor. Returns rowsol[row] = assigned column.
std::vector<int> solve_square(int n, const std::function<double(int, int)>& cost) {
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<size_t>(n) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> rowsol(static_cast<size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[static_cast<size_t>(j)]) rowsol[static_cast<size_t>(p[static_cast<size_t>(j)]) - 1] = j - 1;
  return rowsol;
}

// Minimum assignment cost covering every listed column with distinct listed
// rows; unused rows go to zero-cost padding columns.
double assignment_value(const CostMatrix& cost, const std::vector<int>& rows,
                        const std::vector<int>& cols) {
  if (cols.empty()) return 0.0;
  const int n = static_cast<int>(rows.size());
  const int real = static_cast<int>(cols.size());
  auto sub = [&](int a, int b) {
    return b < real ? cost[static_cast<size_t>(rows[static_cast<size_t>(a)])]
                          [static_cast<size_t>(cols[static_cast<size_t>(b)])]
                    : 0.0;
  };
  auto rowsol = solve_square(n, sub);
  // Sum matched entries in column order so equal assignments sum identically.
  std::vector<double> per_col(static_cast<size_t>(real), 0.0);
  for (int a = 0; a < n; ++a)
    if (rowsol[static_cast<size_t>(a)] < real)
      per_col[static_cast<size_t>(rowsol[static_cast<size_t>(a)])] = sub(a, rowsol[static_cast<size_t>(a)]);
  double total = 0.0;
  for (double c : per_col) total += c;
  return total;
}

}  // namespace

MatchResult match_hungarian(const CostMatrix& cost) {
  const int n_pred = static_cast<int>(cost.size());
  const int n_gt = n_pred > 0 ? static_cast<int>(cost[0].size()) : 0;
  MatchResult result;
  if (n_gt == 0) {
    for (int i = 0; i < n_pred; ++i) result.unmatched_preds.push_back(i);
    return result;
  }
  if (n_gt > n_pred)
    throw InputError("match_hungarian: " + std::to_string(n_gt) + " ground truths exceed " +
                     std::to_string(n_pred) + " predictions");
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != n_gt)
      throw InputError("match_hungarian: ragged cost matrix");
    for (double c : row)
      if (!std::isfinite(c)) throw InputError("match_hungarian: non-finite cost");
  }

  std::vector<int> avail(static_cast<size_t>(n_pred));
  for (int i = 0; i < n_pred; ++i) avail[static_cast<size_t>(i)] = i;
  std::vector<int> cols(static_cast<size_t>(n_gt));
  for (int j = 0; j < n_gt; ++j) cols[static_cast<size_t>(j)] = j;

  // Fix ground truths in order; each takes the lowest prediction index that
  // still admits an optimal completion. This resolves cost ties toward lower
  // prediction indices.
  double target = assignment_value(cost, avail, cols);
  for (int j = 0; j < n_gt; ++j) {
    std::vector<int> rest(cols.begin() + (j + 1), cols.end());
    int chosen = -1;
    double best_slack = kInf;
    int fallback = -1;
    for (int i : avail) {
      std::vector<int> rows_left;
      rows_left.reserve(avail.size() - 1);
      for (int r : avail)
        if (r != i) rows_left.push_back(r);
      const double value =
          cost[static_cast<size_t>(i)][static_cast<size_t>(j)] + assignment_value(cost, rows_left, rest);
      const double slack = value - target;
      if (slack <= 1e-9 * (1.0 + std::abs(target))) {
        chosen = i;
        break;
      }
      if (slack < best_slack) {
        best_slack = slack;
        fallback = i;
      }
    }
    if (chosen < 0) chosen = fallback;  // roundoff guard; slack is then ~ulp
    result.pairs.push_back({chosen, j});
    target -= cost[static_cast<size_t>(chosen)][static_cast<size_t>(j)];
    avail.erase(std::find(avail.begin(), avail.end(), chosen));
  }
  result.unmatched_preds = avail;
  return result;
}

CostMatrix matching_cost(const std::vector<std::array<double, 2>>& pred_cw,
                         const std::vector<double>& fg_prob,
                         const std::vector<Span>& gt_spans, const LossWeights& w) {
  if (pred_cw.size() != fg_prob.size())
    throw UsageError("matching_cost: prediction count mismatch");
  CostMatrix cost(pred_cw.size(), std::vector<double>(gt_spans.size(), 0.0));
  for (size_t i = 0; i < pred_cw.size(); ++i) {
    const double c = pred_cw[i][0], width = pred_cw[i][1];
    const Span pred = span_from_center_width_clamped(c, width);
    for (size_t j = 0; j < gt_spans.size(); ++j) {
      const Span& gt = gt_spans[j];
      const double l1 = std::abs(c - gt.center()) + std::abs(width - gt.width());
      cost[i][j] = w.lambda_l1 * l1 + w.lambda_iou * (-giou_1d(pred, gt)) - fg_prob[i];
    }
  }
  return cost;
}

}  // namespace mrnet
