#include "posestream/assignment.hpp"

#include <algorithm>
#include <limits>

#include "posestream/errors.hpp"

namespace posestream {

namespace {

// Shortest augmenting path formulation for rows <= cols. Indices are
// 1-based internally; column 0 is the virtual source.
std::vector<int> solve_wide(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
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

  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

Assignment hungarian(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite()) throw InvalidArgument("hungarian: cost entries must be finite");
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());

  Assignment out;
  out.row_to_col.assign(rows, -1);
  out.col_to_row.assign(cols, -1);
  if (rows == 0 || cols == 0) return out;

  if (rows <= cols) {
    out.row_to_col = solve_wide(cost);
  } else {
    const std::vector<int> col_to_row = solve_wide(cost.transpose());
    for (int c = 0; c < cols; ++c) out.row_to_col[col_to_row[c]] = c;
  }
  for (int r = 0; r < rows; ++r) {
    const int c = out.row_to_col[r];
    if (c < 0) continue;
    out.col_to_row[c] = r;
    out.total_cost += cost(r, c);
  }
  return out;
}

}  // namespace posestream
