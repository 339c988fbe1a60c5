#pragma once

#include <vector>

#include <Eigen/Core>

namespace posestream {

struct Assignment {
  /// Column assigned to each row, or -1.
  std::vector<int> row_to_col;
  /// Row assigned to each column, or -1.
  std::vector<int> col_to_row;
  /// Sum of the assigned entries, accumulated in row order.
  double total_cost = 0.0;
};

/// Minimum-cost assignment (Hungarian method with potentials, O(n^2 m)).
///
/// Rectangular inputs are allowed: exactly min(rows, cols) pairs are
/// assigned. Entries must be finite.
Assignment hungarian(const Eigen::MatrixXd& cost);

}  // namespace posestream
