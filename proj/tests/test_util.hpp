#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gsc/dictionary.hpp"
#include "gsc/rng.hpp"

namespace gsc::test {

inline Dictionary random_unit_dictionary(int n, int m, Rng& rng) {
  Eigen::MatrixXd a = rng.normal_matrix(n, m);
  for (int j = 0; j < m; ++j) a.col(j).normalize();
  return Dictionary::from_matrix(std::move(a));
}

// random mixed-tag spec over contiguous groups
inline RegularizerSpec random_spec(int m, int group_size, Rng& rng, double gamma_lo = 0.2,
                                   double gamma_hi = 1.5) {
  GroupPartition part = GroupPartition::contiguous(m, group_size);
  std::vector<GroupNorm> norms;
  Eigen::VectorXd weights(part.n_groups());
  for (int g = 0; g < part.n_groups(); ++g) {
    const double pick = rng.uniform();
    if (pick < 1.0 / 3.0) {
      norms.push_back(GroupNorm::l1());
    } else if (pick < 2.0 / 3.0) {
      norms.push_back(GroupNorm::l2());
    } else {
      norms.push_back(GroupNorm::elastic(rng.uniform(0.2, 0.8)));
    }
    weights[g] = rng.uniform(gamma_lo, gamma_hi);
  }
  return RegularizerSpec(std::move(part), std::move(norms), std::move(weights));
}

// Cyclic coordinate-descent LASSO: independent oracle for the all-l1 uniform
// case, min 0.5||x - D g||^2 + gamma ||g||_1.
inline Eigen::VectorXd lasso_coordinate_descent(const Eigen::VectorXd& x,
                                                const Eigen::MatrixXd& d, double gamma,
                                                int sweeps = 20000, double tol = 1e-12) {
  const int m = static_cast<int>(d.cols());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd residual = x;
  Eigen::VectorXd col_sq(m);
  for (int j = 0; j < m; ++j) col_sq[j] = d.col(j).squaredNorm();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < m; ++j) {
      const double old = g[j];
      const double rho = d.col(j).dot(residual) + col_sq[j] * old;
      double next = 0.0;
      if (rho > gamma) next = (rho - gamma) / col_sq[j];
      else if (rho < -gamma) next = (rho + gamma) / col_sq[j];
      if (next != old) {
        residual += d.col(j) * (old - next);
        g[j] = next;
      }
      max_change = std::max(max_change, std::abs(next - old));
    }
    if (max_change < tol) break;
  }
  return g;
}

}  // namespace gsc::test
