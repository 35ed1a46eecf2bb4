#pragma once

#include <random>
#include <vector>

#include "qswitch/mdp.hpp"
#include "qswitch/policies.hpp"

namespace qtest {

using qswitch::Matrix;
using qswitch::Mdp;
using qswitch::Vector;

inline Mdp random_mdp(std::size_t ns, std::size_t na, double gamma, std::mt19937_64& g, double reward_scale = 1.0) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::uniform_real_distribution<double> r(-reward_scale, reward_scale);
  std::vector<double> p(ns * na * ns);
  std::vector<double> rw(p.size());
  for (std::size_t row = 0; row < ns * na; ++row) {
    double total = 0.0;
    for (std::size_t j = 0; j < ns; ++j) total += p[row * ns + j] = u(g);
    for (std::size_t j = 0; j < ns; ++j) {
      p[row * ns + j] /= total;
      rw[row * ns + j] = r(g);
    }
  }
  return Mdp(ns, na, gamma, std::move(p), std::move(rw));
}

inline Vector random_vector(std::size_t n, std::mt19937_64& g, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = nd(g);
  return v;
}

inline Vector random_distribution(std::size_t n, std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = u(g);
  return v / v.sum();
}

inline qswitch::StochasticPolicy random_policy(const qswitch::Dims& dims, std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(static_cast<Eigen::Index>(dims.n_states), static_cast<Eigen::Index>(dims.n_actions));
  for (Eigen::Index s = 0; s < m.rows(); ++s) {
    for (Eigen::Index a = 0; a < m.cols(); ++a) m(s, a) = u(g) + 1e-3;
    m.row(s) /= m.row(s).sum();
  }
  return qswitch::StochasticPolicy(m);
}

}  // namespace qtest
