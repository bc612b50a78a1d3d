#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "rwz/error.hpp"

namespace rwz {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Finite treatment set {0, ..., count-1} mapped to bounded real values.
// Arm 0 is the control arm and must map to 0 so that feature maps can satisfy
// the zero-treatment annihilation constraint.
struct TreatmentSpace {
  int count = 2;
  std::vector<double> values = {0.0, 1.0};

  static TreatmentSpace arms(int k) {
    TreatmentSpace t;
    t.count = k;
    t.values.resize(k);
    for (int i = 0; i < k; ++i) t.values[i] = static_cast<double>(i);
    return t;
  }

  double value(int arm) const {
    if (arm < 0 || arm >= count) throw ConfigError("treatment arm out of range");
    return values[static_cast<std::size_t>(arm)];
  }

  void validate() const {
    if (count < 2) throw ConfigError("treatment space needs at least two arms");
    if (static_cast<int>(values.size()) != count)
      throw ConfigError("treatment value list does not match arm count");
    if (values[0] != 0.0)
      throw ConfigError("treatment arm 0 must map to value 0");
  }
};

// The estimand theta = (theta_0, theta_1^T, ..., theta_l^T), stored flat with
// blocked accessors.  Stage blocks are 1-indexed to match the stage count.
struct ParameterVector {
  int horizon = 0;
  int dim = 0;
  VectorXd flat;

  ParameterVector() = default;
  ParameterVector(int l, int d) : horizon(l), dim(d), flat(VectorXd::Zero(1 + d * l)) {}

  static ParameterVector from_flat(int l, int d, const VectorXd& v) {
    if (v.size() != 1 + d * l) throw ConfigError("flat parameter size mismatch");
    ParameterVector p(l, d);
    p.flat = v;
    return p;
  }

  int size() const { return 1 + dim * horizon; }
  double theta0() const { return flat[0]; }
  double& theta0() { return flat[0]; }

  Eigen::VectorBlock<const VectorXd> stage(int j) const {
    check_stage(j);
    return flat.segment(1 + (j - 1) * dim, dim);
  }
  Eigen::VectorBlock<VectorXd> stage(int j) {
    check_stage(j);
    return flat.segment(1 + (j - 1) * dim, dim);
  }

 private:
  void check_stage(int j) const {
    if (j < 1 || j > horizon) throw ConfigError("parameter stage out of range");
  }
};

// One episode as recorded by the experimenter: contexts X_{1:l}, treatments
// T_{1:l}, the final outcome, and the id of the policy snapshot in force.
struct EpisodeRecord {
  int index = 0;
  std::vector<VectorXd> contexts;
  std::vector<int> treatments;
  double outcome = 0.0;
  int policy_id = 0;

  int horizon() const { return static_cast<int>(contexts.size()); }
};

// Exogenous draws of one simulated episode, kept aside for model identities
// that need the realized noises.  eta[j] is the shock entering X_{j+2}.
struct EpisodeNoise {
  std::vector<VectorXd> eta;  // size l-1: shocks for X_2..X_l
  double eps = 0.0;
};

}  // namespace rwz
