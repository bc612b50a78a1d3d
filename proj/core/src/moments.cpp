#include "rwz/moments.hpp"

#include <Eigen/LU>

namespace rwz {

VectorXd StageStack::phi_stack() const {
  VectorXd v(size());
  v[0] = 1.0;
  for (int j = 1; j <= horizon; ++j)
    v.segment(1 + (j - 1) * dim, dim) = phi[static_cast<std::size_t>(j - 1)];
  return v;
}

VectorXd StageStack::q_stack() const {
  VectorXd v(size());
  v[0] = 0.0;
  for (int j = 1; j <= horizon; ++j)
    v.segment(1 + (j - 1) * dim, dim) = q[static_cast<std::size_t>(j - 1)];
  return v;
}

StageStack stage_stack(const EpisodeRecord& episode, const FeatureMap& features,
                       std::span<const ConditionalMoments> moments,
                       const BlipContrast* contrast) {
  const int l = episode.horizon();
  if (static_cast<int>(moments.size()) != l)
    throw ConfigError("need one conditional moment per stage");
  if (contrast && static_cast<int>(contrast->gamma.size()) != l)
    throw ConfigError("contrast stage count mismatch");

  StageStack s;
  s.horizon = l;
  s.dim = features.dim;
  s.phi.reserve(static_cast<std::size_t>(l));
  s.reg.reserve(static_cast<std::size_t>(l));
  s.q.reserve(static_cast<std::size_t>(l));
  for (int j = 1; j <= l; ++j) {
    VectorXd phi = features.eval(j, episode.contexts, episode.treatments);
    if (phi.size() != features.dim) throw ConfigError("feature dim mismatch");
    s.q.push_back(moments[static_cast<std::size_t>(j - 1)].q);
    s.reg.push_back(contrast ? contrast->gamma[static_cast<std::size_t>(j - 1)]
                             : phi);
    s.phi.push_back(std::move(phi));
  }
  return s;
}

MomentEvaluation evaluate_moment(const StageStack& stack, double outcome,
                                 const ParameterVector& theta) {
  const int l = stack.horizon;
  const int d = stack.dim;
  if (theta.horizon != l || theta.dim != d)
    throw ConfigError("parameter shape does not match the stack");

  MomentEvaluation ev;
  ev.residuals.resize(static_cast<std::size_t>(l));
  // r_{i,j} accumulated from the last stage backwards.
  double resid = outcome;
  for (int j = l; j >= 1; --j) {
    resid -= theta.stage(j).dot(stack.reg[static_cast<std::size_t>(j - 1)]);
    ev.residuals[static_cast<std::size_t>(j - 1)] = resid;
  }

  ev.m = VectorXd(stack.size());
  ev.m[0] = ev.residuals[0] - theta.theta0();
  for (int j = 1; j <= l; ++j)
    ev.m.segment(1 + (j - 1) * d, d) =
        ev.residuals[static_cast<std::size_t>(j - 1)] *
        (stack.phi[static_cast<std::size_t>(j - 1)] -
         stack.q[static_cast<std::size_t>(j - 1)]);
  return ev;
}

MatrixXd moment_jacobian(const StageStack& stack) {
  const int l = stack.horizon;
  const int d = stack.dim;
  const int n = stack.size();
  MatrixXd jac = MatrixXd::Zero(n, n);
  jac(0, 0) = -1.0;
  for (int jp = 1; jp <= l; ++jp)
    jac.block(0, 1 + (jp - 1) * d, 1, d) =
        -stack.reg[static_cast<std::size_t>(jp - 1)].transpose();
  for (int j = 1; j <= l; ++j) {
    const VectorXd centered = stack.phi[static_cast<std::size_t>(j - 1)] -
                              stack.q[static_cast<std::size_t>(j - 1)];
    for (int jp = j; jp <= l; ++jp)
      jac.block(1 + (j - 1) * d, 1 + (jp - 1) * d, d, d) =
          -centered * stack.reg[static_cast<std::size_t>(jp - 1)].transpose();
  }
  return jac;
}

ParameterVector closed_form_theta(std::span<const StageStack> stacks,
                                  std::span<const double> outcomes) {
  if (stacks.empty() || stacks.size() != outcomes.size())
    throw ConfigError("closed form needs matching stacks and outcomes");
  const int n = stacks[0].size();
  MatrixXd jac_sum = MatrixXd::Zero(n, n);
  VectorXd rhs = VectorXd::Zero(n);
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    jac_sum += moment_jacobian(stacks[i]);
    rhs += outcomes[i] * (stacks[i].phi_stack() - stacks[i].q_stack());
  }
  Eigen::FullPivLU<MatrixXd> lu(jac_sum);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible())
    throw SingularSystemError("mean Jacobian is singular");
  const VectorXd theta = lu.solve(-rhs);
  return ParameterVector::from_flat(stacks[0].horizon, stacks[0].dim, theta);
}

}  // namespace rwz
