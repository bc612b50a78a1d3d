#include "rwz/weights.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace rwz {

std::string weight_scheme_name(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::Uniform: return "uniform";
    case WeightScheme::Consistent: return "consistent";
    case WeightScheme::Oracle: return "oracle";
    case WeightScheme::Feasible: return "feasible";
  }
  throw ConfigError("unknown weight scheme");
}

WeightScheme weight_scheme_from_name(const std::string& name) {
  if (name == "uniform") return WeightScheme::Uniform;
  if (name == "consistent") return WeightScheme::Consistent;
  if (name == "oracle") return WeightScheme::Oracle;
  if (name == "feasible") return WeightScheme::Feasible;
  throw ConfigError("unknown weight scheme: " + name);
}

double WeightConfig::m() const { return std::sqrt(m2_cap); }

void WeightConfig::validate() const {
  if (!(sigma2_floor > 0.0)) throw ConfigError("sigma2 floor must be positive");
  if (!(m2_cap >= sigma2_floor)) throw ConfigError("m2 cap must be >= sigma2 floor");
  if (!(eig_tol > 0.0)) throw ConfigError("eigenvalue tolerance must be positive");
}

VectorXd WeightMatrices::apply(const VectorXd& stacked) const {
  const int l = horizon();
  const int d = l > 0 ? static_cast<int>(blocks[0].rows()) : 0;
  if (stacked.size() != 1 + d * l) throw ConfigError("stacked vector size mismatch");
  VectorXd out(stacked.size());
  out[0] = h0 * stacked[0];
  for (int j = 1; j <= l; ++j)
    out.segment(1 + (j - 1) * d, d) =
        blocks[static_cast<std::size_t>(j - 1)] * stacked.segment(1 + (j - 1) * d, d);
  return out;
}

MatrixXd WeightMatrices::apply_rows(const MatrixXd& mat) const {
  const int l = horizon();
  const int d = l > 0 ? static_cast<int>(blocks[0].rows()) : 0;
  if (mat.rows() != 1 + d * l) throw ConfigError("matrix row count mismatch");
  MatrixXd out(mat.rows(), mat.cols());
  out.row(0) = h0 * mat.row(0);
  for (int j = 1; j <= l; ++j)
    out.middleRows(1 + (j - 1) * d, d) =
        blocks[static_cast<std::size_t>(j - 1)] * mat.middleRows(1 + (j - 1) * d, d);
  return out;
}

MatrixXd inv_sqrt(const MatrixXd& sym, double tol) {
  if (sym.rows() != sym.cols()) throw ConfigError("inv_sqrt needs a square matrix");
  const double scale = std::max(1.0, sym.cwiseAbs().maxCoeff());
  if ((sym - sym.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw ConfigError("inv_sqrt needs a symmetric matrix");
  if (!(tol > 0.0)) throw ConfigError("inv_sqrt tolerance must be positive");

  if (sym.rows() == 1) {
    const double lambda = sym(0, 0);
    if (lambda <= tol)
      throw NearSingularError("conditional covariance is numerically singular",
                              lambda);
    MatrixXd out(1, 1);
    out(0, 0) = 1.0 / std::sqrt(lambda);
    return out;
  }

  Eigen::SelfAdjointEigenSolver<MatrixXd> es;
  if (sym.rows() <= 3)
    es.computeDirect(sym);
  else
    es.compute(sym);
  const VectorXd lambda = es.eigenvalues();
  if (lambda.minCoeff() <= tol)
    throw NearSingularError("conditional covariance is numerically singular",
                            lambda.minCoeff());
  const VectorXd inv_root = lambda.cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv_root.asDiagonal() * es.eigenvectors().transpose();
}

WeightMatrices uniform_weights(int horizon, int dim) {
  WeightMatrices w;
  w.scheme = WeightScheme::Uniform;
  w.h0 = 1.0;
  w.blocks.assign(static_cast<std::size_t>(horizon), MatrixXd::Identity(dim, dim));
  return w;
}

WeightMatrices consistent_weights(std::span<const ConditionalMoments> moments,
                                  const WeightConfig& config) {
  config.validate();
  WeightMatrices w;
  w.scheme = WeightScheme::Consistent;
  w.h0 = 1.0;
  w.blocks.reserve(moments.size());
  for (const ConditionalMoments& cm : moments)
    w.blocks.push_back(inv_sqrt(cm.cov, config.eig_tol));
  return w;
}

WeightMatrices oracle_weights(std::span<const ConditionalMoments> moments,
                              std::span<const double> f_true,
                              const WeightConfig& config) {
  config.validate();
  if (f_true.size() != moments.size() + 1)
    throw ConfigError("oracle weights need f for stages 0..l");
  for (double f : f_true)
    if (f < config.sigma2_floor)
      throw ConfigError("oracle f below the declared floor; misconfigured bounds");
  WeightMatrices w;
  w.scheme = WeightScheme::Oracle;
  w.h0 = 1.0 / std::sqrt(f_true[0]);
  w.blocks.reserve(moments.size());
  for (std::size_t j = 0; j < moments.size(); ++j)
    w.blocks.push_back(inv_sqrt(moments[j].cov, config.eig_tol) /
                       std::sqrt(f_true[j + 1]));
  return w;
}

WeightMatrices feasible_weights(std::span<const ConditionalMoments> moments,
                                std::span<const double> f_hat_raw,
                                const WeightConfig& config) {
  config.validate();
  if (f_hat_raw.size() != moments.size() + 1)
    throw ConfigError("feasible weights need f-hat for stages 0..l");
  auto clip = [&](double f) {
    return std::min(std::max(f, config.sigma2_floor), config.m2_cap);
  };
  WeightMatrices w;
  w.scheme = WeightScheme::Feasible;
  w.h0 = 1.0 / std::sqrt(clip(f_hat_raw[0]));
  w.blocks.reserve(moments.size());
  for (std::size_t j = 0; j < moments.size(); ++j)
    w.blocks.push_back(inv_sqrt(moments[j].cov, config.eig_tol) /
                       std::sqrt(clip(f_hat_raw[j + 1])));
  return w;
}

}  // namespace rwz
