#include "dkpca/kernels.hpp"

#include <cmath>
#include <string>

namespace dkpca {

KernelSpec KernelSpec::rbf(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InputError("rbf kernel width must be positive and finite, got " + std::to_string(sigma));
  }
  return KernelSpec(KernelKind::Rbf, sigma);
}

const char* to_string(KernelKind kind) {
  return kind == KernelKind::Linear ? "linear" : "rbf";
}

FeatureBlock::FeatureBlock(int agent_id, Eigen::MatrixXd values, bool centered)
    : agent_id_(agent_id), values_(std::move(values)), centered_(centered) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw InputError("feature block must be non-empty, got " + std::to_string(values_.rows()) +
                     "x" + std::to_string(values_.cols()));
  }
  if (!values_.allFinite()) {
    throw InputError("feature block has non-finite entries");
  }
  if (centered_) {
    const double t = static_cast<double>(values_.cols());
    for (Eigen::Index r = 0; r < values_.rows(); ++r) {
      const double scale = std::max(1.0, values_.row(r).cwiseAbs().maxCoeff());
      if (std::abs(values_.row(r).sum()) > 1e-8 * t * scale) {
        throw InputError("block marked centered but feature row " + std::to_string(r) +
                         " has non-zero mean");
      }
    }
  }
}

GramMatrix gram(const FeatureBlock& block, const KernelSpec& spec) {
  const Eigen::MatrixXd& x = block.values();
  const Eigen::Index t = x.cols();
  Eigen::MatrixXd g(t, t);

  if (spec.kind() == KernelKind::Linear) {
    Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(t, t);
    lower.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    g = lower.selfadjointView<Eigen::Lower>();
  } else {
    const double scale = -1.0 / (2.0 * spec.sigma() * spec.sigma());
    for (Eigen::Index p = 0; p < t; ++p) {
      g(p, p) = 1.0;
      for (Eigen::Index q = p + 1; q < t; ++q) {
        const double dist_sq = std::max(0.0, (x.col(p) - x.col(q)).squaredNorm());
        const double v = std::exp(scale * dist_sq);
        g(p, q) = v;
        g(q, p) = v;
      }
    }
  }
  return GramMatrix(std::move(g));
}

GramMatrix hadamard(const GramMatrix& a, const GramMatrix& b) {
  if (a.order() != b.order()) {
    throw InputError("hadamard product needs equal orders, got " + std::to_string(a.order()) +
                     " vs " + std::to_string(b.order()));
  }
  return GramMatrix(a.entries().cwiseProduct(b.entries()));
}

Eigen::MatrixXd cross_kernel(const FeatureBlock& block, const Eigen::MatrixXd& query,
                             const KernelSpec& spec) {
  const Eigen::MatrixXd& x = block.values();
  if (query.rows() != x.rows()) {
    throw InputError("query feature count " + std::to_string(query.rows()) +
                     " does not match block's " + std::to_string(x.rows()));
  }
  if (!query.allFinite()) {
    throw InputError("query has non-finite entries");
  }
  if (spec.kind() == KernelKind::Linear) {
    return x.transpose() * query;
  }
  const double scale = -1.0 / (2.0 * spec.sigma() * spec.sigma());
  Eigen::MatrixXd out(x.cols(), query.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    for (Eigen::Index s = 0; s < query.cols(); ++s) {
      const double dist_sq = std::max(0.0, (x.col(i) - query.col(s)).squaredNorm());
      out(i, s) = std::exp(scale * dist_sq);
    }
  }
  return out;
}

}  // namespace dkpca
