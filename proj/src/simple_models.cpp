#include "sepunmix/simple_models.hpp"

#include "sepunmix/errors.hpp"

namespace sepunmix {

AffineModel::AffineModel(MatrixXd a0, std::vector<MatrixXd> slopes, FeasibleBox box)
    : a0_(std::move(a0)), slopes_(std::move(slopes)), box_(std::move(box)) {
  dims_ = ModelDims{static_cast<int>(a0_.rows()), box_.dim(), static_cast<int>(a0_.cols())};
  dims_.validate();
  if (!slopes_.empty() && static_cast<int>(slopes_.size()) != box_.dim())
    throw ConfigError("AffineModel: one slope matrix per nonlinear parameter");
  for (const auto& s : slopes_) {
    if (s.rows() != a0_.rows() || s.cols() != a0_.cols())
      throw ShapeError("AffineModel: slope shape differs from A0");
  }
}

AffineModel AffineModel::constant(MatrixXd a0, FeasibleBox box) {
  return AffineModel(std::move(a0), {}, std::move(box));
}

MatrixXd AffineModel::evaluate(const VectorXd& x) const {
  if (x.size() != dims_.n_nonlinear) throw ShapeError("AffineModel: x has wrong length");
  MatrixXd a = a0_;
  for (std::size_t i = 0; i < slopes_.size(); ++i) a += x(static_cast<Eigen::Index>(i)) * slopes_[i];
  return a;
}

MatrixXd AffineModel::partial(const VectorXd& x, int order, int i) const {
  if (x.size() != dims_.n_nonlinear || i < 0 || i >= dims_.n_nonlinear)
    throw ShapeError("AffineModel: bad partial index");
  if (order < 1 || order > 3) throw DomainError("partial: order must be in {1,2,3}");
  if (order == 1 && !slopes_.empty()) return slopes_[static_cast<std::size_t>(i)];
  return MatrixXd::Zero(dims_.n_samples, dims_.n_linear);
}

MatrixXd AffineModel::mixed_partial(const VectorXd& x, int i, int j) const {
  if (x.size() != dims_.n_nonlinear || i < 0 || j < 0 || i >= dims_.n_nonlinear ||
      j >= dims_.n_nonlinear)
    throw ShapeError("AffineModel: bad partial index");
  return MatrixXd::Zero(dims_.n_samples, dims_.n_linear);
}

}  // namespace sepunmix
