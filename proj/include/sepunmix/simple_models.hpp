#pragma once

#include <vector>

#include "sepunmix/model.hpp"

namespace sepunmix {

/// A(x) = A0 + sum_i x_i A_i. With no slopes the map is constant.
class AffineModel final : public SeparableModel {
 public:
  AffineModel(MatrixXd a0, std::vector<MatrixXd> slopes, FeasibleBox box);
  /// Constant map A(x) = a0 over the given box.
  static AffineModel constant(MatrixXd a0, FeasibleBox box);

  ModelDims dims() const override { return dims_; }
  const FeasibleBox& feasible() const override { return box_; }
  MatrixXd evaluate(const VectorXd& x) const override;
  MatrixXd partial(const VectorXd& x, int order, int i) const override;
  MatrixXd mixed_partial(const VectorXd& x, int i, int j) const override;

 private:
  MatrixXd a0_;
  std::vector<MatrixXd> slopes_;
  FeasibleBox box_;
  ModelDims dims_;
};

}  // namespace sepunmix
