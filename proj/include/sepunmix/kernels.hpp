#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sepunmix/linalg.hpp"

namespace sepunmix {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Shape-parameterized PSF g(x, t) with x-derivatives up to third order.
///
/// Kernels are immutable and safe to evaluate concurrently.
class Kernel {
 public:
  virtual ~Kernel() = default;

  /// Shape-parameter interval X.
  virtual Interval domain() const = 0;
  virtual std::string name() const = 0;

  /// Fills out(n, k) = d^k g / dx^k (x, t[n]) for k = 0..max_order.
  /// out must have t.size() rows and at least max_order + 1 columns.
  virtual void evaluate(double x, std::span<const double> t, int max_order,
                        Eigen::Ref<MatrixXd> out) const = 0;

  /// Same as evaluate() but allocates the result.
  MatrixXd sample(double x, std::span<const double> t, int max_order) const;
  double value(double x, double t) const;
  double dx(double x, double t, int order) const;
};

/// g(x, t) = exp(-t^2 / x^2).
class GaussianKernel final : public Kernel {
 public:
  explicit GaussianKernel(Interval domain) : domain_(domain) {}
  Interval domain() const override { return domain_; }
  std::string name() const override { return "gaussian"; }
  void evaluate(double x, std::span<const double> t, int max_order,
                Eigen::Ref<MatrixXd> out) const override;

 private:
  Interval domain_;
};

/// g_u(x, t) = exp(-|t|^u / x^u). At t = 0 every x-derivative is zero.
class ULaplaceKernel final : public Kernel {
 public:
  ULaplaceKernel(double u, Interval domain);
  Interval domain() const override { return domain_; }
  std::string name() const override;
  double u() const { return u_; }
  void evaluate(double x, std::span<const double> t, int max_order,
                Eigen::Ref<MatrixXd> out) const override;

 private:
  double u_;
  Interval domain_;
};

/// Uniform trapezoid grid on [-T/2, T/2] that defines the L2(window) norm.
struct L2Window {
  double window = 1.0;
  int points = 2049;
};

/// ||d/dx g(x, .)||_{L2(window)}.
double kernel_speed(const Kernel& kernel, double x, const L2Window& w = {});

/// s(x) = integral from x_min to x of the kernel speed, adaptive Simpson to
/// a relative tolerance of 1e-8. Throws DomainError outside the domain.
double arc_length(const Kernel& kernel, double x, const L2Window& w = {});

/// Inverse of arc_length() by monotone bisection to 1e-10.
/// Throws DomainError unless 0 <= s <= s(x_max).
double inverse_arc_length(const Kernel& kernel, double s, const L2Window& w = {});

/// k(s, t) = g(x(s), t), where x(s) inverts the arc length of the base
/// kernel, so that ||d/ds k(s, .)||_{L2(window)} = 1. The shape domain is
/// [0, L] with L the total arc length of the base domain.
///
/// The arc length is tabulated on uniform panels of the base domain;
/// within a panel the speed is the degree-7 interpolant through its
/// Gauss-Legendre nodes, so s(x) is a piecewise polynomial and x(s) is its
/// exact inverse (Hermite guess, then Newton). Derivatives in s follow from
/// the inverse-function rule with the interpolant's derivatives.
class UnitSpeedKernel final : public Kernel {
 public:
  UnitSpeedKernel(std::shared_ptr<const Kernel> base, L2Window window = {}, int table_panels = 256);

  Interval domain() const override { return {0.0, total_length()}; }
  std::string name() const override { return "unit_speed(" + base_->name() + ")"; }
  void evaluate(double s, std::span<const double> t, int max_order,
                Eigen::Ref<MatrixXd> out) const override;

  const Kernel& base() const { return *base_; }
  const L2Window& window() const { return window_; }
  double total_length() const { return arc_table_.back(); }
  /// Arc length at the table nodes, x_j = x_min + j (x_max - x_min) / panels.
  const std::vector<double>& arc_table() const { return arc_table_; }
  /// s(x) on the base domain from the table.
  double arc_length_at(double x) const;
  /// x(s); s may lie slightly outside [0, L] as long as x stays positive.
  double base_parameter(double s) const;

 private:
  struct Speed {
    double n = 0.0;   // ||d_x g||
    double dn = 0.0;  // d n / dx
    double d2n = 0.0;
  };
  struct Frame {
    double x = 0.0;
    Speed speed;
  };

  static constexpr std::size_t kPolyTerms = 8;

  Speed speed(double x, int order) const;
  std::size_t panel_of(double x) const;
  Speed poly_speed(std::size_t panel, double tau) const;
  Frame frame(double s) const;

  std::shared_ptr<const Kernel> base_;
  L2Window window_;
  std::vector<double> quad_t_;
  std::vector<double> quad_w_;
  std::vector<double> nodes_;
  std::vector<double> arc_table_;
  std::vector<double> node_speed_;
  std::vector<double> speed_poly_;
};

std::shared_ptr<const UnitSpeedKernel> unit_speed_wrap(std::shared_ptr<const Kernel> kernel,
                                                       const L2Window& w = {});

/// Kernel family descriptor used by configuration files.
struct KernelSpec {
  std::string family = "gaussian";  // "gaussian" or "ulaplace"
  double u = 2.0;
  bool unit_speed = true;
  double x_min = 0.05;
  double x_max = 0.1;
  double window = 1.0;
};

std::shared_ptr<const Kernel> make_kernel(const KernelSpec& spec);

}  // namespace sepunmix
