#include "sepunmix/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>

#include "sepunmix/errors.hpp"

namespace sepunmix {

namespace {

void check_eval_args(std::span<const double> t, int max_order, const Eigen::Ref<MatrixXd>& out) {
  if (max_order < 0 || max_order > 3) throw DomainError("kernel: derivative order must be in {0..3}");
  if (out.rows() != static_cast<Eigen::Index>(t.size()) || out.cols() < max_order + 1)
    throw ShapeError("kernel: output block has wrong shape");
}

// g = exp(-c a), a = x^-u, c = |t|^u. With h = -c a the x-derivatives are
// h1 = c u a / x, h2 = -c u (u+1) a / x^2, h3 = c u (u+1)(u+2) a / x^3 and
// g' = h1 g, g'' = (h2 + h1^2) g, g''' = (h3 + 3 h1 h2 + h1^3) g.
inline void fill_power_family(double c, double a, double u, double x, int max_order,
                              Eigen::Ref<MatrixXd>& out, Eigen::Index n) {
  const double g = std::exp(-c * a);
  out(n, 0) = g;
  if (max_order == 0) return;
  if (c == 0.0) {
    for (int k = 1; k <= max_order; ++k) out(n, k) = 0.0;
    return;
  }
  const double ca = c * a;
  const double h1 = ca * u / x;
  out(n, 1) = h1 * g;
  if (max_order == 1) return;
  const double h2 = -ca * u * (u + 1.0) / (x * x);
  out(n, 2) = (h2 + h1 * h1) * g;
  if (max_order == 2) return;
  const double h3 = ca * u * (u + 1.0) * (u + 2.0) / (x * x * x);
  out(n, 3) = (h3 + 3.0 * h1 * h2 + h1 * h1 * h1) * g;
}

constexpr std::array<double, 8> kGaussNodes = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGaussWeights = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

void trapezoid_grid(const L2Window& w, std::vector<double>& t, std::vector<double>& weights) {
  if (w.points < 3 || !(w.window > 0.0)) throw ConfigError("L2Window: need >= 3 points and T > 0");
  t = linspace(-0.5 * w.window, 0.5 * w.window, w.points);
  const double h = w.window / (w.points - 1);
  weights.assign(t.size(), h);
  weights.front() = weights.back() = 0.5 * h;
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol) {
  if (a == b) return 0.0;
  // Seed with a composite pass so the tolerance can be made relative.
  constexpr int kPanels = 8;
  double rough = 0.0;
  const double h = (b - a) / kPanels;
  std::vector<double> fx(2 * kPanels + 1);
  for (int i = 0; i <= 2 * kPanels; ++i) fx[static_cast<std::size_t>(i)] = f(a + 0.5 * h * i);
  for (int i = 0; i < kPanels; ++i)
    rough += h / 6.0 * (fx[2 * i] + 4.0 * fx[2 * i + 1] + fx[2 * i + 2]);
  const double tol = rel_tol * std::max(std::abs(rough), 1e-300) / kPanels;
  double total = 0.0;
  for (int i = 0; i < kPanels; ++i) {
    const double pa = a + h * i;
    const double whole = h / 6.0 * (fx[2 * i] + 4.0 * fx[2 * i + 1] + fx[2 * i + 2]);
    total += adaptive_simpson(f, pa, pa + h, fx[2 * i], fx[2 * i + 1], fx[2 * i + 2], whole, tol, 40);
  }
  return total;
}

}  // namespace

MatrixXd Kernel::sample(double x, std::span<const double> t, int max_order) const {
  MatrixXd out(static_cast<Eigen::Index>(t.size()), max_order + 1);
  evaluate(x, t, max_order, out);
  return out;
}

double Kernel::value(double x, double t) const { return dx(x, t, 0); }

double Kernel::dx(double x, double t, int order) const {
  MatrixXd out(1, order + 1);
  evaluate(x, std::span<const double>(&t, 1), order, out);
  return out(0, order);
}

void GaussianKernel::evaluate(double x, std::span<const double> t, int max_order,
                              Eigen::Ref<MatrixXd> out) const {
  check_eval_args(t, max_order, out);
  const double a = 1.0 / (x * x);
  for (std::size_t n = 0; n < t.size(); ++n)
    fill_power_family(t[n] * t[n], a, 2.0, x, max_order, out, static_cast<Eigen::Index>(n));
}

ULaplaceKernel::ULaplaceKernel(double u, Interval domain) : u_(u), domain_(domain) {
  if (!(u > 0.0)) throw ConfigError("ULaplaceKernel: u must be positive");
}

std::string ULaplaceKernel::name() const {
  std::ostringstream os;
  os << "ulaplace(u=" << u_ << ")";
  return os.str();
}

void ULaplaceKernel::evaluate(double x, std::span<const double> t, int max_order,
                              Eigen::Ref<MatrixXd> out) const {
  check_eval_args(t, max_order, out);
  const double a = std::pow(x, -u_);
  for (std::size_t n = 0; n < t.size(); ++n) {
    const double at = std::abs(t[n]);
    const double c = at == 0.0 ? 0.0 : std::pow(at, u_);
    fill_power_family(c, a, u_, x, max_order, out, static_cast<Eigen::Index>(n));
  }
}

double kernel_speed(const Kernel& kernel, double x, const L2Window& w) {
  std::vector<double> t, weights;
  trapezoid_grid(w, t, weights);
  const MatrixXd g = kernel.sample(x, t, 1);
  double sum = 0.0;
  for (std::size_t n = 0; n < t.size(); ++n) {
    const double v = g(static_cast<Eigen::Index>(n), 1);
    sum += weights[n] * v * v;
  }
  return std::sqrt(sum);
}

double arc_length(const Kernel& kernel, double x, const L2Window& w) {
  const Interval dom = kernel.domain();
  if (!dom.contains(x)) throw DomainError("arc_length: x outside the kernel domain");
  return integrate([&](double v) { return kernel_speed(kernel, v, w); }, dom.lo, x, 1e-8);
}

double inverse_arc_length(const Kernel& kernel, double s, const L2Window& w) {
  const Interval dom = kernel.domain();
  const double total = arc_length(kernel, dom.hi, w);
  if (!(s >= 0.0 && s <= total)) throw DomainError("inverse_arc_length: s out of range");
  auto speed = [&](double v) { return kernel_speed(kernel, v, w); };
  double lo = dom.lo, hi = dom.hi;
  double s_lo = 0.0;
  while (hi - lo > 1e-10 * std::max(1.0, std::abs(dom.hi))) {
    const double mid = 0.5 * (lo + hi);
    const double s_mid = s_lo + integrate(speed, lo, mid, 1e-10);
    if (s_mid < s) {
      lo = mid;
      s_lo = s_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

UnitSpeedKernel::UnitSpeedKernel(std::shared_ptr<const Kernel> base, L2Window window,
                                 int table_panels)
    : base_(std::move(base)), window_(window) {
  if (!base_) throw ConfigError("UnitSpeedKernel: null base kernel");
  if (table_panels < 2) throw ConfigError("UnitSpeedKernel: need at least two table panels");
  const Interval dom = base_->domain();
  if (!(dom.lo > 0.0 && dom.lo < dom.hi))
    throw ConfigError("UnitSpeedKernel: base domain must be a positive interval");
  trapezoid_grid(window_, quad_t_, quad_w_);

  nodes_ = linspace(dom.lo, dom.hi, table_panels + 1);
  arc_table_.assign(nodes_.size(), 0.0);
  node_speed_.assign(nodes_.size(), 0.0);
  const auto panels = static_cast<std::size_t>(table_panels);
  speed_poly_.assign(panels * kPolyTerms, 0.0);
  // Monomial interpolant of the speed through the panel's Gauss nodes; it
  // integrates to the same value as the Gauss rule, so the table stays exact.
  Eigen::Matrix<double, 8, 8> vander;
  for (int k = 0; k < 8; ++k)
    for (int m = 0; m < 8; ++m) vander(k, m) = std::pow(kGaussNodes[static_cast<std::size_t>(k)], m);
  const Eigen::Matrix<double, 8, 8> vinv = vander.inverse();
  for (std::size_t j = 0; j < panels; ++j) {
    const double half = 0.5 * (nodes_[j + 1] - nodes_[j]);
    const double mid = 0.5 * (nodes_[j + 1] + nodes_[j]);
    Eigen::Matrix<double, 8, 1> vals;
    double sum = 0.0;
    for (std::size_t k = 0; k < kGaussNodes.size(); ++k) {
      vals(static_cast<Eigen::Index>(k)) = speed(mid + half * kGaussNodes[k], 1).n;
      sum += kGaussWeights[k] * vals(static_cast<Eigen::Index>(k));
    }
    if (!(vals.minCoeff() > 0.0))
      throw InvariantError("UnitSpeedKernel: kernel speed vanishes, arc table is not monotone");
    const Eigen::Matrix<double, 8, 1> c = vinv * vals;
    for (int m = 0; m < 8; ++m) speed_poly_[j * kPolyTerms + static_cast<std::size_t>(m)] = c(m);
    arc_table_[j + 1] = arc_table_[j] + half * sum;
  }
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    node_speed_[j] = j < panels ? poly_speed(j, -1.0).n : poly_speed(panels - 1, 1.0).n;
    if (!(node_speed_[j] > 0.0))
      throw InvariantError("UnitSpeedKernel: kernel speed vanishes, arc table is not monotone");
  }
  for (std::size_t j = 1; j < arc_table_.size(); ++j) {
    if (!(arc_table_[j] > arc_table_[j - 1]))
      throw InvariantError("UnitSpeedKernel: arc table is not strictly increasing");
  }
}

UnitSpeedKernel::Speed UnitSpeedKernel::speed(double x, int order) const {
  const int kmax = order == 1 ? 1 : 3;
  MatrixXd g(static_cast<Eigen::Index>(quad_t_.size()), kmax + 1);
  base_->evaluate(x, quad_t_, kmax, g);
  double s11 = 0.0, s12 = 0.0, s22 = 0.0, s13 = 0.0;
  for (std::size_t n = 0; n < quad_t_.size(); ++n) {
    const auto i = static_cast<Eigen::Index>(n);
    const double w = quad_w_[n];
    s11 += w * g(i, 1) * g(i, 1);
    if (kmax == 3) {
      s12 += w * g(i, 1) * g(i, 2);
      s22 += w * g(i, 2) * g(i, 2);
      s13 += w * g(i, 1) * g(i, 3);
    }
  }
  Speed out;
  out.n = std::sqrt(s11);
  if (kmax == 3 && out.n > 0.0) {
    out.dn = s12 / out.n;
    out.d2n = (s22 + s13 - out.dn * out.dn) / out.n;
  }
  return out;
}

std::size_t UnitSpeedKernel::panel_of(double x) const {
  const double lo = nodes_.front();
  const double step = (nodes_.back() - lo) / static_cast<double>(nodes_.size() - 1);
  const auto last = static_cast<std::ptrdiff_t>(nodes_.size()) - 2;
  return static_cast<std::size_t>(
      std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor((x - lo) / step)), 0, last));
}

UnitSpeedKernel::Speed UnitSpeedKernel::poly_speed(std::size_t j, double tau) const {
  const double* c = &speed_poly_[j * kPolyTerms];
  const double half = 0.5 * (nodes_[j + 1] - nodes_[j]);
  double p = 0.0, dp = 0.0, d2p = 0.0;
  for (int m = static_cast<int>(kPolyTerms) - 1; m >= 0; --m) {
    d2p = d2p * tau + 2.0 * dp;
    dp = dp * tau + p;
    p = p * tau + c[m];
  }
  return {p, dp / half, d2p / (half * half)};
}

double UnitSpeedKernel::arc_length_at(double x) const {
  const std::size_t j = panel_of(x);
  const double half = 0.5 * (nodes_[j + 1] - nodes_[j]);
  const double tau = (x - nodes_[j]) / half - 1.0;
  const double* c = &speed_poly_[j * kPolyTerms];
  // integral from -1 to tau of sum c_m sigma^m
  double sum = 0.0;
  double tp = tau, mp = -1.0;
  for (std::size_t m = 0; m < kPolyTerms; ++m) {
    sum += c[m] * (tp - mp) / static_cast<double>(m + 1);
    tp *= tau;
    mp = -mp;
  }
  return arc_table_[j] + half * sum;
}

double UnitSpeedKernel::base_parameter(double s) const { return frame(s).x; }

UnitSpeedKernel::Frame UnitSpeedKernel::frame(double s) const {
  const std::size_t last = arc_table_.size() - 1;
  double x;
  if (s <= arc_table_.front()) {
    x = nodes_.front() + (s - arc_table_.front()) / node_speed_.front();
  } else if (s >= arc_table_[last]) {
    x = nodes_[last] + (s - arc_table_[last]) / node_speed_[last];
  } else {
    const auto it = std::upper_bound(arc_table_.begin(), arc_table_.end(), s);
    const auto j = static_cast<std::size_t>(it - arc_table_.begin()) - 1;
    // Cubic Hermite interpolation of x(s) using dx/ds = 1/n at the nodes.
    const double s0 = arc_table_[j], s1 = arc_table_[j + 1];
    const double hs = s1 - s0;
    const double tau = (s - s0) / hs;
    const double h00 = (1 + 2 * tau) * (1 - tau) * (1 - tau);
    const double h10 = tau * (1 - tau) * (1 - tau);
    const double h01 = tau * tau * (3 - 2 * tau);
    const double h11 = tau * tau * (tau - 1);
    x = h00 * nodes_[j] + h10 * hs / node_speed_[j] + h01 * nodes_[j + 1] +
        h11 * hs / node_speed_[j + 1];
  }
  const double scale = nodes_[last] - nodes_.front();
  bool converged = false;
  for (int it = 0; it < 50; ++it) {
    if (!(x > 0.0)) throw DomainError("UnitSpeedKernel: shape parameter left the positive axis");
    const std::size_t j = panel_of(x);
    const double half = 0.5 * (nodes_[j + 1] - nodes_[j]);
    const double step = (arc_length_at(x) - s) / poly_speed(j, (x - nodes_[j]) / half - 1.0).n;
    x -= step;
    if (std::abs(step) <= 1e-14 * scale) {
      converged = true;
      break;
    }
  }
  if (!converged || !(x > 0.0)) throw DomainError("UnitSpeedKernel: inverse arc length did not converge");

  Frame f;
  f.x = x;
  const std::size_t j = panel_of(x);
  const double half = 0.5 * (nodes_[j + 1] - nodes_[j]);
  f.speed = poly_speed(j, (x - nodes_[j]) / half - 1.0);
  return f;
}

void UnitSpeedKernel::evaluate(double s, std::span<const double> t, int max_order,
                               Eigen::Ref<MatrixXd> out) const {
  check_eval_args(t, max_order, out);
  const Frame f = frame(s);
  base_->evaluate(f.x, t, max_order, out);
  if (max_order == 0) return;
  const double n = f.speed.n;
  const double x1 = 1.0 / n;
  const double x2 = -f.speed.dn / (n * n * n);
  const double x3 = (3.0 * f.speed.dn * f.speed.dn - n * f.speed.d2n) / (n * n * n * n * n);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double g1 = out(i, 1);
    const double g2 = max_order >= 2 ? out(i, 2) : 0.0;
    const double g3 = max_order >= 3 ? out(i, 3) : 0.0;
    out(i, 1) = g1 * x1;
    if (max_order >= 2) out(i, 2) = g2 * x1 * x1 + g1 * x2;
    if (max_order >= 3) out(i, 3) = g3 * x1 * x1 * x1 + 3.0 * g2 * x1 * x2 + g1 * x3;
  }
}

std::shared_ptr<const UnitSpeedKernel> unit_speed_wrap(std::shared_ptr<const Kernel> kernel,
                                                       const L2Window& w) {
  return std::make_shared<const UnitSpeedKernel>(std::move(kernel), w);
}

std::shared_ptr<const Kernel> make_kernel(const KernelSpec& spec) {
  if (!(spec.x_min > 0.0 && spec.x_min < spec.x_max))
    throw ConfigError("kernel: need 0 < x_min < x_max");
  const Interval dom{spec.x_min, spec.x_max};
  std::shared_ptr<const Kernel> base;
  if (spec.family == "gaussian") {
    base = std::make_shared<const GaussianKernel>(dom);
  } else if (spec.family == "ulaplace") {
    base = std::make_shared<const ULaplaceKernel>(spec.u, dom);
  } else {
    throw ConfigError("kernel: unknown family '" + spec.family + "'");
  }
  if (!spec.unit_speed) return base;
  return unit_speed_wrap(base, L2Window{spec.window, 2049});
}

}  // namespace sepunmix
