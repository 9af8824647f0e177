// Runge-Kutta-Fehlberg 4(5) with local extrapolation (the fifth-order
// solution is propagated) and cubic Hermite dense output.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace visma {

class StepSizeUnderflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Rkf45Options {
  double rtol = 1e-7;
  double atol = 1e-9;
  double h_init = 1e-4;
  double h_max = 0.05;
  double h_min = 1e-12;
};

// Rhs: void(const Eigen::VectorXd& y, Eigen::VectorXd& dydt). Autonomous.
template <typename Rhs>
class Rkf45 {
 public:
  Rkf45(Rhs& rhs, Rkf45Options options) : rhs_(&rhs), opt_(options), h_(options.h_init) {}

  void reset(double t, const Eigen::VectorXd& y) {
    t_ = t;
    y_ = y;
    (*rhs_)(y_, f_);
    t_prev_ = t_;
    y_prev_ = y_;
    f_prev_ = f_;
    const auto n = y.size();
    for (auto* k : {&k2_, &k3_, &k4_, &k5_, &k6_, &tmp_, &y_new_, &err_}) k->resize(n);
  }

  // Takes one accepted step, never past t_limit.
  void step(double t_limit) {
    if (!(t_limit > t_)) throw std::invalid_argument("step limit must lie ahead of the current time");
    for (;;) {
      const double h = std::min(h_, t_limit - t_);
      if (h < opt_.h_min * std::max(1.0, std::abs(t_))) throw StepSizeUnderflow("RKF45 step size underflow");
      // A trial state outside the model's domain is treated like a failed
      // error test; a genuine breakdown ends in StepSizeUnderflow.
      try {
        attempt(h);
      } catch (const std::runtime_error&) {
        h_ = 0.25 * h;
        if (h_ < opt_.h_min * std::max(1.0, std::abs(t_))) throw;
        continue;
      }
      double err = 0.0;
      for (Eigen::Index i = 0; i < y_.size(); ++i) {
        const double sc = opt_.atol + opt_.rtol * std::max(std::abs(y_(i)), std::abs(y_new_(i)));
        err = std::max(err, std::abs(err_(i)) / sc);
      }
      if (!std::isfinite(err)) {
        h_ = 0.25 * h;
        continue;
      }
      const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      if (err <= 1.0) {
        t_prev_ = t_;
        y_prev_.swap(y_);
        f_prev_.swap(f_);
        t_ = t_ + h;
        if (t_limit - t_ <= 1e-12 * std::max(1.0, std::abs(t_limit))) t_ = t_limit;
        y_ = y_new_;
        (*rhs_)(y_, f_);
        // A step clipped by t_limit says nothing about the admissible size.
        if (h == h_ || factor < 1.0) h_ = std::min(h * factor, opt_.h_max);
        return;
      }
      h_ = h * std::max(factor, 0.1);
    }
  }

  // Hermite interpolation on the last accepted step.
  void dense(double t, Eigen::VectorXd& out) const {
    const double h = t_ - t_prev_;
    if (h <= 0.0) {
      out = y_;
      return;
    }
    const double s = (t - t_prev_) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    out = h00 * y_prev_ + (h10 * h) * f_prev_ + h01 * y_ + (h11 * h) * f_;
  }

  double t() const { return t_; }
  double t_prev() const { return t_prev_; }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::VectorXd& f() const { return f_; }
  double step_size() const { return h_; }

 private:
  void attempt(double h) {
    // Fehlberg tableau.
    tmp_ = y_ + h * (1.0 / 4.0) * f_;
    (*rhs_)(tmp_, k2_);
    tmp_ = y_ + h * ((3.0 / 32.0) * f_ + (9.0 / 32.0) * k2_);
    (*rhs_)(tmp_, k3_);
    tmp_ = y_ + h * ((1932.0 / 2197.0) * f_ - (7200.0 / 2197.0) * k2_ + (7296.0 / 2197.0) * k3_);
    (*rhs_)(tmp_, k4_);
    tmp_ = y_ + h * ((439.0 / 216.0) * f_ - 8.0 * k2_ + (3680.0 / 513.0) * k3_ - (845.0 / 4104.0) * k4_);
    (*rhs_)(tmp_, k5_);
    tmp_ = y_ + h * (-(8.0 / 27.0) * f_ + 2.0 * k2_ - (3544.0 / 2565.0) * k3_ + (1859.0 / 4104.0) * k4_ -
                     (11.0 / 40.0) * k5_);
    (*rhs_)(tmp_, k6_);
    y_new_ = y_ + h * ((16.0 / 135.0) * f_ + (6656.0 / 12825.0) * k3_ + (28561.0 / 56430.0) * k4_ -
                       (9.0 / 50.0) * k5_ + (2.0 / 55.0) * k6_);
    // Difference between fifth- and fourth-order solutions.
    err_ = h * ((1.0 / 360.0) * f_ - (128.0 / 4275.0) * k3_ - (2197.0 / 75240.0) * k4_ + (1.0 / 50.0) * k5_ +
                (2.0 / 55.0) * k6_);
  }

  Rhs* rhs_;
  Rkf45Options opt_;
  double h_;
  double t_ = 0.0;
  double t_prev_ = 0.0;
  Eigen::VectorXd y_, f_, y_prev_, f_prev_;
  Eigen::VectorXd k2_, k3_, k4_, k5_, k6_, tmp_, y_new_, err_;
};

}  // namespace visma
