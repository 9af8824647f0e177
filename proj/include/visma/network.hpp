// Static electrical model of the islanded microgrid: admittances, the
// three-phase power balance equations, grid-side voltage recovery and droop
// coefficients.
#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace visma {

inline constexpr double kFrequencyNom = 50.0;
inline constexpr double kOmegaNom = 2.0 * std::numbers::pi * kFrequencyNom;
inline constexpr double kVoltageNom = 230.0;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class SingularCouplingError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class CouplingKind { kStator, kInverter };

// Series element between a device's internal voltage node and the grid.
// Stators carry R_S + jwL_S, inverter output filters jwL_C.
struct DeviceCoupling {
  int node = 0;
  CouplingKind kind = CouplingKind::kInverter;
  double resistance = 0.0;  // ohm
  double inductance = 0.0;  // henry
};

struct Branch {
  int from = 0;
  int to = 0;
  double resistance = 0.0;  // ohm
  double inductance = 0.0;  // henry
};

// Node indices are zero-based. Shunts may be left empty (all zero).
struct NetworkConfig {
  int n_nodes = 0;
  std::vector<Branch> branches;
  std::vector<std::complex<double>> shunts;
  std::vector<DeviceCoupling> couplings;
  double omega_eval = kOmegaNom;
};

// Line admittance y_ik = G_ik + jB_ik for connected pairs (not the negated
// bus-matrix entry), diagonals G_ii = Ghat_ii + sum_k G_ik and likewise for B.
struct AdmittanceMatrix {
  struct Edge {
    int i;
    int k;
    double g;
    double b;
  };

  Eigen::MatrixXd G;
  Eigen::MatrixXd B;
  std::vector<Edge> edges;  // one entry per connected pair, i < k
  std::vector<std::vector<int>> neighbors;

  int size() const { return static_cast<int>(G.rows()); }
};

std::complex<double> coupling_admittance(const DeviceCoupling& coupling, double omega);

AdmittanceMatrix build_admittance(const NetworkConfig& config);

template <typename Scalar>
struct PowerFlow {
  Scalar P;
  Scalar Q;
};

// Active and reactive three-phase injection at node i. Angles are relative to
// the reference node; only differences enter.
template <typename DerivedV, typename DerivedA>
PowerFlow<typename DerivedV::Scalar> power_injection(const AdmittanceMatrix& adm,
                                                     const Eigen::MatrixBase<DerivedV>& V,
                                                     const Eigen::MatrixBase<DerivedA>& dtheta, int i) {
  using Scalar = typename DerivedV::Scalar;
  using std::cos;
  using std::sin;
  Scalar p = adm.G(i, i) * V(i) * V(i);
  Scalar q = -adm.B(i, i) * V(i) * V(i);
  for (int k : adm.neighbors[static_cast<std::size_t>(i)]) {
    const Scalar angle = dtheta(i) - dtheta(k);
    const Scalar c = cos(angle);
    const Scalar s = sin(angle);
    const Scalar vv = V(i) * V(k);
    p -= vv * (adm.G(i, k) * c + adm.B(i, k) * s);
    q -= vv * (adm.G(i, k) * s - adm.B(i, k) * c);
  }
  return {Scalar(3.0) * p, Scalar(3.0) * q};
}

// All injections at once; each branch's trigonometry is evaluated once.
template <typename DerivedV, typename DerivedA, typename DerivedP, typename DerivedQ>
void power_injections(const AdmittanceMatrix& adm, const Eigen::MatrixBase<DerivedV>& V,
                      const Eigen::MatrixBase<DerivedA>& dtheta, Eigen::MatrixBase<DerivedP>& P,
                      Eigen::MatrixBase<DerivedQ>& Q) {
  using Scalar = typename DerivedV::Scalar;
  using std::cos;
  using std::sin;
  const int n = adm.size();
  for (int i = 0; i < n; ++i) {
    P(i) = adm.G(i, i) * V(i) * V(i);
    Q(i) = -adm.B(i, i) * V(i) * V(i);
  }
  for (const auto& e : adm.edges) {
    const Scalar angle = dtheta(e.i) - dtheta(e.k);
    const Scalar c = cos(angle);
    const Scalar s = sin(angle);
    const Scalar vv = V(e.i) * V(e.k);
    // sin is odd in the angle, cos even.
    P(e.i) -= vv * (e.g * c + e.b * s);
    P(e.k) -= vv * (e.g * c - e.b * s);
    Q(e.i) -= vv * (e.g * s - e.b * c);
    Q(e.k) -= vv * (-e.g * s - e.b * c);
  }
  for (int i = 0; i < n; ++i) {
    P(i) *= 3.0;
    Q(i) *= 3.0;
  }
}

template <typename Scalar>
struct Phasor {
  Scalar re;
  Scalar im;

  Scalar abs() const {
    using std::sqrt;
    return sqrt(re * re + im * im);
  }
};

// Complex voltage between coupling element and grid, i.e. the device
// voltage minus the drop of the injected current over the coupling impedance:
//   V_grid = |V|^2 / conj(V) - conj(S) / (3 Y conj(V)),  V = V e^{j dtheta}.
// Written out in real arithmetic so it can be evaluated on any scalar type.
template <typename Scalar>
Phasor<Scalar> grid_voltage(const Scalar& V, const Scalar& dtheta, const Scalar& P, const Scalar& Q,
                            std::complex<double> Y_coupl) {
  using std::cos;
  using std::sin;
  const std::complex<double> Z = 1.0 / Y_coupl;
  // Z conj(S) = a + jb; V_grid = e^{j dtheta} (V - (a + jb) / (3V)).
  const Scalar a = P * Z.real() + Q * Z.imag();
  const Scalar b = P * Z.imag() - Q * Z.real();
  const Scalar re_local = V - a / (Scalar(3.0) * V);
  const Scalar im_local = -b / (Scalar(3.0) * V);
  const Scalar c = cos(dtheta);
  const Scalar s = sin(dtheta);
  return {re_local * c - im_local * s, re_local * s + im_local * c};
}

std::complex<double> grid_voltage(double V, double dtheta, std::complex<double> S, std::complex<double> Y_coupl);

struct DroopCoefficients {
  double k_P;  // rad/(s VA)
  double k_Q;  // V/VA
};

DroopCoefficients droop_coefficients(double S_rated);

}  // namespace visma
