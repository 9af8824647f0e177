#include "doctest.h"

#include <complex>
#include <random>

#include "visma/network.hpp"

using namespace visma;
using cd = std::complex<double>;

namespace {

// Conventional bus admittance matrix: off-diagonal -y_ik, diagonal shunt + sum y_ik.
Eigen::MatrixXcd bus_matrix(const NetworkConfig& cfg, const std::vector<cd>& y_branch) {
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(cfg.n_nodes, cfg.n_nodes);
  for (std::size_t b = 0; b < cfg.branches.size(); ++b) {
    const auto& br = cfg.branches[b];
    Y(br.from, br.to) -= y_branch[b];
    Y(br.to, br.from) -= y_branch[b];
    Y(br.from, br.from) += y_branch[b];
    Y(br.to, br.to) += y_branch[b];
  }
  for (int i = 0; i < static_cast<int>(cfg.shunts.size()); ++i) Y(i, i) += cfg.shunts[static_cast<std::size_t>(i)];
  return Y;
}

NetworkConfig meshed_three_bus() {
  NetworkConfig cfg;
  cfg.n_nodes = 3;
  cfg.branches = {{0, 1, 0.2, 1.5e-3}, {1, 2, 0.1, 0.8e-3}, {0, 2, 0.3, 2.0e-3}};
  cfg.shunts = {cd(0.01, 0.002), cd(0.0, -0.003), cd(0.02, 0.0)};
  return cfg;
}

}  // namespace

TEST_CASE("coupling admittance is the inverse series impedance") {
  const DeviceCoupling stator{0, CouplingKind::kStator, 0.3, 42e-3};
  const cd y = coupling_admittance(stator, kOmegaNom);
  const cd z(0.3, kOmegaNom * 42e-3);
  CHECK(std::abs(y * z - 1.0) < 1e-14);
  CHECK_THROWS_AS(coupling_admittance({0, CouplingKind::kInverter, 0.0, 0.0}, kOmegaNom), SingularCouplingError);
}

TEST_CASE("admittance of a single line") {
  NetworkConfig cfg;
  cfg.n_nodes = 2;
  cfg.branches = {{0, 1, 0.1, 1e-3}};
  const auto adm = build_admittance(cfg);
  const cd y = 1.0 / cd(0.1, kOmegaNom * 1e-3);
  CHECK(adm.G(0, 1) == doctest::Approx(y.real()).epsilon(1e-14));
  CHECK(adm.B(0, 1) == doctest::Approx(y.imag()).epsilon(1e-14));
  CHECK(adm.G(0, 0) == doctest::Approx(y.real()).epsilon(1e-14));
  CHECK(adm.B(1, 1) == doctest::Approx(y.imag()).epsilon(1e-14));
  REQUIRE(adm.edges.size() == 1);
  CHECK(adm.neighbors[0] == std::vector<int>{1});
}

TEST_CASE("admittance matrix is symmetric and obeys the diagonal rule") {
  const auto cfg = meshed_three_bus();
  const auto adm = build_admittance(cfg);
  CHECK((adm.G - adm.G.transpose()).norm() == 0.0);
  CHECK((adm.B - adm.B.transpose()).norm() == 0.0);
  for (int i = 0; i < 3; ++i) {
    double g = cfg.shunts[static_cast<std::size_t>(i)].real();
    double b = cfg.shunts[static_cast<std::size_t>(i)].imag();
    for (int k : adm.neighbors[static_cast<std::size_t>(i)]) {
      g += adm.G(i, k);
      b += adm.B(i, k);
    }
    CHECK(adm.G(i, i) == doctest::Approx(g).epsilon(1e-15));
    CHECK(adm.B(i, i) == doctest::Approx(b).epsilon(1e-15));
  }
}

TEST_CASE("lossless network without shunts has zero conductance") {
  NetworkConfig cfg;
  cfg.n_nodes = 4;
  cfg.branches = {{0, 3, 0.0, 1.5e-3}, {1, 3, 0.0, 1.5e-3}, {2, 3, 0.0, 1.5e-3}};
  cfg.couplings = {{0, CouplingKind::kInverter, 0.0, 1.8e-3}, {1, CouplingKind::kInverter, 0.0, 1.8e-3}};
  const auto adm = build_admittance(cfg);
  CHECK(adm.G.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("device coupling is placed in series with the attached branch") {
  NetworkConfig cfg;
  cfg.n_nodes = 3;
  cfg.branches = {{0, 2, 0.0, 1.514e-3}, {1, 2, 0.0, 1.514e-3}};
  cfg.couplings = {{0, CouplingKind::kStator, 0.3, 42e-3}, {1, CouplingKind::kInverter, 0.0, 1.8e-3}};
  const auto adm = build_admittance(cfg);
  const cd y0 = 1.0 / cd(0.3, kOmegaNom * (42e-3 + 1.514e-3));
  const cd y1 = 1.0 / cd(0.0, kOmegaNom * (1.8e-3 + 1.514e-3));
  CHECK(adm.G(0, 2) == doctest::Approx(y0.real()).epsilon(1e-14));
  CHECK(adm.B(0, 2) == doctest::Approx(y0.imag()).epsilon(1e-14));
  CHECK(adm.B(1, 2) == doctest::Approx(y1.imag()).epsilon(1e-14));
}

TEST_CASE("invalid networks are rejected") {
  NetworkConfig cfg;
  cfg.n_nodes = 3;
  cfg.branches = {{0, 1, 0.0, 1e-3}};
  CHECK_THROWS_AS(build_admittance(cfg), ConfigError);  // node 2 isolated
  cfg.branches = {{0, 1, 0.0, 1e-3}, {1, 1, 0.0, 1e-3}};
  CHECK_THROWS_AS(build_admittance(cfg), ConfigError);
  cfg.branches = {{0, 1, -0.1, 1e-3}, {1, 2, 0.0, 1e-3}};
  CHECK_THROWS_AS(build_admittance(cfg), ConfigError);
  cfg.branches = {{0, 1, 0.0, 0.0}, {1, 2, 0.0, 1e-3}};
  CHECK_THROWS_AS(build_admittance(cfg), ConfigError);
  cfg.branches = {{0, 1, 0.0, 1e-3}, {1, 2, 0.0, 1e-3}};
  cfg.couplings = {{0, CouplingKind::kStator, 0.0, 42e-3}};
  CHECK_THROWS_AS(build_admittance(cfg), ConfigError);
  cfg.n_nodes = 1;
  cfg.branches.clear();
  cfg.couplings.clear();
  CHECK_THROWS_AS(build_admittance(cfg), ConfigError);
}

TEST_CASE("power injections match complex power S = 3 V conj(Y V)") {
  const auto cfg = meshed_three_bus();
  const auto adm = build_admittance(cfg);
  std::vector<cd> y;
  for (const auto& br : cfg.branches) y.push_back(1.0 / cd(br.resistance, cfg.omega_eval * br.inductance));
  const Eigen::MatrixXcd Y = bus_matrix(cfg, y);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> volt(200.0, 260.0), ang(-0.3, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Vector3d V(volt(rng), volt(rng), volt(rng));
    Eigen::Vector3d th(0.0, ang(rng), ang(rng));
    Eigen::Vector3cd u;
    for (int i = 0; i < 3; ++i) u(i) = std::polar(V(i), th(i));
    const Eigen::Vector3cd S = 3.0 * u.cwiseProduct((Y * u).conjugate());

    Eigen::Vector3d P, Q;
    power_injections(adm, V, th, P, Q);
    for (int i = 0; i < 3; ++i) {
      const double scale = std::abs(S(i)) + 1.0;
      CHECK(std::abs(P(i) - S(i).real()) < 1e-10 * scale);
      CHECK(std::abs(Q(i) - S(i).imag()) < 1e-10 * scale);
      const auto one = power_injection(adm, V, th, i);
      CHECK(std::abs(one.P - P(i)) < 1e-10 * scale);
      CHECK(std::abs(one.Q - Q(i)) < 1e-10 * scale);
    }
  }
}

TEST_CASE("lossless injections sum to zero") {
  NetworkConfig cfg;
  cfg.n_nodes = 3;
  cfg.branches = {{0, 2, 0.0, 1.5e-3}, {1, 2, 0.0, 3.3e-3}};
  const auto adm = build_admittance(cfg);
  Eigen::Vector3d V(231.0, 228.0, 225.0), th(0.0, 0.05, -0.04), P, Q;
  power_injections(adm, V, th, P, Q);
  CHECK(std::abs(P.sum()) < 1e-9 * P.cwiseAbs().maxCoeff());
}

TEST_CASE("grid voltage without power flow is the device voltage") {
  const cd Y = 1.0 / cd(0.3, kOmegaNom * 42e-3);
  const cd v = grid_voltage(229.0, 0.1, cd(0.0, 0.0), Y);
  CHECK(std::abs(v - std::polar(229.0, 0.1)) < 1e-12);
}

TEST_CASE("grid voltage behind an output filter") {
  // 6900 W through L_C = 1.8 mH: drop I Z with I = 10 A, Z = j0.5655 ohm.
  const cd Y = 1.0 / cd(0.0, 100.0 * std::numbers::pi * 1.8e-3);
  const cd v = grid_voltage(230.0, 0.0, cd(6900.0, 0.0), Y);
  CHECK(v.real() == doctest::Approx(230.0).epsilon(1e-12));
  CHECK(v.imag() == doctest::Approx(-5.654867).epsilon(1e-6));
  CHECK(std::abs(v) == doctest::Approx(230.07).epsilon(1e-4));
}

TEST_CASE("grid voltage is the device voltage minus the current times the coupling impedance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const cd Z(0.3, kOmegaNom * 42e-3);
  for (int trial = 0; trial < 20; ++trial) {
    const double V = 230.0 + 20.0 * u(rng);
    const double th = 0.2 * u(rng);
    const cd S(5000.0 * u(rng), 3000.0 * u(rng));
    const cd Vi = std::polar(V, th);
    const cd I = std::conj(S / (3.0 * Vi));
    const cd expected = Vi - Z * I;
    CHECK(std::abs(grid_voltage(V, th, S, 1.0 / Z) - expected) < 1e-10 * V);
  }
}

TEST_CASE("grid voltage drop is linear in the injected power") {
  const cd Y = 1.0 / cd(0.3, kOmegaNom * 42e-3);
  const cd S(4000.0, -700.0);
  const cd u = std::polar(231.0, -0.07);
  const cd d1 = u - grid_voltage(231.0, -0.07, S, Y);
  const cd d2 = u - grid_voltage(231.0, -0.07, 2.0 * S, Y);
  CHECK(std::abs(d2 - 2.0 * d1) < 1e-12 * std::abs(d1));
  CHECK_THROWS_AS(grid_voltage(230.0, 0.0, S, cd(0.0, 0.0)), SingularCouplingError);
}

TEST_CASE("droop coefficients") {
  const auto d = droop_coefficients(4000.0);
  CHECK(d.k_P == doctest::Approx(3.1416e-4).epsilon(1e-4));
  CHECK(d.k_Q == doctest::Approx(5.75e-3).epsilon(1e-12));
  const auto d3 = droop_coefficients(1000.0);
  CHECK(d3.k_P == doctest::Approx(12.5664e-4).epsilon(1e-4));
  CHECK(d3.k_Q == doctest::Approx(23.0e-3).epsilon(1e-12));
  CHECK_THROWS_AS(droop_coefficients(0.0), DomainError);
  CHECK_THROWS_AS(droop_coefficients(-5.0), DomainError);
}
