// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <map>

#include "grad_check.hpp"
#include "npmixer/wavelet.hpp"

using namespace npmixer;
using npmixer::testing::check_gradients;
using npmixer::testing::random_tensor;
using npmixer::testing::Td;

namespace {

using cplx = std::complex<double>;

std::vector<cplx> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t t = 0; t < n; ++t) out[k] += x[t] * std::polar(1.0, -2.0 * M_PI * double(k * t) / double(n));
  return out;
}

std::vector<double> idft(const std::vector<cplx>& X) {
  const std::size_t n = X.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    cplx acc = 0;
    for (std::size_t k = 0; k < n; ++k) acc += X[k] * std::polar(1.0, 2.0 * M_PI * double(k * t) / double(n));
    out[t] = acc.real() / double(n);
  }
  return out;
}

// Frequency-domain SWT: a dilated filter is the impulse train h[k] at k*d, and
// circular convolution is a pointwise product of spectra.
struct SpectralSwt {
  std::vector<double> approx;
  std::vector<std::vector<double>> details;
};

SpectralSwt spectral_swt(const std::vector<double>& x, const std::vector<double>& h0, const std::vector<double>& h1,
                         std::size_t levels) {
  const std::size_t n = x.size();
  auto upsample = [n](const std::vector<double>& h, std::size_t d) {
    std::vector<double> u(n, 0.0);
    for (std::size_t k = 0; k < h.size(); ++k) u[(k * d) % n] += h[k];
    return dft(u);
  };
  SpectralSwt out;
  auto A = dft(x);
  std::size_t d = 1;
  for (std::size_t m = 0; m < levels; ++m, d *= 2) {
    auto H0 = upsample(h0, d), H1 = upsample(h1, d);
    std::vector<cplx> D(n);
    for (std::size_t k = 0; k < n; ++k) {
      D[k] = A[k] * H1[k];
      A[k] = A[k] * H0[k];
    }
    out.details.push_back(idft(D));
  }
  out.approx = idft(A);
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Td rotate(const Td& x, std::size_t s) {
  const std::size_t L = x.dim(-1);
  const std::size_t rows = x.numel() / L;
  std::vector<double> v(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < L; ++t) v[r * L + (t + s) % L] = x.data()[r * L + t];
  return Td(x.shape(), v);
}

}  // namespace

TEST_CASE("db1 taps") {
  auto bank = init_filters<double>("db1");
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(max_abs_diff(bank.h0.to_vector(), {r, r}) < 1e-15);
  CHECK(max_abs_diff(bank.h1.to_vector(), {r, -r}) < 1e-15);
}

TEST_CASE("db2 taps match the closed-form Daubechies coefficients") {
  const double s3 = std::sqrt(3.0), den = 4.0 * std::sqrt(2.0);
  const std::vector<double> ref = {(1 + s3) / den, (3 + s3) / den, (3 - s3) / den, (1 - s3) / den};
  auto bank = init_filters<double>("db2");
  CHECK(max_abs_diff(bank.h0.to_vector(), ref) < 1e-10);
  // Quadrature mirror: h1[k] = (-1)^k h0[F-1-k].
  std::vector<double> qmf(4);
  for (int k = 0; k < 4; ++k) qmf[k] = ((k % 2) ? -1.0 : 1.0) * ref[3 - k];
  CHECK(max_abs_diff(bank.h1.to_vector(), qmf) < 1e-10);
}

TEST_CASE("bior3.1 taps are biorthogonal and share a length") {
  const double s2 = std::sqrt(2.0);
  auto bank = init_filters<double>("bior3.1");
  CHECK(max_abs_diff(bank.h0.to_vector(), {-s2 / 4, 3 * s2 / 4, 3 * s2 / 4, -s2 / 4}) < 1e-10);
  CHECK(max_abs_diff(bank.g0.to_vector(), {s2 / 8, 3 * s2 / 8, 3 * s2 / 8, s2 / 8}) < 1e-10);
  CHECK(bank.h0.to_vector() != bank.g0.to_vector());
  CHECK(bank.h1.numel() == bank.g1.numel());
}

TEST_CASE("bank invariants for every family") {
  const std::map<std::string, std::size_t> lengths = {{"db1", 2},  {"db2", 4},  {"db3", 6},   {"db4", 8},
                                                      {"db5", 10}, {"sym3", 6}, {"sym4", 8},  {"sym5", 10},
                                                      {"coif5", 30}, {"bior3.1", 4}};
  CHECK(supported_wavelets().size() == lengths.size());
  for (const auto& name : supported_wavelets()) {
    auto bank = init_filters<double>(name);
    CHECK(bank.length() == lengths.at(name));
    CHECK(bank.h1.numel() == bank.length());
    CHECK(bank.g0.numel() == bank.length());
    CHECK(bank.g1.numel() == bank.length());
    CHECK(bank.h0.to_vector() == bank.w_init_lo);
    CHECK(bank.h1.to_vector() == bank.w_init_hi);
    CHECK(bank.h0.requires_grad());
    CHECK(bank.g1.requires_grad());
  }
  CHECK_FALSE(init_filters<double>("db2", false).h0.requires_grad());
}

TEST_CASE("unknown family lists supported names") {
  try {
    init_filters<double>("haar9");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("haar9") != std::string::npos);
    CHECK(msg.find("coif5") != std::string::npos);
    CHECK(msg.find("bior3.1") != std::string::npos);
  }
}

TEST_CASE("constant signal under db1") {
  auto bank = init_filters<double>("db1");
  auto c = swt_decompose(Td({2, 8}, 1.5), bank, 1);
  for (double v : c.details[0].to_vector()) CHECK(std::abs(v) < 1e-15);
  for (double v : c.approx.to_vector()) CHECK(v == doctest::Approx(std::sqrt(2.0) * 1.5).epsilon(1e-15));
}

TEST_CASE("levels use dilations 1, 2, 4") {
  auto bank = init_filters<double>("db2");
  Td x = random_tensor({1, 16}, 5, 1.0, false);
  auto c = swt_decompose(x, bank, 3);
  // Hand recursion with the literal index formula.
  auto conv = [](const std::vector<double>& s, const std::vector<double>& h, std::size_t d) {
    const std::size_t L = s.size();
    std::vector<double> y(L, 0.0);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t k = 0; k < h.size(); ++k) y[t] += h[k] * s[(t + L * 8 - k * d) % L];
    return y;
  };
  auto A = x.to_vector();
  for (std::size_t m = 0; m < 3; ++m) {
    const std::size_t d = std::size_t{1} << m;
    CHECK(max_abs_diff(c.details[m].to_vector(), conv(A, bank.w_init_hi, d)) < 1e-12);
    A = conv(A, bank.w_init_lo, d);
  }
  CHECK(max_abs_diff(c.approx.to_vector(), A) < 1e-12);
}

TEST_CASE("db2 M=2 bands match the spectral reference") {
  auto bank = init_filters<double>("db2");
  Td x = random_tensor({3, 40}, 6, 1.0, false);
  auto c = swt_decompose(x, bank, 2);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    std::vector<double> row(x.data().begin() + ch * 40, x.data().begin() + (ch + 1) * 40);
    auto ref = spectral_swt(row, bank.w_init_lo, bank.w_init_hi, 2);
    auto band = [&](const Td& t) { return std::vector<double>(t.data().begin() + ch * 40, t.data().begin() + (ch + 1) * 40); };
    CHECK(max_abs_diff(band(c.approx), ref.approx) < 1e-8);
    CHECK(max_abs_diff(band(c.details[0]), ref.details[0]) < 1e-8);
    CHECK(max_abs_diff(band(c.details[1]), ref.details[1]) < 1e-8);
  }
}

TEST_CASE("perfect reconstruction at initialization") {
  for (const auto& name : supported_wavelets()) {
    auto bank = init_filters<double>(name);
    for (std::size_t M = 1; M <= 5; ++M) {
      Td x = random_tensor({7, 96}, 100 + M, 1.0, false);
      auto c = swt_decompose(x, bank, M);
      CHECK(c.levels() == M);
      for (const auto& d : c.details) CHECK(d.shape() == x.shape());
      CHECK(c.approx.shape() == x.shape());
      auto y = iswt_reconstruct(c, bank, M);
      INFO(name << " M=" << M);
      CHECK(max_abs_diff(y.to_vector(), x.to_vector()) < 1e-8);
    }
  }
}

TEST_CASE("reconstruction of zero coefficients is zero") {
  auto bank = init_filters<double>("sym4");
  WaveletCoefficients<double> c{Td({2, 12}), {Td({2, 12}), Td({2, 12})}};
  for (double v : iswt_reconstruct(c, bank, 2).to_vector()) CHECK(v == 0.0);
}

TEST_CASE("perturbed filter breaks reconstruction") {
  auto bank = init_filters<double>("db3");
  bank.h0.mutable_data()[2] += 0.01;
  Td x = random_tensor({2, 32}, 7, 1.0, false);
  auto y = iswt_reconstruct(swt_decompose(x, bank, 2), bank, 2);
  CHECK(max_abs_diff(y.to_vector(), x.to_vector()) > 1e-4);
}

TEST_CASE("translation invariance is exact") {
  auto bank = init_filters<double>("db4");
  Td x = random_tensor({2, 24}, 8, 1.0, false);
  for (std::size_t s : {1, 5, 23}) {
    auto a = swt_decompose(rotate(x, s), bank, 3);
    auto b = swt_decompose(x, bank, 3);
    CHECK(a.approx.to_vector() == rotate(b.approx, s).to_vector());
    for (std::size_t m = 0; m < 3; ++m) CHECK(a.details[m].to_vector() == rotate(b.details[m], s).to_vector());
  }
}

TEST_CASE("linearity holds with perturbed filters") {
  auto bank = init_filters<double>("coif5");
  bank.h0.mutable_data()[3] += 0.05;
  bank.h1.mutable_data()[0] -= 0.02;
  Td x = random_tensor({1, 50}, 9, 1.0, false);
  Td y = random_tensor({1, 50}, 10, 1.0, false);
  const double a = 0.7, b = -1.3;
  auto lhs = swt_decompose(add(mul_scalar(x, a), mul_scalar(y, b)), bank, 3);
  auto cx = swt_decompose(x, bank, 3);
  auto cy = swt_decompose(y, bank, 3);
  auto combo = [&](const Td& p, const Td& q) { return add(mul_scalar(p, a), mul_scalar(q, b)).to_vector(); };
  CHECK(max_abs_diff(lhs.approx.to_vector(), combo(cx.approx, cy.approx)) < 1e-10);
  for (std::size_t m = 0; m < 3; ++m)
    CHECK(max_abs_diff(lhs.details[m].to_vector(), combo(cx.details[m], cy.details[m])) < 1e-10);
}

TEST_CASE("filter gradients pass the finite-difference check") {
  auto bank = init_filters<double>("db2");
  Td x = random_tensor({2, 10}, 11);
  Td target = random_tensor({2, 10}, 12, 1.0, false);
  auto loss = [&] {
    auto c = swt_decompose(x, bank, 2);
    c.approx = mul(c.approx, target);
    auto y = iswt_reconstruct(c, bank, 2);
    return sum(mul(y, y));
  };
  auto rep = check_gradients(loss, {bank.h0, bank.h1, bank.g0, bank.g1, x});
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("argument errors") {
  auto bank = init_filters<double>("db1");
  Td x({1, 8});
  CHECK_THROWS_AS(swt_decompose(x, bank, 0), ParameterError);
  auto c = swt_decompose(x, bank, 2);
  CHECK_THROWS_AS(iswt_reconstruct(c, bank, 3), ContractError);
}
