#include "pbcox/pb.hpp"

#include <cmath>
#include <complex>
#include <fmt/format.h>
#include <numbers>

#include "pbcox/errors.hpp"

namespace pbcox {

namespace {

// Below this the DFT route loses relative precision and pb_pmf() falls back to convolution.
constexpr double kDftRelativeFloor = 1e-8;
constexpr double kDftClampFloor = -1e-6;

void check_count(std::size_t n, int d) {
  if (d < 0 || static_cast<std::size_t>(d) > n) {
    throw DomainError(fmt::format("event count {} outside [0, {}]", d, n));
  }
}

double clamp_dft(double v) {
  if (!std::isfinite(v) || v < kDftClampFloor) {
    throw EvaluationError(fmt::format("DFT pmf evaluated to {}; expected a probability", v));
  }
  if (v < 0.0) return 0.0;
  if (v > 1.0) return 1.0;
  return v;
}

// z_l = prod_i (1 - p_i + p_i exp(i w l)), l = 0..n, using z_{n+1-l} = conj(z_l).
std::vector<std::complex<double>> characteristic_values(std::span<const double> p) {
  const std::size_t n = p.size();
  const double omega = 2.0 * std::numbers::pi / static_cast<double>(n + 1);
  std::vector<std::complex<double>> z(n + 1);
  z[0] = 1.0;
  for (std::size_t l = 1; l <= (n + 1) / 2; ++l) {
    const std::complex<double> w = std::polar(1.0, omega * static_cast<double>(l));
    std::complex<double> prod = 1.0;
    for (double pi : p) prod *= (1.0 - pi) + pi * w;
    z[l] = prod;
    z[n + 1 - l] = std::conj(prod);
  }
  return z;
}

double dft_entry(const std::vector<std::complex<double>>& z, int d) {
  const std::size_t m = z.size();
  const double omega = 2.0 * std::numbers::pi / static_cast<double>(m);
  double acc = 0.0;
  for (std::size_t l = 0; l < m; ++l) {
    // Reduce l*d modulo m before forming the angle to keep the phase accurate.
    const auto phase_index = (l * static_cast<std::size_t>(d)) % m;
    const std::complex<double> rot = std::polar(1.0, -omega * static_cast<double>(phase_index));
    acc += (rot * z[l]).real();
  }
  return acc / static_cast<double>(m);
}

// Sequential convolution of {1 - p_i, p_i}, keeping only entries 0..limit.
std::vector<double> convolve_truncated(std::span<const double> p, std::size_t limit) {
  std::vector<double> pmf(limit + 1, 0.0);
  pmf[0] = 1.0;
  std::size_t top = 0;
  for (double pi : p) {
    const double q = 1.0 - pi;
    const std::size_t hi = std::min(top + 1, limit);
    for (std::size_t k = hi; k >= 1; --k) pmf[k] = pmf[k] * q + pmf[k - 1] * pi;
    pmf[0] *= q;
    top = hi;
  }
  return pmf;
}

// Depth-first subset enumeration. Every leaf is one subset; the product along
// the path is that subset's probability.
void enumerate_all(std::span<const double> p, std::size_t i, std::size_t count, double prod,
                   std::vector<double>& out) {
  if (i == p.size()) {
    out[count] += prod;
    return;
  }
  enumerate_all(p, i + 1, count + 1, prod * p[i], out);
  enumerate_all(p, i + 1, count, prod * (1.0 - p[i]), out);
}

double enumerate_count(std::span<const double> p, std::size_t i, std::size_t chosen, std::size_t d,
                       double prod) {
  if (chosen == d) {
    for (std::size_t k = i; k < p.size(); ++k) prod *= 1.0 - p[k];
    return prod;
  }
  if (p.size() - i < d - chosen) return 0.0;
  return enumerate_count(p, i + 1, chosen + 1, d, prod * p[i]) +
         enumerate_count(p, i + 1, chosen, d, prod * (1.0 - p[i]));
}

void check_enum_cap(std::size_t n) {
  if (n > kEnumerationCap) {
    throw CapacityError(
        fmt::format("enumeration refused for {} trials (cap {})", n, kEnumerationCap));
  }
}

}  // namespace

std::string_view to_string(PbAlgorithm algo) {
  switch (algo) {
    case PbAlgorithm::enumeration: return "enumeration";
    case PbAlgorithm::dft_cf: return "dft_cf";
    case PbAlgorithm::convolution: return "convolution";
    case PbAlgorithm::poisson_approx: return "poisson_approx";
  }
  return "unknown";
}

PbInput::PbInput(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw DomainError("probability vector must be non-empty");
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double p = probs_[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw DomainError(fmt::format("probability {} at position {} outside [0, 1]", p, i));
    }
  }
}

PbResult pb_pmf_enum(const PbInput& input, int d) {
  check_enum_cap(input.size());
  check_count(input.size(), d);
  const double v = enumerate_count(input.probs(), 0, 0, static_cast<std::size_t>(d), 1.0);
  return {std::min(v, 1.0), PbAlgorithm::enumeration};
}

PbResult pb_pmf_dft(const PbInput& input, int d) {
  check_count(input.size(), d);
  const auto z = characteristic_values(input.probs());
  return {clamp_dft(dft_entry(z, d)), PbAlgorithm::dft_cf};
}

PbResult pb_pmf_conv(const PbInput& input, int d) {
  check_count(input.size(), d);
  const auto pmf = convolve_truncated(input.probs(), static_cast<std::size_t>(d));
  return {std::min(pmf[static_cast<std::size_t>(d)], 1.0), PbAlgorithm::convolution};
}

PbResult pb_pmf_poisson(const PbInput& input, int d) {
  if (d < 0) throw DomainError(fmt::format("event count {} is negative", d));
  double mu = 0.0;
  for (double p : input.probs()) mu += p;
  if (mu == 0.0) return {d == 0 ? 1.0 : 0.0, PbAlgorithm::poisson_approx};
  const double log_v = d * std::log(mu) - mu - std::lgamma(d + 1.0);
  return {std::min(std::exp(log_v), 1.0), PbAlgorithm::poisson_approx};
}

PbResult pb_pmf(const PbInput& input, int d) {
  if (input.size() > kDftRoutingThreshold) {
    PbResult r = pb_pmf_dft(input, d);
    if (r.value >= kDftRelativeFloor) return r;
  }
  return pb_pmf_conv(input, d);
}

double pb_log_pmf(const PbInput& input, int d) {
  const double v = pb_pmf(input, d).value;
  return v > 0.0 ? std::log(v) : kLogZero;
}

std::vector<double> pb_pmf_all_enum(const PbInput& input) {
  check_enum_cap(input.size());
  std::vector<double> out(input.size() + 1, 0.0);
  enumerate_all(input.probs(), 0, 0, 1.0, out);
  return out;
}

std::vector<double> pb_pmf_all_dft(const PbInput& input) {
  const auto z = characteristic_values(input.probs());
  std::vector<double> out(input.size() + 1);
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = clamp_dft(dft_entry(z, static_cast<int>(d)));
  return out;
}

std::vector<double> pb_pmf_all_conv(const PbInput& input) {
  return convolve_truncated(input.probs(), input.size());
}

double lecam_bound(const PbInput& input) {
  double ss = 0.0;
  for (double p : input.probs()) ss += p * p;
  return 2.0 * ss / static_cast<double>(input.size());
}

PbSensitivity pb_pmf_sensitivity(std::span<const double> probs, int d) {
  const std::size_t n = probs.size();
  check_count(n, d);
  const auto width = static_cast<std::size_t>(d) + 1;

  // prefix[i] holds the truncated pmf of probs[0..i), suffix[i] that of probs[i..n).
  std::vector<double> prefix((n + 1) * width, 0.0);
  std::vector<double> suffix((n + 2) * width, 0.0);
  prefix[0] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* prev = &prefix[i * width];
    double* cur = &prefix[(i + 1) * width];
    const double p = probs[i];
    cur[0] = prev[0] * (1.0 - p);
    for (std::size_t a = 1; a < width; ++a) cur[a] = prev[a] * (1.0 - p) + prev[a - 1] * p;
  }
  suffix[n * width] = 1.0;
  for (std::size_t i = n; i-- > 0;) {
    const double* next = &suffix[(i + 1) * width];
    double* cur = &suffix[i * width];
    const double p = probs[i];
    cur[0] = next[0] * (1.0 - p);
    for (std::size_t a = 1; a < width; ++a) cur[a] = next[a] * (1.0 - p) + next[a - 1] * p;
  }

  PbSensitivity out{prefix[n * width + width - 1], std::vector<double>(n, 0.0)};
  const auto dd = static_cast<std::size_t>(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* left = &prefix[i * width];
    const double* right = &suffix[(i + 1) * width];
    double without_d = 0.0;
    for (std::size_t a = 0; a <= dd; ++a) without_d += left[a] * right[dd - a];
    double without_dm1 = 0.0;
    if (dd >= 1) {
      for (std::size_t a = 0; a <= dd - 1; ++a) without_dm1 += left[a] * right[dd - 1 - a];
    }
    out.d_value_d_prob[i] = without_dm1 - without_d;
  }
  return out;
}

}  // namespace pbcox
