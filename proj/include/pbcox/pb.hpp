#pragma once

// Poisson-binomial probability mass function.
//
// The distribution of I = sum_i I_i with independent I_i ~ Bernoulli(p_i).
// Four evaluators are provided: subset enumeration (test oracle, capped),
// the discrete Fourier transform of the characteristic function, direct
// sequential convolution, and the Poisson approximation. All functions are
// pure and safe to call concurrently.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace pbcox {

enum class PbAlgorithm { enumeration, dft_cf, convolution, poisson_approx };

std::string_view to_string(PbAlgorithm algo);

// Largest input accepted by the enumeration evaluator.
inline constexpr std::size_t kEnumerationCap = 25;
// Inputs longer than this are routed to the DFT evaluator by pb_pmf().
inline constexpr std::size_t kDftRoutingThreshold = 50;
// Stand-in for log(0) in log-domain results.
inline constexpr double kLogZero = -1.0e300;

// Per-subject event probabilities. Validated on construction:
// non-empty and every element in [0, 1].
class PbInput {
 public:
  explicit PbInput(std::vector<double> probs);

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }

 private:
  std::vector<double> probs_;
};

struct PbResult {
  double value;
  PbAlgorithm algorithm;
};

PbResult pb_pmf_enum(const PbInput& input, int d);
PbResult pb_pmf_dft(const PbInput& input, int d);
PbResult pb_pmf_conv(const PbInput& input, int d);
PbResult pb_pmf_poisson(const PbInput& input, int d);

// Default production route: DFT above kDftRoutingThreshold, convolution otherwise.
// A DFT value too small to carry relative precision is recomputed by convolution.
PbResult pb_pmf(const PbInput& input, int d);

// log of pb_pmf(); zero maps to kLogZero.
double pb_log_pmf(const PbInput& input, int d);

// Whole pmf vector (length n + 1) by each exact method.
std::vector<double> pb_pmf_all_enum(const PbInput& input);
std::vector<double> pb_pmf_all_dft(const PbInput& input);
std::vector<double> pb_pmf_all_conv(const PbInput& input);

// Le Cam bound on the average absolute error of the Poisson approximation:
// (2/n) * sum p_i^2.
double lecam_bound(const PbInput& input);

// Pr(I = d) together with dPr(I = d)/dp_i for every i, computed from prefix
// and suffix convolutions truncated at d. O(n d) work; no validation beyond
// the range check on d.
struct PbSensitivity {
  double value;
  std::vector<double> d_value_d_prob;
};
PbSensitivity pb_pmf_sensitivity(std::span<const double> probs, int d);

}  // namespace pbcox
