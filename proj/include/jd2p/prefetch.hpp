#pragma once

#include <cstdint>

namespace jd2p {

/// Monomial transmit-energy model parameters.
struct EnergyParams {
  double lambda = 1e-17;  // energy coefficient
  int ell = 3;            // monomial order, 2..5
  double alpha = 8.0;     // bits per feature

  void validate() const;
};

/// One round of length t0 split into a training/prefetch window tau and an
/// offloading window t_offload = t0 - tau.
class RoundTiming {
 public:
  RoundTiming(double t0, double tau);

  double t0() const { return t0_; }
  double tau() const { return tau_; }
  double t_offload() const { return t0_ - tau_; }

 private:
  double t0_;
  double tau_;
};

/// Energy (J) to send `bits` in `duration` seconds at channel gain `gain`:
/// lambda * bits^ell / (gain * duration^(ell-1)).
double tx_energy(double bits, double duration, double gain, const EnergyParams& params);

/// Inputs of one prefetch decision in round k.
struct PrefetchInputs {
  double acs_size = 0.0;   // s_k
  double rho = 0.0;        // reduction ratio
  double gain = 1.0;       // current gain h_k
  double nu = 1.0;         // E[1/h]
};

struct PrefetchDecision {
  PrefetchInputs inputs;
  double phi = 0.0;
  double p_continuous = 0.0;  // unclamped closed form
  double p_clamped = 0.0;     // clamped to [0, s_k]
  std::int64_t p_rounded = 0;
};

/// phi = (h nu)^(1/(ell-1)) * tau / t_offload.
double prefetch_phi(const PrefetchInputs& in, const RoundTiming& timing, int ell);

/// Closed-form minimiser of the moment-bound objective, clamped and rounded.
PrefetchDecision optimal_prefetch(const PrefetchInputs& in, const RoundTiming& timing,
                                  const EnergyParams& params);

/// Upper-bound objective (without the lambda alpha^ell factor):
/// p^ell/(h tau^(ell-1)) + nu/t^(ell-1) * ((s-p) rho + ell/2)^ell.
double prefetch_objective(double p, const PrefetchInputs& in, const RoundTiming& timing, int ell);

/// First-order condition of the upper-bound objective divided by ell:
/// p^(ell-1)/(h tau^(ell-1)) - nu rho/t^(ell-1) ((s-p) rho + ell/2)^(ell-1).
double prefetch_stationarity(double p, const PrefetchInputs& in, const RoundTiming& timing,
                             int ell);

/// True expected objective (without lambda alpha^ell) for integer p, using
/// the exact binomial moment of the post-prefetch offload count.
double prefetch_expected_exact(std::int64_t p, const PrefetchInputs& in,
                               const RoundTiming& timing, int ell);

struct OracleResult {
  std::int64_t p = 0;
  double objective = 0.0;
};

inline constexpr std::int64_t kOracleMaxAcs = 2000;

/// Exhaustive search over integer p in [0, s] of the true expectation; ties go
/// to the smaller p. Throws for s > kOracleMaxAcs ("use closed form").
OracleResult prefetch_oracle_exact(const PrefetchInputs& in, const RoundTiming& timing, int ell);

/// Expected one-shot energy: (K-1) lambda nu (alpha M)^ell / t0^(ell-1)
/// + lambda nu (alpha M)^ell / t_K^(ell-1), with t_K = t0 - tau.
double expected_energy_osc(std::int64_t num_samples, int rounds, const RoundTiming& timing,
                           double nu, const EnergyParams& params);

/// Per-round one-shot term lambda nu (alpha M)^ell / t0^(ell-1).
double expected_energy_osc_round(std::int64_t num_samples, const RoundTiming& timing, double nu,
                                 const EnergyParams& params);

/// lambda nu alpha^ell ((s rho)^ell / tau^(ell-1) + (s rho (1-rho))^ell / t^(ell-1)).
double jd2p_energy_bound(double acs_size, double rho, const RoundTiming& timing, double nu,
                         const EnergyParams& params);

struct EfficiencyCheck {
  bool holds = false;
  double rhs = 0.0;     // 1 - (rho (1 - rho))^(ell/(ell-1))
  double margin = 0.0;  // rhs - tau/t0
};

EfficiencyCheck efficiency_condition(double tau, double t0, double rho, int ell);

}  // namespace jd2p
