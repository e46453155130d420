#include "jd2p/prefetch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "jd2p/stats.hpp"

namespace jd2p {

void EnergyParams::validate() const {
  if (!(lambda > 0.0) || !(alpha > 0.0) || ell < 2) {
    throw std::invalid_argument("energy params: need lambda > 0, alpha > 0, ell >= 2");
  }
}

RoundTiming::RoundTiming(double t0, double tau) : t0_(t0), tau_(tau) {
  if (!(tau > 0.0 && tau < t0)) {
    throw std::invalid_argument("round timing: need 0 < tau < t0");
  }
}

double tx_energy(double bits, double duration, double gain, const EnergyParams& params) {
  if (!(duration > 0.0)) throw std::invalid_argument("tx_energy: duration must be positive");
  if (!(gain > 0.0)) throw std::invalid_argument("tx_energy: gain must be positive");
  if (bits < 0.0) throw std::invalid_argument("tx_energy: negative bit count");
  return params.lambda * std::pow(bits, params.ell) /
         (gain * std::pow(duration, params.ell - 1));
}

double prefetch_phi(const PrefetchInputs& in, const RoundTiming& timing, int ell) {
  return std::pow(in.gain * in.nu, 1.0 / (ell - 1)) * timing.tau() / timing.t_offload();
}

PrefetchDecision optimal_prefetch(const PrefetchInputs& in, const RoundTiming& timing,
                                  const EnergyParams& params) {
  if (!(in.rho >= 0.0 && in.rho <= 1.0)) throw std::invalid_argument("optimal_prefetch: rho outside [0, 1]");
  if (in.acs_size < 0.0) throw std::invalid_argument("optimal_prefetch: negative ACS size");
  const int ell = params.ell;
  PrefetchDecision d;
  d.inputs = in;
  d.phi = prefetch_phi(in, timing, ell);
  const double a = d.phi * std::pow(in.rho, 1.0 / (ell - 1));
  const double c = d.phi * std::pow(in.rho, static_cast<double>(ell) / (ell - 1));
  d.p_continuous = a / (1.0 + c) * (in.acs_size * in.rho + 0.5 * ell);
  d.p_clamped = std::clamp(d.p_continuous, 0.0, in.acs_size);
  d.p_rounded = static_cast<std::int64_t>(std::llround(d.p_clamped));
  return d;
}

double prefetch_objective(double p, const PrefetchInputs& in, const RoundTiming& timing, int ell) {
  const double rest = (in.acs_size - p) * in.rho + 0.5 * ell;
  return std::pow(p, ell) / (in.gain * std::pow(timing.tau(), ell - 1)) +
         in.nu / std::pow(timing.t_offload(), ell - 1) * std::pow(rest, ell);
}

double prefetch_stationarity(double p, const PrefetchInputs& in, const RoundTiming& timing,
                             int ell) {
  const double rest = (in.acs_size - p) * in.rho + 0.5 * ell;
  return std::pow(p, ell - 1) / (in.gain * std::pow(timing.tau(), ell - 1)) -
         in.nu * in.rho / std::pow(timing.t_offload(), ell - 1) * std::pow(rest, ell - 1);
}

double prefetch_expected_exact(std::int64_t p, const PrefetchInputs& in,
                               const RoundTiming& timing, int ell) {
  const auto s = static_cast<std::int64_t>(std::llround(in.acs_size));
  if (p < 0 || p > s) throw std::invalid_argument("prefetch_expected_exact: p outside [0, s]");
  return std::pow(static_cast<double>(p), ell) / (in.gain * std::pow(timing.tau(), ell - 1)) +
         in.nu / std::pow(timing.t_offload(), ell - 1) * binomial_moment(s - p, in.rho, ell);
}

OracleResult prefetch_oracle_exact(const PrefetchInputs& in, const RoundTiming& timing, int ell) {
  const auto s = static_cast<std::int64_t>(std::llround(in.acs_size));
  if (s > kOracleMaxAcs) {
    throw std::invalid_argument("prefetch_oracle_exact: ACS too large, use closed form");
  }
  if (s < 0) throw std::invalid_argument("prefetch_oracle_exact: negative ACS size");
  OracleResult best{0, prefetch_expected_exact(0, in, timing, ell)};
  for (std::int64_t p = 1; p <= s; ++p) {
    const double v = prefetch_expected_exact(p, in, timing, ell);
    if (v < best.objective) best = {p, v};
  }
  return best;
}

double expected_energy_osc_round(std::int64_t num_samples, const RoundTiming& timing, double nu,
                                 const EnergyParams& params) {
  return params.lambda * nu * std::pow(params.alpha * static_cast<double>(num_samples), params.ell) /
         std::pow(timing.t0(), params.ell - 1);
}

double expected_energy_osc(std::int64_t num_samples, int rounds, const RoundTiming& timing,
                           double nu, const EnergyParams& params) {
  if (rounds < 1) throw std::invalid_argument("expected_energy_osc: need K >= 1");
  const double last = params.lambda * nu *
                      std::pow(params.alpha * static_cast<double>(num_samples), params.ell) /
                      std::pow(timing.t_offload(), params.ell - 1);
  return (rounds - 1) * expected_energy_osc_round(num_samples, timing, nu, params) + last;
}

double jd2p_energy_bound(double acs_size, double rho, const RoundTiming& timing, double nu,
                         const EnergyParams& params) {
  const int ell = params.ell;
  const double kept = acs_size * rho;
  return params.lambda * nu * std::pow(params.alpha, ell) *
         (std::pow(kept, ell) / std::pow(timing.tau(), ell - 1) +
          std::pow(kept * (1.0 - rho), ell) / std::pow(timing.t_offload(), ell - 1));
}

EfficiencyCheck efficiency_condition(double tau, double t0, double rho, int ell) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("efficiency_condition: rho outside [0, 1]");
  if (!(t0 > 0.0)) throw std::invalid_argument("efficiency_condition: t0 must be positive");
  EfficiencyCheck c;
  c.rhs = 1.0 - std::pow(rho * (1.0 - rho), static_cast<double>(ell) / (ell - 1));
  c.margin = c.rhs - tau / t0;
  c.holds = c.margin > 0.0;
  return c;
}

}  // namespace jd2p
