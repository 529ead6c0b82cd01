#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace claps::rasm {

/// (gamma, delta) pair of the multiplicative formulation.
struct MulParams {
  double gamma = 0;
  double delta = 0;
};

/// An (epsilon, lambda)-additive certificate is also a multiplicative one
/// with gamma = (lambda - eps) / lambda and delta = min{eps, lambda}.
/// Requires eps > 0, lambda > 1, eps < lambda.
MulParams add_to_mul(double eps, double lambda);

/// A (gamma, delta, lambda)-multiplicative certificate is also an additive
/// one with margin (1 - gamma) * delta. Requires gamma in (0,1), delta > 0,
/// lambda > 1.
double mul_to_add(double gamma, double delta, double lambda);

struct BoundResult {
  long long steps = 0;   // N = floor((lambda - 1) / (L_V * max_step))
  double bound = 0;      // 1 - (1/lambda) * gamma^N
  bool saturated = false;  // gamma^N underflowed to zero
};

/// Reach-avoid probability lower bound. gamma = 1 degenerates to the
/// 1 - 1/lambda bound. gamma^N is computed as exp(N ln gamma) and guarded
/// for underflow.
BoundResult compute_bound(double lambda, double gamma, double lip_v, double max_step);

/// Same formula with the step count supplied directly (exposes the N = 2*lambda
/// comparison-table convention alongside the floor form).
BoundResult compute_bound_with_steps(double lambda, double gamma, long long steps);

double prior_bound(double lambda);  // 1 - 1/lambda

/// Closed-form extraction from a verified minimal grid margin:
/// delta = min{margin, lambda} (nudged strictly below lambda so gamma stays
/// in (0,1)), gamma = 1 - delta/lambda. Throws DomainError when margin <= 0.
MulParams extract_gamma_delta(double min_margin, double lambda);

/// Verified certificate record. `trivial` marks edges whose initial region is
/// contained in the target region (probability one without any decrease
/// argument); numeric invariants apply to the standard kind only.
struct Certificate {
  bool trivial = false;
  double lambda = 0;
  double gamma = 0;
  double delta = 0;
  double eps = 0;
  double mesh = 0;      // tau
  double slack_k = 0;   // K = L_V (L_f (L_pi + 1) + 1)
  double lip_v = 0;
  double lip_f = 0;
  double lip_pi = 0;
  double max_step = 0;  // Delta (L1)
  long long steps = 0;  // N
  double bound = 0;
  bool saturated = false;
  double min_margin = 0;

  std::string system_hash;       // hex hash of the system description
  std::string policy_hash;       // hex hash of the policy weight file
  std::string certificate_hash;  // hex hash of the certificate weight file

  static Certificate trivial_certificate(std::string system_hash);
  /// Fills every derived field from (lambda, min_margin, lip constants, ...).
  static Certificate from_verification(double lambda, double min_margin, double mesh,
                                       double lip_v, double lip_f, double lip_pi,
                                       double max_step);
};

/// Recomputes every invariant and compares the recorded hashes. Returns the
/// list of violations (empty means valid).
std::vector<std::string> certificate_violations(const Certificate& cert);
std::vector<std::string> certificate_violations(const Certificate& cert,
                                                const std::string& system_hash,
                                                const std::filesystem::path& policy_file,
                                                const std::filesystem::path& certificate_file);

inline bool validate_certificate(const Certificate& cert) {
  return certificate_violations(cert).empty();
}

/// Human-readable full-precision serialization.
std::string serialize(const Certificate& cert);
Certificate parse_certificate(const std::string& text);

}  // namespace claps::rasm
