#include "claps/rasm.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "claps/util.hpp"

namespace claps::rasm {

MulParams add_to_mul(double eps, double lambda) {
  if (!(eps > 0)) throw DomainError("additive margin must be positive");
  if (!(lambda > 1)) throw DomainError("lambda must exceed 1");
  if (!(eps < lambda)) throw DomainError("additive margin must be below lambda");
  return MulParams{(lambda - eps) / lambda, std::min(eps, lambda)};
}

double mul_to_add(double gamma, double delta, double lambda) {
  if (!(gamma > 0 && gamma < 1)) throw DomainError("gamma must lie in (0, 1)");
  if (!(delta > 0)) throw DomainError("delta must be positive");
  if (!(lambda > 1)) throw DomainError("lambda must exceed 1");
  return (1 - gamma) * delta;
}

BoundResult compute_bound_with_steps(double lambda, double gamma, long long steps) {
  if (!(lambda > 1)) throw DomainError("lambda must exceed 1");
  if (!(gamma > 0 && gamma <= 1)) throw DomainError("gamma must lie in (0, 1]");
  if (steps < 0) throw DomainError("step count must be >= 0");
  BoundResult r;
  r.steps = steps;
  double decay;
  if (gamma == 1.0 || steps == 0) {
    decay = 1.0;
  } else {
    double log_decay = double(steps) * std::log(gamma);
    decay = std::exp(log_decay);
    if (decay == 0.0) r.saturated = true;  // underflow: bound saturates at 1
  }
  r.bound = 1.0 - decay / lambda;
  return r;
}

BoundResult compute_bound(double lambda, double gamma, double lip_v, double max_step) {
  if (!(lip_v > 0)) throw DomainError("certificate Lipschitz constant must be positive");
  if (!(max_step > 0)) throw DomainError("max step must be positive");
  double q = std::floor((lambda - 1) / (lip_v * max_step));
  long long steps = q > 9e15 ? (long long)9e15 : (long long)q;
  return compute_bound_with_steps(lambda, gamma, steps);
}

double prior_bound(double lambda) {
  if (!(lambda > 1)) throw DomainError("lambda must exceed 1");
  return 1.0 - 1.0 / lambda;
}

MulParams extract_gamma_delta(double min_margin, double lambda) {
  if (!(min_margin > 0))
    throw DomainError("certificate invalid: verified margin must be positive");
  if (!(lambda > 1)) throw DomainError("lambda must exceed 1");
  double delta = std::min(min_margin, lambda);
  if (delta >= lambda) delta = lambda * (1.0 - 1e-9);  // keep gamma inside (0, 1)
  return MulParams{1.0 - delta / lambda, delta};
}

Certificate Certificate::trivial_certificate(std::string system_hash) {
  Certificate c;
  c.trivial = true;
  c.bound = 1.0;
  c.system_hash = std::move(system_hash);
  return c;
}

Certificate Certificate::from_verification(double lambda, double min_margin, double mesh,
                                           double lip_v, double lip_f, double lip_pi,
                                           double max_step) {
  MulParams mp = extract_gamma_delta(min_margin, lambda);
  Certificate c;
  c.lambda = lambda;
  c.gamma = mp.gamma;
  c.delta = mp.delta;
  c.eps = mul_to_add(mp.gamma, mp.delta, lambda);
  c.mesh = mesh;
  c.lip_v = lip_v;
  c.lip_f = lip_f;
  c.lip_pi = lip_pi;
  c.slack_k = lip_v * (lip_f * (lip_pi + 1) + 1);
  c.max_step = max_step;
  c.min_margin = min_margin;
  BoundResult b = compute_bound(lambda, mp.gamma, lip_v, max_step);
  c.steps = b.steps;
  c.bound = b.bound;
  c.saturated = b.saturated;
  return c;
}

namespace {

bool close(double a, double b, double tol = 1e-9) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

std::vector<std::string> certificate_violations(const Certificate& c) {
  std::vector<std::string> v;
  if (c.trivial) {
    if (c.bound != 1.0) v.push_back("trivial certificate must carry bound 1");
    return v;
  }
  if (!(c.lambda > 1)) v.push_back("lambda must exceed 1");
  if (!(c.gamma > 0 && c.gamma < 1)) v.push_back("gamma must lie in (0, 1)");
  if (!(c.delta > 0)) v.push_back("delta must be positive");
  if (!(c.bound >= 0 && c.bound <= 1)) v.push_back("bound must lie in [0, 1]");
  if (!(c.max_step > 0)) v.push_back("max step must be positive");
  if (!(c.lip_v > 0)) v.push_back("certificate Lipschitz constant must be positive");
  if (!v.empty()) return v;
  long long steps = compute_bound(c.lambda, 0.5, c.lip_v, c.max_step).steps;
  if (steps != c.steps) v.push_back("step count N does not match floor((lambda-1)/(L_V*Delta))");
  if (!close(c.slack_k, c.lip_v * (c.lip_f * (c.lip_pi + 1) + 1)))
    v.push_back("K does not match L_V*(L_f*(L_pi+1)+1)");
  if (!close(c.gamma, 1.0 - c.delta / c.lambda)) v.push_back("gamma does not match 1 - delta/lambda");
  if (!close(c.eps, (1.0 - c.gamma) * c.delta)) v.push_back("eps does not match (1-gamma)*delta");
  BoundResult b = compute_bound_with_steps(c.lambda, c.gamma, c.steps);
  if (!close(b.bound, c.bound)) v.push_back("bound does not match 1 - gamma^N / lambda");
  return v;
}

std::vector<std::string> certificate_violations(const Certificate& c,
                                                const std::string& system_hash,
                                                const std::filesystem::path& policy_file,
                                                const std::filesystem::path& certificate_file) {
  std::vector<std::string> v = certificate_violations(c);
  if (c.system_hash != system_hash) v.push_back("system hash mismatch");
  try {
    if (!c.policy_hash.empty() && sha256_file_hex(policy_file) != c.policy_hash)
      v.push_back("policy weight file hash mismatch");
  } catch (const Error& e) {
    v.push_back(std::string("policy weight file unreadable: ") + e.what());
  }
  try {
    if (!c.certificate_hash.empty() && sha256_file_hex(certificate_file) != c.certificate_hash)
      v.push_back("certificate weight file hash mismatch");
  } catch (const Error& e) {
    v.push_back(std::string("certificate weight file unreadable: ") + e.what());
  }
  return v;
}

std::string serialize(const Certificate& c) {
  std::ostringstream ss;
  ss << "certificate v1\n";
  ss << "kind = " << (c.trivial ? "trivial" : "standard") << "\n";
  ss << "lambda = " << format_double(c.lambda) << "\n";
  ss << "gamma = " << format_double(c.gamma) << "\n";
  ss << "delta = " << format_double(c.delta) << "\n";
  ss << "eps = " << format_double(c.eps) << "\n";
  ss << "mesh = " << format_double(c.mesh) << "\n";
  ss << "slack_k = " << format_double(c.slack_k) << "\n";
  ss << "lip_v = " << format_double(c.lip_v) << "\n";
  ss << "lip_f = " << format_double(c.lip_f) << "\n";
  ss << "lip_pi = " << format_double(c.lip_pi) << "\n";
  ss << "max_step = " << format_double(c.max_step) << "\n";
  ss << "steps = " << c.steps << "\n";
  ss << "bound = " << format_double(c.bound) << "\n";
  ss << "saturated = " << (c.saturated ? 1 : 0) << "\n";
  ss << "min_margin = " << format_double(c.min_margin) << "\n";
  ss << "system_hash = " << c.system_hash << "\n";
  ss << "policy_hash = " << c.policy_hash << "\n";
  ss << "certificate_hash = " << c.certificate_hash << "\n";
  return ss.str();
}

Certificate parse_certificate(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "certificate v1")
    throw FormatError("unrecognized certificate header");
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FormatError("malformed certificate line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto get = [&kv](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("certificate missing field: " + key);
    return it->second;
  };
  Certificate c;
  c.trivial = get("kind") == "trivial";
  c.lambda = std::stod(get("lambda"));
  c.gamma = std::stod(get("gamma"));
  c.delta = std::stod(get("delta"));
  c.eps = std::stod(get("eps"));
  c.mesh = std::stod(get("mesh"));
  c.slack_k = std::stod(get("slack_k"));
  c.lip_v = std::stod(get("lip_v"));
  c.lip_f = std::stod(get("lip_f"));
  c.lip_pi = std::stod(get("lip_pi"));
  c.max_step = std::stod(get("max_step"));
  c.steps = std::stoll(get("steps"));
  c.bound = std::stod(get("bound"));
  c.saturated = get("saturated") == "1";
  c.min_margin = std::stod(get("min_margin"));
  c.system_hash = get("system_hash");
  c.policy_hash = get("policy_hash");
  c.certificate_hash = get("certificate_hash");
  return c;
}

}  // namespace claps::rasm
