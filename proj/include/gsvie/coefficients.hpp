#pragma once

// Kernel triples (b, h, sigma) with forcing phi, the hypothesis class each
// family claims together with its witnesses, and sampling audits that try
// to falsify those claims.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "gsvie/parallel.hpp"
#include "gsvie/philox.hpp"

namespace gsvie {

/// f(t, s, x, alpha) on 0 <= s <= t. An empty function means identically zero.
using Kernel = std::function<double(double t, double s, double x, double alpha)>;
/// phi(t, alpha).
using Forcing = std::function<double(double t, double alpha)>;

struct CoefficientFamily {
  std::string name;
  Kernel b;
  Kernel h;
  Kernel sigma;
  Forcing phi;
  bool parameterized = false;
  /// Kernels ignore their first argument; enables the running-sum solver path.
  bool outer_time_free = false;

  double eval_b(double t, double s, double x, double a) const { return b ? b(t, s, x, a) : 0.0; }
  double eval_h(double t, double s, double x, double a) const { return h ? h(t, s, x, a) : 0.0; }
  double eval_sigma(double t, double s, double x, double a) const { return sigma ? sigma(t, s, x, a) : 0.0; }
  double eval_phi(double t, double a) const { return phi ? phi(t, a) : 0.0; }
};

enum class HypothesisClass { TimeVaryingLipschitz, IntegralLipschitz, ParameterLipschitz };

inline const char* to_string(HypothesisClass c) {
  switch (c) {
    case HypothesisClass::TimeVaryingLipschitz: return "TimeVaryingLipschitz";
    case HypothesisClass::IntegralLipschitz: return "IntegralLipschitz";
    case HypothesisClass::ParameterLipschitz: return "ParameterLipschitz";
  }
  return "?";
}

inline HypothesisClass hypothesis_class_from_string(const std::string& s) {
  if (s == "TimeVaryingLipschitz") return HypothesisClass::TimeVaryingLipschitz;
  if (s == "IntegralLipschitz") return HypothesisClass::IntegralLipschitz;
  if (s == "ParameterLipschitz") return HypothesisClass::ParameterLipschitz;
  throw std::invalid_argument("unknown hypothesis class '" + s + "'");
}

using TimeWitness = std::function<double(double t, double s)>;
using TimeGapWitness = std::function<double(double t1, double t2, double s)>;
using Modulus = std::function<double(double)>;

struct HypothesisMetadata {
  HypothesisClass cls = HypothesisClass::TimeVaryingLipschitz;
  // class 1
  TimeWitness L_ts;
  double eps = 0.0;
  double eps_bar = 1.0;
  TimeGapWitness K_fn;
  Modulus rho;
  double C_T = 1.0;
  TimeGapWitness K_bar_fn;
  std::optional<double> alpha_exp;
  // classes 2 and 3
  double L_const = 0.0;
  Modulus psi;
  double L_bar = 0.0;

  /// Exponent eps_bar / (2 + eps_bar) of the factorial contraction model.
  double theta() const { return eps_bar / (2.0 + eps_bar); }
  /// Moment exponent 2 + eps for class 1, 2 otherwise.
  double moment_power() const { return cls == HypothesisClass::TimeVaryingLipschitz ? 2.0 + eps : 2.0; }
  double lipschitz_bound(double t, double s) const { return L_ts ? L_ts(t, s) : L_const; }
};

using FamilyParams = std::map<std::string, double>;

namespace detail {

inline double param(const FamilyParams& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline void reject_unknown(const std::string& name, const FamilyParams& p, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : p) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw std::invalid_argument("family '" + name + "': unknown parameter '" + k + "'");
    if (!std::isfinite(v)) throw std::invalid_argument("family '" + name + "': parameter '" + k + "' is not finite");
  }
}

// Witness shared by the Lipschitz fixtures whose kernels are smooth in t:
// K = |t1 - t2| with rho(u) = u^(2+eps), C_T = T covers every kernel below
// whose t-derivative is bounded by |x|.
inline void set_linear_time_witness(HypothesisMetadata& m, double horizon) {
  m.K_fn = [](double t1, double t2, double) { return std::abs(t1 - t2); };
  const double p = 2.0 + m.eps;
  m.rho = [p](double u) { return std::pow(u, p); };
  m.C_T = horizon;
}

}  // namespace detail

/// Odd log-type modulus m(u) = u sqrt(1 - ln u) on (0, 1/e], continued
/// affinely (C^1) beyond.
inline double log_modulus_profile(double x) {
  const double u = std::abs(x);
  constexpr double u0 = 1.0 / std::numbers::e;
  double m;
  if (u == 0.0) {
    m = 0.0;
  } else if (u <= u0) {
    m = u * std::sqrt(1.0 - std::log(u));
  } else {
    m = u0 * std::numbers::sqrt2 + 1.5 / std::numbers::sqrt2 * (u - u0);
  }
  return x < 0.0 ? -m : m;
}

/// v (1 - ln v) on [0, 1/e], v + 1/e beyond: concave, increasing, and
/// int_{0+} dv / ell(v) diverges.
inline double log_concave_modulus(double v) {
  constexpr double v0 = 1.0 / std::numbers::e;
  if (v <= 0.0) return 0.0;
  if (v <= v0) return v * (1.0 - std::log(v));
  return v + v0;
}

/// sup |m(x) - m(y)|^2 / ell(|x - y|^2) found by a dense scan; the declared
/// log_modulus witness is this constant rounded up.
inline constexpr double kLogModulusPsiScale = 1.32;

/// Built-in families: zero, linear_ode, conv_cosh, geometric, singular_kernel,
/// log_modulus, affine_param. `horizon` sizes the time witnesses.
inline std::pair<CoefficientFamily, HypothesisMetadata> builtin_family(const std::string& name,
                                                                       const FamilyParams& p = {},
                                                                       double horizon = 1.0) {
  if (!(horizon > 0.0 && std::isfinite(horizon))) throw std::invalid_argument("builtin_family: horizon must be > 0");
  CoefficientFamily f;
  HypothesisMetadata m;
  f.name = name;

  if (name == "zero") {
    detail::reject_unknown(name, p, {"phi"});
    const double c = detail::param(p, "phi", 1.0);
    f.phi = [c](double, double) { return c; };
    f.outer_time_free = true;
    m.L_ts = [](double, double) { return 1.0; };
    detail::set_linear_time_witness(m, horizon);
    m.K_fn = [](double, double, double) { return 0.0; };
  } else if (name == "linear_ode") {
    detail::reject_unknown(name, p, {"rate", "phi"});
    const double r = detail::param(p, "rate", 1.0);
    const double c = detail::param(p, "phi", 1.0);
    if (r == 0.0) throw std::invalid_argument("linear_ode: rate must be nonzero (use the zero family)");
    f.b = [r](double, double, double x, double) { return r * x; };
    f.phi = [c](double, double) { return c; };
    f.outer_time_free = true;
    const double l = std::abs(r);
    m.L_ts = [l](double, double) { return l; };
    detail::set_linear_time_witness(m, horizon);
  } else if (name == "conv_cosh") {
    detail::reject_unknown(name, p, {"phi"});
    const double c = detail::param(p, "phi", 1.0);
    f.b = [](double t, double s, double x, double) { return (t - s) * x; };
    f.phi = [c](double, double) { return c; };
    m.L_ts = [](double t, double s) { return t - s; };
    detail::set_linear_time_witness(m, horizon);
  } else if (name == "geometric") {
    detail::reject_unknown(name, p, {"phi"});
    const double c = detail::param(p, "phi", 1.0);
    f.sigma = [](double, double, double x, double) { return x; };
    f.phi = [c](double, double) { return c; };
    f.outer_time_free = true;
    m.L_ts = [](double, double) { return 1.0; };
    detail::set_linear_time_witness(m, horizon);
  } else if (name == "singular_kernel") {
    detail::reject_unknown(name, p, {"gamma", "eps", "eps_bar", "phi", "diagonal_offset"});
    const double g = detail::param(p, "gamma", 0.1);
    m.eps = detail::param(p, "eps", 0.5);
    m.eps_bar = detail::param(p, "eps_bar", 1.0);
    const double c = detail::param(p, "phi", 1.0);
    const double off = detail::param(p, "diagonal_offset", 1e-9);
    if (!(m.eps >= 0.0 && m.eps < m.eps_bar))
      throw std::invalid_argument("singular_kernel: need 0 <= eps < eps_bar");
    if (!(g > 0.0 && g * (2.0 + m.eps_bar) < 1.0))
      throw std::invalid_argument("singular_kernel: need gamma > 0 and gamma * (2 + eps_bar) < 1");
    if (!(off > 0.0)) throw std::invalid_argument("singular_kernel: diagonal_offset must be > 0");
    const Kernel k = [g, off](double t, double s, double x, double) {
      return std::pow(std::max(t - s, off), -g) * x;
    };
    f.b = k;
    f.sigma = k;
    f.phi = [c](double, double) { return c; };
    m.L_ts = [g, off](double t, double s) { return 2.0 * std::pow(std::max(t - s, off), -g); };
    const double q = 2.0 + m.eps;
    m.K_fn = [g, q, off](double t1, double t2, double s) {
      const double d = std::pow(std::max(t2 - s, off), -g) - std::pow(std::max(t1 - s, off), -g);
      return std::pow(2.0, 1.0 / q) * std::abs(d);
    };
    // int_0^{t2} |(t2-s)^-g - (t1-s)^-g|^q ds <= u^{1-gq} (1/(1-gq) + g^q/(q(g+1)-1)), u = t1 - t2.
    const double gq = g * q;
    m.rho = [gq](double u) { return std::pow(u, 1.0 - gq); };
    m.C_T = 2.0 * (1.0 / (1.0 - gq) + std::pow(g, q) / (q * (g + 1.0) - 1.0));
  } else if (name == "log_modulus") {
    detail::reject_unknown(name, p, {"amplitude", "phi"});
    const double a = detail::param(p, "amplitude", 0.5);
    const double c = detail::param(p, "phi", 1.0);
    if (!(a > 0.0)) throw std::invalid_argument("log_modulus: amplitude must be > 0");
    f.b = [a](double, double, double x, double) { return a * log_modulus_profile(x); };
    f.phi = [c](double, double) { return c; };
    f.outer_time_free = true;
    m.cls = HypothesisClass::IntegralLipschitz;
    const double k = kLogModulusPsiScale * a * a;
    m.psi = [k](double v) { return k * log_concave_modulus(v); };
    m.L_const = 1.2 * a;
    m.rho = [](double u) { return u; };
  } else if (name == "affine_param") {
    detail::reject_unknown(name, p, {"forcing_only", "alpha_max"});
    const bool forcing_only = detail::param(p, "forcing_only", 0.0) != 0.0;
    const double amax = detail::param(p, "alpha_max", 0.5);
    if (!(amax >= 0.0)) throw std::invalid_argument("affine_param: alpha_max must be >= 0");
    f.parameterized = true;
    f.outer_time_free = true;
    f.phi = [](double, double alpha) { return alpha; };
    m.cls = HypothesisClass::ParameterLipschitz;
    m.rho = [](double u) { return u; };
    if (forcing_only) {
      m.L_const = 1.0;
      m.L_bar = 1.0;
    } else {
      f.b = [](double, double, double x, double alpha) { return alpha + x; };
      f.sigma = [](double, double, double x, double alpha) { return alpha + x; };
      // Lipschitz part needs L >= 2; growth 2 (alpha + x)^2 <= 2 (1 + alpha^2)(1 + x^2) needs L >= 2 (1 + alpha_max^2).
      m.L_const = std::max(2.0, 2.0 * (1.0 + amax * amax));
      m.L_bar = 3.0;
    }
  } else {
    throw std::invalid_argument("unknown family '" + name +
                                "' (expected zero, linear_ode, conv_cosh, geometric, singular_kernel, "
                                "log_modulus or affine_param)");
  }
  return {std::move(f), std::move(m)};
}

// ---- audits ----

struct SamplerConfig {
  std::size_t samples = 4096;
  std::uint64_t seed = 20240517;
  double horizon = 1.0;
  double x_range = 4.0;
  double alpha_low = 0.0;
  double alpha_high = 0.5;
  double slack = 1e-9;
};

struct AuditSample {
  double t = 0, s = 0, x = 0, y = 0, alpha = 0, beta = 0;
};

struct AuditCheck {
  std::string name;
  double max_ratio = 0.0;
  AuditSample worst;
  bool passed = true;
};

struct AuditReport {
  std::string audit;
  double max_ratio = 0.0;
  std::optional<AuditSample> violation;
  std::vector<AuditCheck> checks;
  bool passed = true;

  void add(AuditCheck c) {
    if (c.max_ratio > max_ratio || checks.empty()) max_ratio = std::max(max_ratio, c.max_ratio);
    if (!c.passed) {
      if (passed) violation = c.worst;
      passed = false;
    }
    checks.push_back(std::move(c));
  }
};

namespace detail {

// Ratios within a few ulps of the bound count as attaining it.
inline bool within(double ratio, double slack) { return ratio <= 1.0 + slack + 8.0 * std::numeric_limits<double>::epsilon(); }

// |u - v| less the rounding noise of two evaluations of magnitude |u|, |v|;
// keeps exact fixtures from failing on cancellation.
inline double rounded_gap(double u, double v) {
  const double noise = 4.0 * std::numeric_limits<double>::epsilon() * (std::abs(u) + std::abs(v));
  return std::max(0.0, std::abs(u - v) - noise);
}

inline double ratio_of(double lhs, double bound) {
  if (lhs == 0.0) return 0.0;
  if (bound <= 0.0) return std::numeric_limits<double>::infinity();
  return lhs / bound;
}

template <class Draw, class Ratio>
AuditCheck run_check(const std::string& name, const SamplerConfig& cfg, std::uint32_t tag, Draw&& draw, Ratio&& ratio) {
  std::vector<double> r(cfg.samples);
  std::vector<AuditSample> smp(cfg.samples);
  parallel_for(cfg.samples, [&](std::size_t i) {
    rng::Stream st(cfg.seed, i, tag);
    smp[i] = draw(st);
    r[i] = ratio(smp[i]);
  });
  AuditCheck c;
  c.name = name;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (std::isnan(r[i]) || r[i] > c.max_ratio) {
      c.max_ratio = std::isnan(r[i]) ? std::numeric_limits<double>::infinity() : r[i];
      c.worst = smp[i];
    }
  }
  c.passed = within(c.max_ratio, cfg.slack);
  return c;
}

inline AuditSample draw_pair(rng::Stream& st, const SamplerConfig& cfg, bool close_pairs) {
  AuditSample a;
  a.t = cfg.horizon * (1.0 - st.uniform()) + cfg.horizon * 1e-12;
  a.t = std::min(a.t, cfg.horizon);
  a.s = a.t * (1.0 - st.uniform());
  a.x = st.uniform(-cfg.x_range, cfg.x_range);
  if (close_pairs) {
    // log-uniform separation probes the small-difference regime of a modulus
    const double mag = std::exp(st.uniform(std::log(1e-12), std::log(2.0 * cfg.x_range)));
    a.y = a.x + (st.uniform() < 0.5 ? -mag : mag);
  } else {
    a.y = st.uniform(-cfg.x_range, cfg.x_range);
  }
  a.alpha = st.uniform(cfg.alpha_low, cfg.alpha_high);
  a.beta = st.uniform(cfg.alpha_low, cfg.alpha_high);
  return a;
}

}  // namespace detail

/// Lipschitz-in-x and linear-growth bounds against L(t,s) (class 1) or the
/// constant L (classes 2 and 3). Growth exponent is 2 + eps for class 1;
/// class 3 uses the sum-of-squares form with L unsquared.
inline AuditReport audit_lipschitz(const CoefficientFamily& f, const HypothesisMetadata& m,
                                   const SamplerConfig& cfg = {}) {
  if (!m.L_ts && !(m.L_const > 0.0)) throw std::invalid_argument("audit_lipschitz: metadata has no Lipschitz witness");
  AuditReport rep;
  rep.audit = "lipschitz";
  rep.add(detail::run_check(
      "lipschitz_in_x", cfg, 1, [&](rng::Stream& st) { return detail::draw_pair(st, cfg, false); },
      [&](const AuditSample& a) {
        const double lhs = detail::rounded_gap(f.eval_b(a.t, a.s, a.x, a.alpha), f.eval_b(a.t, a.s, a.y, a.alpha)) +
                           detail::rounded_gap(f.eval_h(a.t, a.s, a.x, a.alpha), f.eval_h(a.t, a.s, a.y, a.alpha)) +
                           detail::rounded_gap(f.eval_sigma(a.t, a.s, a.x, a.alpha), f.eval_sigma(a.t, a.s, a.y, a.alpha));
        return detail::ratio_of(lhs, m.lipschitz_bound(a.t, a.s) * std::abs(a.x - a.y));
      }));
  rep.add(detail::run_check(
      "linear_growth", cfg, 2, [&](rng::Stream& st) { return detail::draw_pair(st, cfg, false); },
      [&](const AuditSample& a) {
        const double b = std::abs(f.eval_b(a.t, a.s, a.x, a.alpha));
        const double h = std::abs(f.eval_h(a.t, a.s, a.x, a.alpha));
        const double s = std::abs(f.eval_sigma(a.t, a.s, a.x, a.alpha));
        const double L = m.lipschitz_bound(a.t, a.s);
        switch (m.cls) {
          case HypothesisClass::TimeVaryingLipschitz: {
            const double q = 2.0 + m.eps;
            return detail::ratio_of(std::pow(b, q) + std::pow(h, q) + std::pow(s, q),
                                    std::pow(L, q) * (1.0 + std::pow(std::abs(a.x), q)));
          }
          case HypothesisClass::IntegralLipschitz:
            return detail::ratio_of(b * b + h * h + s * s, L * L * (1.0 + a.x * a.x));
          case HypothesisClass::ParameterLipschitz:
            return detail::ratio_of(b * b + h * h + s * s, L * (1.0 + a.x * a.x));
        }
        return 0.0;
      }));
  return rep;
}

/// sup over t in (0, T] (sampled on `t_points` equally spaced times) of
/// int_0^t k(t, s)^p ds, by tanh-sinh quadrature.
inline double sup_kernel_power_integral(const TimeWitness& k, double p, double horizon, std::size_t t_points = 64) {
  boost::math::quadrature::tanh_sinh<double> q;
  double best = 0.0;
  for (std::size_t i = 1; i <= t_points; ++i) {
    const double t = horizon * static_cast<double>(i) / static_cast<double>(t_points);
    const double v = q.integrate([&](double s) { return std::pow(k(t, s), p); }, 0.0, t);
    best = std::max(best, v);
  }
  return best;
}

/// Time regularity in the outer variable. Class 1: pointwise bound with K and
/// the aggregate int_0^{t2} K^{2+eps} ds <= C_T rho(t1 - t2) by quadrature,
/// plus the sigma-only bound with K_bar when declared. Classes 2 and 3:
/// sum of squared differences <= rho(t1 - t2).
inline AuditReport audit_time_regularity(const CoefficientFamily& f, const HypothesisMetadata& m,
                                         const SamplerConfig& cfg = {}) {
  if (!m.rho) throw std::invalid_argument("audit_time_regularity: metadata has no modulus rho");
  AuditReport rep;
  rep.audit = "time_regularity";
  // t = t1, y = t2 <= t1, s <= t2
  const auto draw = [&](rng::Stream& st) {
    AuditSample a;
    const double u = cfg.horizon * (1.0 - st.uniform());
    const double v = cfg.horizon * (1.0 - st.uniform());
    a.t = std::max(u, v);
    a.y = std::min(u, v);
    if (a.t == a.y) a.y = a.t * 0.5;
    a.s = a.y * (1.0 - st.uniform());
    a.x = st.uniform(-cfg.x_range, cfg.x_range);
    a.alpha = st.uniform(cfg.alpha_low, cfg.alpha_high);
    return a;
  };
  const auto diffs = [&](const AuditSample& a) {
    return std::array<double, 3>{
        detail::rounded_gap(f.eval_b(a.t, a.s, a.x, a.alpha), f.eval_b(a.y, a.s, a.x, a.alpha)),
        detail::rounded_gap(f.eval_h(a.t, a.s, a.x, a.alpha), f.eval_h(a.y, a.s, a.x, a.alpha)),
        detail::rounded_gap(f.eval_sigma(a.t, a.s, a.x, a.alpha), f.eval_sigma(a.y, a.s, a.x, a.alpha))};
  };

  if (m.cls == HypothesisClass::TimeVaryingLipschitz) {
    if (!m.K_fn) throw std::invalid_argument("audit_time_regularity: class-1 metadata needs K");
    const double q = 2.0 + m.eps;
    rep.add(detail::run_check("pointwise_K", cfg, 3, draw, [&](const AuditSample& a) {
      const auto d = diffs(a);
      const double lhs = std::pow(d[0], q) + std::pow(d[1], q) + std::pow(d[2], q);
      return detail::ratio_of(lhs, std::pow(m.K_fn(a.t, a.y, a.s), q) * (1.0 + std::pow(std::abs(a.x), q)));
    }));
    SamplerConfig few = cfg;
    few.samples = std::min<std::size_t>(cfg.samples, 128);
    boost::math::quadrature::tanh_sinh<double> quad;
    rep.add(detail::run_check("integrated_K", few, 4, draw, [&](const AuditSample& a) {
      const double lhs = quad.integrate([&](double s) { return std::pow(m.K_fn(a.t, a.y, s), q); }, 0.0, a.y);
      return detail::ratio_of(lhs, m.C_T * m.rho(a.t - a.y));
    }));
    if (m.K_bar_fn) {
      if (!m.alpha_exp || !(*m.alpha_exp > 1.0))
        throw std::invalid_argument("audit_time_regularity: K_bar needs an exponent alpha > 1");
      rep.add(detail::run_check("pointwise_K_bar", cfg, 5, draw, [&](const AuditSample& a) {
        const double lhs = std::pow(diffs(a)[2], q);
        return detail::ratio_of(lhs, std::pow(m.K_bar_fn(a.t, a.y, a.s), q) * (1.0 + std::pow(std::abs(a.x), q)));
      }));
      const double al = *m.alpha_exp;
      rep.add(detail::run_check("integrated_K_bar", few, 6, draw, [&](const AuditSample& a) {
        const double lhs = quad.integrate([&](double s) { return std::pow(m.K_bar_fn(a.t, a.y, s), q); }, 0.0, a.y);
        return detail::ratio_of(lhs, m.C_T * std::pow(a.t - a.y, al));
      }));
    }
  } else {
    rep.add(detail::run_check("squared_modulus", cfg, 7, draw, [&](const AuditSample& a) {
      const auto d = diffs(a);
      return detail::ratio_of(d[0] * d[0] + d[1] * d[1] + d[2] * d[2], m.rho(a.t - a.y));
    }));
  }
  return rep;
}

struct DivergenceProbe {
  std::vector<double> partial_sums;  // S_k = sum_{q<=k} int_{2^-(q+1)}^{2^-q} ds / psi(s)
  double final_sum = 0.0;
  double decay_exponent = 0.0;  // block integrals ~ q^{-decay_exponent} over the upper half of blocks
  double threshold = 10.0;
  bool diverges = false;
};

/// Dyadic-block probe of int_{0+} ds / psi(s) = infinity. Divergence is
/// reported when the partial sum reaches `threshold` by k_max and the block
/// integrals decay no faster than q^{-(1 + exponent_slack)}.
inline DivergenceProbe divergence_probe(const Modulus& psi, std::size_t k_max = 60, double threshold = 10.0,
                                        double exponent_slack = 0.1) {
  if (k_max < 4) throw std::invalid_argument("divergence_probe: k_max must be >= 4");
  DivergenceProbe d;
  d.threshold = threshold;
  std::vector<double> blocks(k_max + 1);
  double acc = 0.0;
  for (std::size_t q = 0; q <= k_max; ++q) {
    const double hi = std::ldexp(1.0, -static_cast<int>(q));
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [&](double s) { return 1.0 / psi(s); }, hi * 0.5, hi, 8, 1e-12);
    blocks[q] = v;
    acc += v;
    d.partial_sums.push_back(acc);
  }
  d.final_sum = acc;
  // least-squares slope of log block vs log q over q in [k_max/2, k_max]
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t q = k_max / 2; q <= k_max; ++q) {
    if (!(blocks[q] > 0.0) || !std::isfinite(blocks[q])) continue;
    const double x = std::log(static_cast<double>(q));
    const double y = std::log(blocks[q]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  d.decay_exponent = n >= 2 ? -(n * sxy - sx * sy) / (n * sxx - sx * sx) : std::numeric_limits<double>::infinity();
  d.diverges = std::isfinite(acc) ? (acc >= threshold && d.decay_exponent <= 1.0 + exponent_slack)
                                  : true;
  return d;
}

struct IntegralLipschitzReport {
  AuditReport audit;
  DivergenceProbe divergence;
  bool concave = true;
  bool passed = false;
};

/// Midpoint concavity, monotonicity and psi(0) = 0 on log- and
/// linearly-spaced points of (0, v_max].
inline bool modulus_is_concave_increasing(const Modulus& psi, double v_max = 64.0, std::size_t points = 400) {
  if (psi(0.0) != 0.0) return false;
  std::vector<double> v;
  for (std::size_t i = 0; i < points; ++i) {
    v.push_back(std::exp(std::log(1e-14) + (std::log(v_max) - std::log(1e-14)) * static_cast<double>(i) /
                                               static_cast<double>(points - 1)));
    v.push_back(v_max * static_cast<double>(i + 1) / static_cast<double>(points));
  }
  std::sort(v.begin(), v.end());
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const double a = psi(v[i]), b = psi(v[i + 1]);
    if (b < a) return false;
    const double mid = psi(0.5 * (v[i] + v[i + 1]));
    if (mid < 0.5 * (a + b) - 1e-12 * std::max(1.0, std::abs(b))) return false;
  }
  for (std::size_t i = 0; i + 2 < v.size(); i += 7) {
    const double x = v[i], y = v[v.size() - 1 - i / 3];
    if (psi(0.5 * (x + y)) < 0.5 * (psi(x) + psi(y)) - 1e-12 * std::max(1.0, psi(y))) return false;
  }
  return true;
}

/// Class-2 audit: squared differences bounded by psi(|x - y|^2), growth
/// bounded by L^2 (1 + x^2), psi concave and increasing with psi(0) = 0, and
/// the Osgood divergence probe.
inline IntegralLipschitzReport audit_integral_lipschitz(const CoefficientFamily& f, const HypothesisMetadata& m,
                                                        const SamplerConfig& cfg = {}, std::size_t k_max = 60,
                                                        double threshold = 10.0) {
  if (!m.psi) throw std::invalid_argument("audit_integral_lipschitz: metadata has no modulus psi");
  IntegralLipschitzReport r;
  r.audit.audit = "integral_lipschitz";
  r.audit.add(detail::run_check(
      "psi_bound", cfg, 8, [&](rng::Stream& st) { return detail::draw_pair(st, cfg, true); },
      [&](const AuditSample& a) {
        const double db = detail::rounded_gap(f.eval_b(a.t, a.s, a.x, a.alpha), f.eval_b(a.t, a.s, a.y, a.alpha));
        const double dh = detail::rounded_gap(f.eval_h(a.t, a.s, a.x, a.alpha), f.eval_h(a.t, a.s, a.y, a.alpha));
        const double ds = detail::rounded_gap(f.eval_sigma(a.t, a.s, a.x, a.alpha), f.eval_sigma(a.t, a.s, a.y, a.alpha));
        const double gap = a.x - a.y;
        return detail::ratio_of(db * db + dh * dh + ds * ds, m.psi(gap * gap));
      }));
  if (m.L_const > 0.0) {
    r.audit.add(detail::run_check(
        "linear_growth", cfg, 9, [&](rng::Stream& st) { return detail::draw_pair(st, cfg, false); },
        [&](const AuditSample& a) {
          const double b = f.eval_b(a.t, a.s, a.x, a.alpha);
          const double h = f.eval_h(a.t, a.s, a.x, a.alpha);
          const double s = f.eval_sigma(a.t, a.s, a.x, a.alpha);
          return detail::ratio_of(b * b + h * h + s * s, m.L_const * m.L_const * (1.0 + a.x * a.x));
        }));
  }
  r.concave = modulus_is_concave_increasing(m.psi);
  r.divergence = divergence_probe(m.psi, k_max, threshold);
  r.passed = r.audit.passed && r.concave && r.divergence.diverges;
  return r;
}

/// |phi_a - phi_b| + |b_a - b_b| + |h_a - h_b| + |sigma_a - sigma_b| <= L_bar |a - b|.
inline AuditReport audit_parameter_lipschitz(const CoefficientFamily& f, const HypothesisMetadata& m,
                                             const SamplerConfig& cfg = {}) {
  if (!(m.L_bar > 0.0)) throw std::invalid_argument("audit_parameter_lipschitz: metadata has no L_bar > 0");
  AuditReport rep;
  rep.audit = "parameter_lipschitz";
  rep.add(detail::run_check(
      "parameter_bound", cfg, 10, [&](rng::Stream& st) { return detail::draw_pair(st, cfg, false); },
      [&](const AuditSample& a) {
        const double lhs = detail::rounded_gap(f.eval_phi(a.t, a.alpha), f.eval_phi(a.t, a.beta)) +
                           detail::rounded_gap(f.eval_b(a.t, a.s, a.x, a.alpha), f.eval_b(a.t, a.s, a.x, a.beta)) +
                           detail::rounded_gap(f.eval_h(a.t, a.s, a.x, a.alpha), f.eval_h(a.t, a.s, a.x, a.beta)) +
                           detail::rounded_gap(f.eval_sigma(a.t, a.s, a.x, a.alpha), f.eval_sigma(a.t, a.s, a.x, a.beta));
        return detail::ratio_of(lhs, m.L_bar * std::abs(a.alpha - a.beta));
      }));
  return rep;
}

/// Runs the audits belonging to the metadata's class and reports whether all pass.
struct ClassAudit {
  std::vector<AuditReport> reports;
  std::optional<DivergenceProbe> divergence;
  bool concave = true;
  bool passed = true;
};

inline ClassAudit audit_family(const CoefficientFamily& f, const HypothesisMetadata& m, const SamplerConfig& cfg = {}) {
  ClassAudit out;
  const auto push = [&](AuditReport r) {
    out.passed = out.passed && r.passed;
    out.reports.push_back(std::move(r));
  };
  switch (m.cls) {
    case HypothesisClass::TimeVaryingLipschitz:
      push(audit_lipschitz(f, m, cfg));
      push(audit_time_regularity(f, m, cfg));
      break;
    case HypothesisClass::IntegralLipschitz: {
      auto r = audit_integral_lipschitz(f, m, cfg);
      out.divergence = r.divergence;
      out.concave = r.concave;
      out.passed = r.passed;
      out.reports.push_back(std::move(r.audit));
      push(audit_time_regularity(f, m, cfg));
      break;
    }
    case HypothesisClass::ParameterLipschitz:
      push(audit_lipschitz(f, m, cfg));
      push(audit_time_regularity(f, m, cfg));
      push(audit_parameter_lipschitz(f, m, cfg));
      break;
  }
  return out;
}

}  // namespace gsvie
