#pragma once

// Volatility-uncertainty model: the sublinear generator G, uniform time
// grids, piecewise-constant quadratic-variation controls, and sampled
// G-Brownian scenarios that share Gaussian draws across controls.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gsvie/errors.hpp"
#include "gsvie/parallel.hpp"
#include "gsvie/philox.hpp"

namespace gsvie {

/// Volatility band [sigma_low, sigma_high] of the G-Brownian motion.
class GParams {
 public:
  GParams(double sigma_low, double sigma_high) : low_(sigma_low), high_(sigma_high) {
    if (!(std::isfinite(low_) && std::isfinite(high_) && low_ > 0.0 && low_ <= high_)) {
      throw std::invalid_argument("GParams invariant violated: need 0 < sigma_low <= sigma_high < inf (got sigma_low=" +
                                  std::to_string(low_) + ", sigma_high=" + std::to_string(high_) + ")");
    }
  }

  double sigma_low() const noexcept { return low_; }
  double sigma_high() const noexcept { return high_; }
  double variance_low() const noexcept { return low_ * low_; }
  double variance_high() const noexcept { return high_ * high_; }
  bool degenerate() const noexcept { return low_ == high_; }

  friend bool operator==(const GParams&, const GParams&) = default;

 private:
  double low_;
  double high_;
};

/// G(x) = (sigma_high^2 x^+ - sigma_low^2 x^-) / 2.
inline double g_function(double x, const GParams& g) {
  if (!std::isfinite(x)) throw std::invalid_argument("g_function: argument must be finite");
  const double pos = x > 0.0 ? x : 0.0;
  const double neg = x < 0.0 ? -x : 0.0;
  return 0.5 * (g.variance_high() * pos - g.variance_low() * neg);
}

/// Uniform grid t_i = i T / N, i = 0..N.
class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    if (!(std::isfinite(horizon) && horizon > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be finite and > 0");
    if (steps == 0) throw std::invalid_argument("TimeGrid: steps must be >= 1");
    if (steps > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("TimeGrid: steps exceeds 2^32-1");
    dt_ = horizon / static_cast<double>(steps);
    times_.resize(steps + 1);
    for (std::size_t i = 0; i < steps; ++i) times_[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
    times_[steps] = horizon;
  }

  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return steps_; }
  double dt() const noexcept { return dt_; }
  double time(std::size_t i) const { return times_.at(i); }
  std::span<const double> times() const noexcept { return times_; }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
    return a.horizon_ == b.horizon_ && a.steps_ == b.steps_;
  }

 private:
  double horizon_;
  std::size_t steps_;
  double dt_;
  std::vector<double> times_;
};

/// Per-interval quadratic-variation density lambda_j in [sigma_low^2, sigma_high^2].
class VolatilityControl {
 public:
  VolatilityControl(std::vector<double> densities, const GParams& g) : densities_(std::move(densities)) {
    if (densities_.empty()) throw std::invalid_argument("VolatilityControl: no densities");
    volatilities_.reserve(densities_.size());
    for (std::size_t j = 0; j < densities_.size(); ++j) {
      const double l = densities_[j];
      if (!(l >= g.variance_low() && l <= g.variance_high())) {
        throw std::invalid_argument("VolatilityControl: density " + std::to_string(l) + " at interval " +
                                    std::to_string(j) + " lies outside [sigma_low^2, sigma_high^2]");
      }
      volatilities_.push_back(std::sqrt(l));
    }
  }

  std::size_t size() const noexcept { return densities_.size(); }
  double density(std::size_t j) const noexcept { return densities_[j]; }
  double volatility(std::size_t j) const noexcept { return volatilities_[j]; }
  std::span<const double> densities() const noexcept { return densities_; }

  bool is_constant() const noexcept {
    for (double l : densities_)
      if (l != densities_.front()) return false;
    return true;
  }

  friend bool operator==(const VolatilityControl& a, const VolatilityControl& b) noexcept {
    return a.densities_ == b.densities_;
  }

 private:
  std::vector<double> densities_;
  std::vector<double> volatilities_;
};

inline constexpr std::size_t kDefaultLatticeCap = 4096;

/// All levels^pieces piecewise-constant controls on `pieces` equal blocks
/// (the last block absorbs the remainder), each block at one of `levels`
/// equally spaced densities in the band. Ordered lexicographically by block
/// level, first block most significant, so the constant lower extreme is
/// first and the constant upper extreme last. Duplicates (degenerate band)
/// are removed.
inline std::vector<VolatilityControl> build_control_lattice(const GParams& g, const TimeGrid& grid,
                                                            std::size_t levels, std::size_t pieces,
                                                            std::size_t cap = kDefaultLatticeCap) {
  if (levels == 0) throw std::invalid_argument("build_control_lattice: levels must be >= 1");
  if (pieces == 0 || pieces > grid.steps())
    throw std::invalid_argument("build_control_lattice: need 1 <= pieces <= grid steps");
  if (levels == 1 && !g.degenerate())
    throw std::invalid_argument("build_control_lattice: levels must be >= 2 so both constant extremes are included");

  const double lo = g.variance_low();
  const double hi = g.variance_high();
  std::vector<double> values;
  if (g.degenerate()) {
    values.push_back(lo);
  } else {
    for (std::size_t k = 0; k < levels; ++k) {
      double v = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(levels - 1);
      if (k + 1 == levels) v = hi;
      values.push_back(std::min(std::max(v, lo), hi));
    }
  }

  std::size_t count = 1;
  for (std::size_t p = 0; p < pieces; ++p) {
    if (count > cap / values.size() + 1) throw OversizeLatticeError(std::numeric_limits<std::size_t>::max(), cap);
    count *= values.size();
  }
  if (count > cap) throw OversizeLatticeError(count, cap);

  const std::size_t n = grid.steps();
  const std::size_t block = n / pieces;
  std::vector<VolatilityControl> out;
  out.reserve(count);
  std::vector<std::size_t> digits(pieces, 0);
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::size_t rem = idx;
    for (std::size_t p = pieces; p-- > 0;) {
      digits[p] = rem % values.size();
      rem /= values.size();
    }
    std::vector<double> dens(n);
    for (std::size_t j = 0; j < n; ++j) dens[j] = values[digits[std::min(j / block, pieces - 1)]];
    out.emplace_back(std::move(dens), g);
  }
  return out;
}

/// One sampled path under one control: dW_j ~ N(0, dt), dB_j = sqrt(lambda_j) dW_j,
/// d<B>_j = lambda_j dt. The Gaussian buffer may be shared with scenarios under
/// other controls (common random numbers).
class Scenario {
 public:
  Scenario(std::shared_ptr<const VolatilityControl> control, std::shared_ptr<const std::vector<double>> dw, double dt,
           std::uint64_t seed, std::uint64_t replica, std::size_t control_index = 0, bool twin = false)
      : control_(std::move(control)),
        dw_(std::move(dw)),
        dt_(dt),
        seed_(seed),
        replica_(replica),
        control_index_(control_index),
        twin_(twin) {
    if (!control_ || !dw_ || control_->size() != dw_->size())
      throw std::invalid_argument("Scenario: control does not conform to the Gaussian increments");
  }

  std::size_t steps() const noexcept { return dw_->size(); }
  double dt() const noexcept { return dt_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t replica() const noexcept { return replica_; }
  std::size_t control_index() const noexcept { return control_index_; }
  bool twin() const noexcept { return twin_; }
  const VolatilityControl& control() const noexcept { return *control_; }
  const std::shared_ptr<const std::vector<double>>& shared_dw() const noexcept { return dw_; }

  double dW(std::size_t j) const noexcept { return (*dw_)[j]; }
  double dB(std::size_t j) const noexcept { return control_->volatility(j) * (*dw_)[j]; }
  double dQV(std::size_t j) const noexcept { return control_->density(j) * dt_; }

  std::span<const double> dW_values() const noexcept { return *dw_; }

  std::vector<double> dB_values() const {
    std::vector<double> v(steps());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = dB(j);
    return v;
  }

  std::vector<double> dQV_values() const {
    std::vector<double> v(steps());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = dQV(j);
    return v;
  }

  /// B(t_i) = sum_{j<i} dB_j, with B(0) = 0.
  std::vector<double> path() const {
    std::vector<double> b(steps() + 1, 0.0);
    for (std::size_t j = 0; j < steps(); ++j) b[j + 1] = b[j] + dB(j);
    return b;
  }

 private:
  std::shared_ptr<const VolatilityControl> control_;
  std::shared_ptr<const std::vector<double>> dw_;
  double dt_;
  std::uint64_t seed_;
  std::uint64_t replica_;
  std::size_t control_index_;
  bool twin_;
};

namespace detail {

// Tag 0 is the primary stream; tag 1 feeds the post-branch part of twin paths.
inline std::vector<double> draw_increments(const TimeGrid& grid, std::uint64_t seed, std::uint64_t replica,
                                           std::size_t branch_step = std::numeric_limits<std::size_t>::max()) {
  const double sdt = std::sqrt(grid.dt());
  std::vector<double> dw(grid.steps());
  for (std::size_t j = 0; j < dw.size(); ++j) {
    const std::uint32_t tag = j >= branch_step ? 1u : 0u;
    dw[j] = sdt * rng::standard_normal({seed, replica, static_cast<std::uint32_t>(j), tag});
  }
  return dw;
}

}  // namespace detail

/// Samples one scenario; bit-identical for identical arguments.
inline Scenario simulate_scenario(const VolatilityControl& control, const TimeGrid& grid, std::uint64_t master_seed,
                                  std::uint64_t replica) {
  if (control.size() != grid.steps()) throw std::invalid_argument("simulate_scenario: control length != grid steps");
  auto dw = std::make_shared<const std::vector<double>>(detail::draw_increments(grid, master_seed, replica));
  return Scenario(std::make_shared<const VolatilityControl>(control), std::move(dw), grid.dt(), master_seed, replica);
}

/// Controls x replicas scenario set, control-major: index = c * R + r.
class Ensemble {
 public:
  Ensemble(GParams params, TimeGrid grid, std::vector<std::shared_ptr<const VolatilityControl>> controls,
           std::size_t replicas_per_control, std::uint64_t master_seed, std::vector<Scenario> scenarios)
      : params_(std::move(params)),
        grid_(std::move(grid)),
        controls_(std::move(controls)),
        replicas_(replicas_per_control),
        seed_(master_seed),
        scenarios_(std::move(scenarios)) {
    if (controls_.empty() || replicas_ == 0 || scenarios_.size() != controls_.size() * replicas_)
      throw std::invalid_argument("Ensemble: scenario count must equal controls x replicas");
  }

  const GParams& params() const noexcept { return params_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t control_count() const noexcept { return controls_.size(); }
  const VolatilityControl& control(std::size_t c) const { return *controls_.at(c); }
  const std::vector<std::shared_ptr<const VolatilityControl>>& controls() const noexcept { return controls_; }
  std::size_t replicas_per_control() const noexcept { return replicas_; }
  std::uint64_t master_seed() const noexcept { return seed_; }
  std::size_t size() const noexcept { return scenarios_.size(); }
  std::span<const Scenario> scenarios() const noexcept { return scenarios_; }
  const Scenario& scenario(std::size_t s) const { return scenarios_.at(s); }
  const Scenario& scenario(std::size_t c, std::size_t r) const { return scenarios_.at(index(c, r)); }
  std::size_t index(std::size_t c, std::size_t r) const noexcept { return c * replicas_ + r; }

 private:
  GParams params_;
  TimeGrid grid_;
  std::vector<std::shared_ptr<const VolatilityControl>> controls_;
  std::size_t replicas_;
  std::uint64_t seed_;
  std::vector<Scenario> scenarios_;
};

struct EnsembleOptions {
  std::size_t memory_budget_bytes = std::size_t{4} << 30;
  /// When set, each replica gets a twin whose Gaussian increments agree
  /// before this step and are redrawn from it on. Used to build ensembles
  /// that contain same-history pairs for adaptedness probes.
  std::size_t twin_branch_step = std::numeric_limits<std::size_t>::max();
};

inline std::size_t estimate_ensemble_bytes(const TimeGrid& grid, std::size_t controls, std::size_t buffers) {
  const std::size_t n = grid.steps();
  return buffers * n * sizeof(double) + controls * n * 2 * sizeof(double) + controls * buffers * sizeof(Scenario);
}

/// Builds every control x replica scenario. Replica r draws its Gaussian
/// increments from the stream keyed by (master_seed, r, j) regardless of the
/// control, and the buffer is shared by all controls.
inline Ensemble generate_ensemble(const GParams& params, const TimeGrid& grid,
                                  const std::vector<VolatilityControl>& controls, std::size_t replicas,
                                  std::uint64_t master_seed, const EnsembleOptions& opts = {}) {
  if (replicas == 0) throw std::invalid_argument("generate_ensemble: replicas must be >= 1");
  if (controls.empty()) throw std::invalid_argument("generate_ensemble: at least one control is required");
  for (const auto& c : controls) {
    if (c.size() != grid.steps()) throw std::invalid_argument("generate_ensemble: control length != grid steps");
    for (double l : c.densities())
      if (!(l >= params.variance_low() && l <= params.variance_high()))
        throw std::invalid_argument("generate_ensemble: control leaves the volatility band");
  }
  const bool twins = opts.twin_branch_step < grid.steps();
  const std::size_t buffers = twins ? 2 * replicas : replicas;
  const std::size_t bytes = estimate_ensemble_bytes(grid, controls.size(), buffers);
  if (bytes > opts.memory_budget_bytes) throw MemoryBudgetError(bytes, opts.memory_budget_bytes);

  std::vector<std::shared_ptr<const std::vector<double>>> dws(buffers);
  parallel_for(buffers, [&](std::size_t b) {
    const std::size_t r = b % replicas;
    const bool twin = b >= replicas;
    dws[b] = std::make_shared<const std::vector<double>>(detail::draw_increments(
        grid, master_seed, r, twin ? opts.twin_branch_step : std::numeric_limits<std::size_t>::max()));
  });

  std::vector<std::shared_ptr<const VolatilityControl>> ctrl;
  ctrl.reserve(controls.size());
  for (const auto& c : controls) ctrl.push_back(std::make_shared<const VolatilityControl>(c));

  std::vector<Scenario> scen;
  scen.reserve(controls.size() * buffers);
  for (std::size_t c = 0; c < ctrl.size(); ++c)
    for (std::size_t b = 0; b < buffers; ++b)
      scen.emplace_back(ctrl[c], dws[b], grid.dt(), master_seed, b % replicas, c, b >= replicas);
  return Ensemble(params, grid, std::move(ctrl), buffers, master_seed, std::move(scen));
}

/// Aggregates `factor` consecutive increments into one on a grid with
/// N / factor steps. Sums of independent N(0, dt) draws are N(0, factor dt),
/// so the result is a valid ensemble coupled path-by-path to the input.
inline Ensemble coarsen_ensemble(const Ensemble& fine, std::size_t factor) {
  const std::size_t n = fine.grid().steps();
  if (factor == 0 || n % factor != 0) throw std::invalid_argument("coarsen_ensemble: factor must divide the step count");
  TimeGrid grid(fine.grid().horizon(), n / factor);
  std::vector<std::shared_ptr<const VolatilityControl>> ctrl;
  for (const auto& c : fine.controls()) {
    std::vector<double> dens(grid.steps());
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      dens[k] = c->density(k * factor);
      for (std::size_t q = 1; q < factor; ++q)
        if (c->density(k * factor + q) != dens[k])
          throw std::invalid_argument("coarsen_ensemble: control is not constant on aggregated intervals");
    }
    ctrl.push_back(std::make_shared<const VolatilityControl>(std::move(dens), fine.params()));
  }
  std::map<const std::vector<double>*, std::shared_ptr<const std::vector<double>>> merged;
  std::vector<Scenario> scen;
  scen.reserve(fine.size());
  for (const auto& s : fine.scenarios()) {
    auto& slot = merged[s.shared_dw().get()];
    if (!slot) {
      std::vector<double> dw(grid.steps(), 0.0);
      for (std::size_t k = 0; k < grid.steps(); ++k)
        for (std::size_t q = 0; q < factor; ++q) dw[k] += s.dW(k * factor + q);
      slot = std::make_shared<const std::vector<double>>(std::move(dw));
    }
    scen.emplace_back(ctrl[s.control_index()], slot, grid.dt(), s.seed(), s.replica(), s.control_index(), s.twin());
  }
  return Ensemble(fine.params(), grid, std::move(ctrl), fine.replicas_per_control(), fine.master_seed(),
                  std::move(scen));
}

}  // namespace gsvie
