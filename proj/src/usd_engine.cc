// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/usd_engine.h"

#include <algorithm>
#include <cmath>
#include <random>

namespace usdr {

std::string ToString(EstimatorKind k) {
  return k == EstimatorKind::kMasking ? "masking" : "mapping";
}

EstimatorKind ParseEstimatorKind(const std::string& s) {
  if (s == "masking") return EstimatorKind::kMasking;
  if (s == "mapping") return EstimatorKind::kMapping;
  throw ConfigError("unknown estimator kind '" + s + "'");
}

std::string ToString(InitKind k) {
  return k == InitKind::kUnitMask ? "unit_mask" : "zeros";
}

InitKind ParseInitKind(const std::string& s) {
  if (s == "unit_mask") return InitKind::kUnitMask;
  if (s == "zeros") return InitKind::kZeros;
  throw ConfigError("unknown init kind '" + s + "'");
}

namespace {

Complex ClampRi(Complex v, double bound) {
  return {std::clamp(v.real(), -bound, bound),
          std::clamp(v.imag(), -bound, bound)};
}

CMatrix ClampedProduct(const CMatrix& mask, const CMatrix& y, double bound) {
  if (mask.rows() != y.rows() || mask.cols() != y.cols())
    throw ShapeError("mask and mixture differ in geometry");
  CMatrix out(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    out(i) = ClampRi(mask(i), bound) * y(i);
  return out;
}

// dL/dM from dL/dS for S = clamp(M) .* Y.
CMatrix MaskChainRule(const CMatrix& grad_s, const CMatrix& mask,
                      const CMatrix& y, double bound) {
  CMatrix g(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const Complex v = std::conj(y(i)) * grad_s(i);
    g(i) = Complex(std::abs(mask(i).real()) > bound ? 0.0 : v.real(),
                   std::abs(mask(i).imag()) > bound ? 0.0 : v.imag());
  }
  return g;
}

// Reconstructions of every mic from (S, V) with fixed filters. They are
// linear in (S, V).
std::vector<CMatrix> Reconstruct(const CMatrix& s_hat, const CMatrix* v_hat, int p,
                                 int q, const FilterSet& filters,
                                 const LossConfig& cfg) {
  const std::vector<int> ref_off = cfg.RefStack().Offsets();
  const std::vector<int> nonref_off = cfg.NonrefStack().Offsets();
  const std::vector<int> garbage_off =
      v_hat ? cfg.GarbageStack().Offsets() : std::vector<int>{};
  std::vector<CMatrix> rec(p);
  for (int m = 0; m < p; ++m) {
    if (m == q) {
      rec[m] = s_hat;
      AccumulateFiltered(filters.ref.coeffs, ref_off, s_hat, rec[m]);
    } else {
      rec[m] = CMatrix::Zero(s_hat.rows(), s_hat.cols());
      AccumulateFiltered(filters.nonref[m].coeffs, nonref_off, s_hat, rec[m]);
    }
    if (v_hat)
      AccumulateFiltered(filters.garbage[m].coeffs, garbage_off, *v_hat, rec[m]);
  }
  return rec;
}

// Weighted sum of per-mic distances; silent channels contribute nothing.
double LossOf(const std::vector<CMatrix>& y, const std::vector<CMatrix>& rec, int q,
              const LossConfig& cfg) {
  double ref_loss = 0.0, nonref_sum = 0.0;
  for (size_t m = 0; m < y.size(); ++m) {
    double loss;
    try {
      loss = Distance(cfg.distance, y[m], rec[m]);
    } catch (const DegenerateInputError&) {
      continue;
    }
    if (static_cast<int>(m) == q)
      ref_loss = loss;
    else
      nonref_sum += loss;
  }
  return ref_loss + cfg.alpha * nonref_sum;
}

// Gradient of LossOf with respect to S (and V) through the fixed filters.
void Backward(const std::vector<CMatrix>& y, const std::vector<CMatrix>& rec, int q,
              const FilterSet& filters, const LossConfig& cfg, CMatrix& grad_s,
              CMatrix* grad_v) {
  const std::vector<int> ref_off = cfg.RefStack().Offsets();
  const std::vector<int> nonref_off = cfg.NonrefStack().Offsets();
  const std::vector<int> garbage_off =
      grad_v ? cfg.GarbageStack().Offsets() : std::vector<int>{};
  grad_s = CMatrix::Zero(rec[0].rows(), rec[0].cols());
  if (grad_v) *grad_v = CMatrix::Zero(rec[0].rows(), rec[0].cols());
  for (int m = 0; m < static_cast<int>(y.size()); ++m) {
    CMatrix g;
    try {
      g = DistanceGradient(cfg.distance, y[m], rec[m]);
    } catch (const DegenerateInputError&) {
      continue;
    }
    if (m == q) {
      grad_s += g;
      AccumulateFilteredAdjoint(filters.ref.coeffs, ref_off, g, grad_s);
    } else {
      g *= cfg.alpha;
      AccumulateFilteredAdjoint(filters.nonref[m].coeffs, nonref_off, g, grad_s);
    }
    if (grad_v)
      AccumulateFilteredAdjoint(filters.garbage[m].coeffs, garbage_off, g, *grad_v);
  }
}

void CheckParams(const EstimatorParams& params, const LossConfig& cfg) {
  if (params.garbage.has_value() != cfg.garbage_L.has_value())
    throw ConfigError("garbage mask presence must match loss garbage_L");
}

}  // namespace

void EstimatorParams::Clamp() {
  if (kind == EstimatorKind::kMasking)
    values = values.unaryExpr([this](Complex v) { return ClampRi(v, bound); });
  if (garbage)
    *garbage = garbage->unaryExpr([this](Complex v) { return ClampRi(v, bound); });
}

CMatrix Forward(const EstimatorParams& params, const CMatrix& y_q) {
  if (params.kind == EstimatorKind::kMapping) {
    if (params.values.rows() != y_q.rows() || params.values.cols() != y_q.cols())
      throw ShapeError("estimate and mixture differ in geometry");
    return params.values;
  }
  return ClampedProduct(params.values, y_q, params.bound);
}

ComplexSpectrogram Forward(const EstimatorParams& params,
                           const ComplexSpectrogram& y_q) {
  return {Forward(params, y_q.data), y_q.config};
}

CMatrix ForwardGarbage(const EstimatorParams& params, const CMatrix& y_q) {
  if (!params.garbage) throw ConfigError("estimator has no garbage mask");
  return ClampedProduct(*params.garbage, y_q, params.bound);
}

MaskGradient ComputeMaskGradient(const EstimatorParams& params,
                                 const std::vector<CMatrix>& mixtures,
                                 int ref_mic, const FilterSet& filters,
                                 const LossConfig& cfg) {
  CheckParams(params, cfg);
  const CMatrix& y_q = mixtures.at(ref_mic);
  const CMatrix s = Forward(params, y_q);
  std::optional<CMatrix> v;
  if (params.garbage) v = ForwardGarbage(params, y_q);
  const std::vector<CMatrix> rec = Reconstruct(
      s, v ? &*v : nullptr, static_cast<int>(mixtures.size()), ref_mic, filters, cfg);
  CMatrix grad_s, grad_v;
  Backward(mixtures, rec, ref_mic, filters, cfg, grad_s, v ? &grad_v : nullptr);
  MaskGradient g;
  g.values = params.kind == EstimatorKind::kMasking
                 ? MaskChainRule(grad_s, params.values, y_q, params.bound)
                 : grad_s;
  if (params.garbage)
    g.garbage = MaskChainRule(grad_v, *params.garbage, y_q, params.bound);
  return g;
}

double FixedFilterLoss(const EstimatorParams& params,
                       const std::vector<CMatrix>& mixtures, int ref_mic,
                       const FilterSet& filters, const LossConfig& cfg) {
  CheckParams(params, cfg);
  const CMatrix& y_q = mixtures.at(ref_mic);
  const CMatrix s = Forward(params, y_q);
  std::optional<CMatrix> v;
  if (params.garbage) v = ForwardGarbage(params, y_q);
  return LossOf(mixtures,
                Reconstruct(s, v ? &*v : nullptr, static_cast<int>(mixtures.size()),
                            ref_mic, filters, cfg),
                ref_mic, cfg);
}

void OptimConfig::Validate() const {
  loss.Validate();
  if (max_outer_iters < 1) throw ConfigError("max_outer_iters must be >= 1");
  if (mask_steps < 0) throw ConfigError("mask_steps must be >= 0");
  if (!(step_size > 0.0)) throw ConfigError("step_size must be positive");
  if (!(step_decay > 0.0 && step_decay <= 1.0))
    throw ConfigError("step_decay must lie in (0, 1]");
  if (max_halvings < 0) throw ConfigError("max_halvings must be >= 0");
  if (!(convergence_tol > 0.0)) throw ConfigError("convergence_tol must be positive");
  if (!(increase_tol > 0.0)) throw ConfigError("increase_tol must be positive");
  if (init_jitter < 0.0) throw ConfigError("init_jitter must be >= 0");
  if (divergence_patience < 1) throw ConfigError("divergence_patience must be >= 1");
}

namespace {

// Step direction scaled to unit RMS. Mask gradients are divided by |Y| so
// that every T-F unit moves at a comparable rate; mapping gradients are
// multiplied by |Y| so that a mapping step changes S like the equivalent
// mask step would.
CMatrix Direction(const CMatrix& grad, const CMatrix& y_q, EstimatorKind kind) {
  CMatrix dir(grad.rows(), grad.cols());
  const double eps = 1e-8 * y_q.cwiseAbs().maxCoeff() + 1e-300;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double mag = std::abs(y_q(i));
    dir(i) = kind == EstimatorKind::kMasking ? grad(i) / (mag + eps)
                                             : grad(i) * mag;
  }
  const double rms = std::sqrt(dir.squaredNorm() / std::max<Eigen::Index>(1, dir.size()));
  if (rms > 0.0) dir /= rms;
  return dir;
}

bool OutsideBound(const CMatrix& m, double bound) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (std::abs(m(i).real()) > bound || std::abs(m(i).imag()) > bound) return true;
  return false;
}

// True when Clamp() would change the parameters.
bool ClampActive(const EstimatorParams& params) {
  if (params.kind == EstimatorKind::kMasking && OutsideBound(params.values, params.bound))
    return true;
  return params.garbage && OutsideBound(*params.garbage, params.bound);
}

FilterSet Blend(const FilterSet& from, const FilterSet& to, double gamma) {
  FilterSet out = to;
  auto mix = [gamma](const FilterBank& a, FilterBank& b) {
    if (a.coeffs.size() == b.coeffs.size())
      b.coeffs = a.coeffs + gamma * (b.coeffs - a.coeffs);
  };
  mix(from.ref, out.ref);
  for (size_t m = 0; m < out.nonref.size(); ++m) mix(from.nonref[m], out.nonref[m]);
  for (size_t m = 0; m < out.garbage.size(); ++m) mix(from.garbage[m], out.garbage[m]);
  return out;
}

double MaxCondition(const FilterSet& fs) {
  double c = fs.ref.MaxCondition();
  for (const FilterBank& b : fs.nonref) c = std::max(c, b.MaxCondition());
  for (const FilterBank& b : fs.garbage) c = std::max(c, b.MaxCondition());
  return c;
}

}  // namespace

DereverbResult Optimize(const MultichannelUtterance& utt,
                        const OptimConfig& cfg) {
  cfg.Validate();
  utt.Validate();
  const LossConfig& lc = cfg.loss;
  const int q = utt.ref_mic;
  std::vector<CMatrix> y;
  for (const ComplexSpectrogram& s : utt.mixture_spec) y.push_back(s.data);
  const CMatrix& y_q = y[q];
  const WeightMap weights = LossWeights(y, lc);

  std::mt19937_64 rng(DeriveSeed(cfg.seed, "optimizer", 0));
  auto jitter = [&]() {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return cfg.init_jitter * (2.0 * u - 1.0);
  };
  EstimatorParams params;
  params.kind = cfg.kind;
  const double init = cfg.init == InitKind::kUnitMask ? 1.0 : 0.0;
  if (cfg.kind == EstimatorKind::kMasking) {
    params.values = CMatrix::Constant(y_q.rows(), y_q.cols(), Complex(init, 0.0));
    if (cfg.init_jitter > 0.0)
      for (Eigen::Index i = 0; i < params.values.size(); ++i)
        params.values(i) += Complex(jitter(), jitter());
  } else {
    params.values = init * y_q;
    if (cfg.init_jitter > 0.0)
      for (Eigen::Index i = 0; i < params.values.size(); ++i)
        params.values(i) += std::abs(y_q(i)) * Complex(jitter(), jitter());
  }
  if (lc.garbage_L)
    params.garbage =
        CMatrix::Constant(y_q.rows(), y_q.cols(), Complex(cfg.garbage_init, 0.0));
  params.Clamp();

  auto estimates = [&](const EstimatorParams& p, CMatrix& s,
                       std::optional<CMatrix>& v) {
    s = Forward(p, y_q);
    v.reset();
    if (p.garbage) v = ForwardGarbage(p, y_q);
  };
  CMatrix s;
  std::optional<CMatrix> v;
  estimates(params, s, v);
  FilterSet filters = EstimateFilters(y, q, s, v ? &*v : nullptr, lc, weights);

  DereverbResult result;
  result.variant = ToString(cfg.kind) + "/" + ToString(lc.ref_variant);
  const int p = static_cast<int>(y.size());
  // Reconstructions of every mic at the current estimate and filters.
  std::vector<CMatrix> rec = Reconstruct(s, v ? &*v : nullptr, p, q, filters, lc);
  double loss = LossOf(y, rec, q, lc);
  result.initial_loss = loss;
  result.trajectory.push_back(loss);

  EstimatorParams best = params;
  double best_loss = loss;
  int increases = 0;
  double eta = cfg.step_size;
  for (int outer = 0; outer < cfg.max_outer_iters; ++outer) {
    const double start_loss = loss;
    // Mask block: gradient steps with the filters fixed. Reconstructions
    // are linear in the estimate, so line-search trials reuse them unless
    // the mask clamp becomes active.
    double step_eta = eta;
    for (int step = 0; step < cfg.mask_steps; ++step) {
      CMatrix gs, gv;
      Backward(y, rec, q, filters, lc, gs, v ? &gv : nullptr);
      const CMatrix dir = Direction(
          cfg.kind == EstimatorKind::kMasking
              ? MaskChainRule(gs, params.values, y_q, params.bound)
              : gs,
          y_q, cfg.kind);
      std::optional<CMatrix> gdir;
      if (v)
        gdir = Direction(MaskChainRule(gv, *params.garbage, y_q, params.bound), y_q,
                         EstimatorKind::kMasking);
      const CMatrix ds =
          cfg.kind == EstimatorKind::kMasking ? CMatrix(dir.cwiseProduct(y_q)) : dir;
      std::optional<CMatrix> dv;
      if (gdir) dv = gdir->cwiseProduct(y_q);
      const std::vector<CMatrix> rec_d =
          Reconstruct(ds, dv ? &*dv : nullptr, p, q, filters, lc);

      auto try_step = [&](double eta_t, EstimatorParams& trial,
                          std::vector<CMatrix>& trial_rec) {
        trial = params;
        trial.values -= eta_t * dir;
        if (gdir) *trial.garbage -= eta_t * *gdir;
        const bool linear = !ClampActive(trial);
        trial.Clamp();
        if (linear) {
          trial_rec.resize(p);
          for (int m = 0; m < p; ++m) trial_rec[m] = rec[m] - eta_t * rec_d[m];
        } else {
          CMatrix ts;
          std::optional<CMatrix> tv;
          estimates(trial, ts, tv);
          trial_rec = Reconstruct(ts, tv ? &*tv : nullptr, p, q, filters, lc);
        }
        return LossOf(y, trial_rec, q, lc);
      };

      EstimatorParams best_trial;
      std::vector<CMatrix> best_rec;
      double best_trial_loss = try_step(step_eta, best_trial, best_rec);
      if (best_trial_loss < loss) {
        // Expand while the loss keeps falling.
        for (int g = 0; g < 2; ++g) {
          EstimatorParams trial;
          std::vector<CMatrix> trial_rec;
          const double l = try_step(2.0 * step_eta, trial, trial_rec);
          if (!(l < best_trial_loss)) break;
          step_eta *= 2.0;
          best_trial_loss = l;
          best_trial = std::move(trial);
          best_rec = std::move(trial_rec);
        }
      } else {
        for (int h = 0; h < cfg.max_halvings && !(best_trial_loss < loss); ++h) {
          step_eta *= 0.5;
          best_trial_loss = try_step(step_eta, best_trial, best_rec);
        }
      }
      if (!(best_trial_loss < loss)) break;
      params = std::move(best_trial);
      rec = std::move(best_rec);
      loss = best_trial_loss;
      result.trajectory.push_back(loss);
    }
    // Filter block: move toward the closed-form filters of the new estimate.
    estimates(params, s, v);
    const FilterSet closed =
        EstimateFilters(y, q, s, v ? &*v : nullptr, lc, weights);
    if (cfg.monotone_refresh) {
      double gamma = 1.0;
      for (int h = 0; h <= cfg.max_halvings; ++h, gamma *= 0.5) {
        FilterSet cand = gamma == 1.0 ? closed : Blend(filters, closed, gamma);
        std::vector<CMatrix> cand_rec =
            Reconstruct(s, v ? &*v : nullptr, p, q, cand, lc);
        const double cand_loss = LossOf(y, cand_rec, q, lc);
        if (cand_loss <= loss) {
          filters = std::move(cand);
          rec = std::move(cand_rec);
          if (cand_loss < loss) result.trajectory.push_back(cand_loss);
          loss = cand_loss;
          break;
        }
      }
    } else {
      filters = closed;
      rec = Reconstruct(s, v ? &*v : nullptr, p, q, filters, lc);
      const double new_loss = LossOf(y, rec, q, lc);
      increases = new_loss > loss + cfg.increase_tol ? increases + 1 : 0;
      loss = new_loss;
      result.trajectory.push_back(loss);
    }
    result.outer_losses.push_back(loss);
    result.outer_iterations = outer + 1;
    if (loss < best_loss) {
      best_loss = loss;
      best = params;
    }
    if (increases >= cfg.divergence_patience) {
      result.diverged = true;
      params = best;
      break;
    }
    const double rel = (start_loss - loss) / std::max(std::abs(start_loss), 1e-300);
    if (std::abs(rel) < cfg.convergence_tol) {
      result.converged = true;
      break;
    }
    eta *= cfg.step_decay;
  }
  if (!cfg.monotone_refresh) params = best;

  estimates(params, s, v);
  result.filters = EstimateFilters(y, q, s, v ? &*v : nullptr, lc, weights);
  result.final_closed_form_loss =
      EvaluateLoss(y, q, s, v ? &*v : nullptr, result.filters, lc).total;
  result.final_loss = cfg.monotone_refresh ? loss : best_loss;
  result.max_condition = MaxCondition(result.filters);
  result.params = params;
  result.s_hat = {s, utt.mixture_spec[q].config};
  result.waveform = InferDirect(result, utt.num_samples());
  result.waveform.sample_rate = utt.mixture[q].sample_rate;
  return result;
}

Waveform InferDirect(const DereverbResult& result, int num_samples) {
  return Istft(result.s_hat, result.s_hat.config, num_samples);
}

CMatrix SubtractiveEstimate(const CMatrix& y_q, const CMatrix& s_hat,
                            const FilterBank& ref_filter,
                            const LossConfig& cfg) {
  if (ref_filter.coeffs.size() == 0)
    throw DomainError("subtractive inference needs the reference filter");
  CMatrix predicted = CMatrix::Zero(y_q.rows(), y_q.cols());
  AccumulateFiltered(ref_filter.coeffs, cfg.RefStack().Offsets(), s_hat,
                     predicted);
  return y_q - predicted;
}

Waveform InferSubtractive(const MultichannelUtterance& utt,
                          const DereverbResult& result, const LossConfig& cfg) {
  const int q = utt.ref_mic;
  ComplexSpectrogram est;
  est.config = utt.mixture_spec.at(q).config;
  est.data = SubtractiveEstimate(utt.mixture_spec[q].data, result.s_hat.data,
                                 result.filters.ref, cfg);
  Waveform w = Istft(est, est.config, utt.num_samples(),
                     utt.mixture[q].sample_rate);
  return w;
}

}  // namespace usdr
