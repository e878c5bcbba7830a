// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/mcloss.h"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace usdr {

std::string ToString(RefVariant v) {
  return v == RefVariant::kFull ? "full" : "subtracted";
}

RefVariant ParseRefVariant(const std::string& s) {
  if (s == "full") return RefVariant::kFull;
  if (s == "subtracted") return RefVariant::kSubtracted;
  throw ConfigError("unknown ref_variant '" + s +
                    "' (expected 'full' or 'subtracted')");
}

void LossConfig::Validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ConfigError("alpha must be positive and finite");
  if (!(xi > 0.0)) throw ConfigError("xi must be positive");
  RefStack().Validate();
  NonrefStack().Validate();
  if (garbage_L && *garbage_L < 0) throw ConfigError("garbage_L must be >= 0");
}

StackSpec LossConfig::GarbageStack() const {
  if (!garbage_L) throw ConfigError("no garbage source configured");
  return StackSpec::Garbage(*garbage_L);
}

double LossConfig::DefaultAlpha(int num_mics) {
  return num_mics > 4 ? 3.0 / (num_mics - 1) : 1.0;
}

namespace {

void CheckSameShape(const CMatrix& a, const CMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(what) + ": geometry mismatch " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

double Sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

double DistanceF(const CMatrix& y, const CMatrix& y_hat) {
  CheckSameShape(y, y_hat, "distance");
  const double norm = y.cwiseAbs().sum();
  if (!(norm > 0.0))
    throw DegenerateInputError("distance normalizer: mixture has zero energy");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const Complex a = y(i), b = y_hat(i);
    acc += std::abs(b.real() - a.real()) + std::abs(b.imag() - a.imag()) +
           std::abs(std::abs(b) - std::abs(a));
  }
  return acc / norm;
}

double DistanceF(const ComplexSpectrogram& y,
                 const ComplexSpectrogram& y_hat) {
  return DistanceF(y.data, y_hat.data);
}

double SquaredDistance(const CMatrix& y, const CMatrix& y_hat) {
  CheckSameShape(y, y_hat, "distance");
  return (y - y_hat).squaredNorm();
}

double Distance(DistanceKind kind, const CMatrix& y, const CMatrix& y_hat) {
  return kind == DistanceKind::kSquared ? SquaredDistance(y, y_hat)
                                        : DistanceF(y, y_hat);
}

CMatrix DistanceGradient(DistanceKind kind, const CMatrix& y,
                         const CMatrix& y_hat) {
  CheckSameShape(y, y_hat, "distance gradient");
  if (kind == DistanceKind::kSquared) return 2.0 * (y_hat - y);
  const double norm = y.cwiseAbs().sum();
  if (!(norm > 0.0))
    throw DegenerateInputError("distance normalizer: mixture has zero energy");
  CMatrix g(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const Complex a = y(i), b = y_hat(i);
    const double mag = std::abs(b);
    const double s_mag = Sign(mag - std::abs(a));
    double gr = Sign(b.real() - a.real());
    double gi = Sign(b.imag() - a.imag());
    if (mag > 0.0) {
      gr += s_mag * b.real() / mag;
      gi += s_mag * b.imag() / mag;
    }
    g(i) = Complex(gr, gi) / norm;
  }
  return g;
}

WeightMap LossWeights(const std::vector<CMatrix>& mixtures,
                      const LossConfig& cfg) {
  if (mixtures.empty()) throw ShapeError("no mixtures");
  if (cfg.weighting == WeightingKind::kUniform)
    return UniformWeights(mixtures[0].rows(), mixtures[0].cols());
  return LambdaWeight(mixtures, cfg.xi);
}

namespace {

bool UseGarbage(const CMatrix* v_hat, const LossConfig& cfg) {
  if (v_hat && !cfg.garbage_L)
    throw ConfigError("garbage estimate given but garbage_L is not set");
  return v_hat != nullptr;
}

}  // namespace

MicLoss McLossRef(const ComplexSpectrogram& y_q,
                  const ComplexSpectrogram& s_hat_q,
                  const ComplexSpectrogram* v_hat_q, const LossConfig& cfg,
                  const WeightMap& weights) {
  cfg.Validate();
  CheckSameShape(y_q.data, s_hat_q.data, "reference loss");
  const StackSpec spec = cfg.RefStack();
  MicLoss out;
  const CMatrix residual = y_q.data - s_hat_q.data;
  out.filter = SolveWls(cfg.ref_variant == RefVariant::kFull ? y_q.data : residual,
                        StackedTensor(s_hat_q, spec), weights);
  out.reconstruction = s_hat_q.data;
  AccumulateFiltered(out.filter.coeffs, spec.Offsets(), s_hat_q.data,
                     out.reconstruction);
  if (UseGarbage(v_hat_q ? &v_hat_q->data : nullptr, cfg)) {
    const StackSpec gspec = cfg.GarbageStack();
    out.garbage_filter =
        SolveWls(y_q.data, StackedTensor(*v_hat_q, gspec), weights);
    AccumulateFiltered(out.garbage_filter->coeffs, gspec.Offsets(),
                       v_hat_q->data, out.reconstruction);
  }
  out.loss = Distance(cfg.distance, y_q.data, out.reconstruction);
  return out;
}

MicLoss McLossNonref(const ComplexSpectrogram& y_p,
                     const ComplexSpectrogram& s_hat_q,
                     const ComplexSpectrogram* v_hat_q, const LossConfig& cfg,
                     const WeightMap& weights) {
  cfg.Validate();
  CheckSameShape(y_p.data, s_hat_q.data, "non-reference loss");
  const StackSpec spec = cfg.NonrefStack();
  MicLoss out;
  out.filter = SolveWls(y_p.data, StackedTensor(s_hat_q, spec), weights);
  out.reconstruction = CMatrix::Zero(y_p.frames(), y_p.bins());
  AccumulateFiltered(out.filter.coeffs, spec.Offsets(), s_hat_q.data,
                     out.reconstruction);
  if (UseGarbage(v_hat_q ? &v_hat_q->data : nullptr, cfg)) {
    const StackSpec gspec = cfg.GarbageStack();
    out.garbage_filter =
        SolveWls(y_p.data, StackedTensor(*v_hat_q, gspec), weights);
    AccumulateFiltered(out.garbage_filter->coeffs, gspec.Offsets(),
                       v_hat_q->data, out.reconstruction);
  }
  out.loss = Distance(cfg.distance, y_p.data, out.reconstruction);
  return out;
}

FilterSet EstimateFilters(const std::vector<CMatrix>& mixtures, int ref_mic,
                          const CMatrix& s_hat, const CMatrix* v_hat,
                          const LossConfig& cfg, const WeightMap& weights) {
  cfg.Validate();
  const int p = static_cast<int>(mixtures.size());
  if (ref_mic < 0 || ref_mic >= p) throw DomainError("reference mic out of range");
  for (const CMatrix& y : mixtures) CheckSameShape(y, s_hat, "filter estimation");
  const bool garbage = UseGarbage(v_hat, cfg);

  FilterSet fs;
  fs.ref_mic = ref_mic;
  const CMatrix& y_q = mixtures[ref_mic];
  const StackedTensor ref_stack(s_hat, cfg.RefStack());
  if (cfg.ref_variant == RefVariant::kFull) {
    fs.ref = SolveWls(y_q, ref_stack, weights);
  } else {
    const CMatrix residual = y_q - s_hat;
    fs.ref = SolveWls(residual, ref_stack, weights);
  }
  fs.ref.target_mic = ref_mic;

  std::vector<const CMatrix*> targets;
  std::vector<int> mics;
  for (int m = 0; m < p; ++m) {
    if (m == ref_mic) continue;
    targets.push_back(&mixtures[m]);
    mics.push_back(m);
  }
  fs.nonref.assign(p, FilterBank{});
  fs.nonref[ref_mic].spec = cfg.NonrefStack();
  if (!targets.empty()) {
    std::vector<FilterBank> banks =
        SolveWlsMulti(targets, StackedTensor(s_hat, cfg.NonrefStack()), weights);
    for (size_t i = 0; i < mics.size(); ++i) {
      banks[i].target_mic = mics[i];
      fs.nonref[mics[i]] = std::move(banks[i]);
    }
  }
  if (garbage) {
    CheckSameShape(*v_hat, s_hat, "garbage estimate");
    std::vector<const CMatrix*> all;
    for (const CMatrix& y : mixtures) all.push_back(&y);
    fs.garbage =
        SolveWlsMulti(all, StackedTensor(*v_hat, cfg.GarbageStack()), weights);
    for (int m = 0; m < p; ++m) fs.garbage[m].target_mic = m;
  }
  return fs;
}

McLossReport EvaluateLoss(const std::vector<CMatrix>& mixtures, int ref_mic,
                          const CMatrix& s_hat, const CMatrix* v_hat,
                          const FilterSet& filters, const LossConfig& cfg) {
  const int p = static_cast<int>(mixtures.size());
  if (ref_mic < 0 || ref_mic >= p) throw DomainError("reference mic out of range");
  const bool garbage = UseGarbage(v_hat, cfg);
  if (garbage && static_cast<int>(filters.garbage.size()) != p)
    throw ShapeError("garbage filters missing for a garbage estimate");
  const std::vector<int> ref_off = cfg.RefStack().Offsets();
  const std::vector<int> nonref_off = cfg.NonrefStack().Offsets();
  const std::vector<int> garbage_off =
      garbage ? cfg.GarbageStack().Offsets() : std::vector<int>{};

  McLossReport r;
  r.alpha = cfg.alpha;
  r.filters = filters;
  r.loss_nonref.assign(p, 0.0);
  r.reconstructions.resize(p);
  r.max_condition = filters.ref.MaxCondition();
  double nonref_sum = 0.0;
  for (int m = 0; m < p; ++m) {
    CMatrix& rec = r.reconstructions[m];
    if (m == ref_mic) {
      rec = s_hat;
      AccumulateFiltered(filters.ref.coeffs, ref_off, s_hat, rec);
    } else {
      rec = CMatrix::Zero(s_hat.rows(), s_hat.cols());
      AccumulateFiltered(filters.nonref[m].coeffs, nonref_off, s_hat, rec);
      r.max_condition = std::max(r.max_condition, filters.nonref[m].MaxCondition());
    }
    if (garbage)
      AccumulateFiltered(filters.garbage[m].coeffs, garbage_off, *v_hat, rec);
    double loss = 0.0;
    try {
      loss = Distance(cfg.distance, mixtures[m], rec);
    } catch (const DegenerateInputError&) {
      r.degenerate = true;
      r.degenerate_mics.push_back(m);
    }
    if (m == ref_mic)
      r.loss_ref = loss;
    else
      r.loss_nonref[m] = loss;
  }
  for (int m = 0; m < p; ++m) nonref_sum += r.loss_nonref[m];
  r.total = r.loss_ref + cfg.alpha * nonref_sum;
  return r;
}

McLossReport McLossTotal(const std::vector<CMatrix>& mixtures, int ref_mic,
                         const CMatrix& s_hat, const CMatrix* v_hat,
                         const LossConfig& cfg) {
  cfg.Validate();
  const WeightMap weights = LossWeights(mixtures, cfg);
  const FilterSet fs =
      EstimateFilters(mixtures, ref_mic, s_hat, v_hat, cfg, weights);
  return EvaluateLoss(mixtures, ref_mic, s_hat, v_hat, fs, cfg);
}

McLossReport McLossTotal(const MultichannelUtterance& utt,
                         const ComplexSpectrogram& s_hat,
                         const ComplexSpectrogram* v_hat,
                         const LossConfig& cfg) {
  utt.Validate();
  std::vector<CMatrix> y;
  for (const ComplexSpectrogram& s : utt.mixture_spec) y.push_back(s.data);
  return McLossTotal(y, utt.ref_mic, s_hat.data, v_hat ? &v_hat->data : nullptr,
                     cfg);
}

ComplexSpectrogram ConstructTrivialShiftedEstimate(const ComplexSpectrogram& y_q,
                                                   Complex beta, int shift) {
  ComplexSpectrogram out;
  out.config = y_q.config;
  const int frames = y_q.frames();
  out.data = CMatrix::Zero(frames, y_q.bins());
  for (int t = 0; t < frames; ++t) {
    const int s = t + shift;
    if (s >= 0 && s < frames) out.data.row(t) = beta * y_q.data.row(s);
  }
  return out;
}

double MaskRepresentableFraction(const CMatrix& y, const CMatrix& est,
                                 double bound) {
  CheckSameShape(y, est, "representability");
  if (y.size() == 0) return 1.0;
  long long ok = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double ay = std::abs(y(i)), ae = std::abs(est(i));
    if (ay == 0.0) {
      ok += ae == 0.0;
      continue;
    }
    const Complex m = est(i) / y(i);
    ok += std::abs(m.real()) <= bound && std::abs(m.imag()) <= bound;
  }
  return static_cast<double>(ok) / y.size();
}

double CollinearFraction(const CMatrix& y, const CMatrix& est, double tol) {
  CheckSameShape(y, est, "collinearity");
  const double ymax = y.cwiseAbs().maxCoeff(), emax = est.cwiseAbs().maxCoeff();
  long long considered = 0, collinear = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double ay = std::abs(y(i)), ae = std::abs(est(i));
    if (ay <= tol * ymax || ae <= tol * emax) continue;
    ++considered;
    collinear += std::abs((est(i) * std::conj(y(i))).imag()) <= tol * ae * ay;
  }
  return considered == 0 ? 1.0 : static_cast<double>(collinear) / considered;
}

EquationCount CountEquations(int num_mics, int frames, int bins,
                             const LossConfig& cfg) {
  EquationCount c;
  const long long tf = static_cast<long long>(frames) * bins;
  c.equations = num_mics * tf;
  c.unknowns = tf + static_cast<long long>(cfg.RefStack().taps()) * bins +
               static_cast<long long>(cfg.NonrefStack().taps()) * (num_mics - 1) *
                   bins;
  return c;
}

std::string LossCurve::ToCsv() const {
  std::ostringstream os;
  os << "tau_samples,loss_total,loss_ref\n" << std::setprecision(10);
  for (const LossCurvePoint& p : points)
    os << p.tau << "," << p.loss_total << "," << p.loss_ref << "\n";
  return os.str();
}

std::vector<int> TauGrid(int length, int step) {
  if (length < 1) throw DomainError("tau grid needs length >= 1");
  if (step < 1) throw DomainError("tau step must be >= 1");
  std::vector<int> grid;
  for (long long t = 1; t < length; t += step) grid.push_back(static_cast<int>(t));
  grid.push_back(length);
  return grid;
}

LossCurve ComputeLossCurve(const MultichannelUtterance& utt,
                           const std::vector<int>& taus, const LossConfig& cfg) {
  utt.Validate();
  cfg.Validate();
  if (!utt.rirs || utt.direct_path.empty())
    throw DomainError("loss curve needs ground-truth RIRs and direct paths");
  const int q = utt.ref_mic;
  const RelativeRir rel =
      ComputeRelativeRir(utt.rirs->direct_rir.at(q), utt.rirs->full_rir.at(q));
  LossConfig curve_cfg = cfg;
  curve_cfg.garbage_L.reset();

  std::vector<CMatrix> y;
  for (const ComplexSpectrogram& s : utt.mixture_spec) y.push_back(s.data);
  const WeightMap weights = LossWeights(y, curve_cfg);

  LossCurve curve;
  curve.config = curve_cfg;
  curve.relative_rir_length = rel.rir.size();
  curve.floored_bins = rel.floored_bins;
  for (int tau : taus) {
    const ComplexSpectrogram s_hat =
        HypothesizedEstimate(utt.direct_path.at(q), rel.rir, tau, utt.stft);
    const FilterSet fs =
        EstimateFilters(y, q, s_hat.data, nullptr, curve_cfg, weights);
    const McLossReport r = EvaluateLoss(y, q, s_hat.data, nullptr, fs, curve_cfg);
    curve.points.push_back({tau, r.total, r.loss_ref});
  }
  return curve;
}

}  // namespace usdr
