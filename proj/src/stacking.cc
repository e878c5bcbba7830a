// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "usdr/stacking.h"

#include <algorithm>
#include <cmath>

namespace usdr {

StackSpec StackSpec::PastDelayed(int k, int delta) {
  StackSpec s{StackKind::kPastDelayed, k, delta};
  s.Validate();
  return s;
}

StackSpec StackSpec::Context(int i, int j) {
  StackSpec s{StackKind::kContext, i, j};
  s.Validate();
  return s;
}

StackSpec StackSpec::Garbage(int l) {
  StackSpec s{StackKind::kGarbage, l, 0};
  s.Validate();
  return s;
}

void StackSpec::Validate() const {
  switch (kind) {
    case StackKind::kPastDelayed:
      if (!(b >= 0 && a > b))
        throw ConfigError("past-delayed stack needs K > delta >= 0, got K=" +
                          std::to_string(a) + " delta=" + std::to_string(b));
      break;
    case StackKind::kContext:
      if (a < 1 || b < 0)
        throw ConfigError("context stack needs I >= 1 and J >= 0, got I=" +
                          std::to_string(a) + " J=" + std::to_string(b));
      break;
    case StackKind::kGarbage:
      if (a < 0) throw ConfigError("garbage stack needs L >= 0");
      break;
  }
}

int StackSpec::taps() const {
  switch (kind) {
    case StackKind::kPastDelayed: return a - b;
    case StackKind::kContext: return a + b;
    case StackKind::kGarbage: return 2 * a + 1;
  }
  return 0;
}

std::vector<int> StackSpec::Offsets() const {
  Validate();
  int first = 0, last = 0;
  switch (kind) {
    case StackKind::kPastDelayed: first = a - 1; last = b; break;
    case StackKind::kContext: first = a - 1; last = -b; break;
    case StackKind::kGarbage: first = a; last = -a; break;
  }
  std::vector<int> out;
  for (int o = first; o >= last; --o) out.push_back(o);
  return out;
}

std::string StackSpec::ToString() const {
  switch (kind) {
    case StackKind::kPastDelayed:
      return "past_delayed(K=" + std::to_string(a) +
             ",delta=" + std::to_string(b) + ")";
    case StackKind::kContext:
      return "context(I=" + std::to_string(a) + ",J=" + std::to_string(b) + ")";
    case StackKind::kGarbage:
      return "garbage(L=" + std::to_string(a) + ")";
  }
  return "";
}

StackedTensor::StackedTensor(const CMatrix& src, const StackSpec& spec)
    : sources_{src}, spec_(spec), frames_(src.rows()), bins_(src.cols()) {
  tap_offset_ = spec.Offsets();
  tap_source_.assign(tap_offset_.size(), 0);
}

StackedTensor StackedTensor::Concat(const std::vector<StackedTensor>& parts) {
  if (parts.empty()) throw ShapeError("cannot concatenate zero stacks");
  StackedTensor out;
  out.spec_ = parts[0].spec_;
  out.frames_ = parts[0].frames_;
  out.bins_ = parts[0].bins_;
  for (const StackedTensor& p : parts) {
    if (p.frames_ != out.frames_ || p.bins_ != out.bins_)
      throw ShapeError("stacks to concatenate differ in geometry");
    const int base = static_cast<int>(out.sources_.size());
    out.sources_.insert(out.sources_.end(), p.sources_.begin(), p.sources_.end());
    for (int k = 0; k < p.taps(); ++k) {
      out.tap_source_.push_back(base + p.tap_source_[k]);
      out.tap_offset_.push_back(p.tap_offset_[k]);
    }
  }
  return out;
}

Complex StackedTensor::At(int t, int f, int k) const {
  const int s = t - tap_offset_[k];
  if (s < 0 || s >= frames_) return Complex(0.0, 0.0);
  return sources_[tap_source_[k]](s, f);
}

CMatrix StackedTensor::FrequencySlice(int f) const {
  CMatrix a = CMatrix::Zero(frames_, taps());
  for (int k = 0; k < taps(); ++k) {
    const int off = tap_offset_[k];
    const int len = frames_ - std::abs(off);
    if (len <= 0) continue;
    const auto col = sources_[tap_source_[k]].col(f);
    if (off >= 0)
      a.col(k).segment(off, len) = col.segment(0, len);
    else
      a.col(k).segment(0, len) = col.segment(-off, len);
  }
  return a;
}

WeightMap LambdaWeight(const std::vector<CMatrix>& mixtures, double xi) {
  if (mixtures.empty()) throw ShapeError("lambda weight needs P >= 1 mixtures");
  if (!(xi > 0.0)) throw ConfigError("lambda floor xi must be positive");
  const auto rows = mixtures[0].rows(), cols = mixtures[0].cols();
  for (const CMatrix& y : mixtures)
    if (y.rows() != rows || y.cols() != cols)
      throw ShapeError("lambda weight: mixtures differ in geometry");
  // Per-unit powers are summed in sorted order so that the map is bitwise
  // identical under any ordering of the microphones.
  const size_t p = mixtures.size();
  RMatrix power(rows, cols);
  std::vector<double> vals(p);
  for (Eigen::Index i = 0; i < power.size(); ++i) {
    for (size_t m = 0; m < p; ++m) vals[m] = std::norm(mixtures[m](i));
    std::sort(vals.begin(), vals.end());
    double acc = 0.0;
    for (double v : vals) acc += v;
    power(i) = acc / static_cast<double>(p);
  }
  WeightMap w;
  w.xi = xi;
  const double peak = power.size() > 0 ? power.maxCoeff() : 0.0;
  if (!(peak > 0.0)) {
    w.values = RMatrix::Constant(rows, cols, kDegenerateWeight);
    w.degenerate = true;
    return w;
  }
  w.values = power.array() + xi * peak;
  return w;
}

WeightMap LambdaWeight(const std::vector<ComplexSpectrogram>& mixtures,
                       double xi) {
  std::vector<CMatrix> data;
  data.reserve(mixtures.size());
  for (const ComplexSpectrogram& s : mixtures) data.push_back(s.data);
  return LambdaWeight(data, xi);
}

WeightMap UniformWeights(int frames, int bins) {
  WeightMap w;
  w.values = RMatrix::Ones(frames, bins);
  return w;
}

double FilterBank::MaxCondition() const {
  double m = 0.0;
  for (double c : condition) m = std::max(m, c);
  return m;
}

int FilterBank::DegenerateBinCount() const {
  return static_cast<int>(
      std::count(degenerate_bins.begin(), degenerate_bins.end(), 1));
}

std::vector<FilterBank> SolveWlsMulti(const std::vector<const CMatrix*>& targets,
                                      const StackedTensor& stack,
                                      const WeightMap& weights) {
  const int frames = stack.frames(), bins = stack.bins(), taps = stack.taps();
  const int n = static_cast<int>(targets.size());
  if (weights.values.rows() != frames || weights.values.cols() != bins)
    throw ShapeError("weight map geometry does not match the stack");
  for (const CMatrix* t : targets)
    if (t->rows() != frames || t->cols() != bins)
      throw ShapeError("target geometry does not match the stack");
  if ((weights.values.array() <= 0.0).any())
    throw DomainError("WLS weights must be positive");
  if (taps > frames)
    throw DomainError("WLS with " + std::to_string(taps) + " taps needs at least" +
                      " as many frames, got " + std::to_string(frames));

  std::vector<FilterBank> banks(n);
  for (FilterBank& b : banks) {
    b.coeffs = CMatrix::Zero(bins, taps);
    b.spec = stack.spec();
    b.condition.assign(bins, 0.0);
    b.degenerate_bins.assign(bins, 0);
  }
  CMatrix rhs_targets(frames, n);
  int degenerate_count = 0;
  for (int f = 0; f < bins; ++f) {
    const Eigen::VectorXd sqrt_w = weights.values.col(f).cwiseInverse().cwiseSqrt();
    const CMatrix a = sqrt_w.asDiagonal() * stack.FrequencySlice(f);
    CMatrix gram = a.adjoint() * a;
    const double trace = gram.diagonal().real().sum();
    if (!(trace > 0.0)) {
      ++degenerate_count;
      for (FilterBank& b : banks) b.degenerate_bins[f] = 1;
      continue;
    }
    gram.diagonal().array() += kRidgeScale * trace / taps;
    for (int i = 0; i < n; ++i)
      rhs_targets.col(i) = sqrt_w.asDiagonal() * targets[i]->col(f);
    const Eigen::LLT<CMatrix> llt(gram);
    const CMatrix x = llt.solve(a.adjoint() * rhs_targets);
    const Eigen::VectorXd diag = CMatrix(llt.matrixL()).diagonal().real();
    const double ratio = diag.maxCoeff() / diag.minCoeff();
    for (int i = 0; i < n; ++i) {
      banks[i].coeffs.row(f) = x.col(i).conjugate().transpose();
      banks[i].condition[f] = ratio * ratio;
    }
  }
  for (FilterBank& b : banks) b.degenerate = degenerate_count == bins;
  return banks;
}

FilterBank SolveWls(const CMatrix& target, const StackedTensor& stack,
                    const WeightMap& weights) {
  return SolveWlsMulti({&target}, stack, weights).front();
}

namespace {

void CheckSameShape(const ComplexSpectrogram& a, const ComplexSpectrogram& b) {
  if (a.frames() != b.frames() || a.bins() != b.bins())
    throw ShapeError("spectrograms differ in geometry: " +
                     std::to_string(a.frames()) + "x" + std::to_string(a.bins()) +
                     " vs " + std::to_string(b.frames()) + "x" +
                     std::to_string(b.bins()));
}

}  // namespace

FilterBank FcpRefSubtracted(const ComplexSpectrogram& y_q,
                            const ComplexSpectrogram& s_hat_q,
                            const StackSpec& spec, const WeightMap& weights) {
  CheckSameShape(y_q, s_hat_q);
  const CMatrix residual = y_q.data - s_hat_q.data;
  return SolveWls(residual, StackedTensor(s_hat_q, spec), weights);
}

FilterBank FcpRefFull(const ComplexSpectrogram& y_q,
                      const ComplexSpectrogram& s_hat_q, const StackSpec& spec,
                      const WeightMap& weights) {
  CheckSameShape(y_q, s_hat_q);
  return SolveWls(y_q.data, StackedTensor(s_hat_q, spec), weights);
}

FilterBank FcpNonref(const ComplexSpectrogram& y_p,
                     const ComplexSpectrogram& s_hat_q, const StackSpec& spec,
                     const WeightMap& weights) {
  CheckSameShape(y_p, s_hat_q);
  return SolveWls(y_p.data, StackedTensor(s_hat_q, spec), weights);
}

FilterBank FcpGarbage(const ComplexSpectrogram& y_a,
                      const ComplexSpectrogram& v_hat_q, const StackSpec& spec,
                      const WeightMap& weights) {
  CheckSameShape(y_a, v_hat_q);
  return SolveWls(y_a.data, StackedTensor(v_hat_q, spec), weights);
}

namespace {

// y[i] += a * x[i], written on interleaved doubles so that it vectorizes.
void ComplexAxpy(Complex a, const Complex* x, Complex* y, int n) {
  const double ar = a.real(), ai = a.imag();
  const double* xd = reinterpret_cast<const double*>(x);
  double* yd = reinterpret_cast<double*>(y);
  for (int i = 0; i < n; ++i) {
    const double xr = xd[2 * i], xi = xd[2 * i + 1];
    yd[2 * i] += ar * xr - ai * xi;
    yd[2 * i + 1] += ar * xi + ai * xr;
  }
}

}  // namespace

void AccumulateFiltered(const CMatrix& coeffs, const std::vector<int>& offsets,
                        const CMatrix& src, CMatrix& out) {
  const int frames = src.rows(), bins = src.cols();
  if (coeffs.rows() != bins || coeffs.cols() != static_cast<int>(offsets.size()))
    throw ShapeError("filter bank does not match the stack geometry");
  if (out.rows() != frames || out.cols() != bins)
    throw ShapeError("filter output has the wrong geometry");
  // Frequency-major so that each source column stays in cache.
  for (int f = 0; f < bins; ++f) {
    const Complex* s = src.col(f).data();
    Complex* o = out.col(f).data();
    for (int k = 0; k < coeffs.cols(); ++k) {
      const int off = offsets[k];
      const int len = frames - std::abs(off);
      if (len <= 0) continue;
      const Complex c = std::conj(coeffs(f, k));
      ComplexAxpy(c, s + std::max(-off, 0), o + std::max(off, 0), len);
    }
  }
}

void AccumulateFilteredAdjoint(const CMatrix& coeffs,
                               const std::vector<int>& offsets,
                               const CMatrix& grad_out, CMatrix& grad_src) {
  const int frames = grad_out.rows(), bins = grad_out.cols();
  if (coeffs.rows() != bins || coeffs.cols() != static_cast<int>(offsets.size()))
    throw ShapeError("filter bank does not match the stack geometry");
  if (grad_src.rows() != frames || grad_src.cols() != bins)
    throw ShapeError("gradient has the wrong geometry");
  for (int f = 0; f < bins; ++f) {
    const Complex* g = grad_out.col(f).data();
    Complex* o = grad_src.col(f).data();
    for (int k = 0; k < coeffs.cols(); ++k) {
      const int off = offsets[k];
      const int len = frames - std::abs(off);
      if (len <= 0) continue;
      ComplexAxpy(coeffs(f, k), g + std::max(off, 0), o + std::max(-off, 0), len);
    }
  }
}

CMatrix ApplyFilter(const FilterBank& bank, const StackedTensor& stack) {
  if (bank.bins() != stack.bins() || bank.taps() != stack.taps())
    throw ShapeError("filter bank " + std::to_string(bank.bins()) + "x" +
                     std::to_string(bank.taps()) + " does not match stack " +
                     std::to_string(stack.bins()) + "x" +
                     std::to_string(stack.taps()));
  CMatrix out = CMatrix::Zero(stack.frames(), stack.bins());
  for (int k = 0; k < stack.taps(); ++k)
    AccumulateFiltered(bank.coeffs.col(k), {stack.offset(k)}, stack.source_of(k),
                       out);
  return out;
}

ComplexSpectrogram ApplyFilter(const FilterBank& bank,
                               const ComplexSpectrogram& src) {
  ComplexSpectrogram out;
  out.config = src.config;
  out.data = ApplyFilter(bank, StackedTensor(src, bank.spec));
  return out;
}

}  // namespace usdr
