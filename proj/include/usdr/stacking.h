// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Frame stacks of spectrograms and the per-frequency weighted least squares
// solves that estimate forward convolutive prediction (FCP) filters.
//
// Filter convention: a filter c applied to a stack x gives c^H x, i.e.
// sum_k conj(c_k) x_k.

#ifndef USDR_STACKING_H_
#define USDR_STACKING_H_

#include <string>
#include <vector>

#include "usdr/common.h"
#include "usdr/spectral.h"

namespace usdr {

enum class StackKind { kPastDelayed, kContext, kGarbage };

struct StackSpec {
  StackKind kind = StackKind::kContext;
  int a = 1;  // K, I or L depending on kind
  int b = 0;  // delta, J, unused

  // [S(t-K+1), ..., S(t-delta)], K - delta taps.
  static StackSpec PastDelayed(int k, int delta);
  // [S(t-I+1), ..., S(t+J)], I + J taps.
  static StackSpec Context(int i, int j);
  // [V(t-L), ..., V(t+L)], 2L + 1 taps.
  static StackSpec Garbage(int l);

  void Validate() const;  // throws ConfigError
  int taps() const;
  // Time lags, entry k of the stack at frame t is src(t - offsets[k]).
  // Ordered oldest frame first.
  std::vector<int> Offsets() const;
  std::string ToString() const;
  bool operator==(const StackSpec&) const = default;
};

// Lazy view of one or more stacked spectrograms. Entries outside [0, T) are
// zero. Several sources can be concatenated tap-wise (multi-channel
// prediction stacks every channel's past).
class StackedTensor {
 public:
  StackedTensor() = default;
  StackedTensor(const CMatrix& src, const StackSpec& spec);
  StackedTensor(const ComplexSpectrogram& src, const StackSpec& spec)
      : StackedTensor(src.data, spec) {}

  // Taps of `other` are appended after this tensor's taps.
  static StackedTensor Concat(const std::vector<StackedTensor>& parts);

  int frames() const { return frames_; }
  int bins() const { return bins_; }
  int taps() const { return static_cast<int>(tap_offset_.size()); }
  const StackSpec& spec() const { return spec_; }
  int offset(int k) const { return tap_offset_[k]; }
  const CMatrix& source_of(int k) const { return sources_[tap_source_[k]]; }

  Complex At(int t, int f, int k) const;
  // T x taps matrix A with A(t, k) = At(t, f, k).
  CMatrix FrequencySlice(int f) const;

 private:
  std::vector<CMatrix> sources_;
  std::vector<int> tap_source_;
  std::vector<int> tap_offset_;
  StackSpec spec_;
  int frames_ = 0;
  int bins_ = 0;
};

// lambda(t, f) of the FCP regressions; rows are frames, columns bins.
struct WeightMap {
  RMatrix values;
  double xi = 0.0;
  bool degenerate = false;  // all-zero mixtures, values hold a tiny constant
};

inline constexpr double kDefaultXi = 1e-4;
inline constexpr double kDegenerateWeight = 1e-12;

// Channel-averaged power plus xi times its maximum over the whole
// utterance. The result does not depend on which microphone it is used for.
WeightMap LambdaWeight(const std::vector<ComplexSpectrogram>& mixtures,
                       double xi = kDefaultXi);
WeightMap LambdaWeight(const std::vector<CMatrix>& mixtures,
                       double xi = kDefaultXi);
WeightMap UniformWeights(int frames, int bins);

struct FilterBank {
  CMatrix coeffs;  // bins x taps
  StackSpec spec;
  int target_mic = -1;
  std::vector<double> condition;  // per-bin estimate of cond(Gram + ridge)
  std::vector<char> degenerate_bins;
  bool degenerate = false;  // every bin had a zero stack

  int bins() const { return static_cast<int>(coeffs.rows()); }
  int taps() const { return static_cast<int>(coeffs.cols()); }
  double MaxCondition() const;
  int DegenerateBinCount() const;
};

// Ridge added to every normal-equation system, relative to trace / taps.
inline constexpr double kRidgeScale = 1e-6;

// argmin_c sum_t |target(t,f) - c^H stack(t,f)|^2 / w(t,f) for every bin.
FilterBank SolveWls(const CMatrix& target, const StackedTensor& stack,
                    const WeightMap& weights);
// Several targets sharing one stack and weight map (the Gram matrix is
// factorized once per bin).
std::vector<FilterBank> SolveWlsMulti(const std::vector<const CMatrix*>& targets,
                                      const StackedTensor& stack,
                                      const WeightMap& weights);

// Reference mic, residual target Y_q - S_q.
FilterBank FcpRefSubtracted(const ComplexSpectrogram& y_q,
                            const ComplexSpectrogram& s_hat_q,
                            const StackSpec& spec, const WeightMap& weights);
// Reference mic, target Y_q (S_q not subtracted).
FilterBank FcpRefFull(const ComplexSpectrogram& y_q,
                      const ComplexSpectrogram& s_hat_q,
                      const StackSpec& spec, const WeightMap& weights);
// Non-reference mic p from the context stack of S_q.
FilterBank FcpNonref(const ComplexSpectrogram& y_p,
                     const ComplexSpectrogram& s_hat_q, const StackSpec& spec,
                     const WeightMap& weights);
// Garbage source: the target is the full mixture Y_a.
FilterBank FcpGarbage(const ComplexSpectrogram& y_a,
                      const ComplexSpectrogram& v_hat_q, const StackSpec& spec,
                      const WeightMap& weights);

// out(t, f) = bank(f)^H stack(t, f).
CMatrix ApplyFilter(const FilterBank& bank, const StackedTensor& stack);
ComplexSpectrogram ApplyFilter(const FilterBank& bank,
                               const ComplexSpectrogram& src);

// Same as ApplyFilter on a single-source stack, without building the
// stack: out(t, f) += sum_k conj(c(f, k)) src(t - offsets[k], f).
void AccumulateFiltered(const CMatrix& coeffs, const std::vector<int>& offsets,
                        const CMatrix& src, CMatrix& out);
// Adjoint of AccumulateFiltered with respect to src, for gradients stored as
// dL/dRe + i dL/dIm: grad_src(s, f) += sum_k c(f, k) grad_out(s + offsets[k], f).
void AccumulateFilteredAdjoint(const CMatrix& coeffs,
                               const std::vector<int>& offsets,
                               const CMatrix& grad_out, CMatrix& grad_src);

}  // namespace usdr

#endif  // USDR_STACKING_H_
