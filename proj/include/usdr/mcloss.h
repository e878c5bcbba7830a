// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Mixture-constraint (MC) loss: a source estimate S_q at the reference mic
// is filtered forward by closed-form FCP filters to reconstruct every
// observed mixture, and the reconstructions are scored against the
// mixtures.

#ifndef USDR_MCLOSS_H_
#define USDR_MCLOSS_H_

#include <optional>
#include <string>
#include <vector>

#include "usdr/common.h"
#include "usdr/roomsim.h"
#include "usdr/spectral.h"
#include "usdr/stacking.h"

namespace usdr {

// How the reference-mic filter g_q is regressed: onto Y_q - S_q
// (kSubtracted) or onto Y_q itself (kFull).
enum class RefVariant { kSubtracted, kFull };
// kRiMagnitude: |dRe| + |dIm| + |d|.|| normalized by sum |Y|.
// kSquared: sum |Y - Yhat|^2, unnormalized.
enum class DistanceKind { kRiMagnitude, kSquared };
enum class WeightingKind { kLambda, kUniform };

std::string ToString(RefVariant v);
RefVariant ParseRefVariant(const std::string& s);  // "subtracted" | "full"

struct LossConfig {
  int K = 40;
  int delta = 3;
  int I = 40;
  int J = 0;
  std::optional<int> garbage_L;
  double alpha = 1.0;
  RefVariant ref_variant = RefVariant::kFull;
  double xi = kDefaultXi;
  DistanceKind distance = DistanceKind::kRiMagnitude;
  WeightingKind weighting = WeightingKind::kLambda;

  void Validate() const;  // throws ConfigError
  StackSpec RefStack() const { return StackSpec::PastDelayed(K, delta); }
  StackSpec NonrefStack() const { return StackSpec::Context(I, J); }
  StackSpec GarbageStack() const;

  // 3 / (P - 1) for arrays with more than four mics, 1 otherwise.
  static double DefaultAlpha(int num_mics);
};

// sum(|dRe| + |dIm| + ||Yhat| - |Y||) / sum |Y|. Throws DegenerateInputError
// when Y has zero energy.
double DistanceF(const CMatrix& y, const CMatrix& y_hat);
double DistanceF(const ComplexSpectrogram& y, const ComplexSpectrogram& y_hat);
double SquaredDistance(const CMatrix& y, const CMatrix& y_hat);
double Distance(DistanceKind kind, const CMatrix& y, const CMatrix& y_hat);
// dD/dRe(Yhat) + i dD/dIm(Yhat); the subgradient 0 is used at kinks.
CMatrix DistanceGradient(DistanceKind kind, const CMatrix& y,
                         const CMatrix& y_hat);

// Loss weights for the filter regressions (lambda or all ones).
WeightMap LossWeights(const std::vector<CMatrix>& mixtures,
                      const LossConfig& cfg);

struct MicLoss {
  double loss = 0.0;
  CMatrix reconstruction;  // Yhat
  FilterBank filter;       // g_q or h_p
  std::optional<FilterBank> garbage_filter;
};

// Yhat_q = S_q + g_q^H stack(S_q) [+ w_q^H stack(V_q)].
MicLoss McLossRef(const ComplexSpectrogram& y_q,
                  const ComplexSpectrogram& s_hat_q,
                  const ComplexSpectrogram* v_hat_q, const LossConfig& cfg,
                  const WeightMap& weights);
// Yhat_p = h_p^H context(S_q) [+ w_p^H stack(V_q)].
MicLoss McLossNonref(const ComplexSpectrogram& y_p,
                     const ComplexSpectrogram& s_hat_q,
                     const ComplexSpectrogram* v_hat_q, const LossConfig& cfg,
                     const WeightMap& weights);

// All filters of one loss evaluation, indexed by mic. nonref[q] is unused;
// garbage is empty without a garbage source.
struct FilterSet {
  int ref_mic = 0;
  FilterBank ref;
  std::vector<FilterBank> nonref;
  std::vector<FilterBank> garbage;
};

struct McLossReport {
  double loss_ref = 0.0;
  std::vector<double> loss_nonref;  // per mic, 0 at the reference mic
  double alpha = 1.0;
  double total = 0.0;               // loss_ref + alpha * sum(loss_nonref)
  std::vector<CMatrix> reconstructions;
  FilterSet filters;
  double max_condition = 0.0;
  bool degenerate = false;          // some mic had a zero normalizer
  std::vector<int> degenerate_mics;
};

// Closed-form filters for the estimate(s).
FilterSet EstimateFilters(const std::vector<CMatrix>& mixtures, int ref_mic,
                          const CMatrix& s_hat, const CMatrix* v_hat,
                          const LossConfig& cfg, const WeightMap& weights);
// Loss with the given filters held fixed.
McLossReport EvaluateLoss(const std::vector<CMatrix>& mixtures, int ref_mic,
                          const CMatrix& s_hat, const CMatrix* v_hat,
                          const FilterSet& filters, const LossConfig& cfg);
// Total loss with closed-form filters. A mic whose mixture has zero energy
// contributes 0 and is listed in degenerate_mics.
McLossReport McLossTotal(const std::vector<CMatrix>& mixtures, int ref_mic,
                         const CMatrix& s_hat, const CMatrix* v_hat,
                         const LossConfig& cfg);
McLossReport McLossTotal(const MultichannelUtterance& utt,
                         const ComplexSpectrogram& s_hat,
                         const ComplexSpectrogram* v_hat, const LossConfig& cfg);

// S(t, f) = beta * Y(t + shift, f), zero past the end.
ComplexSpectrogram ConstructTrivialShiftedEstimate(const ComplexSpectrogram& y_q,
                                                   Complex beta, int shift);

// Share of T-F units where est is a complex multiple of y within the mask
// bound, i.e. |est| <= bound * |y| (units with |y| == 0 count as
// representable only when est == 0).
double MaskRepresentableFraction(const CMatrix& y, const CMatrix& est,
                                 double bound);
// Share of T-F units (with |y| and |est| above tol * max) where est and y
// are collinear in the RI plane, |Im(est conj(y))| <= tol |est| |y|.
double CollinearFraction(const CMatrix& y, const CMatrix& est, double tol);

struct EquationCount {
  long long equations = 0;  // P T F
  long long unknowns = 0;   // T F + (K - delta) F + (I + J)(P - 1) F
  bool overdetermined() const { return equations > unknowns; }
};
EquationCount CountEquations(int num_mics, int frames, int bins,
                             const LossConfig& cfg);

struct LossCurvePoint {
  int tau = 0;
  double loss_total = 0.0;
  double loss_ref = 0.0;
};

struct LossCurve {
  std::vector<LossCurvePoint> points;
  LossConfig config;
  int relative_rir_length = 0;
  int floored_bins = 0;
  std::string ToCsv() const;  // header tau_samples,loss_total,loss_ref
};

// 1, 1 + step, 1 + 2 step, ... and always `length` as the last point.
std::vector<int> TauGrid(int length, int step);

// Loss of the hypothesized estimate STFT(s_q * trunc_tau(o_r)) for each tau.
// Needs direct-path signals and RIRs in the utterance.
LossCurve ComputeLossCurve(const MultichannelUtterance& utt,
                           const std::vector<int>& taus, const LossConfig& cfg);

}  // namespace usdr

#endif  // USDR_MCLOSS_H_
