// Copyright 2026 The usdr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Per-utterance unsupervised dereverberation: a bounded complex mask (or a
// free spectrogram) is optimized against the mixture-constraint loss by
// block-coordinate descent, alternating closed-form filter refreshes with
// projected gradient steps on the mask.

#ifndef USDR_USD_ENGINE_H_
#define USDR_USD_ENGINE_H_

#include <optional>
#include <string>
#include <vector>

#include "usdr/common.h"
#include "usdr/mcloss.h"
#include "usdr/roomsim.h"
#include "usdr/spectral.h"

namespace usdr {

enum class EstimatorKind { kMasking, kMapping };
enum class InitKind { kUnitMask, kZeros };

std::string ToString(EstimatorKind k);
EstimatorKind ParseEstimatorKind(const std::string& s);
std::string ToString(InitKind k);
InitKind ParseInitKind(const std::string& s);

inline constexpr double kMaskBound = 5.0;

struct EstimatorParams {
  EstimatorKind kind = EstimatorKind::kMasking;
  CMatrix values;                // mask or spectrogram, frames x bins
  std::optional<CMatrix> garbage;  // mask over Y_q for the garbage source
  double bound = kMaskBound;

  // Clamps Re and Im of the masks into [-bound, bound].
  void Clamp();
};

// Masking: clamp(M) .* Y_q. Mapping: the values themselves.
CMatrix Forward(const EstimatorParams& params, const CMatrix& y_q);
ComplexSpectrogram Forward(const EstimatorParams& params,
                           const ComplexSpectrogram& y_q);
// Garbage spectrogram clamp(M_v) .* Y_q; requires params.garbage.
CMatrix ForwardGarbage(const EstimatorParams& params, const CMatrix& y_q);

struct MaskGradient {
  CMatrix values;                // dL/dRe + i dL/dIm of params.values
  std::optional<CMatrix> garbage;
};

// Gradient of the MC loss with respect to the estimator parameters while
// the filters stay fixed. Components whose raw mask value lies outside the
// clamp range get zero gradient.
MaskGradient ComputeMaskGradient(const EstimatorParams& params,
                                 const std::vector<CMatrix>& mixtures,
                                 int ref_mic, const FilterSet& filters,
                                 const LossConfig& cfg);
// Loss with the filters fixed, as seen by the gradient above.
double FixedFilterLoss(const EstimatorParams& params,
                       const std::vector<CMatrix>& mixtures, int ref_mic,
                       const FilterSet& filters, const LossConfig& cfg);

struct OptimConfig {
  LossConfig loss;
  EstimatorKind kind = EstimatorKind::kMasking;
  InitKind init = InitKind::kUnitMask;
  int max_outer_iters = 20;
  int mask_steps = 4;        // gradient steps per outer iteration
  double step_size = 0.05;   // initial step per outer iteration, RMS mask units
  double step_decay = 0.95;  // per outer iteration
  int max_halvings = 10;
  double convergence_tol = 1e-4;  // relative loss change per outer iteration
  double garbage_init = 0.1;
  double init_jitter = 0.0;       // uniform RI jitter added to the init mask
  // Filter refreshes are blended toward the closed form and only accepted
  // when the loss does not go up. With false the closed form is always
  // taken and divergence detection is active.
  bool monotone_refresh = true;
  double increase_tol = 1e-6;
  int divergence_patience = 3;
  uint64_t seed = 0;

  void Validate() const;  // throws ConfigError
};

struct DereverbResult {
  ComplexSpectrogram s_hat;
  Waveform waveform;
  EstimatorParams params;
  FilterSet filters;
  // Loss after every accepted update (filter refresh or mask step), starting
  // at the closed-form loss of the initial estimate.
  std::vector<double> trajectory;
  std::vector<double> outer_losses;  // at the end of each outer iteration
  double initial_loss = 0.0;         // closed-form filters, initial estimate
  double final_loss = 0.0;           // last trajectory value
  double final_closed_form_loss = 0.0;  // closed-form filters, final estimate
  int outer_iterations = 0;
  bool converged = false;
  bool diverged = false;
  double max_condition = 0.0;
  std::string variant;
};

DereverbResult Optimize(const MultichannelUtterance& utt,
                        const OptimConfig& cfg);

// istft of S_q at the input length.
Waveform InferDirect(const DereverbResult& result, int num_samples);
// istft of Y_q - g_q^H stack(S_q) with the converged reference filter.
Waveform InferSubtractive(const MultichannelUtterance& utt,
                          const DereverbResult& result, const LossConfig& cfg);
// Spectrogram behind InferSubtractive.
CMatrix SubtractiveEstimate(const CMatrix& y_q, const CMatrix& s_hat,
                            const FilterBank& ref_filter,
                            const LossConfig& cfg);

}  // namespace usdr

#endif  // USDR_USD_ENGINE_H_
