#pragma once

#include <cstdint>
#include <vector>

#include "qsep/dsp.h"
#include "qsep/grid.h"

namespace qsep {

// M sample embeddings of dimension K, one per row.
struct EmbeddingSet {
    Grid vectors;
};

struct GaussianStats {
    std::vector<double> mean;
    Grid cov; // K x K, symmetric PSD
};

// Per-class probabilities in (0, 1).
struct ProbVector {
    std::vector<double> values;
};

// Deterministic surrogate for a pretrained audio feature extractor /
// classifier: per-band log energies over a fixed linear partition of the
// spectrum, and seeded random prototypes for class probabilities. Keeps
// the evaluation suite self-contained; absolute values are not comparable
// with scores from learned embedders.
struct EmbedderConfig {
    int bands = 20;            // embedding dim is 2*bands (means + stds)
    int classes = 32;          // prototype count = probability vector length
    uint64_t proto_seed = 2024;
    StftConfig stft;
};

// Estimate/reference scores for one evaluated pair.
struct PairMetrics {
    double fd = 0.0;
    double kld = 0.0;
    double si_sdr_db = 0.0;
    double sdr_db = 0.0;
};

// Sample mean and unbiased sample covariance, symmetrized. Needs M >= 2.
GaussianStats fit_gaussian(const EmbeddingSet& emb);

// Principal square root of a symmetric PSD matrix via Jacobi
// eigendecomposition; roundoff-negative eigenvalues are clipped to zero,
// strongly negative ones are an error.
Grid matrix_sqrt_psd(const Grid& a);

// ||mu_g - mu_t||^2 + Tr(S_g + S_t - 2 (S_g S_t)^{1/2}), computed through
// the symmetric product sqrt for stability. Small negative results from
// roundoff are clipped to zero.
double frechet_distance(const GaussianStats& g, const GaussianStats& t);

// sum_i p_i log(p_i/q_i) + (1-p_i) log((1-p_i)/(1-q_i)) with natural logs,
// entries clamped to [1e-6, 1 - 1e-6].
double kld_binary(const ProbVector& p, const ProbVector& q);

// Scale-invariant SDR in dB: the estimate is projected onto the reference
// before the error is measured. Capped to [-100, 100] dB.
double si_sdr(const AudioClip& estimate, const AudioClip& reference);

// Plain SDR in dB: 10 log10(||ref||^2 / ||est - ref||^2), capped likewise.
double sdr(const AudioClip& estimate, const AudioClip& reference);

// frames x bands matrix of log band energies; the row set feeds Gaussian
// fitting, the column statistics feed embed_audio.
Grid band_log_energies(const AudioClip& clip, const EmbedderConfig& cfg);

// 2*bands vector: per-band log-energy means then population stds.
std::vector<double> embed_audio(const AudioClip& clip, const EmbedderConfig& cfg);

// Sigmoid of cosine similarity between the clip embedding and each seeded
// prototype vector.
ProbVector classify_probs(const AudioClip& clip, const EmbedderConfig& cfg);

// All four scores for one (estimate, reference) pair. KLD direction is
// D(reference || estimate).
PairMetrics evaluate_pair(const AudioClip& estimate, const AudioClip& reference,
                          const EmbedderConfig& cfg);

} // namespace qsep
