#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsep/separator.h"

namespace qsep {

enum class OptimizerKind {
    Adam,
    Sgd,
};

struct TrainConfig {
    int batch_size = 8;
    double learning_rate = 1e-3;
    int epochs = 100;
    uint64_t seed = 0;
    double weight_floor = 1e-3; // clamp under the log(1+m) bin weights
    OptimizerKind optimizer = OptimizerKind::Adam;
    std::string log_path; // per-epoch TSV (epoch, mean loss, seconds); empty = no log
};

// One training mixture: magnitude grid (the complex form is retained for
// callers that resynthesize), N query embeddings and their ground-truth
// masks. Grids are used exactly as stored — any log-frequency warping
// must be applied by whoever builds the sample.
struct TrainSample {
    MagnitudeSpectrogram mixture;
    ComplexSpectrogram mixture_complex;
    std::vector<QueryEmbedding> queries;
    std::vector<SeparationMask> gt_masks;
};

// Entrywise max(log(1 + m), floor): louder bins weigh more, silent bins
// never fall to zero weight.
Grid loss_weight(const MagnitudeSpectrogram& m, double floor);

// Mean over queries of the weighted per-bin binary cross-entropy between
// prediction and ground truth, averaged over all F*T bins. Predictions
// are clamped to [1e-7, 1 - 1e-7] as part of the loss definition; if
// clamped_count is non-null it receives the number of clamped entries.
double weighted_bce(const std::vector<SeparationMask>& pred,
                    const std::vector<SeparationMask>& gt, const MagnitudeSpectrogram& mix,
                    double floor, int* clamped_count = nullptr);

// Forward-only mean loss of the batch under params.
double batch_loss(const ModelParams& params, const std::vector<TrainSample>& batch,
                  double floor = 1e-3);

// Exact reverse-mode gradient of batch_loss with respect to every
// parameter tensor, in a ModelParams-shaped container. Mean semantics:
// the batch mean of per-sample losses, each the mean over its N queries.
ModelParams gradients(const ModelParams& params, const std::vector<TrainSample>& batch,
                      double floor = 1e-3, double* loss_out = nullptr);

// Minimize the weighted BCE over the dataset. Deterministic given
// (dataset, model_config, config, init_seed): seeded init, seeded
// per-epoch shuffle, fixed accumulation order. Throws a numeric error if
// the loss stops being finite.
ModelParams train(const std::vector<TrainSample>& dataset, const ModelConfig& model_config,
                  const TrainConfig& config, uint64_t init_seed);

} // namespace qsep
