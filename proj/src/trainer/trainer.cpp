#include "qsep/trainer.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "qsep/error.h"
#include "qsep/kernels.h"
#include "qsep/rng.h"

namespace qsep {

namespace {

constexpr double kClampLo = 1e-7;
constexpr double kClampHi = 1.0 - 1e-7;

void check_sample(const TrainSample& s, size_t index) {
    const std::string where = "training sample " + std::to_string(index);
    if (s.queries.empty()) throw_usage(where + " has no queries");
    if (s.queries.size() != s.gt_masks.size())
        throw_usage(where + ": " + std::to_string(s.queries.size()) + " queries but " +
                    std::to_string(s.gt_masks.size()) + " ground-truth masks");
    if (s.mixture.bins.rows <= 0 || s.mixture.bins.cols <= 0)
        throw_usage(where + " has an empty mixture grid");
    for (const SeparationMask& g : s.gt_masks)
        if (!g.values.same_shape(s.mixture.bins))
            throw_usage(where + ": ground-truth mask shape does not match the mixture");
}

double bin_bce(double p, double g) {
    if (p < kClampLo) p = kClampLo;
    if (p > kClampHi) p = kClampHi;
    return -(g * std::log(p) + (1.0 - g) * std::log(1.0 - p));
}

// Per-sample forward pass: predicted masks (unclamped sigmoids) plus the
// trace needed to backpropagate through the feature network.
struct SampleForward {
    FeatureMap f_s;
    UnetTrace trace;
    std::vector<std::vector<double>> f_e;  // per query, C values
    std::vector<SeparationMask> pred;      // per query
};

SampleForward forward_sample(const ModelParams& params, const TrainSample& s, bool keep_trace) {
    SampleForward out;
    Grid x = log_compress(s.mixture, params.config.stft.log_epsilon);
    out.f_s = unet_forward(x, params, keep_trace ? &out.trace : nullptr);
    out.f_e.reserve(s.queries.size());
    out.pred.reserve(s.queries.size());
    for (const QueryEmbedding& q : s.queries) {
        out.f_e.push_back(embed_project(q, params));
        out.pred.push_back(predict_mask(out.f_s, out.f_e.back(), params));
    }
    return out;
}

double loss_of(const TrainSample& s, const SampleForward& fwd, double floor) {
    return weighted_bce(fwd.pred, s.gt_masks, s.mixture, floor);
}

double grad_sample(const ModelParams& params, const TrainSample& s, double floor,
                   double inv_batch, ModelParams& grads) {
    SampleForward fwd = forward_sample(params, s, true);

    const Grid& mag = s.mixture.bins;
    const size_t ft = mag.values.size();
    const int c_count = params.config.unet.out_channels;
    const int d = params.config.embed_dim;
    Grid w = loss_weight(s.mixture, floor);

    const size_t n_queries = s.queries.size();
    const double scale = inv_batch / (static_cast<double>(n_queries) * static_cast<double>(ft));

    Tensor3 dfeat(c_count, mag.rows, mag.cols);
    std::vector<double> dz(ft);
    for (size_t n = 0; n < n_queries; ++n) {
        const double* p = fwd.pred[n].values.values.data();
        const double* g = s.gt_masks[n].values.values.data();
        for (size_t i = 0; i < ft; ++i) {
            // Clamped loss bins are flat: no gradient flows there.
            bool clamped = p[i] < kClampLo || p[i] > kClampHi;
            dz[i] = clamped ? 0.0 : w.values[i] * (p[i] - g[i]) * scale;
        }
        grads.mask_bias += kernels::sum(dz.data(), ft);
        const std::vector<double>& f_e = fwd.f_e[n];
        const double* e = s.queries[n].values.data();
        for (int c = 0; c < c_count; ++c) {
            double along = kernels::dot(dz.data(), fwd.f_s.values.plane(c), ft);
            grads.channel_scale[c] += along * f_e[c];
            double dfe = along * params.channel_scale[c];
            double dze = dfe * f_e[c] * (1.0 - f_e[c]);
            kernels::axpy(dze, e, &grads.embed_weight[static_cast<size_t>(c) * d],
                          static_cast<size_t>(d));
            grads.embed_bias[c] += dze;
            kernels::axpy(params.channel_scale[c] * f_e[c], dz.data(), dfeat.plane(c), ft);
        }
    }
    unet_backward(params, fwd.trace, dfeat, grads);
    return loss_of(s, fwd, floor);
}

double batch_loss_ptrs(const ModelParams& params, const std::vector<const TrainSample*>& batch,
                       double floor) {
    double total = 0.0;
    for (const TrainSample* s : batch) {
        SampleForward fwd = forward_sample(params, *s, false);
        total += loss_of(*s, fwd, floor);
    }
    return total / static_cast<double>(batch.size());
}

ModelParams gradients_ptrs(const ModelParams& params, const std::vector<const TrainSample*>& batch,
                           double floor, double* loss_out) {
    ModelParams grads = zero_like(params);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const TrainSample* s : batch) total += grad_sample(params, *s, floor, inv_batch, grads);
    double loss = total * inv_batch;
    if (!std::isfinite(loss)) throw_numeric("training loss is not finite");
    if (loss_out) *loss_out = loss;
    return grads;
}

struct TensorView {
    double* data;
    size_t size;
};

std::vector<TensorView> param_views(ModelParams& p) {
    std::vector<TensorView> v;
    for (ConvLayer& c : p.enc) {
        v.push_back({c.weights.data(), c.weights.size()});
        v.push_back({c.bias.data(), c.bias.size()});
    }
    for (ConvLayer& c : p.dec) {
        v.push_back({c.weights.data(), c.weights.size()});
        v.push_back({c.bias.data(), c.bias.size()});
    }
    v.push_back({p.out_conv.weights.data(), p.out_conv.weights.size()});
    v.push_back({p.out_conv.bias.data(), p.out_conv.bias.size()});
    v.push_back({p.embed_weight.data(), p.embed_weight.size()});
    v.push_back({p.embed_bias.data(), p.embed_bias.size()});
    v.push_back({p.channel_scale.data(), p.channel_scale.size()});
    v.push_back({&p.mask_bias, 1});
    return v;
}

void check_train_config(const TrainConfig& c) {
    if (c.batch_size < 1) throw_usage("batch_size must be at least 1");
    if (!(c.learning_rate >= 0.0)) throw_usage("learning_rate must be non-negative");
    if (c.epochs < 0) throw_usage("epochs must be non-negative");
    if (!(c.weight_floor > 0.0)) throw_usage("weight_floor must be positive");
}

} // namespace

Grid loss_weight(const MagnitudeSpectrogram& m, double floor) {
    if (!(floor > 0.0)) throw_usage("loss weight floor must be positive");
    Grid w(m.bins.rows, m.bins.cols);
    for (size_t i = 0; i < w.values.size(); ++i) {
        double mag = m.bins.values[i];
        if (!std::isfinite(mag)) throw_numeric("magnitude grid contains a non-finite value");
        w.values[i] = std::max(std::log(1.0 + mag), floor);
    }
    return w;
}

double weighted_bce(const std::vector<SeparationMask>& pred, const std::vector<SeparationMask>& gt,
                    const MagnitudeSpectrogram& mix, double floor, int* clamped_count) {
    if (pred.empty()) throw_usage("weighted_bce needs at least one prediction");
    if (pred.size() != gt.size())
        throw_usage("weighted_bce: " + std::to_string(pred.size()) + " predictions but " +
                    std::to_string(gt.size()) + " ground-truth masks");
    Grid w = loss_weight(mix, floor);
    const size_t ft = w.values.size();
    int clamped = 0;
    double total = 0.0;
    for (size_t n = 0; n < pred.size(); ++n) {
        if (!pred[n].values.same_shape(w) || !gt[n].values.same_shape(w))
            throw_usage("weighted_bce: mask shape does not match the mixture grid");
        const double* p = pred[n].values.values.data();
        const double* g = gt[n].values.values.data();
        double acc = 0.0;
        for (size_t i = 0; i < ft; ++i) {
            if (!std::isfinite(p[i]) || !std::isfinite(g[i]))
                throw_numeric("weighted_bce: mask entry is not finite");
            if (!(p[i] >= 0.0 && p[i] <= 1.0))
                throw_usage("weighted_bce: prediction outside [0, 1]");
            if (!(g[i] >= 0.0 && g[i] <= 1.0))
                throw_usage("weighted_bce: ground truth outside [0, 1]");
            if (p[i] < kClampLo || p[i] > kClampHi) ++clamped;
            acc += w.values[i] * bin_bce(p[i], g[i]);
        }
        total += acc / static_cast<double>(ft);
    }
    if (clamped_count) *clamped_count = clamped;
    return total / static_cast<double>(pred.size());
}

double batch_loss(const ModelParams& params, const std::vector<TrainSample>& batch, double floor) {
    if (batch.empty()) throw_usage("batch_loss needs at least one sample");
    std::vector<const TrainSample*> ptrs;
    ptrs.reserve(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        check_sample(batch[i], i);
        ptrs.push_back(&batch[i]);
    }
    return batch_loss_ptrs(params, ptrs, floor);
}

ModelParams gradients(const ModelParams& params, const std::vector<TrainSample>& batch,
                      double floor, double* loss_out) {
    if (batch.empty()) throw_usage("gradients needs at least one sample");
    std::vector<const TrainSample*> ptrs;
    ptrs.reserve(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        check_sample(batch[i], i);
        ptrs.push_back(&batch[i]);
    }
    return gradients_ptrs(params, ptrs, floor, loss_out);
}

ModelParams train(const std::vector<TrainSample>& dataset, const ModelConfig& model_config,
                  const TrainConfig& config, uint64_t init_seed) {
    check_train_config(config);
    if (dataset.empty()) throw_usage("training dataset is empty");
    for (size_t i = 0; i < dataset.size(); ++i) check_sample(dataset[i], i);

    ModelParams params = init_params(model_config, init_seed);
    std::vector<TensorView> views = param_views(params);
    size_t total_size = 0;
    for (const TensorView& v : views) total_size += v.size;
    std::vector<double> moment1(total_size, 0.0);
    std::vector<double> moment2(total_size, 0.0);

    FILE* log = nullptr;
    if (!config.log_path.empty()) {
        log = std::fopen(config.log_path.c_str(), "w");
        if (!log) throw_io("cannot open training log " + config.log_path);
    }

    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double beta1_t = 1.0, beta2_t = 1.0;  // running beta^t across steps
    Rng shuffle_rng(config.seed);
    std::vector<size_t> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto start = std::chrono::steady_clock::now();
        Rng epoch_rng(shuffle_rng.fork(static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(epoch_rng.next_u64() % i);
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        std::vector<const TrainSample*> batch;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(config.batch_size)) {
            size_t end = std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
            batch.clear();
            for (size_t i = begin; i < end; ++i) batch.push_back(&dataset[order[i]]);

            double loss = 0.0;
            ModelParams grads = gradients_ptrs(params, batch, config.weight_floor, &loss);
            if (!std::isfinite(loss)) {
                if (log) std::fclose(log);
                throw_numeric("training diverged at epoch " + std::to_string(epoch) +
                              ": loss is not finite");
            }
            epoch_loss += loss * static_cast<double>(batch.size());

            std::vector<TensorView> gviews = param_views(grads);
            if (config.optimizer == OptimizerKind::Adam) {
                beta1_t *= beta1;
                beta2_t *= beta2;
                double c1 = 1.0 / (1.0 - beta1_t);
                double c2 = 1.0 / (1.0 - beta2_t);
                size_t off = 0;
                for (size_t v = 0; v < views.size(); ++v) {
                    kernels::adam_update(views[v].data, gviews[v].data, moment1.data() + off,
                                         moment2.data() + off, views[v].size, config.learning_rate,
                                         beta1, beta2, adam_eps, c1, c2);
                    off += views[v].size;
                }
            } else {
                for (size_t v = 0; v < views.size(); ++v)
                    kernels::axpy(-config.learning_rate, gviews[v].data, views[v].data,
                                  views[v].size);
            }
        }
        epoch_loss /= static_cast<double>(dataset.size());

        if (log) {
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                              .count();
            std::fprintf(log, "%d\t%.12g\t%.3f\n", epoch, epoch_loss, secs);
            std::fflush(log);
        }
    }
    if (log) std::fclose(log);
    return params;
}

} // namespace qsep
