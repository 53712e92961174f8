#include "qsep/metrics.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "qsep/error.h"
#include "qsep/kernels.h"
#include "qsep/rng.h"

namespace qsep {

namespace {

constexpr double kProbClamp = 1e-6;
constexpr double kDbCap = 100.0;

void check_finite(const double* x, size_t n, const char* what) {
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(x[i])) throw_numeric(std::string(what) + " contains a non-finite value");
}

double trace(const Grid& a) {
    double t = 0.0;
    for (int i = 0; i < a.rows; ++i) t += a.at(i, i);
    return t;
}

Grid matmul(const Grid& a, const Grid& b) {
    Grid c(a.rows, b.cols, 0.0);
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k)
            kernels::axpy(a.at(i, k), b.row(k), c.row(i), static_cast<size_t>(b.cols));
    return c;
}

void symmetrize(Grid& a) {
    for (int i = 0; i < a.rows; ++i)
        for (int j = i + 1; j < a.cols; ++j) {
            double v = 0.5 * (a.at(i, j) + a.at(j, i));
            a.at(i, j) = v;
            a.at(j, i) = v;
        }
}

struct EigenDecomp {
    std::vector<double> values;
    Grid vectors; // column k is the eigenvector for values[k]
};

// Cyclic Jacobi rotations on a symmetric matrix. Quadratic convergence;
// the sweep cap is far above what K <= 64 needs.
EigenDecomp jacobi_eigen(Grid a) {
    const int n = a.rows;
    Grid v(n, n, 0.0);
    for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;

    double total = kernels::sum_squares(a.data(), a.values.size());
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
        if (off <= 1e-30 * std::max(total, 1e-300)) break;

        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = a.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                double tau = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                double t = (tau >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = v.at(k, p), vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    EigenDecomp d;
    d.values.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) d.values[static_cast<size_t>(i)] = a.at(i, i);
    d.vectors = v;
    return d;
}

void check_symmetric_square(const Grid& a, const char* what) {
    if (a.rows == 0 || a.rows != a.cols)
        throw_usage(std::string(what) + " needs a non-empty square matrix");
    check_finite(a.data(), a.values.size(), what);
    double scale = 0.0;
    for (double x : a.values) scale = std::max(scale, std::fabs(x));
    double tol = 1e-10 * std::max(1.0, scale);
    for (int i = 0; i < a.rows; ++i)
        for (int j = i + 1; j < a.cols; ++j)
            if (std::fabs(a.at(i, j) - a.at(j, i)) > tol)
                throw_usage(std::string(what) + ": matrix is not symmetric");
}

double capped_db(double num, double den) {
    if (num <= 1e-20 * den) return -kDbCap; // covers num = den = 0 (nothing recovered)
    if (den <= 1e-20 * num) return kDbCap;
    return std::clamp(10.0 * std::log10(num / den), -kDbCap, kDbCap);
}

void check_pair_lengths(const AudioClip& estimate, const AudioClip& reference,
                        const char* what) {
    if (reference.samples.empty()) throw_usage(std::string(what) + ": empty reference");
    if (estimate.samples.size() != reference.samples.size())
        throw_usage(std::string(what) + ": estimate has " +
                    std::to_string(estimate.samples.size()) + " samples but the reference has " +
                    std::to_string(reference.samples.size()));
    check_finite(estimate.samples.data(), estimate.samples.size(), what);
    check_finite(reference.samples.data(), reference.samples.size(), what);
}

void check_embedder(const EmbedderConfig& cfg) {
    if (cfg.bands < 1) throw_usage("embedder needs at least one band");
    if (cfg.classes < 1) throw_usage("embedder needs at least one class prototype");
}

} // namespace

GaussianStats fit_gaussian(const EmbeddingSet& emb) {
    const int m = emb.vectors.rows, k = emb.vectors.cols;
    if (m < 2) throw_usage("Gaussian fitting needs at least 2 embeddings");
    if (k < 1) throw_usage("Gaussian fitting needs non-empty embeddings");
    check_finite(emb.vectors.data(), emb.vectors.values.size(), "embedding set");

    GaussianStats g;
    g.mean.assign(static_cast<size_t>(k), 0.0);
    for (int i = 0; i < m; ++i)
        kernels::axpy(1.0, emb.vectors.row(i), g.mean.data(), static_cast<size_t>(k));
    kernels::scale(1.0 / m, g.mean.data(), static_cast<size_t>(k));

    g.cov = Grid(k, k, 0.0);
    std::vector<double> centered(static_cast<size_t>(k));
    for (int i = 0; i < m; ++i) {
        kernels::sub(emb.vectors.row(i), g.mean.data(), centered.data(), static_cast<size_t>(k));
        for (int r = 0; r < k; ++r)
            kernels::axpy(centered[static_cast<size_t>(r)], centered.data(), g.cov.row(r),
                          static_cast<size_t>(k));
    }
    kernels::scale(1.0 / (m - 1), g.cov.data(), g.cov.values.size());
    symmetrize(g.cov);
    return g;
}

Grid matrix_sqrt_psd(const Grid& a) {
    check_symmetric_square(a, "matrix_sqrt_psd");
    EigenDecomp d = jacobi_eigen(a);

    double lam_max = 0.0;
    for (double lam : d.values) lam_max = std::max(lam_max, std::fabs(lam));
    for (double& lam : d.values) {
        if (lam < -1e-8 * std::max(1.0, lam_max))
            throw_numeric("matrix_sqrt_psd: matrix has a negative eigenvalue");
        lam = std::sqrt(std::max(lam, 0.0));
    }

    const int n = a.rows;
    Grid w = d.vectors; // column k scaled by sqrt(lambda_k)
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) w.at(i, j) *= d.values[static_cast<size_t>(j)];
    Grid s(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            s.at(i, j) = kernels::dot(w.row(i), d.vectors.row(j), static_cast<size_t>(n));
    symmetrize(s);
    return s;
}

double frechet_distance(const GaussianStats& g, const GaussianStats& t) {
    const int k = static_cast<int>(g.mean.size());
    if (k == 0 || t.mean.size() != g.mean.size())
        throw_usage("frechet_distance: mean dimensions do not match");
    if (g.cov.rows != k || g.cov.cols != k || t.cov.rows != k || t.cov.cols != k)
        throw_usage("frechet_distance: covariance shape does not match the mean");

    double mean_term = 0.0;
    for (int i = 0; i < k; ++i) {
        double d = g.mean[static_cast<size_t>(i)] - t.mean[static_cast<size_t>(i)];
        mean_term += d * d;
    }

    Grid sg = matrix_sqrt_psd(g.cov);
    Grid inner = matmul(matmul(sg, t.cov), sg);
    symmetrize(inner);
    Grid cross = matrix_sqrt_psd(inner);

    double fd = mean_term + trace(g.cov) + trace(t.cov) - 2.0 * trace(cross);
    return std::max(0.0, fd);
}

double kld_binary(const ProbVector& p, const ProbVector& q) {
    if (p.values.empty()) throw_usage("kld_binary needs at least one class");
    if (p.values.size() != q.values.size())
        throw_usage("kld_binary: probability vectors differ in length");
    check_finite(p.values.data(), p.values.size(), "probability vector");
    check_finite(q.values.data(), q.values.size(), "probability vector");

    double acc = 0.0;
    for (size_t i = 0; i < p.values.size(); ++i) {
        double pc = std::clamp(p.values[i], kProbClamp, 1.0 - kProbClamp);
        double qc = std::clamp(q.values[i], kProbClamp, 1.0 - kProbClamp);
        if (pc == qc) continue; // exact zero contribution
        acc += pc * std::log(pc / qc) + (1.0 - pc) * std::log((1.0 - pc) / (1.0 - qc));
    }
    return std::max(0.0, acc);
}

double si_sdr(const AudioClip& estimate, const AudioClip& reference) {
    check_pair_lengths(estimate, reference, "si_sdr");
    const size_t n = reference.samples.size();
    double ref_energy = kernels::sum_squares(reference.samples.data(), n);
    if (ref_energy <= 0.0) throw_numeric("si_sdr: reference signal is silent");

    double alpha = kernels::dot(estimate.samples.data(), reference.samples.data(), n) / ref_energy;
    double num = alpha * alpha * ref_energy; // ||alpha * ref||^2
    std::vector<double> e = estimate.samples;
    kernels::axpy(-alpha, reference.samples.data(), e.data(), n);
    return capped_db(num, kernels::sum_squares(e.data(), n));
}

double sdr(const AudioClip& estimate, const AudioClip& reference) {
    check_pair_lengths(estimate, reference, "sdr");
    const size_t n = reference.samples.size();
    double num = kernels::sum_squares(reference.samples.data(), n);
    std::vector<double> e(n);
    kernels::sub(estimate.samples.data(), reference.samples.data(), e.data(), n);
    return capped_db(num, kernels::sum_squares(e.data(), n));
}

Grid band_log_energies(const AudioClip& clip, const EmbedderConfig& cfg) {
    check_embedder(cfg);
    ComplexSpectrogram spec = stft(clip, cfg.stft);
    MagnitudeSpectrogram mag = magnitude(spec);
    const int f = mag.bins.rows, frames = mag.bins.cols, bands = cfg.bands;
    if (f < bands)
        throw_usage("band_log_energies: " + std::to_string(f) + " frequency bins cannot fill " +
                    std::to_string(bands) + " bands");

    Grid feat(frames, bands);
    for (int t = 0; t < frames; ++t) {
        for (int b = 0; b < bands; ++b) {
            int lo = b * f / bands, hi = (b + 1) * f / bands;
            double e = 0.0;
            for (int k = lo; k < hi; ++k) {
                double v = mag.bins.at(k, t);
                e += v * v;
            }
            feat.at(t, b) = std::log(e + cfg.stft.log_epsilon);
        }
    }
    return feat;
}

std::vector<double> embed_audio(const AudioClip& clip, const EmbedderConfig& cfg) {
    Grid feat = band_log_energies(clip, cfg);
    const int frames = feat.rows, bands = feat.cols;
    std::vector<double> out(static_cast<size_t>(2 * bands), 0.0);
    for (int b = 0; b < bands; ++b) {
        double mean = 0.0;
        for (int t = 0; t < frames; ++t) mean += feat.at(t, b);
        mean /= frames;
        double var = 0.0;
        for (int t = 0; t < frames; ++t) {
            double d = feat.at(t, b) - mean;
            var += d * d;
        }
        out[static_cast<size_t>(b)] = mean;
        out[static_cast<size_t>(bands + b)] = std::sqrt(var / frames);
    }
    return out;
}

ProbVector classify_probs(const AudioClip& clip, const EmbedderConfig& cfg) {
    std::vector<double> emb = embed_audio(clip, cfg);
    const size_t dim = emb.size();
    double emb_norm = std::sqrt(kernels::sum_squares(emb.data(), dim));

    Rng rng(cfg.proto_seed);
    std::vector<double> proto(dim);
    ProbVector out;
    out.values.reserve(static_cast<size_t>(cfg.classes));
    for (int c = 0; c < cfg.classes; ++c) {
        for (double& v : proto) v = rng.normal();
        double pn = std::sqrt(kernels::sum_squares(proto.data(), dim));
        double cos = 0.0;
        if (emb_norm > 1e-300 && pn > 1e-300)
            cos = kernels::dot(emb.data(), proto.data(), dim) / (emb_norm * pn);
        out.values.push_back(1.0 / (1.0 + std::exp(-cos)));
    }
    return out;
}

PairMetrics evaluate_pair(const AudioClip& estimate, const AudioClip& reference,
                          const EmbedderConfig& cfg) {
    PairMetrics m;
    m.si_sdr_db = si_sdr(estimate, reference);
    m.sdr_db = sdr(estimate, reference);
    m.fd = frechet_distance(fit_gaussian(EmbeddingSet{band_log_energies(estimate, cfg)}),
                            fit_gaussian(EmbeddingSet{band_log_energies(reference, cfg)}));
    m.kld = kld_binary(classify_probs(reference, cfg), classify_probs(estimate, cfg));
    return m;
}

} // namespace qsep
