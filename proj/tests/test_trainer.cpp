#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qsep/error.h"
#include "qsep/rng.h"
#include "qsep/trainer.h"

using namespace qsep;

namespace {

// Test-local restatement of the learnable tensor list so comparisons and
// finite differences do not depend on library internals.
std::vector<std::pair<double*, size_t>> tensor_spans(ModelParams& p) {
    std::vector<std::pair<double*, size_t>> v;
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

bool params_identical(ModelParams a, ModelParams b) {
    auto va = tensor_spans(a);
    auto vb = tensor_spans(b);
    if (va.size() != vb.size()) return false;
    for (size_t t = 0; t < va.size(); ++t) {
        if (va[t].second != vb[t].second) return false;
        for (size_t i = 0; i < va[t].second; ++i)
            if (va[t].first[i] != vb[t].first[i]) return false;
    }
    return true;
}

double max_abs_param(ModelParams p) {
    double m = 0.0;
    for (auto& span : tensor_spans(p))
        for (size_t i = 0; i < span.second; ++i) m = std::max(m, std::fabs(span.first[i]));
    return m;
}

MagnitudeSpectrogram make_mag(const Grid& bins) {
    MagnitudeSpectrogram m;
    m.bins = bins;
    m.sample_rate = 8000;
    m.source_samples = 0;
    return m;
}

TrainSample random_sample(Rng& rng, int f, int t, int n_queries, int d) {
    TrainSample s;
    Grid bins(f, t);
    for (double& v : bins.values) v = rng.uniform(0.05, 2.0);
    s.mixture = make_mag(bins);
    for (int n = 0; n < n_queries; ++n) {
        QueryEmbedding q;
        for (int j = 0; j < d; ++j) q.values.push_back(rng.uniform(-1.0, 1.0));
        s.queries.push_back(q);
        SeparationMask g;
        g.values = Grid(f, t);
        for (double& v : g.values.values) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        s.gt_masks.push_back(g);
    }
    return s;
}

// Two band-limited "sources" on disjoint rows plus a faint floor; the
// ground truth masks are the band indicators.
TrainSample band_sample(int d) {
    const int f = 16, t = 12;
    Grid bins(f, t, 0.01);
    Grid gt_a(f, t, 0.0), gt_b(f, t, 0.0);
    for (int k = 0; k < t; ++k) {
        for (int r = 2; r <= 5; ++r) {
            bins.at(r, k) = 3.0;
            gt_a.at(r, k) = 1.0;
        }
        for (int r = 9; r <= 12; ++r) {
            bins.at(r, k) = 2.0;
            gt_b.at(r, k) = 1.0;
        }
    }
    TrainSample s;
    s.mixture = make_mag(bins);
    QueryEmbedding qa, qb;
    for (int j = 0; j < d; ++j) {
        qa.values.push_back(1.0);
        qb.values.push_back(j % 2 == 0 ? 1.0 : -1.0);
    }
    s.queries = {qa, qb};
    s.gt_masks = {SeparationMask{gt_a}, SeparationMask{gt_b}};
    return s;
}

ModelConfig tiny_config(int levels, int base, int out_ch, int kernel, int d) {
    ModelConfig cfg;
    cfg.unet.levels = levels;
    cfg.unet.base_channels = base;
    cfg.unet.out_channels = out_ch;
    cfg.unet.kernel_size = kernel;
    cfg.embed_dim = d;
    return cfg;
}

} // namespace

TEST_CASE("loss_weight floors silent bins and matches the log table") {
    Grid bins(3, 4, 0.0);
    MagnitudeSpectrogram m = make_mag(bins);
    Grid w = loss_weight(m, 1e-3);
    for (double v : w.values) CHECK(v == 1e-3);

    // log(1 + (e - 1)) = 1
    for (double& v : bins.values) v = std::exp(1.0) - 1.0;
    w = loss_weight(make_mag(bins), 1e-3);
    for (double v : w.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));

    Rng rng(77);
    for (double& v : bins.values) v = rng.uniform(0.0, 5.0);
    m = make_mag(bins);
    w = loss_weight(m, 1e-3);
    for (size_t i = 0; i < bins.values.size(); ++i)
        CHECK(w.values[i] == std::max(std::log(1.0 + bins.values[i]), 1e-3));

    CHECK_THROWS_AS(loss_weight(m, 0.0), Error);
    bins.values[0] = std::nan("");
    CHECK_THROWS_AS(loss_weight(make_mag(bins), 1e-3), Error);
}

TEST_CASE("weighted_bce hand values") {
    const int f = 2, t = 2;
    Grid unit_mag(f, t, std::exp(1.0) - 1.0); // weight exactly 1 per bin

    SUBCASE("uniform half prediction costs ln 2") {
        SeparationMask pred{Grid(f, t, 0.5)};
        SeparationMask gt{Grid(f, t, 0.0)};
        gt.values.at(0, 1) = 1.0;
        double loss = weighted_bce({pred}, {gt}, make_mag(unit_mag), 1e-3);
        CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }

    SUBCASE("near-perfect prediction is near-zero loss") {
        SeparationMask gt{Grid(f, t, 0.0)};
        gt.values.at(1, 0) = 1.0;
        SeparationMask pred{Grid(f, t, 0.0)};
        for (size_t i = 0; i < pred.values.values.size(); ++i)
            pred.values.values[i] = gt.values.values[i] == 1.0 ? 1.0 - 1e-7 : 1e-7;
        double loss = weighted_bce({pred}, {gt}, make_mag(unit_mag), 1e-3);
        CHECK(loss < 1e-5);
        CHECK(loss > 0.0);
    }

    SUBCASE("two-query hand computation") {
        Grid bins(f, t);
        bins.values = {0.5, 1.0, 2.0, 0.0};
        SeparationMask p1{Grid(f, t)}, p2{Grid(f, t)};
        SeparationMask g1{Grid(f, t)}, g2{Grid(f, t)};
        p1.values.values = {0.3, 0.7, 0.9, 0.2};
        g1.values.values = {0.0, 1.0, 1.0, 0.0};
        p2.values.values = {0.6, 0.4, 0.5, 0.8};
        g2.values.values = {1.0, 0.0, 1.0, 1.0};

        double expected = 0.0;
        const std::vector<const SeparationMask*> ps = {&p1, &p2};
        const std::vector<const SeparationMask*> gs = {&g1, &g2};
        for (int n = 0; n < 2; ++n) {
            double acc = 0.0;
            for (int i = 0; i < 4; ++i) {
                double wv = std::max(std::log(1.0 + bins.values[i]), 1e-3);
                double pv = ps[n]->values.values[i];
                double gv = gs[n]->values.values[i];
                acc += wv * -(gv * std::log(pv) + (1.0 - gv) * std::log(1.0 - pv));
            }
            expected += acc / 4.0;
        }
        expected /= 2.0;

        double loss = weighted_bce({p1, p2}, {g1, g2}, make_mag(bins), 1e-3);
        CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("exact 0 and 1 predictions are clamped and counted") {
        SeparationMask pred{Grid(f, t, 0.5)};
        pred.values.values[0] = 0.0;
        pred.values.values[3] = 1.0;
        SeparationMask gt{Grid(f, t, 1.0)};
        int clamped = -1;
        double loss = weighted_bce({pred}, {gt}, make_mag(unit_mag), 1e-3, &clamped);
        CHECK(std::isfinite(loss));
        CHECK(clamped == 2);
    }

    SUBCASE("argument validation") {
        SeparationMask pred{Grid(f, t, 0.5)};
        SeparationMask gt{Grid(f, t, 0.0)};
        MagnitudeSpectrogram mix = make_mag(unit_mag);
        CHECK_THROWS_AS(weighted_bce({}, {}, mix, 1e-3), Error);
        CHECK_THROWS_AS(weighted_bce({pred}, {gt, gt}, mix, 1e-3), Error);
        SeparationMask wrong{Grid(f + 1, t, 0.5)};
        CHECK_THROWS_AS(weighted_bce({wrong}, {gt}, mix, 1e-3), Error);
        SeparationMask outside{Grid(f, t, 1.5)};
        CHECK_THROWS_AS(weighted_bce({outside}, {gt}, mix, 1e-3), Error);
        SeparationMask bad{Grid(f, t, 0.5)};
        bad.values.values[1] = std::nan("");
        try {
            weighted_bce({bad}, {gt}, mix, 1e-3);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Numeric);
        }
    }
}

TEST_CASE("gradient vanishes when predictions already match the targets") {
    // Zero feature net and zero bias puts every prediction at exactly 0.5;
    // soft targets of 0.5 make the loss stationary.
    ModelConfig cfg = tiny_config(0, 1, 2, 1, 2);
    ModelParams params = init_params(cfg, 3);
    std::fill(params.out_conv.weights.begin(), params.out_conv.weights.end(), 0.0);
    std::fill(params.out_conv.bias.begin(), params.out_conv.bias.end(), 0.0);
    params.mask_bias = 0.0;

    TrainSample s;
    Grid bins(4, 4, 1.0);
    s.mixture = make_mag(bins);
    s.queries = {QueryEmbedding{{0.3, -0.4}}};
    s.gt_masks = {SeparationMask{Grid(4, 4, 0.5)}};

    ModelParams grads = gradients(params, {s});
    CHECK(max_abs_param(grads) < 1e-6);

    // Saturated-and-correct: sigmoid(50) rounds to exactly 1.0, the clamp
    // zone, so the gradient is cut to zero there as well.
    params.mask_bias = 50.0;
    s.gt_masks = {SeparationMask{Grid(4, 4, 1.0)}};
    grads = gradients(params, {s});
    CHECK(max_abs_param(grads) == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
    const double h = 1e-4;
    const uint64_t seeds[] = {11, 23, 37, 51, 73};
    for (uint64_t seed : seeds) {
        CAPTURE(seed);
        ModelConfig cfg = tiny_config(1, 2, 2, 3, 2);
        ModelParams params = init_params(cfg, seed);
        Rng rng(seed * 1000 + 17);
        std::vector<TrainSample> batch = {random_sample(rng, 4, 4, 2, 2)};

        double loss = 0.0;
        ModelParams grads = gradients(params, batch, 1e-3, &loss);
        CHECK(std::isfinite(loss));

        auto pspans = tensor_spans(params);
        auto gspans = tensor_spans(grads);
        double max_rel = 0.0;
        for (size_t tix = 0; tix < pspans.size(); ++tix) {
            for (size_t i = 0; i < pspans[tix].second; ++i) {
                double saved = pspans[tix].first[i];
                pspans[tix].first[i] = saved + h;
                double lp = batch_loss(params, batch);
                pspans[tix].first[i] = saved - h;
                double lm = batch_loss(params, batch);
                pspans[tix].first[i] = saved;
                double fd = (lp - lm) / (2.0 * h);
                double an = gspans[tix].first[i];
                double rel = std::fabs(an - fd) /
                             std::max({1e-6, std::fabs(an), std::fabs(fd)});
                max_rel = std::max(max_rel, rel);
            }
        }
        CHECK(max_rel < 1e-4);
    }
}

TEST_CASE("gradients are invariant to batch duplication and pair order") {
    ModelConfig cfg = tiny_config(1, 2, 3, 3, 4);
    ModelParams params = init_params(cfg, 9);
    Rng rng(1234);
    TrainSample s = random_sample(rng, 6, 8, 3, 4);

    SUBCASE("duplicating the batch leaves the mean gradient unchanged") {
        double loss1 = 0.0, loss2 = 0.0;
        ModelParams g1 = gradients(params, {s}, 1e-3, &loss1);
        ModelParams g2 = gradients(params, {s, s}, 1e-3, &loss2);
        CHECK(loss1 == doctest::Approx(loss2).epsilon(1e-12));
        auto v1 = tensor_spans(g1);
        auto v2 = tensor_spans(g2);
        for (size_t t = 0; t < v1.size(); ++t)
            for (size_t i = 0; i < v1[t].second; ++i)
                CHECK(v1[t].first[i] == doctest::Approx(v2[t].first[i]).epsilon(1e-12));
    }

    SUBCASE("shuffling the query/target pairs changes nothing") {
        TrainSample shuffled = s;
        std::swap(shuffled.queries[0], shuffled.queries[2]);
        std::swap(shuffled.gt_masks[0], shuffled.gt_masks[2]);
        double loss1 = 0.0, loss2 = 0.0;
        ModelParams g1 = gradients(params, {s}, 1e-3, &loss1);
        ModelParams g2 = gradients(params, {shuffled}, 1e-3, &loss2);
        CHECK(loss1 == doctest::Approx(loss2).epsilon(1e-12));
        auto v1 = tensor_spans(g1);
        auto v2 = tensor_spans(g2);
        for (size_t t = 0; t < v1.size(); ++t)
            for (size_t i = 0; i < v1[t].second; ++i)
                CHECK(v1[t].first[i] == doctest::Approx(v2[t].first[i]).epsilon(1e-12));
    }

    SUBCASE("mismatched query and mask counts are rejected") {
        TrainSample bad = s;
        bad.gt_masks.pop_back();
        CHECK_THROWS_AS(gradients(params, {bad}), Error);
        bad.gt_masks.clear();
        bad.queries.clear();
        CHECK_THROWS_AS(gradients(params, {bad}), Error);
        CHECK_THROWS_AS(gradients(params, {}), Error);
    }
}

TEST_CASE("zero learning rate leaves the initialization untouched") {
    ModelConfig cfg = tiny_config(1, 2, 2, 3, 3);
    Rng rng(42);
    std::vector<TrainSample> dataset;
    for (int i = 0; i < 3; ++i) dataset.push_back(random_sample(rng, 4, 6, 2, 3));

    TrainConfig tc;
    tc.batch_size = 2;
    tc.learning_rate = 0.0;
    tc.epochs = 3;
    tc.seed = 5;

    for (OptimizerKind opt : {OptimizerKind::Adam, OptimizerKind::Sgd}) {
        tc.optimizer = opt;
        ModelParams trained = train(dataset, cfg, tc, 7);
        ModelParams init = init_params(cfg, 7);
        CHECK(params_identical(trained, init));
    }
}

TEST_CASE("single sample overfit drives the loss down") {
    TrainSample s = band_sample(8);
    ModelConfig cfg = tiny_config(2, 8, 16, 3, 8);

    TrainConfig tc;
    tc.batch_size = 1;
    tc.learning_rate = 1e-3;
    tc.epochs = 500;
    tc.seed = 1;
    tc.log_path = "trainer_overfit_log.tsv";

    ModelParams trained = train({s}, cfg, tc, 11);

    // Parse the per-epoch TSV log: epoch, mean loss, wall seconds.
    std::ifstream log(tc.log_path);
    REQUIRE(log.good());
    std::vector<double> losses;
    std::string line;
    int expected_epoch = 0;
    while (std::getline(log, line)) {
        std::istringstream fields(line);
        std::string epoch_s, loss_s, secs_s;
        REQUIRE(std::getline(fields, epoch_s, '\t'));
        REQUIRE(std::getline(fields, loss_s, '\t'));
        REQUIRE(std::getline(fields, secs_s, '\t'));
        CHECK(std::stoi(epoch_s) == expected_epoch);
        ++expected_epoch;
        losses.push_back(std::stod(loss_s));
        CHECK(std::stod(secs_s) >= 0.0);
    }
    std::remove(tc.log_path.c_str());
    REQUIRE(losses.size() == 500);

    CHECK(losses.back() < 0.05);
    CHECK(losses.back() < losses.front() / 10.0);
    double final_loss = batch_loss(trained, {s});
    CHECK(final_loss < 0.05);

    // The trained model must respond to the query: each mask should round
    // to its own ground truth on the in-band rows.
    Grid x = log_compress(s.mixture, cfg.stft.log_epsilon);
    FeatureMap f_s = unet_forward(x, trained);
    for (size_t n = 0; n < s.queries.size(); ++n) {
        std::vector<double> f_e = embed_project(s.queries[n], trained);
        SeparationMask m = predict_mask(f_s, f_e, trained);
        int hits = 0, total = 0;
        for (int r = 0; r < m.values.rows; ++r) {
            for (int k = 0; k < m.values.cols; ++k) {
                if (s.mixture.bins.at(r, k) < 0.1) continue; // skip the floor
                ++total;
                double want = s.gt_masks[n].values.at(r, k);
                if ((m.values.at(r, k) >= 0.5) == (want >= 0.5)) ++hits;
            }
        }
        CHECK(total > 0);
        CHECK(hits >= (total * 9) / 10);
    }
}

TEST_CASE("identical seeds reproduce identical parameters") {
    ModelConfig cfg = tiny_config(1, 4, 4, 3, 4);
    Rng rng(2024);
    std::vector<TrainSample> dataset;
    for (int i = 0; i < 4; ++i) dataset.push_back(random_sample(rng, 8, 6, 2, 4));

    TrainConfig tc;
    tc.batch_size = 2;
    tc.learning_rate = 1e-3;
    tc.epochs = 5;
    tc.seed = 77;

    ModelParams a = train(dataset, cfg, tc, 3);
    ModelParams b = train(dataset, cfg, tc, 3);
    CHECK(params_identical(a, b));

    ModelParams c = train(dataset, cfg, tc, 4);
    CHECK_FALSE(params_identical(a, c));

    tc.seed = 78; // different shuffle order
    ModelParams d = train(dataset, cfg, tc, 3);
    CHECK_FALSE(params_identical(a, d));
}

TEST_CASE("non-finite losses abort with a numeric diagnostic") {
    // Opposite-sign channel scales against overflowing features produce
    // inf - inf = NaN in the mask logit.
    ModelConfig cfg = tiny_config(0, 1, 2, 1, 2);
    ModelParams params = init_params(cfg, 1);
    std::fill(params.out_conv.weights.begin(), params.out_conv.weights.end(), 1e308);
    std::fill(params.out_conv.bias.begin(), params.out_conv.bias.end(), 0.0);
    params.channel_scale = {1.0, -1.0};

    TrainSample s;
    s.mixture = make_mag(Grid(4, 4, std::exp(2.0))); // log-magnitude of 2
    s.queries = {QueryEmbedding{{0.5, 0.5}}};
    s.gt_masks = {SeparationMask{Grid(4, 4, 1.0)}};

    try {
        gradients(params, {s});
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::Numeric);
    }
}

TEST_CASE("train validates its configuration") {
    ModelConfig cfg = tiny_config(0, 1, 2, 1, 2);
    Rng rng(5);
    std::vector<TrainSample> dataset = {random_sample(rng, 2, 2, 1, 2)};
    TrainConfig tc;

    tc.batch_size = 0;
    CHECK_THROWS_AS(train(dataset, cfg, tc, 1), Error);
    tc.batch_size = 1;
    tc.learning_rate = -1.0;
    CHECK_THROWS_AS(train(dataset, cfg, tc, 1), Error);
    tc.learning_rate = 1e-3;
    tc.epochs = -1;
    CHECK_THROWS_AS(train(dataset, cfg, tc, 1), Error);
    tc.epochs = 1;
    tc.weight_floor = 0.0;
    CHECK_THROWS_AS(train(dataset, cfg, tc, 1), Error);
    tc.weight_floor = 1e-3;
    CHECK_THROWS_AS(train({}, cfg, tc, 1), Error);
}
