#include <algorithm>
#include <numeric>
#include <cmath>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "vlscene/error.hpp"
#include "vlscene/gradcheck.hpp"
#include "vlscene/losses.hpp"
#include "vlscene/metrics.hpp"
#include "vlscene/ops.hpp"

using namespace vlscene;
using namespace vlscene::testing;

namespace {

LabelGrid random_labels(std::mt19937_64& rng, std::array<std::size_t, 3> e, std::size_t k, double ignore_rate) {
    LabelGrid g(e);
    std::uniform_real_distribution<double> u(0, 1);
    for (auto& l : g.labels) l = u(rng) < ignore_rate ? kIgnoreLabel : static_cast<std::uint8_t>(rng() % k);
    return g;
}

/// Direct transcription of the affinity definition over an explicit probability table.
double affinity_oracle(const std::vector<std::vector<double>>& p, const std::vector<int>& y) {
    const std::size_t K = p.size();
    double total = 0;
    int present = 0;
    for (std::size_t c = 0; c < K; ++c) {
        double tp = 0, all = 0, neg = 0, npos = 0, nneg = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] < 0) continue;
            all += p[c][i];
            if (y[i] == static_cast<int>(c)) {
                tp += p[c][i];
                ++npos;
            } else {
                neg += 1 - p[c][i];
                ++nneg;
            }
        }
        if (npos == 0) continue;
        ++present;
        total += std::log(tp / all) + std::log(tp / npos);
        if (nneg > 0) total += std::log(neg / nneg);
    }
    return -total / present;
}

std::vector<std::vector<double>> softmax_table(const Tensor& logits) {
    const std::size_t K = logits.dim(0), N = logits.numel() / K;
    std::vector<std::vector<double>> p(K, std::vector<double>(N));
    for (std::size_t i = 0; i < N; ++i) {
        double z = 0;
        for (std::size_t c = 0; c < K; ++c) z += std::exp(logits.data()[c * N + i]);
        for (std::size_t c = 0; c < K; ++c) p[c][i] = std::exp(logits.data()[c * N + i]) / z;
    }
    return p;
}

}  // namespace

TEST_CASE("affinity losses: closed forms") {
    // Uniform predictions over two classes on a balanced grid.
    LabelGrid g({2, 2, 1});
    g.labels = {0, 1, 1, 0};
    const Tensor uniform = Tensor::zeros({2, 2, 2, 1});
    CHECK(std::abs(losses::scal_loss_sem(uniform, g).item() - 3 * std::log(2.0)) <= 1e-9);
    CHECK(std::abs(losses::scal_loss_geo(uniform, g).item() - 3 * std::log(2.0)) <= 1e-9);

    // Near one-hot correct predictions.
    const double big = std::log((1 - 1e-6) / 1e-6);
    std::vector<double> v(8);
    for (std::size_t i = 0; i < 4; ++i) {
        v[g.labels[i] * 4 + i] = big;
        v[(1 - g.labels[i]) * 4 + i] = 0;
    }
    const Tensor sharp = Tensor::from_vector({2, 2, 2, 1}, v);
    const double bound = 3 * std::abs(std::log(1 - 1e-6)) * 4;
    CHECK(losses::scal_loss_sem(sharp, g).item() <= bound);
    CHECK(losses::scal_loss_sem(sharp, g).item() > 0.0);

    LabelGrid ignored({2, 2, 1}, kIgnoreLabel);
    CHECK_THROWS_AS(losses::scal_loss_sem(uniform, ignored), Error);
    CHECK_THROWS_AS(losses::scal_loss_geo(uniform, ignored), Error);
}

TEST_CASE("affinity losses match the direct formula") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t K = trial < 10 ? 2 : 4;
        const std::array<std::size_t, 3> e = trial < 10 ? std::array<std::size_t, 3>{2, 2, 1} : std::array<std::size_t, 3>{3, 2, 2};
        LabelGrid g = random_labels(rng, e, K, trial < 10 ? 0.0 : 0.2);
        if (std::all_of(g.labels.begin(), g.labels.end(), [](auto l) { return l == kIgnoreLabel; })) g.labels[0] = 1;
        const Tensor logits = random_tensor(rng, {K, e[0], e[1], e[2]}, -2, 2);
        const auto p = softmax_table(logits);
        std::vector<int> y(g.size()), yb(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            y[i] = g.labels[i] == kIgnoreLabel ? -1 : g.labels[i];
            yb[i] = y[i] < 0 ? -1 : (y[i] != 0);
        }
        CHECK(std::abs(losses::scal_loss_sem(logits, g).item() - affinity_oracle(p, y)) <= 1e-10);
        std::vector<std::vector<double>> pb(2, std::vector<double>(g.size()));
        for (std::size_t i = 0; i < g.size(); ++i) {
            pb[0][i] = p[0][i];
            pb[1][i] = 1 - p[0][i];
        }
        CHECK(std::abs(losses::scal_loss_geo(logits, g).item() - affinity_oracle(pb, yb)) <= 1e-10);

        // Permuting voxel order leaves the loss unchanged.
        std::vector<std::size_t> perm(g.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        LabelGrid gp = g;
        std::vector<double> lp(logits.numel());
        const std::size_t N = g.size();
        for (std::size_t i = 0; i < N; ++i) {
            gp.labels[i] = g.labels[perm[i]];
            for (std::size_t c = 0; c < K; ++c) lp[c * N + i] = logits.data()[c * N + perm[i]];
        }
        CHECK(std::abs(losses::scal_loss_sem(Tensor::from_vector(logits.shape(), lp), gp).item() -
                       losses::scal_loss_sem(logits, g).item()) <= 1e-12);
    }
}

TEST_CASE("depth loss") {
    const std::vector<double> bins{1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5, 8.5};
    const std::vector<double> depth{2.4, 0.0, 8.9, 5.1};
    const Tensor uniform = Tensor::full({8, 2, 2}, 0.125);
    CHECK(std::abs(losses::depth_loss(uniform, depth, bins).item() - std::log(8.0)) <= 1e-12);

    std::vector<double> onehot(32, 1e-9 / 7);
    const int truth[4] = {1, 0, 7, 4};
    for (std::size_t p = 0; p < 4; ++p) onehot[truth[p] * 4 + p] = 1 - 1e-9;
    CHECK(losses::depth_loss(Tensor::from_vector({8, 2, 2}, onehot), depth, bins).item() <= 2e-9);
    CHECK(losses::nearest_bin(bins, 0.2) == 0);
    CHECK(losses::nearest_bin(bins, 5.1) == 4);

    std::mt19937_64 rng(42);
    const Tensor d = softmax(random_tensor(rng, {8, 2, 2}), 0);
    const std::vector<std::int32_t> labels{1, -1, 7, 4};
    CHECK(std::abs(losses::depth_loss(d, depth, bins).item() -
                   hard_cross_entropy(safe_log(d), labels, 0, -1).item()) <= 1e-12);
    // Soft targets at an exact bin centre equal the hard form.
    const std::vector<double> centred{2.5, 0.0, 8.5, 5.5};
    const std::vector<std::int32_t> cl{1, -1, 7, 4};
    CHECK(std::abs(losses::depth_loss(d, centred, bins, true).item() -
                   hard_cross_entropy(safe_log(d), cl, 0, -1).item()) <= 1e-12);

    CHECK_THROWS_AS(losses::depth_loss(d, std::vector<double>(4, 0.0), bins), Error);
}

TEST_CASE("total loss wiring") {
    losses::LossParts parts{Tensor::scalar(0.5), Tensor::scalar(0.25), Tensor::scalar(1.0), Tensor::scalar(0.25),
                            Tensor::scalar(0.3), Tensor::scalar(0.2)};
    losses::LossWeights w;
    CHECK(losses::total_loss(parts, w).item() == doctest::Approx(2.5));
    w.lambda_kd = 0;
    CHECK(losses::total_loss(parts, w).item() == 2.0);
    losses::LossParts zero{Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0),
                           Tensor::scalar(0), Tensor::scalar(0)};
    CHECK(losses::total_loss(zero, losses::LossWeights{}).item() == 0.0);
    w.lambda_ssc = -1;
    CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("loss gradients pass finite differences") {
    const std::vector<double> bins{1.5, 2.5, 3.5, 4.5};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 1700);
        Tensor logits = random_param(rng, {4, 3, 2, 2}, "Y_logits", -2, 2);
        const LabelGrid g = random_labels(rng, {3, 2, 2}, 4, 0.2);
        LabelGrid gg = g;
        gg.labels[0] = 2;
        Tensor dl = random_param(rng, {4, 3, 3}, "depth_logits");
        std::vector<double> depth = uniform_values(rng, 9, 1.0, 5.0);
        depth[3] = 0.0;
        const auto cw = losses::inverse_log_frequency_weights(gg, 4);
        auto loss = [&] {
            const Tensor d = softmax(dl, 0);
            Tensor l = add(losses::scal_loss_sem(logits, gg), losses::scal_loss_geo(logits, gg));
            l = add(l, add(losses::ce_loss(logits, gg), losses::ce_loss(logits, gg, cw)));
            return add(l, add(losses::depth_loss(d, depth, bins), losses::depth_loss(d, depth, bins, true)));
        };
        const auto report = gradcheck(loss, {logits, dl});
        INFO("seed " << seed << "\n" << report.summary());
        CHECK(report.passed());
    }
}

TEST_CASE("metrics: worked example and degenerate input") {
    LabelGrid pred({4, 1, 1}), gt({4, 1, 1});
    pred.labels = {0, 1, 1, 2};
    gt.labels = {0, 1, 2, 2};
    const auto r = metrics::evaluate(pred, gt, {1.0}, {"empty", "a", "b"});
    const auto& s = r.scores[0];
    CHECK(*s.iou[1] == 0.5);
    CHECK(*s.iou[2] == 0.5);
    CHECK(*s.miou == 0.5);
    CHECK(*s.occ_iou == 1.0);

    const auto same = metrics::evaluate(gt, gt, {1.0}, {"empty", "a", "b"});
    CHECK(*same.scores[0].miou == 1.0);
    CHECK(*same.scores[0].iou[1] == 1.0);

    LabelGrid ignored({4, 1, 1}, kIgnoreLabel);
    try {
        metrics::evaluate(pred, ignored, {1.0}, {"empty", "a", "b"});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("no evaluable voxels") != std::string::npos);
    }
    CHECK_THROWS_AS(metrics::evaluate(pred, LabelGrid({2, 2, 1}), {1.0}, {"empty", "a", "b"}), ShapeError);
}

TEST_CASE("metrics match a brute-force confusion matrix") {
    std::mt19937_64 rng(43);
    const std::vector<std::string> names{"empty", "ground", "box", "pole"};
    std::vector<metrics::Report> reports;
    metrics::ConfusionCounts pooled(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::array<std::size_t, 3> e{4 + rng() % 5, 1 + rng() % 4, 1 + rng() % 3};
        LabelGrid gt = random_labels(rng, e, 4, 0.15), pred = random_labels(rng, e, 4, 0.0);
        gt.labels[0] = 1;
        const std::vector<double> ranges{0.25, 0.5, 1.0};
        const auto r = metrics::evaluate(pred, gt, ranges, names);
        for (std::size_t ri = 0; ri < ranges.size(); ++ri) {
            // Full confusion matrix by explicit counting.
            std::uint64_t cm[4][4] = {};
            const std::size_t limit = static_cast<std::size_t>(std::ceil(ranges[ri] * e[0] - 1e-9));
            for (std::size_t x = 0; x < limit; ++x)
                for (std::size_t y = 0; y < e[1]; ++y)
                    for (std::size_t z = 0; z < e[2]; ++z)
                        if (gt.at(x, y, z) != kIgnoreLabel) ++cm[gt.at(x, y, z)][pred.at(x, y, z)];
            const auto& c = r.counts[ri];
            for (std::size_t k = 0; k < 4; ++k) {
                std::uint64_t row = 0, col = 0;
                for (std::size_t j = 0; j < 4; ++j) {
                    if (j != k) row += cm[k][j], col += cm[j][k];
                }
                CHECK(c.tp[k] == cm[k][k]);
                CHECK(c.fn[k] == row);
                CHECK(c.fp[k] == col);
            }
            std::uint64_t occ_tp = 0, occ_fp = 0, occ_fn = 0;
            for (std::size_t g = 0; g < 4; ++g)
                for (std::size_t p = 0; p < 4; ++p) {
                    if (g && p) occ_tp += cm[g][p];
                    if (!g && p) occ_fp += cm[g][p];
                    if (g && !p) occ_fn += cm[g][p];
                }
            CHECK(c.occ_tp == occ_tp);
            CHECK(c.occ_fp == occ_fp);
            CHECK(c.occ_fn == occ_fn);
            for (const auto& v : r.scores[ri].iou)
                if (v) CHECK((*v >= 0.0 && *v <= 1.0));
        }
        pooled += r.counts.back();
        reports.push_back(r);
    }
    const auto p = metrics::pool(reports);
    CHECK(p.counts.back() == pooled);
    CHECK(*p.scores.back().miou == *metrics::score(pooled, 1.0).miou);
}

TEST_CASE("metrics are invariant under a consistent class permutation") {
    std::mt19937_64 rng(44);
    const std::uint8_t perm[4] = {0, 3, 1, 2};
    LabelGrid gt = random_labels(rng, {6, 4, 2}, 4, 0.1), pred = random_labels(rng, {6, 4, 2}, 4, 0.0);
    LabelGrid gp = gt, pp = pred;
    for (auto& l : gp.labels) l = l == kIgnoreLabel ? l : perm[l];
    for (auto& l : pp.labels) l = perm[l];
    const std::vector<std::string> names{"e", "a", "b", "c"};
    CHECK(*metrics::evaluate(pred, gt, {1.0}, names).scores[0].miou ==
          doctest::Approx(*metrics::evaluate(pp, gp, {1.0}, names).scores[0].miou).epsilon(1e-15));
}

TEST_CASE("metrics serialisation") {
    LabelGrid pred({4, 1, 1}), gt({4, 1, 1});
    pred.labels = {0, 1, 1, 1};
    gt.labels = {0, 1, 1, 255};
    const auto r = metrics::evaluate(pred, gt, {0.5, 1.0}, {"empty", "a", "b"});
    const auto j = metrics::to_json(r);
    CHECK(j["ranges"][1]["iou"]["b"].is_null());
    CHECK(j["ranges"][1]["miou"].get<double>() == 1.0);
    const std::string csv = metrics::to_csv(r);
    CHECK(csv.rfind("range,class,IoU\n", 0) == 0);
    CHECK(csv.find("1.000000,mIoU,1.000000") != std::string::npos);
    CHECK(csv.find("0.500000,b,\n") != std::string::npos);
    // Counting absent classes as zero.
    CHECK(*metrics::evaluate(pred, gt, {1.0}, {"empty", "a", "b"}, true).scores[0].miou == 0.5);
}
