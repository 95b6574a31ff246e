#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "hyperedit/losses.hpp"

using namespace hyperedit;

namespace {

// 4x4 mask with ones where pick(y,x) holds
Tensor mask4(const std::function<bool(int, int)>& pick) {
    Tensor m({1, 4, 4});
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) m.at(0, y, x) = pick(y, x) ? 1.0 : 0.0;
    return m;
}

}  // namespace

TEST_CASE("bce_loss closed forms") {
    Tensor ones = Tensor::full({1, 4, 4}, 1.0);
    CHECK(loss::bce_loss(ones, ones) == doctest::Approx(-std::log(1.0 - loss::kBceEps)));
    CHECK(loss::bce_loss(ones, ones) <= 1e-6);

    Tensor half = Tensor::full({1, 4, 4}, 0.5);
    Tensor gt = mask4([](int y, int) { return y < 2; });
    CHECK(loss::bce_loss(half, gt) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(loss::bce_loss(half, ones) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    Tensor zeros = Tensor::zeros({1, 4, 4});
    CHECK(loss::bce_loss(zeros, ones) == doctest::Approx(-std::log(loss::kBceEps)));
}

TEST_CASE("bce_loss validation") {
    Tensor a = Tensor::zeros({1, 2, 2});
    CHECK_THROWS(loss::bce_loss(a, Tensor::zeros({1, 2, 3})));
    Tensor soft = Tensor::full({1, 2, 2}, 0.5);
    CHECK_THROWS(loss::bce_loss(a, soft));  // ground truth must be binary
    Tensor out_of_range = Tensor::full({1, 2, 2}, 1.5);
    CHECK_THROWS(loss::bce_loss(out_of_range, a));
}

TEST_CASE("dice_loss hand-counted examples") {
    Tensor ones = Tensor::full({1, 4, 4}, 1.0);
    CHECK(loss::dice_loss(ones, ones) == doctest::Approx(0.0).epsilon(1e-9));

    Tensor top = mask4([](int y, int) { return y < 2; });
    Tensor bottom = mask4([](int y, int) { return y >= 2; });
    CHECK(loss::dice_loss(top, bottom) == doctest::Approx(1.0 - 1.0 / 17.0));

    Tensor left = mask4([](int, int x) { return x < 2; });
    CHECK(loss::dice_loss(top, left) == doctest::Approx(1.0 - 9.0 / 17.0));
}

TEST_CASE("dice_loss stays in [0,1) and rewards overlap") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor pred({1, 8, 8});
        for (double& v : pred.data) v = unit(rng);
        Tensor gt({1, 8, 8});
        for (double& v : gt.data) v = unit(rng) < 0.4 ? 1.0 : 0.0;
        double d = loss::dice_loss(pred, gt);
        CHECK(d >= 0.0);
        CHECK(d < 1.0);
    }
}

TEST_CASE("mask and pixel losses are permutation invariant") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Tensor pred({1, 4, 4}), gt({1, 4, 4});
    for (double& v : pred.data) v = unit(rng);
    for (double& v : gt.data) v = unit(rng) < 0.5 ? 1.0 : 0.0;

    std::vector<int> perm(16);
    for (int i = 0; i < 16; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor pp({1, 4, 4}), pg({1, 4, 4});
    for (int i = 0; i < 16; ++i) {
        pp.data[perm[i]] = pred.data[i];
        pg.data[perm[i]] = gt.data[i];
    }
    CHECK(loss::bce_loss(pp, pg) == doctest::Approx(loss::bce_loss(pred, gt)).epsilon(1e-12));
    CHECK(loss::dice_loss(pp, pg) == doctest::Approx(loss::dice_loss(pred, gt)).epsilon(1e-12));
}

TEST_CASE("mask_loss composes per the weights") {
    Tensor half = Tensor::full({1, 4, 4}, 0.5);
    Tensor ones = Tensor::full({1, 4, 4}, 1.0);

    loss::LossWeights only_dice{0.0, 2.0, 1.0, 1.0};
    CHECK(loss::mask_loss(half, ones, only_dice) ==
          doctest::Approx(2.0 * loss::dice_loss(half, ones)));

    loss::LossWeights both{2.0, 0.5, 1.0, 1.0};
    // dice: 1 - (2*8 + 1)/(8 + 16 + 1) = 1 - 17/25
    CHECK(loss::mask_loss(half, ones, both) ==
          doctest::Approx(2.0 * std::log(2.0) + 0.5 * (1.0 - 17.0 / 25.0)));

    loss::LossWeights unit;
    CHECK(loss::mask_loss(ones, ones, unit) == doctest::Approx(0.0).epsilon(1e-6));

    loss::LossWeights negative{-1.0, 1.0, 1.0, 1.0};
    CHECK_THROWS(negative.validate());
}

TEST_CASE("text_loss closed forms") {
    Tensor uniform = Tensor::zeros({3, 4});
    CHECK(loss::text_loss(uniform, {0, 1, 2}) == doctest::Approx(std::log(4.0)));

    Tensor sharp = Tensor::zeros({2, 5});
    sharp.at(0, 3) = 100.0;
    sharp.at(1, 0) = 100.0;
    CHECK(loss::text_loss(sharp, {3, 0}) == doctest::Approx(0.0).epsilon(1e-6));

    // ignored positions drop out of the mean
    Tensor mixed = Tensor::zeros({2, 4});
    CHECK(loss::text_loss(mixed, {1, loss::kIgnoreIndex}) == doctest::Approx(std::log(4.0)));
    CHECK_THROWS(loss::text_loss(mixed, {loss::kIgnoreIndex, loss::kIgnoreIndex}));
    CHECK_THROWS(loss::text_loss(mixed, {4, 0}));  // out-of-range target
}

TEST_CASE("text_loss is shift invariant in the logits") {
    std::mt19937 rng(7);
    Tensor logits = th::random_tensor({3, 6}, rng);
    Tensor shifted = logits;
    for (int t = 0; t < 3; ++t)
        for (int v = 0; v < 6; ++v) shifted.at(t, v) += 100.0 * (t + 1);
    std::vector<int> targets = {2, 0, 5};
    CHECK(loss::text_loss(shifted, targets) ==
          doctest::Approx(loss::text_loss(logits, targets)).epsilon(1e-9));
}

TEST_CASE("total_loss is the weighted sum") {
    loss::LossWeights w;
    CHECK(loss::total_loss(0.5, 0.25, w) == doctest::Approx(0.75));
    w.lambda_txt = 0.0;
    CHECK(loss::total_loss(123.0, 0.25, w) == doctest::Approx(0.25));
    w = loss::LossWeights{};
    CHECK(loss::total_loss(std::log(4.0), 2.0 * std::log(2.0) + 0.5 * (1.0 - 17.0 / 25.0),
                           w) == doctest::Approx(2.93258).epsilon(1e-5));
    // linearity in each component
    w.lambda_txt = 3.0;
    w.lambda_mask = 0.5;
    CHECK(loss::total_loss(2.0, 4.0, w) == doctest::Approx(8.0));
}

TEST_CASE("autograd losses match the plain values") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> unit(0.01, 0.99);
    Tensor pred({1, 6, 6}), gt({1, 6, 6});
    for (double& v : pred.data) v = unit(rng);
    for (double& v : gt.data) v = unit(rng) < 0.5 ? 1.0 : 0.0;

    auto p = ag::param(pred);
    CHECK(loss::bce_loss(p, gt)->value(0) == doctest::Approx(loss::bce_loss(pred, gt)));
    CHECK(loss::dice_loss(p, gt)->value(0) == doctest::Approx(loss::dice_loss(pred, gt)));
    loss::LossWeights w{0.7, 1.3, 1.0, 1.0};
    CHECK(loss::mask_loss(p, gt, w)->value(0) == doctest::Approx(loss::mask_loss(pred, gt, w)));

    Tensor logits = th::random_tensor({4, 5}, rng);
    std::vector<int> targets = {1, 4, loss::kIgnoreIndex, 0};
    auto l = ag::param(logits);
    CHECK(loss::text_loss(l, targets)->value(0) ==
          doctest::Approx(loss::text_loss(logits, targets)));
}

TEST_CASE("mask_loss gradients match finite differences") {
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> unit(0.05, 0.95);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor pred({1, 8, 8}), gt({1, 8, 8});
        for (double& v : pred.data) v = unit(rng);
        for (double& v : gt.data) v = unit(rng) < 0.5 ? 1.0 : 0.0;
        auto p = ag::param(pred);
        loss::LossWeights w{1.0, 1.0, 1.0, 1.0};
        auto build = [&] { return loss::mask_loss(p, gt, w); };
        CHECK(th::max_grad_rel_err({p}, build) < 1e-4);
    }
}

TEST_CASE("text_loss gradients match finite differences") {
    std::mt19937 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        auto l = ag::param(th::random_tensor({3, 5}, rng));
        std::vector<int> targets = {2, loss::kIgnoreIndex, 0};
        auto build = [&] { return loss::text_loss(l, targets); };
        CHECK(th::max_grad_rel_err({l}, build) < 1e-4);
    }
}
