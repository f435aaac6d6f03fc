#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "spoofloc/common.hpp"
#include "spoofloc/losses.hpp"
#include "spoofloc/rng.hpp"

using namespace spoofloc;

namespace {

// Brute-force scalar-loop oracle for the isolated-frame penalty, written
// directly from the definition: r_i^(s) = |y_i - mean of s neighbors each
// side|, edges use the neighbors that exist, R = sum_i sum_s r_i^(s) / 3.
double oracle_ifp(const std::vector<double>& y) {
    const int n = static_cast<int>(y.size());
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int s = 1; s <= 3; ++s) {
            double sum = 0.0;
            int count = 0;
            for (int k = 1; k <= s; ++k) {
                if (i - k >= 0) {
                    sum += y[i - k];
                    count += 1;
                }
                if (i + k < n) {
                    sum += y[i + k];
                    count += 1;
                }
            }
            if (count > 0) total += std::fabs(y[i] - sum / count);
        }
    }
    return total / 3.0;
}

Eigen::MatrixXd logits_for_probs(const std::vector<double>& fake_probs) {
    Eigen::MatrixXd logits(static_cast<Eigen::Index>(fake_probs.size()), 2);
    for (std::size_t i = 0; i < fake_probs.size(); ++i) {
        const double p = std::min(std::max(fake_probs[i], 1e-9), 1.0 - 1e-9);
        logits(static_cast<Eigen::Index>(i), 0) = std::log(1.0 - p);
        logits(static_cast<Eigen::Index>(i), 1) = std::log(p);
    }
    return logits;
}

} // namespace

TEST_CASE("single-frame cross-entropy closed forms") {
    // Saturated one-hot logits.
    Eigen::MatrixXd sat(2, 2);
    sat << 30.0, -30.0, -30.0, 30.0;
    CHECK(loss_single_frame(sat, {0, 1}) == doctest::Approx(0.0).epsilon(1e-4));

    // Uniform logits cost ln 2 per frame.
    Eigen::MatrixXd uniform = Eigen::MatrixXd::Zero(5, 2);
    CHECK(loss_single_frame(uniform, {0, 1, 0, 1, 1}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // Single fake frame at probability 0.75 costs -ln 0.75.
    const Eigen::MatrixXd one = logits_for_probs({0.75});
    CHECK(loss_single_frame(one, {1}) == doctest::Approx(-std::log(0.75)).epsilon(1e-9));

    CHECK_THROWS_AS(loss_single_frame(uniform, {0, 1}), ValidationError);
}

TEST_CASE("mfd cross-entropy closed forms and entropy lower bound") {
    Eigen::MatrixXd conf(1, 2);
    conf << -30.0, 30.0;
    Eigen::VectorXd t1(1);
    t1 << 1.0;
    CHECK(loss_mfd(conf, t1) == doctest::Approx(0.0).epsilon(1e-4));

    Eigen::MatrixXd even = Eigen::MatrixXd::Zero(1, 2);
    Eigen::VectorXd half(1);
    half << 0.5;
    CHECK(loss_mfd(even, half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // For t = 0.5 the loss is minimized exactly at p = (0.5, 0.5).
    for (double z = -3.0; z <= 3.0; z += 0.25) {
        Eigen::MatrixXd logits(1, 2);
        logits << 0.0, z;
        CHECK(loss_mfd(logits, half) >= std::log(2.0) - 1e-12);
    }

    Eigen::VectorXd bad(1);
    bad << 1.5;
    CHECK_THROWS_AS(loss_mfd(even, bad), ValidationError);
}

TEST_CASE("ifp_term direct evaluations") {
    CHECK(ifp_term({0.0, 1.0, 0.0}, 1)[1] == doctest::Approx(1.0));
    CHECK(ifp_term({0.0, 0.0, 1.0, 0.0, 0.0}, 2)[2] == doctest::Approx(1.0));

    const std::vector<double> constant(20, 0.37);
    for (int s = 1; s <= 3; ++s) {
        for (double r : ifp_term(constant, s)) CHECK(r == doctest::Approx(0.0));
    }
    CHECK_THROWS_AS(ifp_term({}, 1), ValidationError);
}

TEST_CASE("ifp matches the brute-force oracle on random sequences") {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(200);
        std::vector<double> y(n);
        for (double& v : y) v = rng.uniform();
        CHECK(ifp_regularizer(y) == doctest::Approx(oracle_ifp(y)).epsilon(1e-12));
    }
}

TEST_CASE("isolated spike and step sequences against the oracle") {
    std::vector<double> spike(101, 0.0);
    spike[50] = 1.0;
    CHECK(ifp_regularizer(spike) == doctest::Approx(oracle_ifp(spike)).epsilon(1e-12));

    std::vector<double> step(100, 0.0);
    for (std::size_t i = 50; i < 100; ++i) step[i] = 1.0;
    CHECK(ifp_regularizer(step) == doctest::Approx(oracle_ifp(step)).epsilon(1e-12));

    // A lone spike is penalized harder than a clean step of the same length.
    std::vector<double> spike100(100, 0.0);
    spike100[50] = 1.0;
    CHECK(ifp_regularizer(step) < ifp_regularizer(spike100));

    // Constant sequences cost exactly zero.
    CHECK(ifp_regularizer(std::vector<double>(50, 1.0)) == 0.0);
}

TEST_CASE("ifp is invariant under probability complement") {
    Rng rng(123);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 7 + rng.below(60);
        std::vector<double> y(n), yc(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.uniform();
            yc[i] = 1.0 - y[i];
        }
        CHECK(ifp_regularizer(y) == doctest::Approx(ifp_regularizer(yc)).epsilon(1e-12));
    }
}

TEST_CASE("total loss composition and alpha scaling") {
    Rng rng(7);
    const std::size_t n = 24;
    Eigen::MatrixXd frame_logits(n, 2);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        frame_logits(static_cast<Eigen::Index>(i), 0) = rng.normal();
        frame_logits(static_cast<Eigen::Index>(i), 1) = rng.normal();
        labels[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    Eigen::MatrixXd mfd_logits(3, 2);
    Eigen::VectorXd mfd_targets(3);
    for (int i = 0; i < 3; ++i) {
        mfd_logits(i, 0) = rng.normal();
        mfd_logits(i, 1) = rng.normal();
        mfd_targets(i) = rng.uniform();
    }

    LossConfig zero_alpha;
    zero_alpha.alpha = 0.0;
    const LossBreakdown l0 =
        total_loss(frame_logits, labels, mfd_logits, mfd_targets, zero_alpha);
    CHECK(l0.total == l0.single_frame + l0.mfd);

    LossConfig cfg; // alpha = 0.1
    const LossBreakdown l1 = total_loss(frame_logits, labels, mfd_logits, mfd_targets, cfg);
    CHECK(l1.total == doctest::Approx(l1.single_frame + l1.mfd + 0.1 * l1.ifp).epsilon(1e-15));
    CHECK(l1.single_frame == l0.single_frame);

    // Deterministic: same inputs, same value.
    const LossBreakdown l2 = total_loss(frame_logits, labels, mfd_logits, mfd_targets, cfg);
    CHECK(l1.total == l2.total);
}

TEST_CASE("loss gradients match central finite differences") {
    Rng rng(31);
    const std::size_t n = 16;
    Eigen::MatrixXd frame_logits(n, 2);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        frame_logits(static_cast<Eigen::Index>(i), 0) = 0.8 * rng.normal();
        frame_logits(static_cast<Eigen::Index>(i), 1) = 0.8 * rng.normal();
        labels[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    Eigen::MatrixXd mfd_logits(2, 2);
    mfd_logits << 0.3, -0.2, -0.7, 0.4;
    Eigen::VectorXd mfd_targets(2);
    mfd_targets << 0.2, 0.9;

    const LossConfig cfg; // alpha = 0.1
    const LossGradients g =
        total_loss_with_grad(frame_logits, labels, mfd_logits, mfd_targets, cfg);

    const double h = 1e-5;
    auto loss_at = [&](const Eigen::MatrixXd& fl, const Eigen::MatrixXd& ml) {
        return total_loss(fl, labels, ml, mfd_targets, cfg).total;
    };
    for (Eigen::Index i = 0; i < frame_logits.rows(); ++i) {
        for (Eigen::Index c = 0; c < 2; ++c) {
            Eigen::MatrixXd plus = frame_logits, minus = frame_logits;
            plus(i, c) += h;
            minus(i, c) -= h;
            const double fd = (loss_at(plus, mfd_logits) - loss_at(minus, mfd_logits)) / (2 * h);
            CHECK(g.d_frame_logits(i, c) == doctest::Approx(fd).epsilon(1e-5));
        }
    }
    for (Eigen::Index i = 0; i < mfd_logits.rows(); ++i) {
        for (Eigen::Index c = 0; c < 2; ++c) {
            Eigen::MatrixXd plus = mfd_logits, minus = mfd_logits;
            plus(i, c) += h;
            minus(i, c) -= h;
            const double fd =
                (loss_at(frame_logits, plus) - loss_at(frame_logits, minus)) / (2 * h);
            CHECK(g.d_mfd_logits(i, c) == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}
