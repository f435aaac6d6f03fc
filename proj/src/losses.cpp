#include "spoofloc/losses.hpp"

#include <cmath>

#include "spoofloc/common.hpp"

namespace spoofloc {
namespace {

// log(exp(a) + exp(b)) without overflow.
double log_sum_exp2(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void check_prob_range(const std::vector<double>& probs) {
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] >= -1e-12 && probs[i] <= 1.0 + 1e-12)) {
            fail_validation("probability out of [0,1] at frame ", i, ": ", probs[i]);
        }
    }
}

// Neighbor mean for frame i and span s, using only in-range neighbors.
// Returns {mean, count}; count can be zero for single-frame sequences.
std::pair<double, int> neighbor_mean(const std::vector<double>& probs, std::size_t i,
                                     int span) {
    double sum = 0.0;
    int count = 0;
    const auto n = static_cast<std::ptrdiff_t>(probs.size());
    const auto center = static_cast<std::ptrdiff_t>(i);
    for (int k = 1; k <= span; ++k) {
        if (center - k >= 0) {
            sum += probs[i - k];
            ++count;
        }
        if (center + k < n) {
            sum += probs[i + k];
            ++count;
        }
    }
    return {count > 0 ? sum / count : 0.0, count};
}

} // namespace

void LossConfig::validate() const {
    if (alpha < 0.0) fail_validation("loss config: alpha must be >= 0, got ", alpha);
    if (ifp_max_span < 1) {
        fail_validation("loss config: ifp_max_span must be >= 1, got ", ifp_max_span);
    }
    if (class_weights &&
        (class_weights->first <= 0.0 || class_weights->second <= 0.0)) {
        fail_validation("loss config: class weights must be positive");
    }
}

double loss_single_frame(const Eigen::MatrixXd& frame_logits,
                         const std::vector<int>& frame_labels,
                         const std::optional<std::pair<double, double>>& class_weights) {
    const auto n = static_cast<std::size_t>(frame_logits.rows());
    if (n != frame_labels.size()) {
        fail_validation("loss_single_frame: ", n, " logit rows vs ", frame_labels.size(),
                        " labels");
    }
    if (n == 0) fail_validation("loss_single_frame: empty input");
    double acc = 0.0;
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = frame_labels[i];
        if (y != 0 && y != 1) fail_validation("frame label must be 0 or 1, got ", y);
        const auto r = static_cast<Eigen::Index>(i);
        const double lse = log_sum_exp2(frame_logits(r, 0), frame_logits(r, 1));
        const double w =
            class_weights ? (y == 0 ? class_weights->first : class_weights->second) : 1.0;
        acc += w * (lse - frame_logits(r, y));
        weight_sum += w;
    }
    return acc / weight_sum;
}

double loss_mfd(const Eigen::MatrixXd& mfd_logits, const Eigen::VectorXd& soft_targets) {
    const Eigen::Index m = mfd_logits.rows();
    if (m != soft_targets.size()) {
        fail_validation("loss_mfd: ", m, " logit rows vs ", soft_targets.size(), " targets");
    }
    if (m == 0) fail_validation("loss_mfd: empty input");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double t = soft_targets(i);
        if (!(t >= 0.0 && t <= 1.0)) {
            fail_validation("mfd target out of [0,1] at window ", i, ": ", t);
        }
        const double lse = log_sum_exp2(mfd_logits(i, 0), mfd_logits(i, 1));
        const double log_p_real = mfd_logits(i, 0) - lse;
        const double log_p_fake = mfd_logits(i, 1) - lse;
        acc += -(t * log_p_fake + (1.0 - t) * log_p_real);
    }
    return acc / static_cast<double>(m);
}

std::vector<double> ifp_term(const std::vector<double>& probs, int span) {
    if (probs.empty()) fail_validation("ifp_term: empty probability sequence");
    if (span < 1) fail_validation("ifp_term: span must be >= 1, got ", span);
    check_prob_range(probs);
    std::vector<double> r(probs.size(), 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const auto [mean, count] = neighbor_mean(probs, i, span);
        r[i] = count > 0 ? std::abs(probs[i] - mean) : 0.0;
    }
    return r;
}

double ifp_regularizer(const std::vector<double>& probs, int max_span) {
    if (probs.empty()) fail_validation("ifp_regularizer: empty probability sequence");
    if (max_span < 1) fail_validation("ifp_regularizer: max_span must be >= 1");
    check_prob_range(probs);
    double total = 0.0;
    for (int s = 1; s <= max_span; ++s) {
        const std::vector<double> r = ifp_term(probs, s);
        for (double v : r) total += v;
    }
    return total / static_cast<double>(max_span);
}

Eigen::VectorXd fake_probabilities(const Eigen::MatrixXd& frame_logits) {
    Eigen::VectorXd probs(frame_logits.rows());
    for (Eigen::Index i = 0; i < frame_logits.rows(); ++i) {
        const double lse = log_sum_exp2(frame_logits(i, 0), frame_logits(i, 1));
        probs(i) = std::exp(frame_logits(i, 1) - lse);
    }
    return probs;
}

LossBreakdown total_loss(const Eigen::MatrixXd& frame_logits,
                         const std::vector<int>& frame_labels,
                         const Eigen::MatrixXd& mfd_logits,
                         const Eigen::VectorXd& mfd_targets, const LossConfig& cfg) {
    cfg.validate();
    LossBreakdown out;
    out.single_frame = loss_single_frame(frame_logits, frame_labels, cfg.class_weights);
    out.mfd = loss_mfd(mfd_logits, mfd_targets);
    const Eigen::VectorXd probs = fake_probabilities(frame_logits);
    out.ifp = ifp_regularizer({probs.data(), probs.data() + probs.size()}, cfg.ifp_max_span);
    out.total = out.single_frame + out.mfd + cfg.alpha * out.ifp;
    return out;
}

LossGradients total_loss_with_grad(const Eigen::MatrixXd& frame_logits,
                                   const std::vector<int>& frame_labels,
                                   const Eigen::MatrixXd& mfd_logits,
                                   const Eigen::VectorXd& mfd_targets,
                                   const LossConfig& cfg) {
    cfg.validate();
    LossGradients out;
    out.value = total_loss(frame_logits, frame_labels, mfd_logits, mfd_targets, cfg);

    const auto n = frame_logits.rows();
    const auto m = mfd_logits.rows();
    out.d_frame_logits = Eigen::MatrixXd::Zero(n, 2);
    out.d_mfd_logits = Eigen::MatrixXd::Zero(m, 2);

    // Single-frame cross-entropy: softmax minus one-hot, averaged.
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < frame_labels.size(); ++i) {
        weight_sum += cfg.class_weights
                          ? (frame_labels[i] == 0 ? cfg.class_weights->first
                                                  : cfg.class_weights->second)
                          : 1.0;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double lse = log_sum_exp2(frame_logits(i, 0), frame_logits(i, 1));
        const double p0 = std::exp(frame_logits(i, 0) - lse);
        const double p1 = std::exp(frame_logits(i, 1) - lse);
        const int y = frame_labels[static_cast<std::size_t>(i)];
        const double w = cfg.class_weights
                             ? (y == 0 ? cfg.class_weights->first : cfg.class_weights->second)
                             : 1.0;
        out.d_frame_logits(i, 0) = w * (p0 - (y == 0 ? 1.0 : 0.0)) / weight_sum;
        out.d_frame_logits(i, 1) = w * (p1 - (y == 1 ? 1.0 : 0.0)) / weight_sum;
    }

    // MFD cross-entropy against the two-point target distribution.
    for (Eigen::Index i = 0; i < m; ++i) {
        const double lse = log_sum_exp2(mfd_logits(i, 0), mfd_logits(i, 1));
        const double p0 = std::exp(mfd_logits(i, 0) - lse);
        const double p1 = std::exp(mfd_logits(i, 1) - lse);
        const double t = mfd_targets(i);
        out.d_mfd_logits(i, 0) = (p0 - (1.0 - t)) / static_cast<double>(m);
        out.d_mfd_logits(i, 1) = (p1 - t) / static_cast<double>(m);
    }

    // IFP: dR/dp via the sign of each deviation, then through the softmax.
    if (cfg.alpha > 0.0) {
        const Eigen::VectorXd probs = fake_probabilities(frame_logits);
        Eigen::VectorXd d_probs = Eigen::VectorXd::Zero(n);
        const std::vector<double> pvec(probs.data(), probs.data() + probs.size());
        for (int s = 1; s <= cfg.ifp_max_span; ++s) {
            for (Eigen::Index j = 0; j < n; ++j) {
                double sum = 0.0;
                int count = 0;
                for (int k = 1; k <= s; ++k) {
                    if (j - k >= 0) {
                        sum += pvec[j - k];
                        ++count;
                    }
                    if (j + k < n) {
                        sum += pvec[j + k];
                        ++count;
                    }
                }
                if (count == 0) continue;
                const double diff = pvec[j] - sum / count;
                const double sg = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                d_probs(j) += sg;
                const double share = sg / static_cast<double>(count);
                for (int k = 1; k <= s; ++k) {
                    if (j - k >= 0) d_probs(j - k) -= share;
                    if (j + k < n) d_probs(j + k) -= share;
                }
            }
        }
        d_probs /= static_cast<double>(cfg.ifp_max_span);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double dp_dz = probs(i) * (1.0 - probs(i)); // d p_fake / d z_fake
            out.d_frame_logits(i, 1) += cfg.alpha * d_probs(i) * dp_dz;
            out.d_frame_logits(i, 0) -= cfg.alpha * d_probs(i) * dp_dz;
        }
    }
    return out;
}

} // namespace spoofloc
