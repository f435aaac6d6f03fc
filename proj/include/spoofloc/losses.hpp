#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace spoofloc {

struct LossConfig {
    double alpha = 0.1;  // weight on the isolated-frame penalty
    int ifp_max_span = 3; // neighborhood spans s = 1..ifp_max_span
    std::optional<std::pair<double, double>> class_weights; // (real, fake)

    void validate() const;
    bool operator==(const LossConfig&) const = default;
};

/// Mean two-class cross-entropy over frames. Logits are N x 2 rows of
/// (real, fake); labels are 0/1 per frame.
double loss_single_frame(const Eigen::MatrixXd& frame_logits,
                         const std::vector<int>& frame_labels,
                         const std::optional<std::pair<double, double>>& class_weights =
                             std::nullopt);

/// Cross-entropy of the per-window classifier against soft targets t in
/// [0, 1]: mean over windows of -(t log p_fake + (1-t) log p_real).
double loss_mfd(const Eigen::MatrixXd& mfd_logits, const Eigen::VectorXd& soft_targets);

/// Per-frame penalty r_i for one span s: |y_i - mean of the up-to-s
/// neighbors on each side|. Frames near the edges use only the neighbors
/// that exist, with the denominator adjusted to the actual count.
std::vector<double> ifp_term(const std::vector<double>& probs, int span);

/// R = sum_i (r_i^(1) + ... + r_i^(max_span)) / max_span. Zero exactly for
/// constant sequences.
double ifp_regularizer(const std::vector<double>& probs, int max_span = 3);

struct LossBreakdown {
    double total = 0.0;
    double single_frame = 0.0;
    double mfd = 0.0;
    double ifp = 0.0;
};

/// Total objective: L = L_SF + L_MFD + alpha * R, with R computed on the
/// fused fake-class probabilities (softmax of frame_logits).
LossBreakdown total_loss(const Eigen::MatrixXd& frame_logits,
                         const std::vector<int>& frame_labels,
                         const Eigen::MatrixXd& mfd_logits,
                         const Eigen::VectorXd& mfd_targets, const LossConfig& cfg);

struct LossGradients {
    LossBreakdown value;
    Eigen::MatrixXd d_frame_logits; // N x 2
    Eigen::MatrixXd d_mfd_logits;   // M x 2
};

/// Loss plus exact gradients with respect to both logit blocks.
LossGradients total_loss_with_grad(const Eigen::MatrixXd& frame_logits,
                                   const std::vector<int>& frame_labels,
                                   const Eigen::MatrixXd& mfd_logits,
                                   const Eigen::VectorXd& mfd_targets,
                                   const LossConfig& cfg);

/// Fake-class probabilities from N x 2 logits.
Eigen::VectorXd fake_probabilities(const Eigen::MatrixXd& frame_logits);

} // namespace spoofloc
