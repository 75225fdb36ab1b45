#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "sclslam/geometry.hpp"

namespace sclslam {

enum class FactorKind { kPrior, kOdometry, kLoop };

// M-estimator applied to a factor's Mahalanobis residual norm.
struct RobustKernel {
    enum class Type { kNone, kCauchy, kHuber, kScaled };
    Type type = Type::kNone;
    double param = 1.0;  // c for Cauchy, k for Huber, s for Scaled

    static RobustKernel none() { return {Type::kNone, 1.0}; }
    static RobustKernel cauchy(double c) { return {Type::kCauchy, c}; }
    static RobustKernel huber(double k) { return {Type::kHuber, k}; }
    static RobustKernel scaled(double s) { return {Type::kScaled, s}; }
};

/// IRLS weight on the squared residual, in (0, 1].
///   none -> 1, huber(k) -> min(1, k/r), cauchy(c) -> 1/(1+(r/c)^2),
///   scaled(s) -> s clamped to (0, 1].
double robust_weight(double e_norm, const RobustKernel& kernel);

/// Multiplier applied to the whitened residual and Jacobian. sqrt(weight) for
/// the M-estimators; s itself for scaled(s), matching ||s (h - z)||^2.
double residual_scale(double e_norm, const RobustKernel& kernel);

/// Robust cost rho(r) whose IRLS weight is robust_weight (r^2 for none).
double robust_loss(double e_norm, const RobustKernel& kernel);

struct Factor {
    FactorKind kind = FactorKind::kOdometry;
    int i = 0;
    int j = 0;  // unused for priors
    Pose measurement;
    Matrix6 covariance = Matrix6::Identity();
    RobustKernel robust;
    Matrix6 sqrt_information = Matrix6::Identity();  // W with W^T W = covariance^-1
};

Matrix6 diagonal_covariance(double sigma_translation, double sigma_rotation);

class PoseGraph {
public:
    /// Appends a pose variable and returns its index.
    int add_pose(const Pose& initial);

    void add_prior(int idx, const Pose& pose, const Matrix6& cov);

    /// Connects i and i+1. Creates pose i+1 by dead reckoning when absent.
    void add_odometry_factor(int i, const Pose& z, const Matrix6& cov);

    void add_loop_factor(int j, int k, const Pose& z, const Matrix6& cov, const RobustKernel& robust);

    std::size_t num_poses() const { return poses_.size(); }
    const std::vector<Pose>& poses() const { return poses_; }
    const Pose& pose(int idx) const;
    void set_pose(int idx, const Pose& p);
    void set_poses(std::vector<Pose> poses);

    const std::vector<Factor>& factors() const { return factors_; }
    std::size_t count(FactorKind kind) const;

private:
    void check_index(int idx) const;
    Factor make_factor(FactorKind kind, int i, int j, const Pose& z, const Matrix6& cov,
                       const RobustKernel& robust) const;

    std::vector<Pose> poses_;
    std::vector<Factor> factors_;
};

/// Prior: log(z^-1 X_i). Between: log(z^-1 X_i^-1 X_j).
Vector6 factor_error(const Factor& f, const std::vector<Pose>& poses);
Vector6 factor_error(const Factor& f, const PoseGraph& g);

enum class JacobianMode { kNumeric, kAnalytic };

// Jacobians of factor_error under the left update X <- exp(d) X.
struct FactorJacobians {
    Eigen::Matrix<double, 6, 6> d_i;
    Eigen::Matrix<double, 6, 6> d_j;  // zero for priors
};

FactorJacobians factor_jacobians(const Factor& f, const std::vector<Pose>& poses, JacobianMode mode);

/// Sum of robust losses of the whitened residual norms.
double total_cost(const PoseGraph& g);
double total_cost(const std::vector<Factor>& factors, const std::vector<Pose>& poses);

struct SolverConfig {
    int max_iters = 100;
    double lambda_init = 1e-4;
    double cost_tol = 1e-12;   // relative cost decrease
    double step_tol = 1e-10;   // max |delta| component
    double lambda_max = 1e12;
    JacobianMode jacobians = JacobianMode::kNumeric;
};

struct SolveReport {
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> cost_history;  // cost after each accepted step, starting with the initial cost
};

/// Batch Levenberg-Marquardt with IRLS reweighting. Updates poses in place.
/// Throws GaugeUnfixed without a prior, LinearSolveFailure when damping cannot
/// make the normal equations solvable.
SolveReport optimize(PoseGraph& g, const SolverConfig& config = {});

/// g2o text: VERTEX_SE3:QUAT, EDGE_SE3:QUAT (upper-triangular information),
/// and EDGE_SE3_PRIOR for priors. Edges between consecutive ids import as
/// odometry, all others as loops carrying `loop_kernel`.
void write_g2o(std::ostream& out, const PoseGraph& g);
void write_g2o(const std::filesystem::path& path, const PoseGraph& g);
PoseGraph read_g2o(std::istream& in, const RobustKernel& loop_kernel = RobustKernel::cauchy(1.0));
PoseGraph read_g2o(const std::filesystem::path& path, const RobustKernel& loop_kernel = RobustKernel::cauchy(1.0));

}  // namespace sclslam
