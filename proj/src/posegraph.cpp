#include "sclslam/posegraph.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "sclslam/error.hpp"

namespace sclslam {

double robust_weight(double e_norm, const RobustKernel& kernel) {
    switch (kernel.type) {
        case RobustKernel::Type::kNone:
            return 1.0;
        case RobustKernel::Type::kHuber:
            return e_norm <= kernel.param ? 1.0 : kernel.param / e_norm;
        case RobustKernel::Type::kCauchy: {
            const double u = e_norm / kernel.param;
            return 1.0 / (1.0 + u * u);
        }
        case RobustKernel::Type::kScaled:
            return std::clamp(kernel.param, std::numeric_limits<double>::min(), 1.0);
    }
    return 1.0;
}

double residual_scale(double e_norm, const RobustKernel& kernel) {
    if (kernel.type == RobustKernel::Type::kScaled) return robust_weight(e_norm, kernel);
    return std::sqrt(robust_weight(e_norm, kernel));
}

double robust_loss(double e_norm, const RobustKernel& kernel) {
    const double r2 = e_norm * e_norm;
    switch (kernel.type) {
        case RobustKernel::Type::kNone:
            return r2;
        case RobustKernel::Type::kHuber: {
            const double k = kernel.param;
            return e_norm <= k ? r2 : 2.0 * k * e_norm - k * k;
        }
        case RobustKernel::Type::kCauchy: {
            const double c2 = kernel.param * kernel.param;
            return c2 * std::log1p(r2 / c2);
        }
        case RobustKernel::Type::kScaled: {
            const double s = robust_weight(e_norm, kernel);
            return s * s * r2;
        }
    }
    return r2;
}

Matrix6 diagonal_covariance(double sigma_translation, double sigma_rotation) {
    Vector6 d;
    const double t2 = sigma_translation * sigma_translation;
    const double r2 = sigma_rotation * sigma_rotation;
    d << t2, t2, t2, r2, r2, r2;
    return d.asDiagonal();
}

int PoseGraph::add_pose(const Pose& initial) {
    poses_.push_back(initial);
    return static_cast<int>(poses_.size()) - 1;
}

void PoseGraph::check_index(int idx) const {
    if (idx < 0 || idx >= static_cast<int>(poses_.size())) {
        throw Error(ErrorCode::kUnknownIndex, "pose index " + std::to_string(idx) + " does not exist (graph has " +
                                                  std::to_string(poses_.size()) + " poses)");
    }
}

const Pose& PoseGraph::pose(int idx) const {
    check_index(idx);
    return poses_[static_cast<std::size_t>(idx)];
}

void PoseGraph::set_pose(int idx, const Pose& p) {
    check_index(idx);
    poses_[static_cast<std::size_t>(idx)] = p;
}

void PoseGraph::set_poses(std::vector<Pose> poses) {
    if (poses.size() != poses_.size()) throw Error(ErrorCode::kInvalidArgument, "pose count mismatch");
    poses_ = std::move(poses);
}

std::size_t PoseGraph::count(FactorKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(factors_.begin(), factors_.end(), [&](const Factor& f) { return f.kind == kind; }));
}

Factor PoseGraph::make_factor(FactorKind kind, int i, int j, const Pose& z, const Matrix6& cov,
                              const RobustKernel& robust) const {
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw Error(ErrorCode::kInvalidArgument, "covariance is not symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Matrix6> eig(cov);
    if (eig.eigenvalues().minCoeff() <= 0.0) {
        throw Error(ErrorCode::kInvalidArgument, "covariance is not positive definite");
    }
    Factor f;
    f.kind = kind;
    f.i = i;
    f.j = j;
    f.measurement = renormalized(z);
    f.covariance = cov;
    f.robust = robust;
    const Matrix6 info = cov.inverse();
    const Eigen::LLT<Matrix6> llt(0.5 * (info + info.transpose()));
    f.sqrt_information = llt.matrixL().transpose();
    return f;
}

void PoseGraph::add_prior(int idx, const Pose& pose, const Matrix6& cov) {
    check_index(idx);
    factors_.push_back(make_factor(FactorKind::kPrior, idx, idx, pose, cov, RobustKernel::none()));
}

void PoseGraph::add_odometry_factor(int i, const Pose& z, const Matrix6& cov) {
    check_index(i);
    Factor f = make_factor(FactorKind::kOdometry, i, i + 1, z, cov, RobustKernel::none());
    if (i + 1 == static_cast<int>(poses_.size())) poses_.push_back(renormalized(compose(poses_.back(), z)));
    factors_.push_back(std::move(f));
}

void PoseGraph::add_loop_factor(int j, int k, const Pose& z, const Matrix6& cov, const RobustKernel& robust) {
    check_index(j);
    check_index(k);
    if (j >= k) {
        throw Error(ErrorCode::kInvalidPair,
                    "loop factor needs j < k, got " + std::to_string(j) + ", " + std::to_string(k));
    }
    factors_.push_back(make_factor(FactorKind::kLoop, j, k, z, cov, robust));
}

namespace {

Vector6 error_at(const Factor& f, const Pose& xi, const Pose& xj) {
    const Pose zinv = inverse(f.measurement);
    if (f.kind == FactorKind::kPrior) return se3_log(compose(zinv, xi)).vector();
    return se3_log(compose(zinv, between(xi, xj))).vector();
}

}  // namespace

Vector6 factor_error(const Factor& f, const std::vector<Pose>& poses) {
    const Pose& xi = poses[static_cast<std::size_t>(f.i)];
    return error_at(f, xi, poses[static_cast<std::size_t>(f.kind == FactorKind::kPrior ? f.i : f.j)]);
}

Vector6 factor_error(const Factor& f, const PoseGraph& g) {
    const int n = static_cast<int>(g.num_poses());
    if (f.i < 0 || f.i >= n || (f.kind != FactorKind::kPrior && (f.j < 0 || f.j >= n))) {
        throw Error(ErrorCode::kUnknownIndex, "factor references a missing pose");
    }
    return factor_error(f, g.poses());
}

FactorJacobians factor_jacobians(const Factor& f, const std::vector<Pose>& poses, JacobianMode mode) {
    FactorJacobians out;
    out.d_i.setZero();
    out.d_j.setZero();
    const bool prior = f.kind == FactorKind::kPrior;

    if (mode == JacobianMode::kAnalytic) {
        const Twist e = Twist::from_vector(factor_error(f, poses));
        const Matrix6 jr_inv = se3_right_jacobian_inverse(e);
        if (prior) {
            out.d_i = jr_inv * adjoint(inverse(poses[static_cast<std::size_t>(f.i)]));
        } else {
            const Matrix6 d = jr_inv * adjoint(inverse(poses[static_cast<std::size_t>(f.j)]));
            out.d_j = d;
            out.d_i = -d;
        }
        return out;
    }

    const double h = std::cbrt(std::numeric_limits<double>::epsilon());
    const Pose& xi = poses[static_cast<std::size_t>(f.i)];
    const Pose& xj = poses[static_cast<std::size_t>(prior ? f.i : f.j)];
    for (int a = 0; a < 6; ++a) {
        Vector6 d = Vector6::Zero();
        d(a) = h;
        const Pose up = se3_exp(Twist::from_vector(d));
        const Pose down = se3_exp(Twist::from_vector(-d));
        out.d_i.col(a) = (error_at(f, compose(up, xi), xj) - error_at(f, compose(down, xi), xj)) / (2.0 * h);
        if (!prior) {
            out.d_j.col(a) = (error_at(f, xi, compose(up, xj)) - error_at(f, xi, compose(down, xj))) / (2.0 * h);
        }
    }
    return out;
}

double total_cost(const std::vector<Factor>& factors, const std::vector<Pose>& poses) {
    double cost = 0.0;
    for (const Factor& f : factors) {
        const double r = (f.sqrt_information * factor_error(f, poses)).norm();
        cost += robust_loss(r, f.robust);
    }
    return cost;
}

double total_cost(const PoseGraph& g) { return total_cost(g.factors(), g.poses()); }

namespace {

struct LinearSystem {
    Eigen::SparseMatrix<double> hessian;
    Eigen::VectorXd gradient;
};

LinearSystem linearize(const std::vector<Factor>& factors, const std::vector<Pose>& poses, JacobianMode mode) {
    const Eigen::Index dim = static_cast<Eigen::Index>(6 * poses.size());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(factors.size() * 144);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);

    auto add_block = [&](int r, int c, const Matrix6& b) {
        for (int a = 0; a < 6; ++a) {
            for (int k = 0; k < 6; ++k) triplets.emplace_back(6 * r + a, 6 * c + k, b(a, k));
        }
    };

    for (const Factor& f : factors) {
        const Vector6 e = factor_error(f, poses);
        const Vector6 whitened = f.sqrt_information * e;
        const double scale = residual_scale(whitened.norm(), f.robust);
        const Vector6 r = scale * whitened;
        const FactorJacobians jac = factor_jacobians(f, poses, mode);
        const Matrix6 ji = scale * f.sqrt_information * jac.d_i;
        add_block(f.i, f.i, ji.transpose() * ji);
        g.segment<6>(6 * f.i) += ji.transpose() * r;
        if (f.kind != FactorKind::kPrior) {
            const Matrix6 jj = scale * f.sqrt_information * jac.d_j;
            add_block(f.i, f.j, ji.transpose() * jj);
            add_block(f.j, f.i, jj.transpose() * ji);
            add_block(f.j, f.j, jj.transpose() * jj);
            g.segment<6>(6 * f.j) += jj.transpose() * r;
        }
    }
    LinearSystem sys;
    sys.hessian.resize(dim, dim);
    sys.hessian.setFromTriplets(triplets.begin(), triplets.end());
    sys.gradient = std::move(g);
    return sys;
}

std::vector<Pose> retract(const std::vector<Pose>& poses, const Eigen::VectorXd& delta) {
    std::vector<Pose> out(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const Vector6 d = delta.segment<6>(static_cast<Eigen::Index>(6 * i));
        out[i] = renormalized(compose(se3_exp(Twist::from_vector(d)), poses[i]));
    }
    return out;
}

}  // namespace

SolveReport optimize(PoseGraph& g, const SolverConfig& config) {
    if (g.count(FactorKind::kPrior) == 0) {
        throw Error(ErrorCode::kGaugeUnfixed, "pose graph has no prior factor");
    }
    const std::vector<Factor>& factors = g.factors();
    std::vector<Pose> poses = g.poses();

    SolveReport report;
    double cost = total_cost(factors, poses);
    report.initial_cost = cost;
    report.cost_history.push_back(cost);
    double lambda = config.lambda_init;

    if (cost <= 1e-24) {
        report.final_cost = cost;
        report.converged = true;
        return report;
    }

    for (int iter = 0; iter < config.max_iters; ++iter) {
        const LinearSystem sys = linearize(factors, poses, config.jacobians);
        const Eigen::VectorXd diag = sys.hessian.diagonal();

        bool accepted = false;
        bool stalled = false;
        Eigen::VectorXd delta;
        double new_cost = cost;
        std::vector<Pose> trial;
        while (!accepted) {
            Eigen::SparseMatrix<double> damped = sys.hessian;
            for (Eigen::Index k = 0; k < damped.rows(); ++k) damped.coeffRef(k, k) += lambda * diag(k);
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
            bool ok = solver.info() == Eigen::Success;
            if (ok) {
                delta = solver.solve(-sys.gradient);
                ok = solver.info() == Eigen::Success && delta.allFinite();
            }
            if (!ok) {
                lambda *= 10.0;
                if (lambda > config.lambda_max) {
                    throw Error(ErrorCode::kLinearSolveFailure,
                                "normal equations stay singular under damping");
                }
                continue;
            }
            try {
                trial = retract(poses, delta);
                new_cost = total_cost(factors, trial);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::kAngleNearPi) throw;
                new_cost = std::numeric_limits<double>::infinity();
            }
            if (new_cost <= cost) {
                accepted = true;
                lambda = std::max(lambda / 10.0, 1e-12);
            } else {
                lambda *= 10.0;
                if (lambda > config.lambda_max) {
                    stalled = true;
                    break;
                }
            }
        }
        if (stalled) {
            // No damping level decreases the cost: a local minimum to
            // numerical precision.
            report.converged = true;
            break;
        }

        const double decrease = cost - new_cost;
        poses = std::move(trial);
        report.iterations = iter + 1;
        report.cost_history.push_back(new_cost);
        const double old_cost = cost;
        cost = new_cost;
        if (delta.cwiseAbs().maxCoeff() < config.step_tol || decrease <= config.cost_tol * old_cost ||
            cost <= 1e-24) {
            report.converged = true;
            break;
        }
    }
    g.set_poses(std::move(poses));
    report.final_cost = cost;
    return report;
}

namespace {

std::string g2o_pose(const Pose& p) {
    const Eigen::Quaterniond q = to_quaternion(p);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g %.17g", p.translation.x(),
                  p.translation.y(), p.translation.z(), q.x(), q.y(), q.z(), q.w());
    return buf;
}

std::string g2o_information(const Matrix6& cov) {
    const Matrix6 info = cov.inverse();
    std::string out;
    char buf[64];
    for (int r = 0; r < 6; ++r) {
        for (int c = r; c < 6; ++c) {
            std::snprintf(buf, sizeof(buf), "%s%.17g", out.empty() ? "" : " ", 0.5 * (info(r, c) + info(c, r)));
            out += buf;
        }
    }
    return out;
}

}  // namespace

void write_g2o(std::ostream& out, const PoseGraph& g) {
    for (std::size_t i = 0; i < g.num_poses(); ++i) {
        out << "VERTEX_SE3:QUAT " << i << ' ' << g2o_pose(g.poses()[i]) << '\n';
    }
    for (const Factor& f : g.factors()) {
        if (f.kind == FactorKind::kPrior) {
            out << "EDGE_SE3_PRIOR " << f.i;
        } else {
            out << "EDGE_SE3:QUAT " << f.i << ' ' << f.j;
        }
        out << ' ' << g2o_pose(f.measurement) << ' ' << g2o_information(f.covariance) << '\n';
    }
}

void write_g2o(const std::filesystem::path& path, const PoseGraph& g) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
    write_g2o(out, g);
    if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

PoseGraph read_g2o(std::istream& in, const RobustKernel& loop_kernel) {
    struct Edge {
        bool prior;
        int i, j;
        Pose z;
        Matrix6 cov;
    };
    std::map<int, Pose> vertices;
    std::vector<Edge> edges;
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::kParseError, "g2o line " + std::to_string(lineno) + ": " + what);
    };
    auto read_pose = [&](std::istringstream& ls) {
        double v[7];
        for (double& x : v) if (!(ls >> x)) fail("expected x y z qx qy qz qw");
        return from_quaternion(Vector3(v[0], v[1], v[2]), v[3], v[4], v[5], v[6]);
    };
    auto read_cov = [&](std::istringstream& ls) {
        Matrix6 info;
        for (int r = 0; r < 6; ++r) {
            for (int c = r; c < 6; ++c) {
                if (!(ls >> info(r, c))) fail("expected 21 information entries");
                info(c, r) = info(r, c);
            }
        }
        const Matrix6 cov = info.inverse();
        return Matrix6(0.5 * (cov + cov.transpose()));
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "VERTEX_SE3:QUAT") {
            int id;
            if (!(ls >> id)) fail("missing vertex id");
            if (!vertices.emplace(id, read_pose(ls)).second) fail("duplicate vertex " + std::to_string(id));
        } else if (tag == "EDGE_SE3:QUAT") {
            Edge e{false, 0, 0, {}, {}};
            if (!(ls >> e.i >> e.j)) fail("missing edge ids");
            e.z = read_pose(ls);
            e.cov = read_cov(ls);
            edges.push_back(e);
        } else if (tag == "EDGE_SE3_PRIOR") {
            Edge e{true, 0, 0, {}, {}};
            if (!(ls >> e.i)) fail("missing prior id");
            e.j = e.i;
            e.z = read_pose(ls);
            e.cov = read_cov(ls);
            edges.push_back(e);
        } else if (tag == "FIX") {
            continue;
        } else {
            fail("unsupported tag " + tag);
        }
    }
    PoseGraph g;
    int expected = 0;
    for (const auto& [id, pose] : vertices) {
        if (id != expected++) throw Error(ErrorCode::kParseError, "g2o vertex ids must be contiguous from 0");
        g.add_pose(pose);
    }
    for (const Edge& e : edges) {
        if (e.prior) {
            g.add_prior(e.i, e.z, e.cov);
        } else if (e.j == e.i + 1) {
            g.add_odometry_factor(e.i, e.z, e.cov);
        } else {
            g.add_loop_factor(e.i, e.j, e.z, e.cov, loop_kernel);
        }
    }
    return g;
}

PoseGraph read_g2o(const std::filesystem::path& path, const RobustKernel& loop_kernel) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    return read_g2o(in, loop_kernel);
}

}  // namespace sclslam
