#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sclslam/error.hpp"
#include "sclslam/pipeline.hpp"
#include "sclslam/simulator.hpp"

namespace py = pybind11;
using namespace sclslam;

namespace {

using PointArray = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

PointCloud to_cloud(const Eigen::Ref<const PointArray>& xyz) {
    PointCloud c;
    c.points.reserve(static_cast<std::size_t>(xyz.rows()));
    for (Eigen::Index i = 0; i < xyz.rows(); ++i) c.push_back(xyz.row(i).transpose());
    return c;
}

PointArray to_array(const PointCloud& c) {
    PointArray out(static_cast<Eigen::Index>(c.size()), 3);
    for (std::size_t i = 0; i < c.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = c.points[i].transpose();
    return out;
}

Pose pose_from_matrix(const Eigen::Matrix4d& m) {
    return from_rotation_translation(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

std::vector<Frame> frames_of(const Dataset& d) {
    std::vector<Frame> frames;
    for (std::size_t i = 0; i < d.scans.size(); ++i) frames.push_back({StampedPose{d.odometry[i], {}}, d.scans[i]});
    return frames;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Scan Context loop closure and pose-graph back-end";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

    py::class_<Pose>(m, "Pose")
        .def(py::init<>())
        .def(py::init([](const Eigen::Matrix4d& mat) { return pose_from_matrix(mat); }), py::arg("matrix"))
        .def(py::init(&from_rotation_translation), py::arg("rotation"), py::arg("translation"))
        .def_readwrite("rotation", &Pose::rotation)
        .def_readwrite("translation", &Pose::translation)
        .def("matrix", &Pose::matrix)
        .def("inverse", [](const Pose& p) { return inverse(p); })
        .def("__matmul__", [](const Pose& a, const Pose& b) { return compose(a, b); })
        .def("__repr__", [](const Pose& p) { return "Pose(" + format_kitti(p) + ")"; });

    m.def("trans", &trans, py::arg("x"), py::arg("y"), py::arg("z"));
    m.def("rotz", &rotz, py::arg("yaw"));
    m.def("compose", &compose);
    m.def("between", &between);
    m.def("so3_exp", &so3_exp, py::arg("phi"));
    m.def("so3_log", &so3_log, py::arg("rotation"));
    m.def("se3_exp", [](const Vector6& xi) { return se3_exp(Twist::from_vector(xi)); }, py::arg("xi"),
          "Twist (rho, phi) to pose.");
    m.def("se3_log", [](const Pose& p) { return se3_log(p).vector(); }, py::arg("pose"));

    m.def("voxel_downsample", [](const Eigen::Ref<const PointArray>& xyz, double leaf) {
        return to_array(voxel_downsample(to_cloud(xyz), leaf));
    }, py::arg("points"), py::arg("leaf"));
    m.def("read_cloud", [](const std::filesystem::path& path) { return to_array(read_cloud(path)); });
    m.def("write_cloud", [](const std::filesystem::path& path, const Eigen::Ref<const PointArray>& xyz) {
        const bool ply = path.extension() == ".ply";
        write_cloud(path, to_cloud(xyz), ply ? CloudFormat::kPlyAscii : CloudFormat::kPcdBinary);
    }, py::arg("path"), py::arg("points"));

    py::class_<DescriptorParams>(m, "DescriptorParams")
        .def(py::init<>())
        .def_readwrite("num_rings", &DescriptorParams::num_rings)
        .def_readwrite("num_sectors", &DescriptorParams::num_sectors)
        .def_readwrite("max_radius", &DescriptorParams::max_radius)
        .def_readwrite("min_height_offset", &DescriptorParams::min_height_offset);
    py::class_<Descriptor>(m, "Descriptor")
        .def_readonly("matrix", &Descriptor::matrix)
        .def_readonly("ring_key", &Descriptor::ring_key);
    m.def("make_descriptor", [](const Eigen::Ref<const PointArray>& xyz, const DescriptorParams& p) {
        return make_descriptor(to_cloud(xyz), p);
    }, py::arg("points"), py::arg("params") = DescriptorParams{});
    m.def("descriptor_distance", [](const Descriptor& a, const Descriptor& b) {
        const DescriptorMatch d = descriptor_distance(a, b);
        return py::make_tuple(d.distance, d.shift);
    }, "Returns (distance, shift).");

    py::class_<IcpParams>(m, "IcpParams")
        .def(py::init<>())
        .def_readwrite("max_corr_dist", &IcpParams::max_corr_dist)
        .def_readwrite("max_iterations", &IcpParams::max_iterations)
        .def_readwrite("translation_eps", &IcpParams::translation_eps)
        .def_readwrite("rotation_eps", &IcpParams::rotation_eps)
        .def_readwrite("fitness_accept", &IcpParams::fitness_accept);
    py::class_<IcpResult>(m, "IcpResult")
        .def_readonly("transform", &IcpResult::transform)
        .def_readonly("fitness", &IcpResult::fitness)
        .def_readonly("inlier_rmse", &IcpResult::inlier_rmse)
        .def_readonly("iterations", &IcpResult::iterations)
        .def_readonly("converged", &IcpResult::converged);
    m.def("icp", [](const Eigen::Ref<const PointArray>& src, const Eigen::Ref<const PointArray>& dst,
                    const Pose& init, const IcpParams& p) { return icp(to_cloud(src), to_cloud(dst), init, p); },
          py::arg("source"), py::arg("target"), py::arg("init") = Pose{}, py::arg("params") = IcpParams{});

    py::class_<RobustKernel>(m, "RobustKernel")
        .def_static("none", &RobustKernel::none)
        .def_static("cauchy", &RobustKernel::cauchy, py::arg("c"))
        .def_static("huber", &RobustKernel::huber, py::arg("k"))
        .def_static("scaled", &RobustKernel::scaled, py::arg("s"));
    m.def("diagonal_covariance", &diagonal_covariance, py::arg("sigma_translation"), py::arg("sigma_rotation"));

    py::class_<PoseGraph>(m, "PoseGraph")
        .def(py::init<>())
        .def("add_pose", &PoseGraph::add_pose, py::arg("initial"))
        .def("add_prior", &PoseGraph::add_prior, py::arg("idx"), py::arg("pose"), py::arg("cov"))
        .def("add_odometry_factor", &PoseGraph::add_odometry_factor, py::arg("i"), py::arg("z"), py::arg("cov"))
        .def("add_loop_factor", &PoseGraph::add_loop_factor, py::arg("j"), py::arg("k"), py::arg("z"),
             py::arg("cov"), py::arg("robust") = RobustKernel::cauchy(1.0))
        .def("pose", &PoseGraph::pose, py::arg("idx"))
        .def_property_readonly("poses", &PoseGraph::poses)
        .def_property_readonly("num_poses", &PoseGraph::num_poses)
        .def_property_readonly("num_factors", [](const PoseGraph& g) { return g.factors().size(); })
        .def("cost", [](const PoseGraph& g) { return total_cost(g); });

    py::class_<SolveReport>(m, "SolveReport")
        .def_readonly("initial_cost", &SolveReport::initial_cost)
        .def_readonly("final_cost", &SolveReport::final_cost)
        .def_readonly("iterations", &SolveReport::iterations)
        .def_readonly("converged", &SolveReport::converged)
        .def_readonly("cost_history", &SolveReport::cost_history);
    m.def("optimize", [](PoseGraph& g, int max_iters, bool analytic) {
        SolverConfig cfg;
        cfg.max_iters = max_iters;
        cfg.jacobians = analytic ? JacobianMode::kAnalytic : JacobianMode::kNumeric;
        return optimize(g, cfg);
    }, py::arg("graph"), py::arg("max_iters") = 100, py::arg("analytic_jacobians") = false,
       "Optimizes the graph in place.");
    m.def("write_g2o", py::overload_cast<const std::filesystem::path&, const PoseGraph&>(&write_g2o));
    m.def("read_g2o", py::overload_cast<const std::filesystem::path&, const RobustKernel&>(&read_g2o),
          py::arg("path"), py::arg("loop_kernel") = RobustKernel::cauchy(1.0));

    py::class_<SimulationConfig>(m, "SimulationConfig")
        .def(py::init<>())
        .def_readwrite("seed", &SimulationConfig::seed)
        .def_readwrite("perimeter", &SimulationConfig::perimeter)
        .def_readwrite("step", &SimulationConfig::step)
        .def_readwrite("overlap", &SimulationConfig::overlap)
        .def_readwrite("sensor_height", &SimulationConfig::sensor_height)
        .def_property("range_noise",
                      [](const SimulationConfig& c) { return c.lidar.range_noise_sigma; },
                      [](SimulationConfig& c, double s) { c.lidar.range_noise_sigma = s; });
    py::class_<Dataset>(m, "Dataset")
        .def_readonly("ground_truth", &Dataset::ground_truth)
        .def_readonly("odometry", &Dataset::odometry)
        .def_property_readonly("num_scans", [](const Dataset& d) { return d.scans.size(); })
        .def("scan", [](const Dataset& d, std::size_t i) { return to_array(d.scans.at(i)); }, py::arg("index"))
        .def("write", [](const Dataset& d, const std::filesystem::path& dir) { write_dataset(dir, d); },
             py::arg("dir"));
    m.def("simulate", &simulate, py::arg("config") = SimulationConfig{});

    py::class_<AteResult>(m, "AteResult")
        .def_readonly("rmse", &AteResult::rmse)
        .def_readonly("rmse_axis", &AteResult::rmse_axis)
        .def_readonly("alignment", &AteResult::alignment);
    m.def("evaluate_ate", &evaluate_ate, py::arg("estimated"), py::arg("ground_truth"));

    py::class_<PipelineConfig>(m, "PipelineConfig")
        .def(py::init<>())
        .def("set", &set_config_value, py::arg("key"), py::arg("value"))
        .def("__str__", &format_config);
    py::class_<LoopRecord>(m, "LoopRecord")
        .def_readonly("j", &LoopRecord::j)
        .def_readonly("k", &LoopRecord::k)
        .def_readonly("shift", &LoopRecord::shift)
        .def_readonly("distance", &LoopRecord::distance)
        .def_readonly("fitness", &LoopRecord::fitness);
    py::class_<SlamResult>(m, "SlamResult")
        .def_readonly("optimized", &SlamResult::optimized)
        .def_readonly("loops", &SlamResult::loops)
        .def_readonly("messages", &SlamResult::messages)
        .def_readonly("graph", &SlamResult::graph)
        .def_property_readonly("frame_indices", [](const SlamResult& r) {
            std::vector<std::size_t> out;
            for (const Keyframe& kf : r.keyframes) out.push_back(kf.frame_index);
            return out;
        })
        .def_property_readonly("odometry", [](const SlamResult& r) {
            std::vector<Pose> out;
            for (const Keyframe& kf : r.keyframes) out.push_back(kf.odom_pose);
            return out;
        })
        .def("save", [](const SlamResult& r, const std::filesystem::path& dir) { save_outputs(r, dir); },
             py::arg("out_dir"));
    m.def("run_slam", [](const std::filesystem::path& odom, const std::filesystem::path& scans,
                         const PipelineConfig& cfg) {
        const std::vector<Frame> frames = ingest(odom, scans);
        py::gil_scoped_release release;
        return run_slam(frames, cfg);
    }, py::arg("odom"), py::arg("scans"), py::arg("config") = PipelineConfig{});
    m.def("run_slam_dataset", [](const Dataset& d, const PipelineConfig& cfg) {
        const std::vector<Frame> frames = frames_of(d);
        py::gil_scoped_release release;
        return run_slam(frames, cfg);
    }, py::arg("dataset"), py::arg("config") = PipelineConfig{});
    m.def("assemble_map",
          py::overload_cast<const std::filesystem::path&, const std::filesystem::path&, double,
                            const std::filesystem::path&>(&assemble_map),
          py::arg("poses"), py::arg("scans"), py::arg("leaf"), py::arg("out_ply"));
}
