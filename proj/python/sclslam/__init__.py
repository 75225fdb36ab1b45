"""Scan Context loop closure and pose-graph optimization for LiDAR SLAM."""

from ._core import (
    AteResult,
    Dataset,
    Descriptor,
    DescriptorParams,
    Error,
    IcpParams,
    IcpResult,
    LoopRecord,
    PipelineConfig,
    Pose,
    PoseGraph,
    RobustKernel,
    SimulationConfig,
    SlamResult,
    SolveReport,
    assemble_map,
    between,
    compose,
    descriptor_distance,
    diagonal_covariance,
    evaluate_ate,
    icp,
    make_descriptor,
    optimize,
    read_cloud,
    read_g2o,
    rotz,
    run_slam,
    run_slam_dataset,
    se3_exp,
    se3_log,
    simulate,
    so3_exp,
    so3_log,
    trans,
    voxel_downsample,
    write_cloud,
    write_g2o,
)

__version__ = "0.1.0"
