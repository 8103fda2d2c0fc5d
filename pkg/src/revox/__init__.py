"""Reconfigurable voxels: adaptive neighbor reassignment for sparse
LiDAR-style point clouds via biased random walks on the occupancy grid."""

from .analysis import (
    BenchReport,
    CountHistogram,
    DisplacementStats,
    bench,
    coefficient_of_variation,
    count_histogram,
    displacement_stats,
    effective_counts,
)
from .encoder import (
    FeatureSpec,
    PointFeatureBlock,
    VoxelFeature,
    column_max,
    decorate,
    encode_avg,
    encode_weighted,
    scatter,
    uniform_weights,
)
from .grid import (
    ComponentLabels,
    GridConfig,
    NeighborGraph,
    VoxelGrid,
    VoxelRecord,
    build_neighbor_graph,
    connected_components,
    partition,
)
from .multires import (
    COARSE,
    FINE,
    InterResPlan,
    MultiResGrid,
    ResolutionTaggedSlot,
    inter_res_plan,
    partition_multires,
    reconfigure_multires,
    tagged_slot,
)
from .pointcloud import (
    Blob,
    Point,
    PointCloud,
    SynthSpec,
    generate_synthetic,
    load_csv,
    load_kitti_bin,
    save_bin,
    save_csv,
)
from .walk import (
    Reconfiguration,
    TransitionDistribution,
    WalkPlan,
    WalkTrace,
    effective_count,
    reconfigure,
    sample_transition,
    transition_distribution,
    walk_plan,
)

__version__ = "0.1.0"
