"""kigrasp: grasp planning by kernel-integral relaxation.

Plans power and precision grasps by maximizing the discretized Q-infinity
metric over a gripper configuration.  The per-direction resisting wrench is
a double surface integral of a Gaussian kernel, evaluated (with its
configuration gradient) by a fast Gauss transform; collision and
self-collision freedom are enforced by log barriers inside a line-search
SQP.

Normal convention: object sample normals point INTO the object.
"""

from .barriers import (
    BarrierConfig,
    SeparatingPlane,
    init_separating_planes,
    object_barrier,
    self_collision_barrier,
    update_separating_plane,
)
from .errors import InfeasibleInitError, KigraspError, QpSolverError, SpecFileError
from .fgt import (
    BoxDecomposition,
    FgtResult,
    brute_force_sum,
    cluster_boxes,
    fgt_evaluate,
    hermite_function,
    l2l_evaluate,
    m2l_translate,
    m2m_expand,
    truncation_order,
)
from .geometry import ConvexShape, point_to_convex_distance
from .kinematics import (
    KinematicModel,
    forward_kinematics,
    kinematic_jacobian,
    load_gripper,
    model_from_dict,
)
from .meshio import load_object
from .metric import (
    FrictionCone,
    GraspObjective,
    WrenchDirectionSet,
    best_contact_force,
    evaluate_objective,
    relaxation_kernel_disk_integral,
    sample_wrench_directions,
)
from .qp import psd_project, solve_step_qp
from .sampling import (
    PointSample,
    SurfaceSamples,
    poisson_disk_cloud,
    poisson_disk_mesh,
    poisson_disk_sample,
)
from .solver import (
    GraspProblem,
    SolverParams,
    SqpState,
    initial_configuration,
    merit_value,
    solve,
)

__version__ = "0.1.0"
