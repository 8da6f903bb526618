"""Forward model: scan geometry, Siddon projector pair and rigid pose transforms."""

from .geometry import (
    CONEBEAM,
    PARALLEL3D,
    ScanGeometry,
    Sinogram,
    read_sinogram,
    transmission_weights,
    uniform_view_angles,
    write_sinogram,
)
from .projector import (
    apply_normal_operator,
    back_project,
    forward_project,
    make_normal_operator,
    normal_diagonal,
    system_matrix,
)
from .pose_transform import (
    INTERP_ORDERS,
    RigidPose,
    apply_pose,
    compose_poses,
    inverse_pose,
    rotation_matrix,
    roundtrip_error,
)

__all__ = [
    'CONEBEAM', 'PARALLEL3D', 'ScanGeometry', 'Sinogram', 'read_sinogram',
    'transmission_weights', 'uniform_view_angles', 'write_sinogram',
    'apply_normal_operator', 'back_project', 'forward_project', 'make_normal_operator', 'normal_diagonal',
    'system_matrix', 'INTERP_ORDERS', 'RigidPose', 'apply_pose', 'compose_poses',
    'inverse_pose', 'rotation_matrix', 'roundtrip_error',
]
