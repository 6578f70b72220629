"""Scaffold/tendon geometry and planar kinematics.

Working plane is x-z: x is the transverse direction, z the axial advance
toward the tissue. Points are 2-vectors ``[x, z]`` in mm. The over-tube pose
has three planar DoF (x, z, pitch phi). The scalar "moment" of a planar
vector pair is ``cross((x1,z1),(x2,z2)) = x1*z2 - z1*x2``.

Tendon numbering: 1,2 are the front pair (attached at the front collar,
pulling toward +z anchors), 3,4 the rear pair. Odd indices are on the -x
side, even on +x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateGeometryError,
    SolverError,
    WorkspaceError,
)

_UNIT_AXIS_TOL = 1e-12


@dataclass(frozen=True)
class TubePose:
    """Planar over-tube pose: transverse offset x (mm), axial advance z (mm),
    pitch phi (rad)."""

    x: float = 0.0
    z: float = 0.0
    phi: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.z])

    def translated(self, dx: float = 0.0, dz: float = 0.0) -> "TubePose":
        return TubePose(self.x + dx, self.z + dz, self.phi)


@dataclass(frozen=True)
class ScaffoldGeometry:
    """Anchor points, collar attachment offsets and the contact axis.

    anchors: (4,2) scaffold anchor points, mm.
    collar_offsets: (4,2) attachment points in the tube body frame, mm.
    tube_radius: over-tube outer radius, mm.
    contact_axis: unit vector along the probe axis (direction of expected
        contact force application), default +z.
    workspace_margin: minimum distance (mm) every attachment point must keep
        from the anchor hull boundary to count as inside the workspace.
    """

    anchors: np.ndarray
    collar_offsets: np.ndarray
    tube_radius: float = 1.5
    contact_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    workspace_margin: float = 0.5

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=float)
        offsets = np.asarray(self.collar_offsets, dtype=float)
        axis = np.asarray(self.contact_axis, dtype=float)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "collar_offsets", offsets)
        object.__setattr__(self, "contact_axis", axis)
        if anchors.shape != (4, 2) or offsets.shape != (4, 2):
            raise ConfigurationError("exactly 4 anchors and 4 collar offsets required")
        for i in range(4):
            for j in range(i + 1, 4):
                if np.allclose(anchors[i], anchors[j]):
                    raise ConfigurationError(f"anchors {i + 1} and {j + 1} coincide")
        if self.tube_radius < 0:
            raise ConfigurationError("tube_radius must be >= 0")
        if abs(np.linalg.norm(axis) - 1.0) >= _UNIT_AXIS_TOL:
            raise ConfigurationError("contact_axis must have unit norm")
        object.__setattr__(self, "_hull", _hull_edges(anchors))

    @property
    def hull_edges(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        return self._hull  # type: ignore[attr-defined]


@dataclass(frozen=True)
class TendonAngles:
    """Per-tendon unit directions (attachment -> anchor) and angles to the
    contact axis; cos(theta_i) = unit_dir_i . contact_axis."""

    theta: np.ndarray
    unit_dirs: np.ndarray

    @property
    def cos_theta(self) -> np.ndarray:
        return np.cos(self.theta)


@dataclass(frozen=True)
class ScaffoldConfig:
    """Dimensions for the default scaffold layout (all mm)."""

    half_width: float = 20.0
    front_anchor_z: float = 20.0
    rear_anchor_drop: float = 20.0  # distance of rear anchors behind rear collar
    collar_spacing: float = 20.0
    tube_od: float = 3.0
    workspace_margin: float = 0.5


def default_geometry(config: ScaffoldConfig | None = None) -> ScaffoldGeometry:
    """Documented default layout: front collar at the body origin, rear collar
    20 mm behind it; front anchors at (+-20, +20), rear anchors at (+-20, -40);
    contact axis +z. Front tendons make 45 degrees with the contact axis at
    the centered pose."""
    cfg = config or ScaffoldConfig()
    for name in ("half_width", "front_anchor_z", "rear_anchor_drop",
                 "collar_spacing", "tube_od"):
        if getattr(cfg, name) <= 0:
            raise ConfigurationError(f"scaffold dimension {name} must be positive")
    w = cfg.half_width
    zf = cfg.front_anchor_z
    zr = -cfg.collar_spacing - cfg.rear_anchor_drop
    anchors = np.array([
        [-w, zf],
        [+w, zf],
        [-w, zr],
        [+w, zr],
    ])
    offsets = np.array([
        [0.0, 0.0],
        [0.0, 0.0],
        [0.0, -cfg.collar_spacing],
        [0.0, -cfg.collar_spacing],
    ])
    return ScaffoldGeometry(
        anchors=anchors,
        collar_offsets=offsets,
        tube_radius=cfg.tube_od / 2.0,
        workspace_margin=cfg.workspace_margin,
    )


def _rotation(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def attachment_points(pose: TubePose, geom: ScaffoldGeometry) -> np.ndarray:
    """World-frame attachment points, shape (4,2)."""
    return pose.position + geom.collar_offsets @ _rotation(pose.phi).T


def _hull_edges(points: np.ndarray):
    """CCW convex hull edges of the anchor set as (vertex, edge_unit, inward
    normal is implied by CCW order)."""
    centroid = points.mean(axis=0)
    order = np.argsort(np.arctan2(points[:, 1] - centroid[1],
                                  points[:, 0] - centroid[0]))
    verts = points[order]
    edges = []
    for i in range(len(verts)):
        a = verts[i]
        b = verts[(i + 1) % len(verts)]
        e = b - a
        n = np.linalg.norm(e)
        if n < 1e-12:
            continue
        edges.append((a, e / n))
    return edges

def _min_edge_distance(p: np.ndarray, edges) -> float:
    """Signed distance of p to the hull boundary; positive inside (CCW)."""
    dists = []
    for a, e in edges:
        d = p - a
        dists.append(e[0] * d[1] - e[1] * d[0])  # left-of-edge distance
    return min(dists)


def in_workspace(pose: TubePose, geom: ScaffoldGeometry) -> bool:
    """True when every attachment point sits inside the anchor convex hull
    with the configured margin."""
    pts = attachment_points(pose, geom)
    edges = geom.hull_edges
    return all(_min_edge_distance(p, edges) >= geom.workspace_margin for p in pts)


def cable_lengths_unchecked(pose: TubePose, geom: ScaffoldGeometry) -> np.ndarray:
    """Cable lengths without the workspace check (used by the FK iteration)."""
    diff = geom.anchors - attachment_points(pose, geom)
    return np.linalg.norm(diff, axis=1)


def inverse_kinematics(pose: TubePose, geom: ScaffoldGeometry) -> np.ndarray:
    """Cable lengths (mm, 4-vector) for a pose inside the workspace."""
    if not in_workspace(pose, geom):
        raise WorkspaceError(f"pose ({pose.x:.3f}, {pose.z:.3f}, {pose.phi:.4f}) "
                             "outside scaffold workspace")
    return cable_lengths_unchecked(pose, geom)


def tendon_angles(pose: TubePose, geom: ScaffoldGeometry) -> TendonAngles:
    """Unit tendon directions and their angles to the contact axis."""
    diff = geom.anchors - attachment_points(pose, geom)
    lengths = np.linalg.norm(diff, axis=1)
    if np.any(lengths < 1e-9):
        raise DegenerateGeometryError("anchor coincides with attachment point")
    dirs = diff / lengths[:, None]
    cos_t = np.clip(dirs @ geom.contact_axis, -1.0, 1.0)
    return TendonAngles(theta=np.arccos(cos_t), unit_dirs=dirs)


def lengths_and_structure(pose: TubePose,
                          geom: ScaffoldGeometry) -> tuple[np.ndarray, np.ndarray]:
    """(cable lengths, structure matrix) in one geometry pass."""
    pts = attachment_points(pose, geom)
    diff = geom.anchors - pts
    lengths = np.linalg.norm(diff, axis=1)
    if np.any(lengths < 1e-9):
        raise DegenerateGeometryError("anchor coincides with attachment point")
    dirs = diff / lengths[:, None]
    r = pts - pose.position
    moments = r[:, 0] * dirs[:, 1] - r[:, 1] * dirs[:, 0]
    return lengths, np.vstack([dirs.T, moments])


def structure_matrix(pose: TubePose, geom: ScaffoldGeometry) -> np.ndarray:
    """3x4 matrix W with W @ T = net wrench [Fx, Fz, M] from tensions T.

    Column i holds the unit tendon direction and its moment about the tube
    center; the length Jacobian satisfies dL/dq = -W^T.
    """
    return lengths_and_structure(pose, geom)[1]


def forward_kinematics(lengths: np.ndarray, geom: ScaffoldGeometry,
                       initial_guess: TubePose, tol: float = 1e-9,
                       max_iter: int = 100) -> TubePose:
    """Pose whose cable lengths match ``lengths`` to within ``tol`` (mm, inf
    norm), found by Gauss-Newton on the length residual."""
    lengths = np.asarray(lengths, dtype=float)
    if lengths.shape != (4,):
        raise ConfigurationError("lengths must be a 4-vector")
    q = np.array([initial_guess.x, initial_guess.z, initial_guess.phi])
    for _ in range(max_iter):
        pose = TubePose(*q)
        resid = cable_lengths_unchecked(pose, geom) - lengths
        if np.max(np.abs(resid)) < tol:
            if not in_workspace(pose, geom):
                raise WorkspaceError("converged pose lies outside the workspace")
            return pose
        jac = -structure_matrix(pose, geom).T  # dL/dq
        dq, *_ = np.linalg.lstsq(jac, -resid, rcond=None)
        if np.max(np.abs(dq)) < 1e-14:
            raise WorkspaceError("cable lengths are not achievable by any pose")
        q = q + dq
    raise SolverError(f"forward kinematics did not converge in {max_iter} iterations")
