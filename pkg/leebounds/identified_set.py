"""Half-space representation of identified sets and confidence regions."""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linprog

from errors import DimensionMismatch, EmptyCell, EmptyRegion, MissingAxisDirection
from selection_core import EmbeddedDataset, SupportProfile, TrimFraction

logger = logging.getLogger(__name__)

ANGLE_GAP = 1e-9
VERTEX_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class HalfspaceRegion:
    """The set {v : <u_i, v> <= offset_i for all i}."""

    directions: np.ndarray
    offsets: np.ndarray
    witness: Optional[np.ndarray] = None

    def __post_init__(self):
        directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        offsets = np.asarray(self.offsets, dtype=float)
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "offsets", offsets)
        if offsets.shape != (directions.shape[0],):
            raise DimensionMismatch("one offset per direction is required")
        if np.any(np.abs(np.linalg.norm(directions, axis=1) - 1.0) > 1e-10):
            raise DimensionMismatch("region directions must have unit norm")
        if self.witness is not None:
            object.__setattr__(self, "witness", np.asarray(self.witness, dtype=float))

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def axis_index(self, axis: int, sign: int) -> Optional[int]:
        target = np.zeros(self.dim)
        target[axis] = float(sign)
        hits = np.flatnonzero(np.all(self.directions == target, axis=1))
        return int(hits[0]) if hits.size else None

    def with_offsets(self, offsets: np.ndarray, witness=None) -> "HalfspaceRegion":
        return HalfspaceRegion(self.directions, offsets, witness)


@dataclass(frozen=True, eq=False)
class Polygon2D:
    """Convex polygon, vertices in counterclockwise order."""

    vertices: np.ndarray

    def ring(self) -> np.ndarray:
        """Vertices with the first one repeated at the end."""
        return np.vstack([self.vertices, self.vertices[:1]])

    def to_frame(self) -> pd.DataFrame:
        ring = self.ring()
        return pd.DataFrame({"x": ring[:, 0], "y": ring[:, 1]})


def _find_witness(region: HalfspaceRegion) -> Optional[np.ndarray]:
    result = linprog(
        np.zeros(region.dim),
        A_ub=region.directions,
        b_ub=region.offsets,
        bounds=[(None, None)] * region.dim,
        method="highs",
    )
    return result.x if result.status == 0 else None


def build_region(profile: SupportProfile) -> HalfspaceRegion:
    """
    Half-space intersection defined by a support profile.

    The profile's sample-mean center certifies nonemptiness; without one a
    feasibility linear program is solved.

    Raises:
        EmptyRegion: If no point satisfies every half-space
    """
    region = HalfspaceRegion(profile.grid.directions, profile.sigma, profile.center)
    return certify_nonempty(region)


def certify_nonempty(region: HalfspaceRegion) -> HalfspaceRegion:
    if region.witness is not None and contains(region, region.witness):
        return region
    logger.debug("Witness missing or outside the region; solving a feasibility LP")
    witness = _find_witness(region)
    if witness is None:
        raise EmptyRegion("half-space constraints are infeasible")
    return region.with_offsets(region.offsets, witness)


def contains(region: HalfspaceRegion, v: Sequence[float], tol: float = 1e-9) -> bool:
    """
    Check membership of a point.

    Raises:
        DimensionMismatch: If v does not match the region dimension
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (region.dim,):
        raise DimensionMismatch(f"point of dimension {v.size} vs region {region.dim}")
    return bool(np.all(region.directions @ v <= region.offsets + tol))


def project_interval(region: HalfspaceRegion, axis: int) -> Tuple[float, float]:
    """
    Coordinate range of the region read off its +-e_axis support values.

    Raises:
        MissingAxisDirection: If +e_axis or -e_axis is not a region direction
    """
    plus = region.axis_index(axis, 1)
    minus = region.axis_index(axis, -1)
    if plus is None or minus is None:
        raise MissingAxisDirection(f"direction grid lacks +-e_{axis + 1}")
    return float(-region.offsets[minus]), float(region.offsets[plus])


def minkowski_diff_point(region: HalfspaceRegion, v: Sequence[float]) -> HalfspaceRegion:
    """Translate the region by -v."""
    v = np.asarray(v, dtype=float)
    if v.shape != (region.dim,):
        raise DimensionMismatch(f"point of dimension {v.size} vs region {region.dim}")
    witness = None if region.witness is None else region.witness - v
    return region.with_offsets(region.offsets - region.directions @ v, witness)


def _intersect(first, second) -> Optional[np.ndarray]:
    (a1, b1), (a2, b2) = first, second
    det = a1[0] * a2[1] - a1[1] * a2[0]
    if abs(det) < 1e-14:
        return None
    return np.array([(b1 * a2[1] - b2 * a1[1]) / det, (a1[0] * b2 - a2[0] * b1) / det])


def _outside(line, point, tol) -> bool:
    if point is None:
        return False
    normal, offset = line
    return float(normal @ point) > offset + tol


def _merge_parallel(normals: np.ndarray, offsets: np.ndarray) -> list:
    """Sort half-planes by normal angle keeping the tightest of near-parallel runs."""
    angles = np.arctan2(normals[:, 1], normals[:, 0])
    order = np.lexsort((offsets, angles))
    groups = []
    for idx in order:
        if groups and angles[idx] - angles[groups[-1][0]] < ANGLE_GAP:
            groups[-1].append(idx)
        else:
            groups.append([idx])
    if len(groups) > 1 and angles[groups[0][0]] + 2 * np.pi - angles[groups[-1][0]] < ANGLE_GAP:
        groups[0].extend(groups.pop())
    kept = [min(group, key=lambda i: offsets[i]) for group in groups]
    gaps = np.diff(np.append(angles[kept], angles[kept[0]] + 2 * np.pi))
    if len(kept) < 3 or np.any(gaps >= np.pi - ANGLE_GAP):
        raise EmptyRegion("half-planes do not bound a polygon")
    return [(normals[i], float(offsets[i])) for i in kept]


def vertices_2d(region: HalfspaceRegion, tol: float = 1e-10) -> Polygon2D:
    """
    Vertices of a planar half-space intersection.

    Half-planes are sorted by angle and intersected incrementally with a
    deque; redundant constraints drop out along the way.

    Raises:
        DimensionMismatch: If the region is not two-dimensional
        EmptyRegion: If the intersection is empty or unbounded
    """
    if region.dim != 2:
        raise DimensionMismatch(f"vertex enumeration needs d=2, got d={region.dim}")
    lines = _merge_parallel(region.directions, region.offsets)

    dq = deque()
    for line in lines:
        while len(dq) > 1 and _outside(line, _intersect(dq[-1], dq[-2]), tol):
            dq.pop()
        while len(dq) > 1 and _outside(line, _intersect(dq[0], dq[1]), tol):
            dq.popleft()
        if dq:
            normal, offset = dq[-1]
            if abs(normal[0] * line[0][1] - normal[1] * line[0][0]) < 1e-14:
                if normal @ line[0] < 0 and offset + line[1] < -tol:
                    raise EmptyRegion("opposing half-planes do not overlap")
        dq.append(line)
    while len(dq) > 2 and _outside(dq[0], _intersect(dq[-1], dq[-2]), tol):
        dq.pop()
    while len(dq) > 2 and _outside(dq[-1], _intersect(dq[0], dq[1]), tol):
        dq.popleft()
    if len(dq) < 3:
        raise EmptyRegion("half-plane intersection is empty")

    items = list(dq)
    points = []
    for i in range(len(items)):
        point = _intersect(items[i], items[(i + 1) % len(items)])
        if point is None:
            continue
        if points and np.linalg.norm(point - points[-1]) < 1e-10:
            continue
        points.append(point)
    if len(points) > 1 and np.linalg.norm(points[0] - points[-1]) < 1e-10:
        points.pop()
    if not points:
        raise EmptyRegion("half-plane intersection is empty")
    vertices = np.vstack(points)
    if not all(contains(region, vertex, VERTEX_TOL) for vertex in vertices):
        raise EmptyRegion("half-plane intersection is empty")
    return Polygon2D(vertices)


def _greedy_weights(values: Sequence[float], p: TrimFraction):
    """Optimal weights of max sum z_i f_i s.t. 0 <= f_i <= 1, sum f_i = n p."""
    budget = len(values) * p.p_hat
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    weights = [0.0] * len(values)
    remaining = budget
    for i in order:
        if remaining <= 0:
            break
        weights[i] = min(1.0, remaining)
        remaining -= weights[i]
    return weights, budget


def lp_support_oracle(data: EmbeddedDataset, u: Sequence[float], p: TrimFraction) -> float:
    """
    Sharp support value from the weight linear program, solved greedily.

    For a box-and-one-sum linear program, filling the largest objective
    coefficients first is optimal. Independent of ``trimmed_support``.
    """
    cell = data.treated_selected()
    if cell.shape[0] == 0:
        raise EmptyCell("no treated unit is selected")
    values = [float(np.dot(u, row)) for row in cell]
    weights, budget = _greedy_weights(values, p)
    return sum(w * z for w, z in zip(weights, values)) / budget


def lp_support_point(data: EmbeddedDataset, u: Sequence[float], p: TrimFraction) -> np.ndarray:
    """The attainable trimmed mean that maximizes <u, .>."""
    cell = data.treated_selected()
    if cell.shape[0] == 0:
        raise EmptyCell("no treated unit is selected")
    values = [float(np.dot(u, row)) for row in cell]
    weights, budget = _greedy_weights(values, p)
    return np.asarray(weights) @ cell / budget
