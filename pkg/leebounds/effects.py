"""Treatment-effect summaries built from identified sets and confidence regions."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from embeddings import ObjectSpace
from errors import DimensionMismatch, EmptyRegion, EstimationError, NotInImage
from identified_set import (
    HalfspaceRegion,
    certify_nonempty,
    contains,
    project_interval,
    vertices_2d,
)
from selection_core import (
    EmbeddedDataset,
    TrimFraction,
    estimate_p,
    random_stream,
    upper_trimmed_means,
)

logger = logging.getLogger(__name__)

HIT_AND_RUN_STREAM = 21
BOX_STREAM = 22
BAND_TOL = 1e-6
EDGE_POINTS = 64


@dataclass(frozen=True, eq=False)
class QuantileBand:
    """
    Step-function envelope [L, U] for a quantile function.

    L(q) takes the lower projection at the grid point to the left of q and
    U(q) the upper projection at the grid point to the right of q.
    """

    grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    adjusted: bool = False

    def at(self, q: float) -> Tuple[float, float]:
        if not self.grid[0] <= q <= self.grid[-1]:
            raise DimensionMismatch(f"q={q} outside [{self.grid[0]}, {self.grid[-1]}]")
        left = int(np.searchsorted(self.grid, q, side="right")) - 1
        right = int(np.searchsorted(self.grid, q, side="left"))
        return float(self.lower[left]), float(self.upper[right])

    def contains_curve(self, values: Sequence[float], tol: float = 1e-9) -> bool:
        values = np.asarray(values, dtype=float)
        return bool(np.all(values >= self.lower - tol) and np.all(values <= self.upper + tol))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"q": self.grid, "lower": self.lower, "upper": self.upper})


@dataclass(frozen=True, eq=False)
class GeodesicSample:
    """Path t -> decode((1 - t) a + t b) between two embedded points."""

    t: np.ndarray
    embedded: np.ndarray
    path: np.ndarray

    def to_frame(self, path_id: int = 0) -> pd.DataFrame:
        flat = self.path.reshape(len(self.t), -1)
        frame = pd.DataFrame(flat, columns=[f"v{j + 1}" for j in range(flat.shape[1])])
        frame.insert(0, "t", self.t)
        frame.insert(0, "path", path_id)
        return frame


def _box_support(directions: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return np.maximum(directions * lower[None, :], directions * upper[None, :]).sum(axis=1)


def embedded_effect_region(
    region: HalfspaceRegion,
    mu0: Optional[Sequence[float]] = None,
    box: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> HalfspaceRegion:
    """
    Region for the embedded difference mu1 - mu0.

    With a point mu0 this is the translation region - mu0. With a box
    [lower, upper] for mu0 it is the Minkowski difference {r - b}, whose
    support function is sigma_region(u) + sigma_box(-u).

    Raises:
        DimensionMismatch: If mu0 or the box does not match the region
    """
    if (mu0 is None) == (box is None):
        raise DimensionMismatch("pass exactly one of a control point or a control box")
    if box is None:
        mu0 = np.asarray(mu0, dtype=float)
        lower = upper = mu0
    else:
        lower, upper = (np.asarray(b, dtype=float) for b in box)
    if lower.shape != (region.dim,) or upper.shape != (region.dim,):
        raise DimensionMismatch(f"control dimension vs region dimension {region.dim}")
    offsets = region.offsets + _box_support(-region.directions, lower, upper)
    witness = None
    if region.witness is not None:
        witness = region.witness - (lower + upper) / 2.0
    return certify_nonempty(region.with_offsets(offsets, witness))


def hit_and_run(
    region: HalfspaceRegion,
    n_samples: int,
    seed: int,
    start: Optional[Sequence[float]] = None,
    burn: int = 200,
    thin: int = 5,
) -> np.ndarray:
    """
    Approximately uniform draws from a bounded half-space region.

    Each step picks a uniform direction, intersects the line through the
    current point with every half-space, and moves to a uniform point of
    the resulting chord.

    Returns:
        (n_samples, d) array; every row satisfies contains(region, row, 1e-8)
    """
    d = region.dim
    if n_samples <= 0:
        return np.zeros((0, d))
    if start is None:
        region = certify_nonempty(region)
        start = region.witness
    x = np.asarray(start, dtype=float).copy()
    if not contains(region, x, 1e-8):
        raise EmptyRegion("hit-and-run start point lies outside the region")

    rng = random_stream(seed, HIT_AND_RUN_STREAM)
    A, b = region.directions, region.offsets
    samples = np.empty((n_samples, d))
    kept = 0
    step = 0
    while kept < n_samples:
        direction = rng.standard_normal(d)
        direction /= np.linalg.norm(direction)
        slope = A @ direction
        slack = np.maximum(b - A @ x, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            bounds = slack / slope
        upper = bounds[slope > 1e-15].min(initial=np.inf)
        lower = bounds[slope < -1e-15].max(initial=-np.inf)
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise EstimationError("hit-and-run needs a bounded region")
        candidate = x + rng.uniform(lower, upper) * direction
        if contains(region, candidate, 1e-8):
            x = candidate
        step += 1
        if step > burn and (step - burn) % thin == 0:
            samples[kept] = x
            kept += 1
    return samples


def densified_boundary(vertices: np.ndarray) -> np.ndarray:
    ring = np.vstack([vertices, vertices[:1]])
    weights = np.linspace(0.0, 1.0, EDGE_POINTS, endpoint=False)[:, None]
    edges = [a + weights * (b - a) for a, b in zip(ring[:-1], ring[1:])]
    return np.vstack(edges)


def decoded_share_range(
    region: HalfspaceRegion,
    space: ObjectSpace,
    part: int,
    embedded_dim: int,
    samples: int = 2000,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    Range of one decoded composition share over a chart-coordinate region.

    Two-dimensional regions are scanned along their densified polygon
    boundary; share functions of log-ratio coordinates attain both extremes
    there. Higher dimensions use hit-and-run samples, so the range is an
    inner approximation.
    """
    if not space.share_valued:
        raise DimensionMismatch(f"space {space.label!r} has no decoded shares")
    if not 0 <= part < embedded_dim:
        raise DimensionMismatch(f"part {part} outside 0..{embedded_dim - 1}")
    if region.dim == 1:
        points = np.array(project_interval(region, 0))[:, None]
    elif region.dim == 2:
        points = densified_boundary(vertices_2d(region).vertices)
        if space.label != "compositional":
            points = np.vstack([points, hit_and_run(region, samples, seed)])
    else:
        logger.warning(
            f"Decoded share range in {region.dim} dimensions approximated "
            f"from {samples} hit-and-run samples"
        )
        points = hit_and_run(region, samples, seed)
        if region.witness is not None:
            points = np.vstack([points, region.witness])
    shares = space.decode(space.from_chart(points, embedded_dim))
    shares = np.atleast_2d(shares)[:, part]
    return float(shares.min()), float(shares.max())


def projection_effect(
    region: HalfspaceRegion,
    mu0: Sequence[float],
    axis: int,
    space: Optional[ObjectSpace] = None,
    embedded_dim: Optional[int] = None,
    samples: int = 2000,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    Effect interval along one coordinate: the region's range minus mu0's.

    For share-valued spaces ``axis`` indexes a composition part; region and
    mu0 are in chart coordinates and both are decoded before projecting.

    Raises:
        MissingAxisDirection: If +-e_axis is missing from a coordinate region
    """
    mu0 = np.asarray(mu0, dtype=float)
    if mu0.shape != (region.dim,):
        raise DimensionMismatch(f"control dimension {mu0.size} vs region {region.dim}")
    if space is not None and space.share_valued:
        embedded_dim = region.dim + 1 if embedded_dim is None else embedded_dim
        lo, hi = decoded_share_range(region, space, axis, embedded_dim, samples, seed)
        base = float(np.atleast_2d(space.decode(space.from_chart(mu0, embedded_dim)))[0, axis])
    else:
        lo, hi = project_interval(region, axis)
        base = float(mu0[axis])
    return lo - base, hi - base


def geodesic(
    mu0_emb: Sequence[float],
    mu1_emb: Sequence[float],
    t_grid: Sequence[float],
    space: ObjectSpace,
) -> GeodesicSample:
    """
    Decoded straight segment between two embedded points.

    Raises:
        NotInImage: If an endpoint is outside the embedding's image
    """
    a = np.asarray(mu0_emb, dtype=float)
    b = np.asarray(mu1_emb, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"endpoint dimensions {a.size} and {b.size} differ")
    for point in (a, b):
        if not space.contains(point):
            raise NotInImage(f"endpoint is outside the {space.label} image")
    t = np.asarray(t_grid, dtype=float)
    embedded = (1.0 - t)[:, None] * a[None, :] + t[:, None] * b[None, :]
    path = np.stack([np.asarray(space.decode(row)) for row in embedded])
    return GeodesicSample(t, embedded, path)


def geodesic_effect_set(
    mu0: Sequence[float],
    region: HalfspaceRegion,
    n_samples: int,
    seed: int,
    t_grid: Sequence[float],
    space: ObjectSpace,
    embedded_dim: int,
    box: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> List[GeodesicSample]:
    """
    Geodesics from the control mean to points drawn from a region.

    ``mu0`` and ``region`` are in chart coordinates. With a control box the
    start point of each geodesic is drawn uniformly from the box instead.
    """
    ends = hit_and_run(region, n_samples, seed)
    mu0 = np.asarray(mu0, dtype=float)
    if box is None:
        starts = np.repeat(mu0[None, :], len(ends), axis=0)
    else:
        lower, upper = (np.asarray(v, dtype=float) for v in box)
        starts = random_stream(seed, BOX_STREAM).uniform(lower, upper, (len(ends), region.dim))
    return [
        geodesic(
            space.from_chart(start, embedded_dim),
            space.from_chart(end, embedded_dim),
            t_grid,
            space,
        )
        for start, end in zip(starts, ends)
    ]


def quantile_band(region: HalfspaceRegion, grid: Sequence[float]) -> QuantileBand:
    """
    Band for the quantile function from per-point projection intervals.

    Projections at finitely many points need not be monotone in q; a
    cumulative maximum restores monotonicity and a warning reports any
    adjustment larger than 1e-6.

    Raises:
        MissingAxisDirection: If some +-e_j is missing from the region's grid
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size != region.dim:
        raise DimensionMismatch(f"{grid.size} quantile points vs region dimension {region.dim}")
    intervals = np.array([project_interval(region, j) for j in range(region.dim)])
    lower = np.maximum.accumulate(intervals[:, 0])
    upper = np.maximum.accumulate(intervals[:, 1])
    gap = max(np.max(lower - intervals[:, 0]), np.max(upper - intervals[:, 1]))
    if gap > BAND_TOL:
        logger.warning(f"Quantile band monotonicity adjustment of {gap:.3g} applied")
    return QuantileBand(grid, lower, upper, adjusted=bool(gap > BAND_TOL))


def naive_lee_componentwise(
    data: EmbeddedDataset, p: Optional[TrimFraction] = None
) -> List[Tuple[float, float]]:
    """
    Classical scalar Lee bounds for each coordinate separately.

    Args:
        data: Dataset whose outcome columns are the raw components
        p: Trimming fraction; estimated when omitted

    Returns:
        One (lower, upper) pair per component
    """
    if p is None:
        p = estimate_p(data)
    cell = data.treated_selected()
    upper = upper_trimmed_means(cell, p.p_hat)
    lower = -upper_trimmed_means(-cell, p.p_hat)
    return [(float(lo), float(hi)) for lo, hi in zip(lower, upper)]
