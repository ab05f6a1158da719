"""Isometric embeddings of random objects into coordinate spaces.

Each supported metric space gets a map Psi into a Euclidean (or grid-projected
Hilbert) space where Frechet means become ordinary means, plus its inverse.
The ``ObjectSpace`` adapters bundle embed/decode/membership for the pipeline.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.special import softmax

from errors import (
    AntipodalPoint,
    DimensionMismatch,
    EmptySample,
    InvalidObject,
    InvertedInterval,
    NotInImage,
    NotPositiveDefinite,
    NotSymmetric,
    NotTangent,
    ZeroComponent,
)

logger = logging.getLogger(__name__)

MEMBERSHIP_TOL = 1e-8
IDENTITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CompositionPoint:
    """A k-part composition: nonnegative shares summing to one."""

    parts: np.ndarray

    def __post_init__(self):
        parts = np.asarray(self.parts, dtype=float)
        object.__setattr__(self, "parts", parts)
        if parts.ndim != 1 or parts.size < 2:
            raise InvalidObject("composition needs at least two parts")
        if np.any(parts < 0):
            raise InvalidObject(f"negative composition part: {parts}")
        if abs(parts.sum() - 1.0) > IDENTITY_TOL:
            raise InvalidObject(f"composition sums to {parts.sum()!r}, not 1")


@dataclass(frozen=True, eq=False)
class QuantileCurve:
    """Quantile function evaluated on a probability grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        validate_probability_grid(grid)
        if values.shape != grid.shape:
            raise DimensionMismatch(
                f"{values.size} quantile values for a grid of {grid.size}"
            )
        if np.any(np.diff(values) < 0):
            raise InvalidObject("quantile values must be nondecreasing")

    def to_vector(self) -> "EmbeddedVector":
        """Embedded coordinates carrying trapezoidal grid weights."""
        return EmbeddedVector(self.values, weights=trapezoid_weights(self.grid))


@dataclass(frozen=True)
class IntervalPoint:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise InvertedInterval(f"[{self.lower}, {self.upper}] is inverted")


@dataclass(frozen=True, eq=False)
class LaplacianPoint:
    """Graph Laplacian of a simple undirected weighted network."""

    entries: np.ndarray
    max_weight: float = np.inf

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        check_laplacian(entries, self.max_weight)


@dataclass(frozen=True, eq=False)
class SpdPoint:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidObject(f"matrix must be square, got {entries.shape}")


@dataclass(frozen=True, eq=False)
class EmbeddedVector:
    """Coordinates of an object in its embedding space.

    ``weights`` is set for grid-discretized functions (quantile curves and
    functional data) and turns the Euclidean norm into a trapezoidal L2 norm.
    """

    coords: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=float)
            if weights.shape != self.coords.shape:
                raise DimensionMismatch("weights must match coordinates")
            object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.coords.size


def validate_probability_grid(grid: np.ndarray) -> None:
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidObject("probability grid must be a nonempty vector")
    if np.any(grid <= 0) or np.any(grid >= 1):
        raise InvalidObject("probability grid must lie strictly inside (0, 1)")
    if np.any(np.diff(grid) <= 0):
        raise InvalidObject("probability grid must be strictly increasing")


def trapezoid_weights(grid: Sequence[float]) -> np.ndarray:
    """
    Trapezoidal quadrature weights on an evaluation grid.

    Args:
        grid: Strictly increasing evaluation points

    Returns:
        Weights w with sum(w * f**2) approximating the squared L2 norm of f
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 1:
        return np.ones(1)
    gaps = np.diff(grid)
    weights = np.zeros_like(grid)
    weights[:-1] += gaps / 2.0
    weights[1:] += gaps / 2.0
    return weights


# -- compositions ----------------------------------------------------------


def clr(parts: np.ndarray) -> np.ndarray:
    """Centred log-ratio transform along the last axis."""
    logs = np.log(parts)
    return logs - logs.mean(axis=-1, keepdims=True)


def clr_inverse(coords: np.ndarray) -> np.ndarray:
    return softmax(coords, axis=-1)


def aitchison_embed(x: CompositionPoint) -> EmbeddedVector:
    """
    Map a strictly positive composition to its centred log-ratio coordinates.

    Args:
        x: Composition with all parts > 0

    Returns:
        Coordinates log(x_j / g(x)) with g the geometric mean; they sum to 0

    Raises:
        ZeroComponent: If any part is zero
    """
    if np.any(x.parts <= 0):
        raise ZeroComponent(
            "Aitchison embedding needs strictly positive parts; "
            "use the sphere embedding for compositions with zeros"
        )
    return EmbeddedVector(clr(x.parts))


def aitchison_inverse(v: EmbeddedVector) -> CompositionPoint:
    """
    Map centred log-ratio coordinates back to the simplex.

    Raises:
        NotInImage: If the coordinates do not sum to zero
    """
    total = v.coords.sum()
    if abs(total) > MEMBERSHIP_TOL:
        raise NotInImage(f"log-ratio coordinates sum to {total:.3g}, not 0")
    return CompositionPoint(clr_inverse(v.coords))


@lru_cache(maxsize=32)
def helmert_basis(k: int) -> np.ndarray:
    """
    Orthonormal basis of the sum-zero subspace of R^k.

    Args:
        k: Number of composition parts

    Returns:
        (k, k-1) matrix whose columns are orthonormal and sum to zero
    """
    basis = np.zeros((k, k - 1))
    for j in range(k - 1):
        i = j + 1
        basis[:i, j] = 1.0 / i
        basis[i, j] = -1.0
        basis[:, j] *= np.sqrt(i / (i + 1))
    basis.setflags(write=False)
    return basis


def barycenter_root(k: int) -> np.ndarray:
    return np.full(k, 1.0 / np.sqrt(k))


def _check_reference(mu: np.ndarray) -> None:
    if abs(np.linalg.norm(mu) - 1.0) > MEMBERSHIP_TOL:
        raise InvalidObject("sphere reference point must have unit norm")


def sphere_log(roots: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Riemannian log map at mu on the unit sphere, row-wise."""
    roots = np.atleast_2d(roots)
    cosines = np.clip(roots @ mu, -1.0, 1.0)
    if np.any(cosines <= -1.0 + IDENTITY_TOL):
        raise AntipodalPoint("point is antipodal to the reference point")
    residual = roots - cosines[:, None] * mu[None, :]
    norms = np.linalg.norm(residual, axis=1)
    angles = np.arctan2(norms, cosines)
    scale = np.divide(angles, norms, out=np.zeros_like(angles), where=norms > 0)
    return residual * scale[:, None]


def sphere_exp(tangent: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Riemannian exp map at mu on the unit sphere, row-wise."""
    tangent = np.atleast_2d(tangent)
    norms = np.linalg.norm(tangent, axis=1)
    direction = np.divide(
        tangent, norms[:, None], out=np.zeros_like(tangent), where=norms[:, None] > 0
    )
    return np.cos(norms)[:, None] * mu[None, :] + np.sin(norms)[:, None] * direction


def sphere_embed(
    x: CompositionPoint, mu: Optional[np.ndarray] = None
) -> EmbeddedVector:
    """
    Square-root map onto the positive orthant of the sphere, then Log at mu.

    Args:
        x: Composition, zeros permitted
        mu: Reference point on the unit sphere (defaults to the barycenter root)

    Returns:
        Tangent vector at mu

    Raises:
        AntipodalPoint: If sqrt(x) == -mu
    """
    mu = barycenter_root(x.parts.size) if mu is None else np.asarray(mu, float)
    _check_reference(mu)
    if mu.size != x.parts.size:
        raise DimensionMismatch("reference point and composition differ in size")
    return EmbeddedVector(sphere_log(np.sqrt(x.parts), mu)[0])


def sphere_inverse(
    v: EmbeddedVector, mu: Optional[np.ndarray] = None
) -> CompositionPoint:
    """
    Exp map at mu followed by componentwise squaring.

    Raises:
        NotTangent: If v is not orthogonal to mu
    """
    mu = barycenter_root(v.dim) if mu is None else np.asarray(mu, float)
    _check_reference(mu)
    if mu.size != v.dim:
        raise DimensionMismatch("reference point and tangent vector differ in size")
    inner = float(v.coords @ mu)
    if abs(inner) > MEMBERSHIP_TOL:
        raise NotTangent(f"<mu, v> = {inner:.3g} is not zero")
    squares = sphere_exp(v.coords, mu)[0] ** 2
    return CompositionPoint(squares / squares.sum())


# -- distributions, functions, intervals -----------------------------------


def quantile_embed(samples: Sequence[float], grid: Sequence[float]) -> QuantileCurve:
    """
    Empirical quantile curve using the ceil(n*q)-th order statistic.

    Args:
        samples: Draws from one unit's distribution
        grid: Strictly increasing probabilities in (0, 1)

    Returns:
        QuantileCurve on the grid

    Raises:
        EmptySample: If no samples are given
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise EmptySample("cannot embed an empty sample")
    grid = np.asarray(grid, dtype=float)
    validate_probability_grid(grid)
    values = np.quantile(samples, grid, method="inverted_cdf")
    return QuantileCurve(grid, values)


def functional_embed(values: Sequence[float], grid: Sequence[float]) -> EmbeddedVector:
    """Identity embedding of a function observed on a grid."""
    values = np.asarray(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if values.shape != grid.shape:
        raise DimensionMismatch("function values must match the grid")
    return EmbeddedVector(values, weights=trapezoid_weights(grid))


def interval_embed(x: IntervalPoint) -> EmbeddedVector:
    """Support-function values of [lower, upper] at directions -1 and +1."""
    if x.lower > x.upper:
        raise InvertedInterval(f"[{x.lower}, {x.upper}] is inverted")
    return EmbeddedVector(np.array([-x.lower, x.upper], dtype=float))


def interval_inverse(v: EmbeddedVector) -> IntervalPoint:
    if v.dim != 2:
        raise DimensionMismatch("interval coordinates are two-dimensional")
    if v.coords[0] + v.coords[1] < -MEMBERSHIP_TOL:
        raise NotInImage("support values describe an empty interval")
    lower, upper = -v.coords[0], v.coords[1]
    return IntervalPoint(float(min(lower, upper)), float(max(lower, upper)))


# -- matrices --------------------------------------------------------------


def check_laplacian(entries: np.ndarray, max_weight: float = np.inf) -> None:
    """
    Validate graph Laplacian invariants.

    Raises:
        InvalidObject: If the matrix is not square, symmetric, zero-row-sum,
            or has off-diagonal entries outside [-max_weight, 0]
    """
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise InvalidObject(f"Laplacian must be square, got {entries.shape}")
    if not np.allclose(entries, entries.T, atol=1e-10, rtol=0):
        raise InvalidObject("Laplacian must be symmetric")
    if np.any(np.abs(entries.sum(axis=1)) > 1e-10):
        raise InvalidObject("Laplacian rows must sum to zero")
    off = entries[~np.eye(entries.shape[0], dtype=bool)]
    if np.any(off > 1e-10) or np.any(off < -max_weight - 1e-10):
        raise InvalidObject("off-diagonal Laplacian entries must lie in [-W, 0]")


def laplacian_embed(x: LaplacianPoint) -> EmbeddedVector:
    return EmbeddedVector(x.entries.reshape(-1).copy())


def laplacian_inverse(v: EmbeddedVector, max_weight: float = np.inf) -> LaplacianPoint:
    m = int(round(np.sqrt(v.dim)))
    if m * m != v.dim:
        raise DimensionMismatch(f"{v.dim} coordinates do not form a square matrix")
    return LaplacianPoint(v.coords.reshape(m, m), max_weight)


def _symmetric_eig(entries: np.ndarray):
    if not np.allclose(entries, entries.T, atol=1e-10, rtol=0):
        raise NotSymmetric("matrix is not symmetric")
    return np.linalg.eigh((entries + entries.T) / 2.0)


def spd_embed(x: SpdPoint, mode: str = "log", power: float = 0.5) -> EmbeddedVector:
    """
    Log-Euclidean or power-metric embedding of a symmetric PSD matrix.

    Args:
        x: Symmetric matrix
        mode: "log" (positive definite input) or "power"
        power: Exponent p > 0 for the power mode

    Returns:
        Row-major flattening of U f(Lambda) U^T

    Raises:
        NotSymmetric: If the matrix is not symmetric
        NotPositiveDefinite: On a nonpositive eigenvalue in log mode, or a
            negative one in power mode
    """
    eigenvalues, vectors = _symmetric_eig(x.entries)
    if mode == "log":
        if np.any(eigenvalues <= 0):
            raise NotPositiveDefinite("log map needs strictly positive eigenvalues")
        mapped = np.log(eigenvalues)
    elif mode == "power":
        if power <= 0:
            raise InvalidObject("power metric exponent must be positive")
        if np.any(eigenvalues < -1e-10):
            raise NotPositiveDefinite("power map needs a positive semidefinite matrix")
        mapped = np.clip(eigenvalues, 0.0, None) ** power
    else:
        raise InvalidObject(f"unknown SPD embedding mode: {mode}")
    image = (vectors * mapped) @ vectors.T
    return EmbeddedVector(((image + image.T) / 2.0).reshape(-1))


def spd_inverse(v: EmbeddedVector, mode: str = "log", power: float = 0.5) -> SpdPoint:
    m = int(round(np.sqrt(v.dim)))
    if m * m != v.dim:
        raise DimensionMismatch(f"{v.dim} coordinates do not form a square matrix")
    eigenvalues, vectors = _symmetric_eig(v.coords.reshape(m, m))
    if mode == "log":
        mapped = np.exp(eigenvalues)
    else:
        if np.any(eigenvalues < -MEMBERSHIP_TOL):
            raise NotInImage("power-metric image must be positive semidefinite")
        mapped = np.clip(eigenvalues, 0.0, None) ** (1.0 / power)
    return SpdPoint((vectors * mapped) @ vectors.T)


def embedded_distance(a: EmbeddedVector, b: EmbeddedVector) -> float:
    """
    Distance between two objects computed in the embedding space.

    Grid-weighted vectors use the trapezoidal L2 norm, all others the
    Euclidean norm.

    Raises:
        DimensionMismatch: If the coordinate vectors differ in size
    """
    if a.coords.shape != b.coords.shape:
        raise DimensionMismatch(f"dimension {a.dim} vs {b.dim}")
    diff = a.coords - b.coords
    weights = a.weights if a.weights is not None else b.weights
    if weights is None:
        return float(np.linalg.norm(diff))
    return float(np.sqrt(np.sum(weights * diff**2)))


# -- space adapters --------------------------------------------------------


class ObjectSpace:
    """
    Embed/decode/membership bundle for one metric space.

    Embedded coordinates are what ``read_dataset`` stores. Estimation runs in
    chart coordinates: an orthonormal frame of the image's linear hull for the
    compositional spaces, the embedded coordinates themselves otherwise. The
    frame is an isometry, so support functions do not change.
    """

    label = "object"
    share_valued = False

    def embed(self, raw: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decode(self, coords: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, coords: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.all(np.isfinite(coords)))

    def chart_basis(self, embedded_dim: int) -> Optional[np.ndarray]:
        return None

    def to_chart(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        basis = self.chart_basis(coords.shape[-1])
        return coords if basis is None else coords @ basis

    def from_chart(self, chart: np.ndarray, embedded_dim: int) -> np.ndarray:
        chart = np.asarray(chart, dtype=float)
        basis = self.chart_basis(embedded_dim)
        return chart if basis is None else chart @ basis.T

    def weights(self, embedded_dim: int) -> Optional[np.ndarray]:
        return None

    def coordinate_names(self, dim: int) -> List[str]:
        return [f"y{j + 1}" for j in range(dim)]


class ScalarSpace(ObjectSpace):
    label = "scalar"

    def embed(self, raw):
        return np.atleast_1d(np.asarray(raw, dtype=float))

    def decode(self, coords):
        return np.asarray(coords, dtype=float)

    def coordinate_names(self, dim):
        return ["y"]


class AitchisonSpace(ObjectSpace):
    label = "compositional"
    share_valued = True

    def embed(self, raw):
        return aitchison_embed(CompositionPoint(raw)).coords

    def decode(self, coords):
        return clr_inverse(np.asarray(coords, dtype=float))

    def contains(self, coords, tol=MEMBERSHIP_TOL):
        return abs(float(np.sum(coords))) <= tol

    def chart_basis(self, embedded_dim):
        return helmert_basis(embedded_dim)


class SphereSpace(ObjectSpace):
    """Square-root sphere with Log/Exp at a reference point; zeros allowed."""

    label = "compositional-zeros"
    share_valued = True

    def __init__(self, mu: Optional[Sequence[float]] = None):
        self._mu = None if mu is None else np.asarray(mu, dtype=float)
        if self._mu is not None:
            _check_reference(self._mu)

    def reference(self, k: int) -> np.ndarray:
        if self._mu is None:
            return barycenter_root(k)
        if self._mu.size != k:
            raise DimensionMismatch(f"reference point has {self._mu.size} parts, not {k}")
        return self._mu

    def embed(self, raw):
        point = CompositionPoint(raw)
        return sphere_embed(point, self.reference(point.parts.size)).coords

    def decode(self, coords):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        squares = sphere_exp(coords, self.reference(coords.shape[-1])) ** 2
        squares /= squares.sum(axis=-1, keepdims=True)
        return squares if squares.shape[0] > 1 else squares[0]

    def contains(self, coords, tol=MEMBERSHIP_TOL):
        coords = np.asarray(coords, dtype=float)
        return abs(float(coords @ self.reference(coords.size))) <= tol

    def chart_basis(self, embedded_dim):
        return null_space(self.reference(embedded_dim)[None, :])


class QuantileSpace(ObjectSpace):
    """One-dimensional distributions projected to quantile evaluation points."""

    label = "distribution"

    def __init__(self, grid: Sequence[float]):
        self.grid = np.asarray(grid, dtype=float)
        validate_probability_grid(self.grid)

    def embed(self, raw):
        return quantile_embed(raw, self.grid).values

    def decode(self, coords):
        return np.asarray(coords, dtype=float)

    def contains(self, coords, tol=MEMBERSHIP_TOL):
        return bool(np.all(np.diff(coords) >= -tol))

    def weights(self, embedded_dim):
        return trapezoid_weights(self.grid)

    def coordinate_names(self, dim):
        return [f"q{q:g}" for q in self.grid]


class IntervalSpace(ObjectSpace):
    label = "interval"

    def embed(self, raw):
        lower, upper = raw
        return interval_embed(IntervalPoint(float(lower), float(upper))).coords

    def decode(self, coords):
        point = interval_inverse(EmbeddedVector(coords))
        return np.array([point.lower, point.upper])

    def contains(self, coords, tol=MEMBERSHIP_TOL):
        return bool(coords[0] + coords[1] >= -tol)

    def coordinate_names(self, dim):
        return ["neg_lower", "upper"]


class LaplacianSpace(ObjectSpace):
    label = "network"

    def __init__(self, max_weight: float = np.inf):
        self.max_weight = max_weight

    def embed(self, raw):
        raw = np.asarray(raw, dtype=float)
        m = int(round(np.sqrt(raw.size)))
        return laplacian_embed(LaplacianPoint(raw.reshape(m, m), self.max_weight)).coords

    def decode(self, coords):
        return laplacian_inverse(EmbeddedVector(coords), self.max_weight).entries

    def contains(self, coords, tol=MEMBERSHIP_TOL):
        try:
            laplacian_inverse(EmbeddedVector(coords), self.max_weight)
        except (InvalidObject, DimensionMismatch):
            return False
        return True

    def coordinate_names(self, dim):
        m = int(round(np.sqrt(dim)))
        return [f"l{p + 1}_{q + 1}" for p in range(m) for q in range(m)]


class SpdSpace(ObjectSpace):
    label = "spd"

    def __init__(self, mode: str = "log", power: float = 0.5):
        if mode not in ("log", "power"):
            raise InvalidObject(f"unknown SPD embedding mode: {mode}")
        self.mode = mode
        self.power = power

    def embed(self, raw):
        raw = np.asarray(raw, dtype=float)
        m = int(round(np.sqrt(raw.size)))
        return spd_embed(SpdPoint(raw.reshape(m, m)), self.mode, self.power).coords

    def decode(self, coords):
        return spd_inverse(EmbeddedVector(coords), self.mode, self.power).entries

    def contains(self, coords, tol=MEMBERSHIP_TOL):
        m = int(round(np.sqrt(len(coords))))
        matrix = np.asarray(coords, dtype=float).reshape(m, m)
        if not np.allclose(matrix, matrix.T, atol=tol, rtol=0):
            return False
        if self.mode == "power":
            return bool(np.linalg.eigvalsh(matrix).min() >= -tol)
        return True

    def coordinate_names(self, dim):
        m = int(round(np.sqrt(dim)))
        return [f"s{p + 1}_{q + 1}" for p in range(m) for q in range(m)]


def make_space(
    name: str,
    eval_grid: Optional[Sequence[float]] = None,
    sphere_mu: Optional[Sequence[float]] = None,
    spd_mode: str = "log",
    spd_power: float = 0.5,
    max_weight: float = np.inf,
) -> ObjectSpace:
    """
    Build the space adapter for a configured space name.

    Raises:
        InvalidObject: If the name is unknown or a required field is missing
    """
    if name == "scalar":
        return ScalarSpace()
    if name == "compositional":
        return AitchisonSpace()
    if name == "compositional-zeros":
        return SphereSpace(sphere_mu)
    if name == "distribution":
        if eval_grid is None:
            raise InvalidObject("distribution space needs an evaluation grid")
        return QuantileSpace(eval_grid)
    if name == "interval":
        return IntervalSpace()
    if name == "network":
        return LaplacianSpace(max_weight)
    if name == "spd":
        return SpdSpace(spd_mode, spd_power)
    raise InvalidObject(f"unknown space: {name}")
