"""Selection-model estimators: trimming fraction, control mean, support functions.

The upper-trimmed mean of projections <u, Psi(Y)> over the treated-selected
cell is the support function of the identified set in direction u.
"""

import logging
from dataclasses import dataclass
from typing import Hashable, List, Optional, Sequence, Tuple

import numpy as np

from embeddings import EmbeddedVector, ObjectSpace
from errors import (
    BadDimension,
    BadLambda,
    EmptyArm,
    EmptyCell,
    EmptySample,
    GridMismatch,
    InvalidObject,
    SchemaError,
    ZeroSelection,
)

logger = logging.getLogger(__name__)

SMALL_CELL = 30
DEFAULT_DIRECTIONS = {1: 2, 2: 360, 3: 400}
HIGH_DIM_DIRECTIONS = 2000


def random_stream(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by (seed, *keys)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


@dataclass(frozen=True, eq=False)
class EmbeddedDataset:
    """
    Treatment flags, selection flags and embedded outcomes per unit.

    Rows of ``outcomes`` are NaN exactly for the units with selected == False.
    """

    treated: np.ndarray
    selected: np.ndarray
    outcomes: np.ndarray
    unit_ids: Optional[Tuple[str, ...]] = None
    strata: Optional[np.ndarray] = None

    def __post_init__(self):
        treated = np.asarray(self.treated, dtype=bool)
        selected = np.asarray(self.selected, dtype=bool)
        outcomes = np.asarray(self.outcomes, dtype=float)
        if outcomes.ndim == 1:
            outcomes = outcomes[:, None]
        object.__setattr__(self, "treated", treated)
        object.__setattr__(self, "selected", selected)
        object.__setattr__(self, "outcomes", outcomes)
        n = treated.shape[0]
        if selected.shape != (n,) or outcomes.shape[0] != n:
            raise SchemaError("treated, selected and outcomes differ in length")
        present = np.all(np.isfinite(outcomes), axis=1)
        missing = np.all(np.isnan(outcomes), axis=1)
        bad = np.flatnonzero((selected & ~present) | (~selected & ~missing))
        if bad.size:
            raise SchemaError(
                f"unit {bad[0]}: outcome must be present exactly when selected"
            )
        if self.strata is not None:
            strata = np.asarray(self.strata, dtype=object)
            if strata.shape != (n,):
                raise SchemaError("strata must have one label per unit")
            object.__setattr__(self, "strata", strata)

    @property
    def n(self) -> int:
        return self.treated.shape[0]

    @property
    def dim(self) -> int:
        return self.outcomes.shape[1]

    def treated_selected(self) -> np.ndarray:
        return self.outcomes[self.treated & self.selected]

    def control_selected(self) -> np.ndarray:
        return self.outcomes[~self.treated & self.selected]

    def take(self, indices: np.ndarray) -> "EmbeddedDataset":
        """Dataset made of the given unit indices (repeats allowed)."""
        return EmbeddedDataset(
            self.treated[indices],
            self.selected[indices],
            self.outcomes[indices],
            strata=None if self.strata is None else self.strata[indices],
        )

    def stratum(self, label: Hashable) -> "EmbeddedDataset":
        if self.strata is None:
            raise SchemaError("dataset has no covariate strata")
        return self.take(np.flatnonzero(self.strata == label))

    def with_chart(self, space: ObjectSpace) -> "EmbeddedDataset":
        """Re-express outcomes in the chart coordinates of ``space``."""
        return EmbeddedDataset(
            self.treated,
            self.selected,
            space.to_chart(self.outcomes),
            unit_ids=self.unit_ids,
            strata=self.strata,
        )


@dataclass(frozen=True)
class TrimFraction:
    p_hat: float
    clipped: bool = False

    def __post_init__(self):
        if not 0.0 < self.p_hat <= 1.0:
            raise InvalidObject(f"trimming fraction {self.p_hat} outside (0, 1]")


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    directions: np.ndarray
    scheme: str
    seed: int = 0

    def __post_init__(self):
        directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        object.__setattr__(self, "directions", directions)
        norms = np.linalg.norm(directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise InvalidObject("every direction must have unit norm")

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    @property
    def size(self) -> int:
        return self.directions.shape[0]

    def same_as(self, other: "DirectionGrid") -> bool:
        return self.directions.shape == other.directions.shape and np.array_equal(
            self.directions, other.directions
        )

    def axis_index(self, axis: int, sign: int) -> Optional[int]:
        """Row index of sign * e_axis, or None when absent."""
        target = np.zeros(self.dim)
        target[axis] = float(sign)
        hits = np.flatnonzero(np.all(self.directions == target, axis=1))
        return int(hits[0]) if hits.size else None


@dataclass(frozen=True, eq=False)
class SupportProfile:
    """
    Estimated support-function values over a direction grid.

    ``center`` is a point known to satisfy every half-space (the sample mean
    of the trimmed cell); it certifies nonemptiness and seeds samplers.
    """

    grid: DirectionGrid
    sigma: np.ndarray
    p: TrimFraction
    variance: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "sigma", sigma)
        if sigma.shape != (self.grid.size,):
            raise GridMismatch("one support value per direction is required")
        if not np.all(np.isfinite(sigma)):
            raise InvalidObject("support values must be finite")
        if self.variance is not None and np.any(np.asarray(self.variance) < 0):
            raise InvalidObject("variances must be nonnegative")


@dataclass(frozen=True, eq=False)
class StratumWeights:
    labels: Tuple[Hashable, ...]
    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", weights)
        if len(self.labels) != weights.size:
            raise InvalidObject("one weight per stratum label is required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidObject("stratum weights must be nonnegative and sum to 1")


def estimate_p(data: EmbeddedDataset, warn: bool = True) -> TrimFraction:
    """
    Ratio of control to treated selection rates, clipped to 1.

    Args:
        data: Embedded dataset
        warn: Log a warning when the ratio is clipped

    Returns:
        TrimFraction with clipped=True when the sample ratio exceeded 1

    Raises:
        EmptyArm: If either treatment arm has no units
        ZeroSelection: If no treated unit is selected
        EmptyCell: If no control unit is selected
    """
    treated, selected = data.treated, data.selected
    n_treated = int(treated.sum())
    n_control = data.n - n_treated
    if n_treated == 0 or n_control == 0:
        raise EmptyArm("both treatment arms must contain units")
    selected_treated = int((selected & treated).sum())
    if selected_treated == 0:
        raise ZeroSelection("no treated unit is selected")
    selected_control = int((selected & ~treated).sum())
    if selected_control == 0:
        raise EmptyCell("no control unit is selected")
    ratio = (selected_control / n_control) / (selected_treated / n_treated)
    if ratio > 1.0:
        if warn:
            logger.warning(
                f"Sample selection rates violate monotonicity (ratio {ratio:.4f}); "
                "clipping the trimming fraction to 1"
            )
        return TrimFraction(1.0, clipped=True)
    return TrimFraction(ratio)


def estimate_mu0(data: EmbeddedDataset) -> EmbeddedVector:
    """
    Mean embedded outcome of selected control units.

    Raises:
        EmptyCell: If no control unit is selected
    """
    cell = data.control_selected()
    if cell.shape[0] == 0:
        raise EmptyCell("no control unit is selected")
    return EmbeddedVector(cell.mean(axis=0))


def upper_trimmed_means(
    projections: np.ndarray, mass: float, method: str = "fractional"
) -> np.ndarray:
    """
    Mean of the top ``mass`` share of each column.

    The fractional rule gives full weight to the top floor(n*mass) values and
    the remainder n*mass - floor(n*mass) to the next one; it equals the value
    of the linear program max sum z_i f_i / (n*mass) over 0 <= f_i <= 1,
    sum f_i = n*mass. The indicator rule keeps z >= Q(1 - mass).

    Args:
        projections: (n,) or (n, N) array of projected outcomes
        mass: Retained share in (0, 1]
        method: "fractional" or "indicator"

    Returns:
        (N,) array of trimmed means (scalar input gives shape (1,))
    """
    z = np.asarray(projections, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n = z.shape[0]
    if n == 0:
        raise EmptyCell("cannot trim an empty cell")
    if method == "indicator":
        cutoff = np.quantile(z, 1.0 - mass, axis=0, method="inverted_cdf")
        keep = z >= cutoff[None, :]
        return np.where(keep, z, 0.0).sum(axis=0) / keep.sum(axis=0)
    if method != "fractional":
        raise InvalidObject(f"unknown trimming method: {method}")
    ordered = -np.sort(-z, axis=0)
    kept = n * mass
    whole = min(int(np.floor(kept + 1e-12)), n)
    total = ordered[:whole].sum(axis=0)
    remainder = kept - whole
    if whole < n and remainder > 0:
        total = total + remainder * ordered[whole]
    return total / kept


def trimmed_support(
    data: EmbeddedDataset,
    u: Sequence[float],
    p: TrimFraction,
    method: str = "fractional",
) -> float:
    """Support-function estimate in a single direction u."""
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise InvalidObject("direction must have unit norm")
    cell = data.treated_selected()
    if cell.shape[0] == 0:
        raise EmptyCell("no treated unit is selected")
    return float(upper_trimmed_means(cell @ u, p.p_hat, method)[0])


def support_profile(
    data: EmbeddedDataset,
    grid: DirectionGrid,
    p: Optional[TrimFraction] = None,
    method: str = "fractional",
) -> SupportProfile:
    """
    Support-function estimates over every direction of a grid.

    Args:
        data: Dataset in the grid's coordinates
        grid: Direction grid
        p: Trimming fraction; estimated from the data when omitted
        method: "fractional" (default) or "indicator"

    Returns:
        SupportProfile whose center is the treated-selected sample mean
    """
    if grid.dim != data.dim:
        raise GridMismatch(f"grid dimension {grid.dim} vs data dimension {data.dim}")
    if p is None:
        p = estimate_p(data)
    cell = data.treated_selected()
    if cell.shape[0] == 0:
        raise EmptyCell("no treated unit is selected")
    if cell.shape[0] < SMALL_CELL:
        logger.warning(f"Only {cell.shape[0]} treated-selected units; bounds are noisy")
    sigma = upper_trimmed_means(cell @ grid.directions.T, p.p_hat, method)
    return SupportProfile(grid, sigma, p, center=cell.mean(axis=0))


def stratum_weights(data: EmbeddedDataset) -> StratumWeights:
    """Weights P(X = x | S = 1, D = 0) of the covariate strata."""
    if data.strata is None:
        raise SchemaError("dataset has no covariate strata")
    cell = data.strata[~data.treated & data.selected]
    if cell.size == 0:
        raise EmptyCell("no control unit is selected")
    labels = sorted(set(cell.tolist()), key=str)
    counts = np.array([np.sum(cell == label) for label in labels], dtype=float)
    return StratumWeights(tuple(labels), counts / counts.sum())


def stratified_support(
    profiles: Sequence[SupportProfile], weights: StratumWeights
) -> SupportProfile:
    """
    Combine per-stratum profiles into the covariate-adjusted profile.

    Raises:
        GridMismatch: If the profiles do not share one grid
    """
    if len(profiles) != weights.weights.size or not profiles:
        raise GridMismatch("one profile per stratum weight is required")
    grid = profiles[0].grid
    for profile in profiles[1:]:
        if not profile.grid.same_as(grid):
            raise GridMismatch("stratum profiles use different direction grids")
    w = weights.weights
    sigma = sum(wx * profile.sigma for wx, profile in zip(w, profiles))
    p = TrimFraction(
        float(sum(wx * profile.p.p_hat for wx, profile in zip(w, profiles))),
        clipped=any(profile.p.clipped for profile in profiles),
    )
    center = None
    if all(profile.center is not None for profile in profiles):
        center = sum(wx * profile.center for wx, profile in zip(w, profiles))
    return SupportProfile(grid, sigma, p, center=center)


def stratified_profile(
    data: EmbeddedDataset, grid: DirectionGrid, method: str = "fractional"
) -> SupportProfile:
    """Covariate-stratified profile with a trimming fraction per stratum."""
    weights = stratum_weights(data)
    profiles: List[SupportProfile] = []
    for label in weights.labels:
        logger.debug(f"Estimating stratum {label!r}")
        profiles.append(support_profile(data.stratum(label), grid, method=method))
    return stratified_support(profiles, weights)


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam < 1.0:
        raise BadLambda(f"contamination share {lam} outside [0, 1)")


def contaminated_support(samples: Sequence[float], lam: float) -> float:
    """
    Upper bound on the clean mean of projections under lambda-contamination.

    Args:
        samples: Projections <u, Psi(Y)> of the observed sample
        lam: Upper bound on the contaminated share

    Returns:
        Mean of the top (1 - lam) mass
    """
    _check_lambda(lam)
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise EmptySample("no observations to trim")
    return float(upper_trimmed_means(samples, 1.0 - lam)[0])


def contaminated_profile(
    outcomes: np.ndarray, grid: DirectionGrid, lam: float
) -> SupportProfile:
    """Profile of the contaminated-data identified set on a grid."""
    _check_lambda(lam)
    outcomes = np.atleast_2d(np.asarray(outcomes, dtype=float))
    if outcomes.shape[0] == 0:
        raise EmptySample("no observations to trim")
    if outcomes.shape[1] != grid.dim:
        raise GridMismatch("outcome and grid dimensions differ")
    sigma = upper_trimmed_means(outcomes @ grid.directions.T, 1.0 - lam)
    return SupportProfile(
        grid, sigma, TrimFraction(1.0 - lam), center=outcomes.mean(axis=0)
    )


def corrupted_profile(
    profile: SupportProfile,
    lam: float,
    lower: Sequence[float],
    upper: Sequence[float],
) -> SupportProfile:
    """
    Outer set (1 - lam) S + lam B for corrupted data with a box B = [lower, upper].

    Support functions add under Minkowski sums, so the result is
    (1 - lam) sigma(u) + lam sigma_B(u).
    """
    _check_lambda(lam)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    u = profile.grid.directions
    box = np.maximum(u * lower[None, :], u * upper[None, :]).sum(axis=1)
    center = None
    if profile.center is not None:
        center = (1.0 - lam) * profile.center + lam * (lower + upper) / 2.0
    return SupportProfile(
        profile.grid, (1.0 - lam) * profile.sigma + lam * box, profile.p, center=center
    )


def _ensure_axes(directions: np.ndarray) -> np.ndarray:
    """Snap near-axis rows onto +-e_j and append the axes that are missing."""
    d = directions.shape[1]
    rows = [row for row in directions]
    for j in range(d):
        for sign in (1.0, -1.0):
            axis = np.zeros(d)
            axis[j] = sign
            gaps = np.linalg.norm(directions - axis, axis=1)
            nearest = int(np.argmin(gaps)) if gaps.size else -1
            if nearest >= 0 and gaps[nearest] < 1e-9:
                rows[nearest] = axis
            else:
                rows.append(axis)
    return np.vstack(rows)


def _fibonacci_sphere(n: int) -> np.ndarray:
    index = np.arange(n) + 0.5
    z = 1.0 - 2.0 * index / n
    radius = np.sqrt(1.0 - z**2)
    angle = np.pi * (1.0 + np.sqrt(5.0)) * index
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle), z])


def direction_grid(
    d: int, scheme: str = "auto", n: Optional[int] = None, seed: int = 0
) -> DirectionGrid:
    """
    Unit directions for evaluating support functions.

    Args:
        d: Dimension
        scheme: "equal-angle" (d <= 2), "fibonacci" (d = 3), "gaussian" (any
            d) or "auto" to pick by dimension
        n: Number of directions before the axes are appended
        seed: Key of the Philox stream used by the gaussian scheme

    Returns:
        DirectionGrid containing +-e_j for every axis j

    Raises:
        BadDimension: If d < 1, n < 2d or the scheme does not fit d
    """
    if d < 1:
        raise BadDimension(f"dimension must be positive, got {d}")
    if n is None:
        n = max(DEFAULT_DIRECTIONS.get(d, HIGH_DIM_DIRECTIONS), 2 * d)
    if n < 2 * d:
        raise BadDimension(f"need at least {2 * d} directions in dimension {d}")
    if scheme == "auto":
        scheme = {1: "equal-angle", 2: "equal-angle", 3: "fibonacci"}.get(d, "gaussian")

    if scheme == "equal-angle" and d == 1:
        raw = np.array([[1.0], [-1.0]])
    elif scheme == "equal-angle" and d == 2:
        angles = 2.0 * np.pi * np.arange(n) / n
        raw = np.column_stack([np.cos(angles), np.sin(angles)])
    elif scheme == "fibonacci" and d == 3:
        raw = _fibonacci_sphere(n)
    elif scheme == "gaussian":
        draws = random_stream(seed).standard_normal((n, d))
        raw = draws / np.linalg.norm(draws, axis=1, keepdims=True)
    else:
        raise BadDimension(f"scheme {scheme!r} is not available in dimension {d}")

    raw = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    directions = _ensure_axes(raw)
    logger.debug(f"Built {scheme} grid with {directions.shape[0]} directions in R^{d}")
    return DirectionGrid(directions, scheme, seed)
