"""Bootstrap inference on identified sets.

Replicate b of a bootstrap round draws multinomial unit weights from the
Philox stream keyed by (seed, round, b, attempt), so results do not depend on
thread count or scheduling.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from data_io import embed_raw
from designs import DesignSpec, generate_design
from embeddings import ObjectSpace
from errors import (
    ConfigError,
    DegenerateResample,
    DegenerateVariance,
    EmptyArm,
    EmptyCell,
    EstimationError,
    GridMismatch,
    ZeroSelection,
)
from identified_set import (
    HalfspaceRegion,
    build_region,
    certify_nonempty,
    contains,
    project_interval,
)
from selection_core import (
    DirectionGrid,
    EmbeddedDataset,
    SupportProfile,
    TrimFraction,
    estimate_p,
    random_stream,
    stratified_profile,
    support_profile,
    upper_trimmed_means,
)

logger = logging.getLogger(__name__)

MAX_REDRAWS = 100
MIN_VARIANCE = 1e-12
MAIN_STREAM = 0
VARIANCE_STREAM = 1
TRUTH_CHUNK = 16


@dataclass(frozen=True)
class BootstrapConfig:
    """
    Settings of a bootstrap inference run.

    The direction grid is passed alongside, not stored here.
    """

    B: int = 300
    alpha: float = 0.05
    seed: int = 0
    variance_mode: str = "bootstrap"
    variance_B: int = 200
    threads: int = 1
    recompute_p: bool = True
    method: str = "fractional"
    stratified: bool = False
    joint: bool = True

    def __post_init__(self):
        if self.B < 1:
            raise ConfigError("B must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.variance_mode not in ("bootstrap", "analytic-plugin"):
            raise ConfigError(f"unknown variance mode {self.variance_mode!r}")
        if self.variance_B < 2:
            raise ConfigError("variance_B must be at least 2")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.stratified and self.variance_mode == "analytic-plugin":
            raise ConfigError("analytic variance is not available for stratified runs")


@dataclass(frozen=True, eq=False)
class Replicate:
    profile: SupportProfile
    control_mean: Optional[np.ndarray]


@dataclass(frozen=True, eq=False)
class JointRegion:
    """Coordinatewise box for the control mean and the enlarged region."""

    critical_value: float
    control_mean: np.ndarray
    control_variance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    region: HalfspaceRegion


@dataclass(frozen=True, eq=False)
class InferenceResult:
    critical_value: float
    region: HalfspaceRegion
    variance: np.ndarray
    t_stats: np.ndarray
    profile: SupportProfile
    n: int
    alpha: float
    B: int
    seed: int
    control_mean: Optional[np.ndarray] = None
    joint: Optional[JointRegion] = None

    def to_report(self) -> dict:
        """Plain-type report; float formatting is left to the writer."""
        report = {
            "p_hat": self.profile.p.p_hat,
            "p_clipped": self.profile.p.clipped,
            "alpha": self.alpha,
            "B": self.B,
            "seed": self.seed,
            "n": self.n,
            "grid_scheme": self.profile.grid.scheme,
            "directions": self.profile.grid.directions.tolist(),
            "sigma": self.profile.sigma.tolist(),
            "variance": self.variance.tolist(),
            "critical_value": self.critical_value,
            "offsets": self.region.offsets.tolist(),
            "control_mean": None if self.control_mean is None else self.control_mean.tolist(),
            "joint": None,
        }
        if self.joint is not None:
            report["joint"] = {
                "critical_value": self.joint.critical_value,
                "control_mean": self.joint.control_mean.tolist(),
                "control_variance": self.joint.control_variance.tolist(),
                "box_lower": self.joint.lower.tolist(),
                "box_upper": self.joint.upper.tolist(),
                "offsets": self.joint.region.offsets.tolist(),
            }
        return report


def _estimate(
    data: EmbeddedDataset,
    grid: DirectionGrid,
    p: Optional[TrimFraction],
    method: str,
    stratified: bool,
) -> SupportProfile:
    if stratified:
        return stratified_profile(data, grid, method)
    cell = data.treated_selected()
    if cell.shape[0] == 0:
        raise ZeroSelection("no treated unit is selected")
    if p is None:
        p = estimate_p(data, warn=False)
    sigma = upper_trimmed_means(cell @ grid.directions.T, p.p_hat, method)
    return SupportProfile(grid, sigma, p)


def _control_mean(data: EmbeddedDataset) -> Optional[np.ndarray]:
    cell = data.control_selected()
    return cell.mean(axis=0) if cell.shape[0] else None


def _replicate(
    data: EmbeddedDataset,
    grid: DirectionGrid,
    p: Optional[TrimFraction],
    seed: int,
    stream: int,
    b: int,
    method: str,
    stratified: bool,
) -> Replicate:
    uniform = np.full(data.n, 1.0 / data.n)
    for attempt in range(MAX_REDRAWS + 1):
        rng = random_stream(seed, stream, b, attempt)
        counts = rng.multinomial(data.n, uniform)
        sample = data.take(np.repeat(np.arange(data.n), counts))
        try:
            profile = _estimate(sample, grid, p, method, stratified)
        except (EmptyArm, ZeroSelection, EmptyCell):
            logger.debug(f"Replicate {b} attempt {attempt} emptied a cell; redrawing")
            continue
        if attempt:
            logger.warning(f"Bootstrap replicate {b} needed {attempt} redraws")
        return Replicate(profile, _control_mean(sample))
    raise DegenerateResample(
        f"replicate {b} emptied a required cell in {MAX_REDRAWS} redraws"
    )


def _bootstrap_round(
    data: EmbeddedDataset,
    grid: DirectionGrid,
    B: int,
    seed: int,
    stream: int,
    recompute_p: bool = True,
    method: str = "fractional",
    stratified: bool = False,
    threads: int = 1,
) -> List[Replicate]:
    if grid.dim != data.dim:
        raise GridMismatch(f"grid dimension {grid.dim} vs data dimension {data.dim}")
    if B == 0:
        return []
    fixed_p = None if recompute_p or stratified else estimate_p(data)
    logger.debug(f"Bootstrap round {stream}: {B} replicates on {threads} thread(s)")

    def task(b: int) -> Replicate:
        return _replicate(data, grid, fixed_p, seed, stream, b, method, stratified)

    if threads == 1:
        return [task(b) for b in range(B)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(task, range(B)))


def bootstrap_profiles(
    data: EmbeddedDataset,
    grid: DirectionGrid,
    recompute_p: bool = True,
    B: int = 300,
    seed: int = 0,
    threads: int = 1,
    method: str = "fractional",
    stream: int = MAIN_STREAM,
) -> List[SupportProfile]:
    """
    Support profiles of B nonparametric bootstrap resamples.

    Args:
        data: Dataset in estimation coordinates
        grid: Direction grid shared with the original profile
        recompute_p: Re-estimate the trimming fraction on every resample
        B: Number of replicates (0 gives an empty list)
        seed: Base seed of the replicate streams
        threads: Worker threads; results are identical for any value
        method: Trimming rule
        stream: Round key separating independent bootstrap rounds

    Raises:
        DegenerateResample: If a replicate keeps emptying a required cell
    """
    replicates = _bootstrap_round(
        data, grid, B, seed, stream, recompute_p, method, threads=threads
    )
    return [r.profile for r in replicates]


def _check_variance(variance: np.ndarray, what: str) -> np.ndarray:
    if np.any(~np.isfinite(variance)) or np.min(variance) < MIN_VARIANCE:
        raise DegenerateVariance(
            f"{what} variance {np.min(variance):.3g} is below {MIN_VARIANCE}; "
            "studentization is not possible"
        )
    return variance


def _bootstrap_variance(replicates: List[Replicate], n: int) -> np.ndarray:
    sigma = np.vstack([r.profile.sigma for r in replicates])
    return n * sigma.var(axis=0, ddof=1)


def _bootstrap_control_variance(replicates: List[Replicate], n: int) -> Optional[np.ndarray]:
    means = [r.control_mean for r in replicates if r.control_mean is not None]
    if len(means) < 2:
        return None
    return n * np.vstack(means).var(axis=0, ddof=1)


def analytic_variance(
    data: EmbeddedDataset, grid: DirectionGrid, p: Optional[TrimFraction] = None
) -> np.ndarray:
    """
    Delta-method variance of sqrt(n) (sigma_hat(u) - sigma(u)) per direction.

    The trimmed-mean part is [Var_U / p + (1 - p)(sigma - q)^2 / p] / pi11,
    with q the (1 - p) quantile of the projections, Var_U their variance in
    the retained upper tail, and pi11 the treated-selected share of the
    sample. Estimating p adds ((q - sigma) / p)^2 V_p with
    V_p = p^2 [(1 - s0)/(pi0 s0) + (1 - s1)/(pi1 s1)], dropped when p was
    clipped to 1.
    """
    if p is None:
        p = estimate_p(data)
    cell = data.treated_selected()
    n11 = cell.shape[0]
    if n11 < 2:
        raise DegenerateVariance("at least two treated-selected units are needed")
    z = cell @ grid.directions.T
    ordered = -np.sort(-z, axis=0)
    kept = n11 * p.p_hat
    whole = min(int(np.floor(kept + 1e-12)), n11)
    weights = np.zeros(n11)
    weights[:whole] = 1.0
    if whole < n11:
        weights[whole] = kept - whole
    sigma = weights @ ordered / kept
    tail_var = weights @ (ordered - sigma) ** 2 / kept
    q = np.quantile(z, 1.0 - p.p_hat, axis=0, method="inverted_cdf")

    pi11 = n11 / data.n
    pp = p.p_hat
    variance = (tail_var / pp + (1.0 - pp) * (sigma - q) ** 2 / pp) / pi11
    if not p.clipped:
        treated = data.treated
        pi1 = treated.mean()
        pi0 = 1.0 - pi1
        s1 = data.selected[treated].mean()
        s0 = data.selected[~treated].mean()
        v_p = pp**2 * ((1.0 - s0) / (pi0 * s0) + (1.0 - s1) / (pi1 * s1))
        variance = variance + ((q - sigma) / pp) ** 2 * v_p
    return variance


def _analytic_control_variance(data: EmbeddedDataset) -> Optional[np.ndarray]:
    cell = data.control_selected()
    if cell.shape[0] < 2:
        return None
    return cell.var(axis=0, ddof=1) / (cell.shape[0] / data.n)


def variance_profile(
    data: EmbeddedDataset, grid: DirectionGrid, config: BootstrapConfig
) -> np.ndarray:
    """
    Per-direction variance V(u) used to studentize the sup statistic.

    Bootstrap mode: n times the sample variance of the resampled support
    values over a preliminary round of ``config.variance_B`` replicates drawn
    from a stream separate from the main round.

    Raises:
        DegenerateVariance: If V(u) < 1e-12 for some direction
    """
    variance, _ = _variances(data, grid, config)
    return variance


def _variances(
    data: EmbeddedDataset, grid: DirectionGrid, config: BootstrapConfig
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    if data.treated_selected().shape[0] < 2:
        raise DegenerateVariance("at least two treated-selected units are needed")
    if config.variance_mode == "analytic-plugin":
        variance = analytic_variance(data, grid)
        control = _analytic_control_variance(data)
    else:
        replicates = _bootstrap_round(
            data,
            grid,
            config.variance_B,
            config.seed,
            VARIANCE_STREAM,
            config.recompute_p,
            config.method,
            config.stratified,
            config.threads,
        )
        variance = _bootstrap_variance(replicates, data.n)
        control = _bootstrap_control_variance(replicates, data.n)
    return _check_variance(variance, "support-function"), control


def sup_t_statistics(
    original: SupportProfile,
    boots: List[SupportProfile],
    variance: np.ndarray,
    n: int,
) -> np.ndarray:
    """
    T(b) = max_u (sigma_b(u) - sigma(u)) / sqrt(V(u) / n).

    Raises:
        GridMismatch: If a replicate uses a different grid
    """
    variance = np.asarray(variance, dtype=float)
    if variance.shape != original.sigma.shape:
        raise GridMismatch("one variance per direction is required")
    if not boots:
        return np.zeros(0)
    for boot in boots:
        if not boot.grid.same_as(original.grid):
            raise GridMismatch("bootstrap profile uses a different direction grid")
    scale = np.sqrt(variance / n)
    deviations = np.vstack([boot.sigma for boot in boots]) - original.sigma
    return np.max(deviations / scale, axis=1)


def critical_value(t_stats: np.ndarray, alpha: float) -> float:
    """The ceil(B (1 - alpha))-th order statistic of the bootstrap statistics."""
    t_stats = np.sort(np.asarray(t_stats, dtype=float))
    B = t_stats.size
    if B < 1:
        raise ConfigError("at least one bootstrap statistic is required")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    rank = int(np.ceil(B * (1.0 - alpha) - 1e-9))
    return float(t_stats[min(max(rank, 1), B) - 1])


def confidence_region(
    profile: SupportProfile, variance: np.ndarray, cv: float, n: int
) -> HalfspaceRegion:
    """Region with offsets sigma(u) + cv sqrt(V(u) / n)."""
    if not np.isfinite(cv):
        raise EstimationError(f"critical value must be finite, got {cv}")
    offsets = profile.sigma + cv * np.sqrt(np.asarray(variance, dtype=float) / n)
    region = HalfspaceRegion(profile.grid.directions, offsets, profile.center)
    return certify_nonempty(region)


def _joint(
    profile: SupportProfile,
    replicates: List[Replicate],
    variance: np.ndarray,
    control_mean: np.ndarray,
    control_variance: Optional[np.ndarray],
    t_stats: np.ndarray,
    alpha: float,
    n: int,
) -> JointRegion:
    if control_variance is None:
        raise DegenerateVariance("control-mean variance is unavailable")
    control_variance = _check_variance(control_variance, "control-mean")
    scale = np.sqrt(control_variance / n)
    control_stats = np.array(
        [
            np.max(np.abs(r.control_mean - control_mean) / scale)
            if r.control_mean is not None
            else np.inf
            for r in replicates
        ]
    )
    joint_cv = critical_value(np.maximum(control_stats, t_stats), alpha)
    return JointRegion(
        critical_value=joint_cv,
        control_mean=control_mean,
        control_variance=control_variance,
        lower=control_mean - joint_cv * scale,
        upper=control_mean + joint_cv * scale,
        region=confidence_region(profile, variance, joint_cv, n),
    )


def joint_region(
    data: EmbeddedDataset, grid: DirectionGrid, config: BootstrapConfig
) -> JointRegion:
    """
    Simultaneous box for the control mean and enlarged region for the
    treated always-observed mean.

    Raises:
        EmptyCell: If no control unit is selected
        DegenerateVariance: If some control coordinate has zero variance
    """
    result = infer(data, grid, config)
    if result.joint is None:
        raise EmptyCell("no control unit is selected")
    return result.joint


def infer(
    data: EmbeddedDataset, grid: DirectionGrid, config: BootstrapConfig
) -> InferenceResult:
    """
    Full inference run: estimate, variance round, main round, regions.

    Args:
        data: Dataset in estimation coordinates
        grid: Direction grid
        config: Bootstrap settings

    Returns:
        InferenceResult whose region is the confidence region for the
        identified set and, when requested, the joint region
    """
    if config.stratified:
        profile = stratified_profile(data, grid, config.method)
    else:
        profile = support_profile(data, grid, method=config.method)
    variance, control_variance = _variances(data, grid, config)

    replicates = _bootstrap_round(
        data,
        grid,
        config.B,
        config.seed,
        MAIN_STREAM,
        config.recompute_p,
        config.method,
        config.stratified,
        config.threads,
    )
    t_stats = sup_t_statistics(profile, [r.profile for r in replicates], variance, data.n)
    cv = critical_value(t_stats, config.alpha)
    region = confidence_region(profile, variance, cv, data.n)
    logger.info(f"Critical value {cv:.4f} at alpha={config.alpha} from B={config.B}")

    control_mean = _control_mean(data)
    joint = None
    if config.joint and control_mean is not None:
        joint = _joint(
            profile,
            replicates,
            variance,
            control_mean,
            control_variance,
            t_stats,
            config.alpha,
            data.n,
        )
    return InferenceResult(
        critical_value=cv,
        region=region,
        variance=variance,
        t_stats=t_stats,
        profile=profile,
        n=data.n,
        alpha=config.alpha,
        B=config.B,
        seed=config.seed,
        control_mean=control_mean,
        joint=joint,
    )


@dataclass(frozen=True, eq=False)
class DesignTruth:
    """Large-sample support values of S1 and the control mean, in chart coordinates."""

    sigma: np.ndarray
    control_mean: np.ndarray
    p: TrimFraction


def true_support(
    design: DesignSpec,
    space: ObjectSpace,
    grid: DirectionGrid,
    n_large: int = 1_000_000,
    seed: int = 2**31 - 1,
) -> DesignTruth:
    """
    Plug-in truth from one very large draw of a design.

    The trimming fraction is the design's exact retention ratio. Directions
    are processed in chunks so the projection matrix stays small.
    """
    large = replace(design, n=n_large)
    data = embed_raw(generate_design(large, seed), space).with_chart(space)
    if grid.dim != data.dim:
        raise GridMismatch(f"grid dimension {grid.dim} vs data dimension {data.dim}")
    cell = data.treated_selected()
    p = design.true_p
    sigma = np.concatenate(
        [
            upper_trimmed_means(cell @ grid.directions[start : start + TRUTH_CHUNK].T, p.p_hat)
            for start in range(0, grid.size, TRUTH_CHUNK)
        ]
    )
    logger.info(f"Computed large-sample truth from n={n_large}")
    return DesignTruth(sigma, data.control_selected().mean(axis=0), p)


def _widths(region: HalfspaceRegion, axes: List[int]) -> List[float]:
    widths = []
    for j in axes:
        lo, hi = project_interval(region, j)
        widths.append(hi - lo)
    return widths


@dataclass(frozen=True)
class CoverageSummary:
    replications: int
    coverage: float
    joint_coverage: float
    mu0_in_set: float
    mu0_in_region: float
    mean_critical_value: float
    mean_widths: Tuple[float, ...]
    mean_set_widths: Tuple[float, ...]

    def to_report(self) -> dict:
        return {
            "replications": self.replications,
            "coverage": self.coverage,
            "joint_coverage": self.joint_coverage,
            "mu0_in_set": self.mu0_in_set,
            "mu0_in_region": self.mu0_in_region,
            "mean_critical_value": self.mean_critical_value,
            "mean_widths": list(self.mean_widths),
            "mean_set_widths": list(self.mean_set_widths),
        }


def coverage_simulation(
    design: DesignSpec,
    M: int,
    config: BootstrapConfig,
    space: ObjectSpace,
    grid: DirectionGrid,
    truth: Optional[DesignTruth] = None,
    n_large: int = 1_000_000,
) -> CoverageSummary:
    """
    Monte Carlo coverage of the confidence region for the identified set.

    Replication m draws its dataset with seed (config.seed, m) folded into an
    integer and bootstraps under its own seed. S1 counts as covered when the
    true support value is dominated by the region offset in every grid
    direction.
    """
    if M < 1:
        raise ConfigError("coverage needs at least one replication")
    if truth is None:
        truth = true_support(design, space, grid, n_large)
    covered = joint_covered = in_set = in_region = 0
    widths, set_widths, cvs = [], [], []
    axes = [j for j in range(grid.dim) if grid.axis_index(j, 1) is not None]
    for m in range(M):
        rep_seed = int(random_stream(config.seed, 99, m).integers(2**62))
        data = embed_raw(generate_design(design, rep_seed), space).with_chart(space)
        rep_config = replace(config, seed=rep_seed)
        result = infer(data, grid, rep_config)
        mu0 = result.control_mean
        covered += bool(np.all(truth.sigma <= result.region.offsets + 1e-12))
        if result.joint is not None:
            box_ok = np.all(
                (truth.control_mean >= result.joint.lower)
                & (truth.control_mean <= result.joint.upper)
            )
            joint_covered += bool(
                box_ok and np.all(truth.sigma <= result.joint.region.offsets + 1e-12)
            )
        estimate = build_region(result.profile)
        in_set += contains(estimate, mu0)
        in_region += contains(result.region, mu0)
        cvs.append(result.critical_value)
        widths.append(_widths(result.region, axes))
        set_widths.append(_widths(estimate, axes))
        logger.debug(f"Coverage replication {m + 1}/{M} done")
    summary = CoverageSummary(
        replications=M,
        coverage=covered / M,
        joint_coverage=joint_covered / M,
        mu0_in_set=in_set / M,
        mu0_in_region=in_region / M,
        mean_critical_value=float(np.mean(cvs)),
        mean_widths=tuple(float(w) for w in np.mean(widths, axis=0)),
        mean_set_widths=tuple(float(w) for w in np.mean(set_widths, axis=0)),
    )
    logger.info(f"Coverage {summary.coverage:.3f} over {M} replications")
    return summary
