"""End-to-end runs: embed, estimate, infer, summarize effects, write reports."""

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config_loader import RunConfig
from data_io import RawDataset, embed_raw, space_for, write_dataset
from designs import DesignSpec, generate_design
from effects import (
    decoded_share_range,
    densified_boundary,
    embedded_effect_region,
    geodesic_effect_set,
    naive_lee_componentwise,
    projection_effect,
    quantile_band,
)
from embeddings import ObjectSpace
from errors import ConfigError, EstimationError
from identified_set import (
    HalfspaceRegion,
    build_region,
    lp_support_oracle,
    project_interval,
    vertices_2d,
)
from inference import BootstrapConfig, InferenceResult, coverage_simulation, infer
from selection_core import (
    DirectionGrid,
    EmbeddedDataset,
    SupportProfile,
    TrimFraction,
    contaminated_profile,
    direction_grid,
    estimate_mu0,
    random_stream,
    stratified_profile,
    support_profile,
    trimmed_support,
)

logger = logging.getLogger(__name__)

ORACLE_TOL = 1e-10
SQRT3_2 = np.sqrt(3.0) / 2.0


def format_floats(value: Any) -> Any:
    """Round every float to 12 significant digits, recursively."""
    if isinstance(value, dict):
        return {str(k): format_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [format_floats(v) for v in value]
    if isinstance(value, np.ndarray):
        return format_floats(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            return None
        return float("%.12g" % value)
    return value


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(format_floats(payload), sort_keys=True, indent=2)
    path.write_text(text + "\n", encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.12g")
    logger.debug(f"Wrote {path}")
    return path


def bootstrap_config(config: RunConfig) -> BootstrapConfig:
    return BootstrapConfig(
        B=config.bootstrap,
        alpha=config.alpha,
        seed=config.seed,
        variance_mode=config.variance_mode,
        variance_B=config.variance_bootstrap,
        threads=config.threads,
        method=config.method,
        stratified=config.covariate is not None,
    )


@dataclass(frozen=True, eq=False)
class PreparedRun:
    """A dataset embedded and re-expressed in estimation coordinates."""

    config: RunConfig
    space: ObjectSpace
    raw: RawDataset
    embedded: EmbeddedDataset
    data: EmbeddedDataset
    grid: DirectionGrid

    @property
    def embedded_dim(self) -> int:
        return self.embedded.dim

    def component_names(self) -> List[str]:
        if self.space.share_valued:
            return [f"y{j + 1}" for j in range(self.embedded_dim)]
        return self.space.coordinate_names(self.data.dim)

    def components(self) -> EmbeddedDataset:
        """Coordinates for the componentwise comparison bounds."""
        if not self.space.share_valued:
            return self.data
        parts = np.full((self.raw.n, self.embedded_dim), np.nan)
        for i, outcome in enumerate(self.raw.outcomes):
            if outcome is not None:
                parts[i] = outcome
        return EmbeddedDataset(self.raw.treated, self.raw.selected, parts, strata=self.raw.strata)


def prepare(config: RunConfig, raw: RawDataset) -> PreparedRun:
    space = space_for(config)
    embedded = embed_raw(raw, space)
    data = embedded.with_chart(space)
    grid = direction_grid(data.dim, config.scheme, config.directions, config.seed)
    logger.info(
        f"Prepared {raw.n} units in the {space.label} space: "
        f"{data.dim} estimation coordinates, {grid.size} directions"
    )
    return PreparedRun(config, space, raw, embedded, data, grid)


def estimate_profile(run: PreparedRun) -> SupportProfile:
    config = run.config
    if config.lam is not None:
        return contaminated_profile(run.data.treated_selected(), run.grid, config.lam)
    if config.covariate is not None:
        return stratified_profile(run.data, run.grid, config.method)
    return support_profile(run.data, run.grid, method=config.method)


def _axis_ranges(
    run: PreparedRun, region: Optional[HalfspaceRegion]
) -> List[Tuple[float, float]]:
    if region is None:
        return [(np.nan, np.nan)] * len(run.component_names())
    if run.space.share_valued:
        return [
            decoded_share_range(
                region,
                run.space,
                j,
                run.embedded_dim,
                run.config.share_samples,
                run.config.seed,
            )
            for j in range(run.embedded_dim)
        ]
    return [project_interval(region, j) for j in range(run.data.dim)]


def _point_estimate(run: PreparedRun, mu0: Optional[np.ndarray]) -> List[float]:
    if mu0 is None:
        return [np.nan] * len(run.component_names())
    if run.space.share_valued:
        return list(np.atleast_1d(run.space.decode(run.space.from_chart(mu0, run.embedded_dim))))
    return list(mu0)


def projection_table(
    run: PreparedRun,
    estimate: HalfspaceRegion,
    confidence: Optional[HalfspaceRegion],
    mu0: Optional[np.ndarray],
    p: TrimFraction,
) -> pd.DataFrame:
    """Point estimate, projected set, projected region and componentwise bounds."""
    sets = _axis_ranges(run, estimate)
    cis = _axis_ranges(run, confidence)
    naive = naive_lee_componentwise(run.components(), p)
    return pd.DataFrame(
        {
            "component": run.component_names(),
            "point_estimate": _point_estimate(run, mu0),
            "set_lo": [lo for lo, _ in sets],
            "set_hi": [hi for _, hi in sets],
            "ci_lo": [lo for lo, _ in cis],
            "ci_hi": [hi for _, hi in cis],
            "lee_lo": [lo for lo, _ in naive],
            "lee_hi": [hi for _, hi in naive],
        }
    )


def ternary_frame(run: PreparedRun, region: HalfspaceRegion) -> pd.DataFrame:
    """Decoded boundary of a 3-part composition region with ternary x, y."""
    ring = densified_boundary(vertices_2d(region).vertices)
    ring = np.vstack([ring, ring[:1]])
    shares = np.atleast_2d(run.space.decode(run.space.from_chart(ring, run.embedded_dim)))
    return pd.DataFrame(
        {
            "y1": shares[:, 0],
            "y2": shares[:, 1],
            "y3": shares[:, 2],
            "x": shares[:, 1] + shares[:, 2] / 2.0,
            "y": SQRT3_2 * shares[:, 2],
        }
    )


def _plot_files(
    run: PreparedRun,
    out_dir: Path,
    estimate: HalfspaceRegion,
    confidence: Optional[HalfspaceRegion],
) -> Dict[str, Path]:
    written = {}
    if run.space.label == "distribution":
        band = quantile_band(estimate, run.config.eval_grid).to_frame()
        if confidence is not None:
            outer = quantile_band(confidence, run.config.eval_grid)
            band["ci_lower"] = outer.lower
            band["ci_upper"] = outer.upper
        written["band"] = write_csv(out_dir / "band.csv", band)
    if run.data.dim == 2:
        written["polygon"] = write_csv(out_dir / "polygon.csv", vertices_2d(estimate).to_frame())
        if run.space.share_valued and run.embedded_dim == 3:
            written["ternary"] = write_csv(out_dir / "ternary.csv", ternary_frame(run, estimate))
    return written


def _region_report(
    run: PreparedRun, profile: SupportProfile, mu0: Optional[np.ndarray]
) -> Dict[str, Any]:
    if run.space.share_valued:
        coordinates = [f"ilr{j + 1}" for j in range(run.data.dim)]
    else:
        coordinates = run.space.coordinate_names(run.data.dim)
    return {
        "space": run.space.label,
        "n": run.data.n,
        "dim": run.data.dim,
        "coordinates": coordinates,
        "p_hat": profile.p.p_hat,
        "p_clipped": profile.p.clipped,
        "lambda": run.config.lam,
        "grid_scheme": profile.grid.scheme,
        "directions": profile.grid.directions,
        "sigma": profile.sigma,
        "control_mean": mu0,
    }


def run_pipeline(
    config: RunConfig, raw: RawDataset, out_dir: str, command: str = "estimate"
) -> Dict[str, Path]:
    """
    Run one subcommand's analysis and write its report files.

    Args:
        config: Validated run configuration
        raw: Dataset in original object form
        out_dir: Directory for the report files
        command: "estimate", "infer" or "effects"

    Returns:
        Mapping from report name to written path
    """
    if command not in ("estimate", "infer", "effects"):
        raise ConfigError(f"unknown pipeline command {command!r}")
    if config.lam is not None and command != "estimate":
        raise ConfigError("contamination mode is available for estimate only")
    out = Path(out_dir)
    run = prepare(config, raw)
    profile = estimate_profile(run)
    estimate = build_region(profile)
    mu0 = estimate_mu0(run.data).coords if run.data.control_selected().size else None

    result: Optional[InferenceResult] = None
    if command != "estimate":
        result = infer(run.data, run.grid, bootstrap_config(config))
    confidence = None if result is None else result.region

    report = _region_report(run, profile, mu0)
    if result is not None:
        report["inference"] = result.to_report()
    written = {"region": write_json(out / "region.json", report)}
    table = projection_table(run, estimate, confidence, mu0, profile.p)
    written["projection"] = write_csv(out / "projection.csv", table)
    written.update(_plot_files(run, out, estimate, confidence))
    if command == "effects":
        written.update(_effects(run, out, estimate, result, mu0))
    logger.info(f"Wrote {len(written)} report file(s) to {out}")
    return written


def _effects(
    run: PreparedRun,
    out: Path,
    estimate: HalfspaceRegion,
    result: InferenceResult,
    mu0: Optional[np.ndarray],
) -> Dict[str, Path]:
    if mu0 is None:
        raise EstimationError("effects need a selected control unit")
    config = run.config
    names = run.component_names()
    share = run.space if run.space.share_valued else None
    components = []
    for j, name in enumerate(names):
        lo, hi = projection_effect(
            estimate, mu0, j, share, run.embedded_dim, config.share_samples, config.seed
        )
        components.append({"component": name, "set_lo": lo, "set_hi": hi})

    payload: Dict[str, Any] = {
        "space": run.space.label,
        "control_mean": mu0,
        "set_effect": {"offsets": embedded_effect_region(estimate, mu0).offsets},
        "components": components,
    }
    joint = result.joint
    if joint is not None:
        effect_region = embedded_effect_region(joint.region, box=(joint.lower, joint.upper))
        payload["joint_effect"] = {
            "critical_value": joint.critical_value,
            "offsets": effect_region.offsets,
        }
        if share is None:
            for j, entry in enumerate(components):
                entry["ci_lo"], entry["ci_hi"] = project_interval(effect_region, j)
        else:
            box = _box_region(joint.lower, joint.upper)
            for j, entry in enumerate(components):
                lo, hi = decoded_share_range(
                    joint.region, share, j, run.embedded_dim, config.share_samples, config.seed
                )
                base_lo, base_hi = decoded_share_range(
                    box, share, j, run.embedded_dim, config.share_samples, config.seed
                )
                entry["ci_lo"], entry["ci_hi"] = lo - base_hi, hi - base_lo

    paths = geodesic_effect_set(
        mu0,
        estimate,
        config.geodesic_samples,
        config.seed,
        config.t_grid,
        run.space,
        run.embedded_dim,
    )
    frames = [path.to_frame(i) for i, path in enumerate(paths)]
    geodesics = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["path", "t"])
    return {
        "effects": write_json(out / "effects.json", payload),
        "geodesics": write_csv(out / "geodesics.csv", geodesics),
    }


def _box_region(lower: np.ndarray, upper: np.ndarray) -> HalfspaceRegion:
    d = lower.size
    eye = np.eye(d)
    return HalfspaceRegion(
        np.vstack([eye, -eye]), np.concatenate([upper, -lower]), (lower + upper) / 2.0
    )


def simulate(config: RunConfig, out_dir: str, coverage: int = 0) -> Dict[str, Path]:
    """Write one generated dataset and, optionally, a coverage study."""
    out = Path(out_dir)
    design = DesignSpec.from_config(config)
    if design.space != config.space:
        config = replace(config, space=design.space)
    raw = generate_design(design, config.seed)
    path = out / "dataset.csv"
    write_dataset(raw, str(path), design.space)
    written = {"dataset": path}
    if coverage:
        run = prepare(config, raw)
        summary = coverage_simulation(
            design,
            coverage,
            bootstrap_config(config),
            run.space,
            run.grid,
            n_large=config.n_large,
        )
        report = {"design": design.name, "n": design.n, "alpha": config.alpha}
        report.update(summary.to_report())
        written["coverage"] = write_json(out / "coverage.json", report)
    return written


def oracle_check(instances: int = 1000, seed: int = 0) -> Dict[str, Any]:
    """
    Compare trimmed_support with the greedy linear-program oracle on random data.

    Raises:
        EstimationError: If any instance differs by more than 1e-10
    """
    rng = random_stream(seed, 31)
    worst = 0.0
    for _ in range(instances):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(5, 201))
        p = TrimFraction(float(rng.choice([0.3, 0.5, 0.9, 1.0])))
        data = EmbeddedDataset(np.ones(n, bool), np.ones(n, bool), rng.standard_normal((n, d)))
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        gap = abs(trimmed_support(data, u, p) - lp_support_oracle(data, u, p))
        worst = max(worst, gap)
    summary = {"instances": instances, "max_abs_difference": worst}
    if worst > ORACLE_TOL:
        raise EstimationError(f"support estimates deviate from the oracle by {worst:.3g}")
    return summary
