"""Tests for end-to-end runs and report files."""

import json

import numpy as np
import pandas as pd
import pytest

from config_loader import RunConfig
from data_io import RawDataset, read_raw
from designs import DesignSpec, generate_design
from errors import ConfigError
from pipeline import format_floats, oracle_check, run_pipeline, simulate

FAST = dict(bootstrap=49, variance_bootstrap=30, geodesic_samples=4, share_samples=300)


def lee_raw():
    """Scalar units: treated {1, 2, 3, 4} of 8, control {2, 3} of 8."""
    treated = [1.0, 2.0, 3.0, 4.0, None, None, None, None]
    control = [2.0, 3.0] + [None] * 6
    values = treated + control
    return RawDataset(
        tuple(f"u{i}" for i in range(16)),
        [True] * 8 + [False] * 8,
        [v is not None for v in values],
        tuple(None if v is None else np.array([v]) for v in values),
    )


@pytest.fixture
def custom_raw():
    return generate_design(DesignSpec(name="custom", n=300), seed=3)


@pytest.fixture
def atus_raw():
    return generate_design(DesignSpec(n=300), seed=2)


class TestFormatFloats:
    """Report value formatting."""

    def test_rounds_to_twelve_digits(self):
        """Test rounding, numpy scalars and non-finite values."""
        value = {"a": np.float64(1.0 / 3.0), "b": [np.int64(2), np.nan], "c": np.bool_(True)}
        assert format_floats(value) == {"a": 0.333333333333, "b": [2, None], "c": True}

    def test_arrays_become_lists(self):
        """Test that arrays are written as nested lists."""
        assert format_floats(np.eye(2)) == [[1.0, 0.0], [0.0, 1.0]]


class TestEstimate:
    """The estimate command."""

    def test_scalar_matches_classical_bounds(self, tmp_path):
        """Test that a scalar run reproduces the trimmed-mean bounds."""
        written = run_pipeline(RunConfig(space="scalar"), lee_raw(), str(tmp_path))
        table = pd.read_csv(written["projection"])

        row = table.iloc[0]
        assert row["component"] == "y"
        assert row["set_lo"] == pytest.approx(1.5)
        assert row["set_hi"] == pytest.approx(3.5)
        assert row["lee_lo"] == pytest.approx(row["set_lo"], abs=1e-9)
        assert row["lee_hi"] == pytest.approx(row["set_hi"], abs=1e-9)
        assert row["point_estimate"] == pytest.approx(2.5)
        assert np.isnan(row["ci_lo"])

        report = json.loads(written["region"].read_text())
        assert report["p_hat"] == 0.5
        assert report["p_clipped"] is False
        assert report["space"] == "scalar"
        assert "inference" not in report

    def test_compositional_files(self, tmp_path, atus_raw):
        """Test the polygon and ternary files of a 3-part composition run."""
        written = run_pipeline(RunConfig(**FAST), atus_raw, str(tmp_path))
        assert set(written) == {"region", "projection", "polygon", "ternary"}

        polygon = pd.read_csv(written["polygon"])
        assert list(polygon.columns[:2]) == ["x", "y"]
        assert len(polygon) >= 3

        ternary = pd.read_csv(written["ternary"])
        shares = ternary[["y1", "y2", "y3"]].to_numpy()
        np.testing.assert_allclose(shares.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(shares > 0)
        # closed ring
        np.testing.assert_allclose(shares[0], shares[-1])
        assert np.all(ternary["y"] >= 0)
        assert np.all(ternary["y"] <= np.sqrt(3.0) / 2.0)

        table = pd.read_csv(written["projection"])
        assert list(table["component"]) == ["y1", "y2", "y3"]
        assert np.all(table["set_lo"] <= table["set_hi"])
        assert np.all((table["lee_lo"] > 0) & (table["lee_hi"] < 1))

    def test_distribution_band(self, tmp_path):
        """Test that distribution runs write an ordered quantile band."""
        raw = generate_design(DesignSpec(name="sleep-like", n=300, draws=10), seed=1)
        config = RunConfig(space="distribution", eval_grid=[0.25, 0.5, 0.75], **FAST)
        written = run_pipeline(config, raw, str(tmp_path))
        band = pd.read_csv(written["band"])
        assert len(band) == 3
        assert np.all(band["lower"] <= band["upper"] + 1e-12)

    def test_contamination_only_for_estimate(self, tmp_path, custom_raw):
        """Test that contamination mode rejects inference commands."""
        config = RunConfig(space="scalar", lam=0.1)
        run_pipeline(config, custom_raw, str(tmp_path / "est"))
        with pytest.raises(ConfigError):
            run_pipeline(config, custom_raw, str(tmp_path / "inf"), "infer")

    def test_unknown_command(self, tmp_path, custom_raw):
        """Test an unknown pipeline command."""
        with pytest.raises(ConfigError):
            run_pipeline(RunConfig(space="scalar"), custom_raw, str(tmp_path), "plot")


class TestInfer:
    """The infer and effects commands."""

    def test_region_contains_estimate(self, tmp_path, custom_raw):
        """Test that the confidence offsets dominate the estimated support."""
        written = run_pipeline(
            RunConfig(space="scalar", **FAST), custom_raw, str(tmp_path), "infer"
        )
        report = json.loads(written["region"].read_text())
        inference = report["inference"]
        assert np.all(np.array(inference["offsets"]) >= np.array(report["sigma"]) - 1e-12)
        assert inference["B"] == 49

        table = pd.read_csv(written["projection"])
        assert table["ci_lo"][0] <= table["set_lo"][0]
        assert table["ci_hi"][0] >= table["set_hi"][0]

    def test_threads_do_not_change_output(self, tmp_path, custom_raw):
        """Test that reports are byte-identical for one and two threads."""
        texts = []
        for threads in (1, 2):
            config = RunConfig(space="scalar", threads=threads, seed=11, **FAST)
            written = run_pipeline(config, custom_raw, str(tmp_path / str(threads)), "infer")
            texts.append(written["region"].read_bytes())
        assert texts[0] == texts[1]

    def test_effects_files(self, tmp_path, custom_raw):
        """Test the effect summaries and geodesic samples."""
        written = run_pipeline(
            RunConfig(space="scalar", **FAST), custom_raw, str(tmp_path), "effects"
        )
        payload = json.loads(written["effects"].read_text())
        entry = payload["components"][0]
        assert entry["set_lo"] <= entry["set_hi"]
        assert entry["ci_lo"] <= entry["set_lo"] + 1e-9
        assert entry["ci_hi"] >= entry["set_hi"] - 1e-9

        geodesics = pd.read_csv(written["geodesics"])
        assert list(geodesics.columns[:2]) == ["path", "t"]
        assert set(geodesics["t"]) == {0.0, 0.25, 0.5, 0.75, 1.0}


class TestSimulate:
    """Synthetic data generation and coverage reports."""

    def test_dataset_file(self, tmp_path):
        """Test that the generated dataset is written in the reader's schema."""
        config = RunConfig(design="custom", space="scalar", n=120, seed=4)
        written = simulate(config, str(tmp_path))
        raw = read_raw(str(written["dataset"]), "scalar")
        assert raw.n == 120
        assert raw.unit_ids[0] == "u1"

    def test_space_follows_design(self, tmp_path):
        """Test that the design decides the file layout."""
        written = simulate(RunConfig(design="sleep-like", n=40, seed=1), str(tmp_path))
        header = written["dataset"].read_text().splitlines()[0]
        assert header == "unit_id,D,S,value"

    def test_coverage_report(self, tmp_path):
        """Test a small coverage study report."""
        config = RunConfig(
            design="custom", space="scalar", n=200, n_large=20000, **FAST
        )
        written = simulate(config, str(tmp_path), coverage=2)
        report = json.loads(written["coverage"].read_text())
        assert report["replications"] == 2
        assert report["design"] == "custom"
        assert 0.0 <= report["coverage"] <= 1.0


class TestOracleCheck:
    """Linear-program oracle agreement."""

    def test_agrees(self):
        """Test that trimmed means match the oracle on random instances."""
        summary = oracle_check(instances=40, seed=2)
        assert summary["instances"] == 40
        assert summary["max_abs_difference"] <= 1e-10
