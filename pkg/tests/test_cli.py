"""Tests for the command-line entry point."""

import json

import pytest

from cli import build_parser, main


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    """Run every command from an empty directory without config/config.json."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_lee_csv(path):
    rows = ["unit_id,D,S,y"]
    rows += [f"t{i},1,1,{v}" for i, v in enumerate([1, 2, 3, 4])]
    rows += [f"t{i},1,0," for i in range(4, 8)]
    rows += ["c0,0,1,2", "c1,0,1,3"] + [f"c{i},0,0," for i in range(2, 8)]
    path.write_text("\n".join(rows) + "\n")
    return str(path)


class TestParser:
    """Argument parsing."""

    def test_subcommand_required(self):
        """Test that a subcommand must be given."""
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args([])
        assert info.value.code == 2

    def test_eval_points(self):
        """Test comma-separated evaluation points."""
        args = build_parser().parse_args(["estimate", "d.csv", "--eval-points", "0.2,0.5,0.8"])
        assert args.eval_points == [0.2, 0.5, 0.8]

    def test_lambda_flag(self):
        """Test that --lambda maps to the contamination share."""
        args = build_parser().parse_args(["estimate", "d.csv", "--lambda", "0.1"])
        assert args.lam == 0.1


class TestMain:
    """Exit codes and written files."""

    def test_estimate(self, in_tmp):
        """Test a successful scalar estimate."""
        data = write_lee_csv(in_tmp / "lee.csv")
        code = main(["estimate", data, "--space", "scalar", "--out-dir", "out"])
        assert code == 0
        report = json.loads((in_tmp / "out" / "region.json").read_text())
        assert report["sigma"] == [3.5, -1.5]
        assert (in_tmp / "out" / "projection.csv").exists()

    def test_schema_error(self, in_tmp):
        """Test exit code 2 for a malformed file."""
        path = in_tmp / "bad.csv"
        path.write_text("unit_id,D,S,y\nu1,1,1,2\nu2,0,0,5\n")
        assert main(["estimate", str(path), "--space", "scalar"]) == 2

    def test_estimation_error(self, in_tmp):
        """Test exit code 3 when no control unit is selected."""
        path = in_tmp / "empty.csv"
        path.write_text("unit_id,D,S,y\nu1,1,1,2\nu2,1,1,3\nu3,0,0,\n")
        assert main(["estimate", str(path), "--space", "scalar"]) == 3

    def test_config_error(self, in_tmp):
        """Test exit code 4 for an invalid argument value."""
        data = write_lee_csv(in_tmp / "lee.csv")
        assert main(["estimate", data, "--space", "scalar", "--alpha", "1.5"]) == 4

    def test_config_file(self, in_tmp):
        """Test that --config supplies settings that flags may override."""
        data = write_lee_csv(in_tmp / "lee.csv")
        config = in_tmp / "run.json"
        config.write_text(json.dumps({"space": "scalar", "seed": 3}))
        assert main(["estimate", data, "--config", str(config), "--out-dir", "out"]) == 0
        config.write_text(json.dumps({"space": "scalar", "bootstraps": 3}))
        assert main(["estimate", data, "--config", str(config)]) == 4

    def test_simulate(self, in_tmp):
        """Test that simulate writes a dataset."""
        code = main(
            ["simulate", "--design", "custom", "--n", "60", "--retention", "0.9", "0.8"]
        )
        assert code == 0
        lines = (in_tmp / "out" / "dataset.csv").read_text().splitlines()
        assert lines[0] == "unit_id,D,S,y"
        assert len(lines) == 61

    def test_oracle_check(self, in_tmp):
        """Test the oracle command output."""
        assert main(["oracle-check", "--instances", "20", "--seed", "1"]) == 0
        summary = json.loads((in_tmp / "out" / "oracle.json").read_text())
        assert summary["instances"] == 20
