"""
Tests for CSV/JSON outputs and their provenance columns.
"""

import json

import numpy as np
import pandas as pd
import pytest

from fmfg import __version__
from fmfg.reports import InequalityReport
from fmfg.semigroup import Trajectory, time_grid
from harness.artifacts import ArtifactWriter, Command, ExperimentManifest, report_rows


def writer_in(directory, seed=4):
    manifest = ExperimentManifest(
        command=Command.SWEEP, config_path="configs/bench.toml", output_dir=str(directory), seed=seed, config_hash="ab" * 32
    )
    return ArtifactWriter(manifest)


class TestArtifactWriter:

    def test_csv_carries_provenance(self, tmp_path):
        path = writer_in(tmp_path).write_csv("sweep", [{"sigma": 0.1, "err": np.float64(0.5)}, {"sigma": 0.0, "err": 0.0}])
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["sigma", "err", "seed", "config_hash", "code_version"]
        assert len(frame) == 2
        assert (frame["seed"] == 4).all()
        assert frame["code_version"].iloc[0] == __version__

    def test_json_is_plain(self, tmp_path):
        path = writer_in(tmp_path).write_json("summary", {"values": np.arange(3), "gap": np.float64(1.5), "bad": float("inf")})
        document = json.loads(path.read_text())
        assert document["values"] == [0, 1, 2]
        assert document["gap"] == 1.5
        assert document["bad"] == "inf"
        assert document["provenance"]["config_hash"] == "ab" * 32

    def test_outputs_depend_only_on_config_and_seed(self, tmp_path):
        rows = [{"t": 0.1, "ratio": 2.0}]
        first = writer_in(tmp_path / "a").write_csv("decay", rows)
        second = writer_in(tmp_path / "b").write_csv("decay", rows)
        assert first.read_bytes() == second.read_bytes()

    def test_manifest(self, tmp_path):
        path = writer_in(tmp_path).write_manifest()
        manifest = json.loads(path.read_text())
        assert manifest["command"] == "sweep"
        assert "created_at" in manifest

    def test_trajectory_subdirectory(self, tmp_path, cosine1d):
        times = time_grid(0.5, 2)
        directory = writer_in(tmp_path).write_trajectory(Trajectory(times, (cosine1d,) * 3, kind="u"), 0.75, 0.0)
        assert directory == tmp_path / "u"
        assert json.loads((directory / "manifest.json").read_text())["provenance"]["seed"] == 4


def test_report_rows():
    report = InequalityReport(name="decay", samples=3, worst_ratio=1.5, fitted_exponent=-1.0, passed=True)
    assert report_rows([report]) == [
        {"name": "decay", "samples": 3, "worst_ratio": 1.5, "fitted_exponent": -1.0, "pass": True}
    ]


def test_report_rejects_non_finite_ratio():
    with pytest.raises(ValueError, match="finite"):
        InequalityReport(name="x", samples=1, worst_ratio=float("nan"), passed=False)
