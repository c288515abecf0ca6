"""
Experiment outputs: CSV tables (pandas), JSON reports and the run manifest.

Every CSV row and JSON document carries the provenance triple
{seed, config_hash, code_version}. CSV and JSON contents depend only on
(config, seed); the wall-clock timestamp lives in manifest.json alone.
"""

import json
import logging
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from fmfg import __version__
from fmfg.semigroup import Trajectory

from .field_io import save_trajectory

logger = logging.getLogger(__name__)


class Command(str, Enum):
    SOLVE = "solve"
    SWEEP = "sweep"
    PICARD = "picard"
    UNIQUENESS = "uniqueness"
    VERIFY = "verify"
    SEMIGROUP = "semigroup"


class ExperimentManifest(BaseModel):
    command: Command
    config_path: str
    output_dir: str
    seed: int
    config_hash: str
    code_version: str = __version__
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))

    def provenance(self) -> Dict[str, Any]:
        return {"seed": self.seed, "config_hash": self.config_hash, "code_version": self.code_version}


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and nested containers into JSON-native values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, BaseModel):
        return _plain(value.model_dump(mode="json", by_alias=True))
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


class ArtifactWriter:
    """Writes the artifacts of one CLI run into output_dir."""

    def __init__(self, manifest: ExperimentManifest):
        self.manifest = manifest
        self.output_dir = Path(manifest.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def write_manifest(self) -> Path:
        path = self.output_dir / "manifest.json"
        path.write_text(self.manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path

    def write_csv(self, name: str, rows: Sequence[Dict[str, Any]]) -> Path:
        """One row per rung/iteration/report, provenance columns appended."""
        frame = pd.DataFrame([_plain(row) for row in rows])
        for key, value in self.manifest.provenance().items():
            frame[key] = value
        path = self.output_dir / f"{name}.csv"
        frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
        logger.info("wrote %s (%d rows)", path, len(frame))
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        document = {"provenance": self.manifest.provenance(), **_plain(payload)}
        path = self.output_dir / f"{name}.json"
        path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def write_trajectory(self, traj: Trajectory, s_exp: float, sigma: float, name: Optional[str] = None) -> Path:
        return save_trajectory(
            traj,
            self.output_dir / (name or traj.kind),
            s_exp=s_exp,
            sigma=sigma,
            provenance=self.manifest.provenance(),
        )


def report_rows(reports: Sequence[BaseModel]) -> List[Dict[str, Any]]:
    """Summary rows of InequalityReports for the verify CSV."""
    rows = []
    for report in reports:
        data = report.model_dump(mode="json", by_alias=True)
        rows.append({
            "name": data["name"],
            "samples": data["samples"],
            "worst_ratio": data["worst_ratio"],
            "fitted_exponent": data["fitted_exponent"],
            "pass": data["pass"],
        })
    return rows
