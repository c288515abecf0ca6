"""
Binary field checkpoints and trajectory directories.

A field file is a 32-byte little-endian header followed by the node values as
float64 in row-major order:

    magic "FMFG" | u32 version | u32 d | u32 n | f64 s | f64 time

A trajectory directory holds one field file per time level plus manifest.json
with {T, Nt, s, sigma, kind, files} and the provenance of the run.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from fmfg.semigroup import Trajectory
from fmfg.spectral_core import PeriodicGrid, SpectralField, make_grid

logger = logging.getLogger(__name__)

MAGIC = b"FMFG"
FORMAT_VERSION = 1
HEADER_DTYPE = np.dtype([
    ("magic", "S4"),
    ("version", "<u4"),
    ("d", "<u4"),
    ("n", "<u4"),
    ("s", "<f8"),
    ("time", "<f8"),
])
MANIFEST_NAME = "manifest.json"


class FieldFormatError(ValueError):
    """Field file does not match the checkpoint format or the expected grid."""


@dataclass(frozen=True)
class FieldHeader:
    version: int
    d: int
    n: int
    s: float
    time: float

    @property
    def grid(self) -> PeriodicGrid:
        return make_grid(self.d, self.n)


def _decode_header(raw: bytes, path: Path) -> FieldHeader:
    if len(raw) < HEADER_DTYPE.itemsize:
        raise FieldFormatError(f"{path}: unexpected EOF in header")
    header = np.frombuffer(raw[: HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
    if bytes(header["magic"]) != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {bytes(header['magic'])!r}")
    if int(header["version"]) != FORMAT_VERSION:
        raise FieldFormatError(f"{path}: unsupported version {int(header['version'])}")
    return FieldHeader(
        version=int(header["version"]),
        d=int(header["d"]),
        n=int(header["n"]),
        s=float(header["s"]),
        time=float(header["time"]),
    )


def save_field(f: SpectralField, path: Union[str, Path], s_exp: float = 0.0, time: float = 0.0) -> Path:
    """
    Write a field checkpoint.

    Examples:
        >>> grid = make_grid(1, 16)
        >>> save_field(SpectralField.constant(grid, 1.0), "/tmp/one.fmfg")
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = FORMAT_VERSION
    header["d"] = f.grid.d
    header["n"] = f.grid.n
    header["s"] = s_exp
    header["time"] = time
    with open(path, "wb") as handle:
        handle.write(header.tobytes())
        handle.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    return path


def read_header(path: Union[str, Path]) -> FieldHeader:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"field file not found: {path}")
    with open(path, "rb") as handle:
        return _decode_header(handle.read(HEADER_DTYPE.itemsize), path)


def load_field(path: Union[str, Path], expected_grid: Optional[PeriodicGrid] = None) -> SpectralField:
    """
    Read a field checkpoint; values are bit-identical to what was saved.

    Raises:
        FileNotFoundError: path does not exist
        FieldFormatError: bad magic, unsupported version, unexpected EOF, trailing
            bytes, or a grid different from expected_grid
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"field file not found: {path}")
    raw = path.read_bytes()
    header = _decode_header(raw, path)
    if expected_grid is not None and (header.d, header.n) != (expected_grid.d, expected_grid.n):
        raise FieldFormatError(
            f"{path}: dimension mismatch, file has d={header.d}, n={header.n}, "
            f"expected d={expected_grid.d}, n={expected_grid.n}"
        )
    try:
        grid = header.grid
    except ValueError as exc:
        raise FieldFormatError(f"{path}: invalid grid in header ({exc})") from exc

    payload = raw[HEADER_DTYPE.itemsize:]
    expected = grid.size * 8
    if len(payload) < expected:
        raise FieldFormatError(f"{path}: unexpected EOF, {len(payload)} of {expected} payload bytes")
    if len(payload) > expected:
        raise FieldFormatError(f"{path}: {len(payload) - expected} trailing bytes")
    values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape)
    return SpectralField(grid, values)


class TrajectoryManifest(BaseModel):
    T: float
    Nt: int
    s: float
    sigma: float
    kind: str
    files: List[str]
    provenance: Dict[str, Any] = Field(default_factory=dict)


def save_trajectory(
    traj: Trajectory,
    directory: Union[str, Path],
    s_exp: float,
    sigma: float,
    provenance: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write one checkpoint per time level and the JSON manifest."""
    if not isinstance(traj[0], SpectralField):
        raise ValueError("only scalar trajectories can be checkpointed")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for index, (t, f) in enumerate(zip(traj.times, traj)):
        name = f"{traj.kind}_{index:05d}.fmfg"
        save_field(f, directory / name, s_exp=s_exp, time=float(t))
        files.append(name)
    manifest = TrajectoryManifest(
        T=traj.T, Nt=traj.nt, s=s_exp, sigma=sigma, kind=traj.kind, files=files, provenance=provenance or {}
    )
    (directory / MANIFEST_NAME).write_text(
        json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info("saved %s trajectory (%d levels) to %s", traj.kind, len(traj), directory)
    return directory


def load_trajectory(directory: Union[str, Path], expected_grid: Optional[PeriodicGrid] = None) -> Trajectory:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"trajectory manifest not found: {manifest_path}")
    manifest = TrajectoryManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    if len(manifest.files) != manifest.Nt + 1:
        raise FieldFormatError(f"{manifest_path}: {len(manifest.files)} files for Nt={manifest.Nt}")

    fields = []
    times = []
    for name in manifest.files:
        path = directory / name
        fields.append(load_field(path, expected_grid or (fields[0].grid if fields else None)))
        times.append(read_header(path).time)
    return Trajectory(np.asarray(times), tuple(fields), kind=manifest.kind)
