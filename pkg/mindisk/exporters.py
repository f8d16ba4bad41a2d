"""File formats: OBJ meshes, CSV tables, JSON reports and the run manifest.

Every writer goes through ``atomic_write`` so a crashed run never leaves a
half-written artifact, and floats are written with 17 significant digits.
"""

import hashlib
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import ShapeMismatchError, UsageError
from .multigraph import MultiGraph
from .settings import ARTIFACT_VERSION, FLOAT_DIGITS

logger = logging.getLogger(__name__)

FLOAT_FORMAT = f"%.{FLOAT_DIGITS}g"
MANIFEST_NAME = "manifest.json"


def atomic_write(path, text: str) -> Path:
    """Write text to a temp file in the target directory, then rename it into place"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def sha256_of_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _fmt(value: float) -> str:
    return FLOAT_FORMAT % value


# ---------------------------------------------------------------------------
# OBJ
# ---------------------------------------------------------------------------

def obj_text(vertices: np.ndarray, faces: np.ndarray) -> str:
    lines = [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in np.asarray(vertices, dtype=float)]
    lines += [f"f {i + 1} {j + 1} {k + 1}" for i, j, k in np.asarray(faces, dtype=np.int64)]
    return "\n".join(lines) + "\n"


def write_obj(path, vertices: np.ndarray, faces: np.ndarray) -> Path:
    """Vertex lines then 1-based triangle lines"""
    return atomic_write(path, obj_text(vertices, faces))


def read_obj(path) -> Tuple[np.ndarray, np.ndarray]:
    """Vertices and 0-based faces of a triangle OBJ; ``f a/b/c`` forms keep the vertex index"""
    vertices: List[List[float]] = []
    faces: List[List[int]] = []
    try:
        with Path(path).open(encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                parts = line.split()
                if not parts or parts[0].startswith("#"):
                    continue
                if parts[0] == "v":
                    vertices.append([float(p) for p in parts[1:4]])
                elif parts[0] == "f":
                    if len(parts) != 4:
                        raise UsageError(f"{path}:{number}: only triangle faces are supported")
                    faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    except OSError as exc:
        raise UsageError(f"cannot read mesh {path}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"malformed OBJ file {path}: {exc}") from exc
    if not vertices or not faces:
        raise UsageError(f"{path} holds no triangle mesh")
    return np.asarray(vertices, dtype=float), np.asarray(faces, dtype=np.int64)


# ---------------------------------------------------------------------------
# CSV and JSON
# ---------------------------------------------------------------------------

def write_csv(path, frame: pd.DataFrame) -> Path:
    return atomic_write(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))


def read_csv(path, required: Optional[List[str]] = None) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise UsageError(f"cannot read table {path}: {exc}") from exc
    missing = [c for c in (required or []) if c not in frame.columns]
    if missing:
        raise UsageError(f"{path} is missing columns {missing}")
    return frame


def points_frame(points) -> pd.DataFrame:
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    return pd.DataFrame({"x": P[:, 0], "y": P[:, 1], "z": P[:, 2]})


def fit_report_frame(rows: List[Dict]) -> pd.DataFrame:
    """Rows for the fit table: rho0, alpha_hat, c_hat, residual, kind"""
    columns = ["rho0", "alpha_hat", "c_hat", "residual", "kind"]
    return pd.DataFrame([{c: row.get(c) for c in columns} for row in rows], columns=columns)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    return value


def json_text(payload) -> str:
    # insertion order is the field order of each report's to_dict
    return json.dumps(_jsonable(payload), indent=2, ensure_ascii=False) + "\n"


def write_json(path, payload) -> Path:
    return atomic_write(path, json_text(payload))


def read_json(path) -> dict:
    try:
        with Path(path).open(encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise UsageError(f"{path} must hold a JSON object")
    return payload


def read_multigraph_csv(path, r_in: float, r_out: float, sheets: int) -> MultiGraph:
    """Rebuild a MultiGraph from a ``rho,theta,u`` table written by ``solve``"""
    frame = read_csv(path, ["rho", "theta", "u"]).sort_values(["rho", "theta"], kind="stable")
    n_rho = frame["rho"].nunique()
    n_theta = frame["theta"].nunique()
    if n_rho * n_theta != len(frame):
        raise ShapeMismatchError(f"{path} is not a full (rho, theta) grid")
    u = frame["u"].to_numpy().reshape(n_rho, n_theta)
    center = 0.5 * (frame["theta"].min() + frame["theta"].max())
    return MultiGraph(r_in, r_out, sheets, u, theta_center=float(center))


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    config: dict
    version: str = ARTIFACT_VERSION
    started: float = field(default_factory=time.time)
    wall_clock: float = 0.0
    outputs: Dict[str, str] = field(default_factory=dict)

    def record(self, path) -> None:
        path = Path(path)
        self.outputs[path.name] = sha256_of_file(path)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "wall_clock": self.wall_clock,
            "outputs": dict(sorted(self.outputs.items())),
        }

    def write(self, directory) -> Path:
        """Manifest lands next to the outputs; wall-clock is not part of the checksums"""
        self.wall_clock = time.time() - self.started
        path = write_json(Path(directory) / MANIFEST_NAME, self.to_dict())
        logger.info("manifest with %d outputs written to %s", len(self.outputs), path)
        return path
