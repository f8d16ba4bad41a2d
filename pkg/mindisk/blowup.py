"""Blow-up pairs: points of curvature concentration at their natural scale.

Given a surface piece through x in B_{r0}(x) with |A|^2(x) >= 4 C^2 / r0^2,
the maximiser y of F(z) = (r0 - |z - x|)^2 |A|^2(z) together with
s = C / |A|(y) satisfies

    sup over B_{m s}(y) of |A|^2 <= 4 C^2 / s^2

for m = 1 and extrinsic balls. The same inequality is checked for larger
multiples and for balls measured along the surface.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.sparse.csgraph import dijkstra

from .disk_sample import DiskSample
from .errors import BallEscapeError, CurvatureTooSmallError, MismatchError, UsageError
from .multigraph import MultiGraph, separation

logger = logging.getLogger(__name__)

EXTRINSIC = "extrinsic"
INTRINSIC = "intrinsic"
BALL_MODES = (EXTRINSIC, INTRINSIC)

INTRINSIC_NOTE = (
    "intrinsic balls use shortest paths along mesh edges, which overestimate "
    "geodesic distance; the sampled ball is contained in the true one"
)


@dataclass(frozen=True)
class BlowUpPair:
    y_index: int
    y: np.ndarray
    s: float
    C: float
    mode: str = EXTRINSIC
    multiple: float = 1.0


@dataclass
class PairReport:
    pair: BlowUpPair
    margins: dict
    sup_A2: float
    ball_vertices: int
    center_F: Optional[float] = None
    boundary_F_max: Optional[float] = None
    warnings: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v >= 0 for v in self.margins.values())

    def to_dict(self) -> dict:
        return {
            "y_index": self.pair.y_index,
            "y_position": [float(c) for c in self.pair.y],
            "s": self.pair.s,
            "C": self.pair.C,
            "mode": self.pair.mode,
            "multiple": self.pair.multiple,
            "margins": dict(self.margins),
            "sup_A2": self.sup_A2,
            "ball_vertices": self.ball_vertices,
            "warnings": list(self.warnings),
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class SeparationRatioReport:
    min_ratio: float
    max_ratio: float
    window: Optional[Tuple[float, float]]

    @property
    def within_window(self) -> Optional[bool]:
        if self.window is None:
            return None
        lo, hi = self.window
        return bool(lo <= self.min_ratio and self.max_ratio <= hi)

    def to_dict(self) -> dict:
        return {
            "min_ratio": self.min_ratio,
            "max_ratio": self.max_ratio,
            "window": list(self.window) if self.window else None,
            "within_window": self.within_window,
        }


def concentration_function(disk: DiskSample) -> np.ndarray:
    """F(z) = (r0 - r(z))^2 |A|^2(z) with r(z) = |z - x| capped at r0"""
    r = np.minimum(disk.distances_from_center(), disk.radius)
    return (disk.radius - r) ** 2 * disk.A2


def _ball(disk: DiskSample, index: int, radius: float, mode: str) -> np.ndarray:
    if mode == EXTRINSIC:
        tree = cKDTree(disk.vertices)
        return np.asarray(sorted(tree.query_ball_point(disk.vertices[index], radius)), dtype=np.int64)
    if mode == INTRINSIC:
        dist = dijkstra(disk.graph, directed=False, indices=index, limit=radius)
        inside = np.isfinite(dist) & (dist <= radius)
        if np.any(inside & disk.boundary):
            raise BallEscapeError(
                f"intrinsic ball of radius {radius:.6g} around vertex {index} reaches the mesh boundary"
            )
        return np.flatnonzero(inside)
    raise UsageError(f"unknown ball mode {mode!r}")


def verify_pair(disk: DiskSample, pair: BlowUpPair) -> PairReport:
    """
    Re-check the defining inequalities of a blow-up pair on the mesh.

    Args:
        disk: The surface piece
        pair: The pair to verify

    Returns:
        PairReport with normalized margins (nonnegative when the inequality holds)
    """
    ball = _ball(disk, pair.y_index, pair.multiple * pair.s, pair.mode)
    bound = 4.0 * pair.C ** 2 / pair.s ** 2
    sup_A2 = float(disk.A2[ball].max()) if ball.size else 0.0
    dist_to_center = float(np.linalg.norm(pair.y - disk.center))
    margins = {"sup_bound": 1.0 - sup_A2 / bound}
    if pair.mode == EXTRINSIC:
        margins["half_distance"] = (0.5 * (disk.radius - dist_to_center) - pair.s) / disk.radius
    report = PairReport(pair, margins, sup_A2, int(ball.size))
    if pair.mode == INTRINSIC:
        report.notes.append(INTRINSIC_NOTE)
    for name, value in margins.items():
        if value < 0:
            message = f"{name} margin {value:.3e} is negative at mesh scale"
            logger.warning(message)
            report.warnings.append(message)
    return report


def find_blowup_pair(
    disk: DiskSample,
    C: float,
    mode: str = EXTRINSIC,
    multiple: float = 1.0,
) -> Tuple[BlowUpPair, PairReport]:
    """
    Construct the blow-up pair (y, s) from the maximiser of F.

    Args:
        disk: Surface piece in B_{r0}(x), x its centre
        C: Scale constant, C > 0
        mode: ``extrinsic`` or ``intrinsic`` ball for the verification
        multiple: Ball multiple m

    Returns:
        (BlowUpPair, PairReport)

    Raises:
        CurvatureTooSmallError: |A|^2(x) < 4 C^2 / r0^2
    """
    if C <= 0 or multiple <= 0:
        raise UsageError("C and the ball multiple must be positive")
    x = disk.center_index
    bound = 4.0 * C * C
    ratio = float(disk.A2[x] * disk.radius ** 2 / bound)
    if ratio < 1.0:
        raise CurvatureTooSmallError(ratio)

    F = concentration_function(disk)
    y = int(np.argmax(F))
    s = float(C / np.sqrt(disk.A2[y]))
    pair = BlowUpPair(y, disk.vertices[y].copy(), s, float(C), mode, float(multiple))
    report = verify_pair(disk, pair)

    report.center_F = float(F[x])
    report.margins["center_F"] = (F[x] - bound) / bound
    boundary_F = F[disk.boundary]
    report.boundary_F_max = float(boundary_F.max()) if boundary_F.size else 0.0
    if report.boundary_F_max > 1e-12 * F[y]:
        message = f"F does not vanish on the boundary (max {report.boundary_F_max:.3e})"
        logger.warning(message)
        report.warnings.append(message)
    if report.margins["center_F"] < 0:
        message = "F(x) < 4C^2: the centre vertex is off the ball centre"
        logger.warning(message)
        report.warnings.append(message)
    logger.info("blow-up pair at vertex %d, s = %.6g", y, s)
    return pair, report


def initial_separation_check(
    disk: DiskSample,
    pair: BlowUpPair,
    g: MultiGraph,
    window: Optional[Tuple[float, float]] = None,
    rtol: float = 1e-9,
) -> SeparationRatioReport:
    """Ratio |w(s, theta)| / s on the inner circle of a multi-valued graph at y.

    The graph must start at the pair's scale: r_in = s.
    """
    if abs(g.r_in - pair.s) > rtol * pair.s:
        raise MismatchError(f"graph inner radius {g.r_in:.9g} does not match the pair scale {pair.s:.9g}")
    w = np.abs(separation(g).w[0])
    ratios = w / pair.s
    report = SeparationRatioReport(float(ratios.min()), float(ratios.max()), tuple(window) if window else None)
    if report.within_window is False:
        logger.warning("initial separation ratio [%.4g, %.4g] outside %s", report.min_ratio, report.max_ratio, window)
    return report
