"""Checks of the limit picture for sequences of embedded minimal disks.

Covers the curvature blow-up set, the cone property and the Lipschitz
curve through it, the one-sided curvature estimate, the splitting into two
multi-valued graphs away from the singular curve, and convergence to the
foliation by horizontal planes. Failed properties go into the reports;
only violated preconditions raise.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.spatial import cKDTree

from .disk_sample import DiskSample, edge_graph, face_components, unique_edges
from .errors import HypothesisError, InvalidRegionError, NonGraphError, UsageError
from .settings import THRESHOLD_BASE, worker_count

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
# relative slack on window ends so that grid-aligned levels count
LEVEL_RTOL = 1e-9
MONODROMY_TOL = 1e-6


def _json_float(value: float):
    return value if np.isfinite(value) else str(value)


def _ordered_map(func: Callable[[int], object], count: int) -> list:
    """Run func over range(count) on a thread pool; results in index order."""
    workers = max(1, min(worker_count(), count))
    if workers == 1:
        return [func(j) for j in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, range(count)))


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurfaceSequence:
    samples: Tuple[DiskSample, ...]
    scales: Tuple[float, ...]
    radii: Tuple[float, ...]
    label: str = "custom"

    def __post_init__(self):
        if not self.samples:
            raise UsageError("surface sequence is empty")
        if not len(self.samples) == len(self.scales) == len(self.radii):
            raise UsageError("samples, scales and radii must have the same length")
        if any(a <= 0 for a in self.scales):
            raise UsageError("sequence scales must be positive")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise UsageError("enclosing radii must be strictly increasing")
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "scales", tuple(float(a) for a in self.scales))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class SingularSet:
    points: np.ndarray
    witnesses: np.ndarray
    thresholds: np.ndarray
    burn_in: int
    probe_step: float
    radius: float

    @property
    def curvature_unbounded(self) -> bool:
        return self.points.shape[0] > 0

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "witnesses": self.witnesses.tolist(),
            "thresholds": self.thresholds.tolist(),
            "burn_in": self.burn_in,
            "probe_step": self.probe_step,
            "radius": self.radius,
            "curvature_unbounded": self.curvature_unbounded,
        }


@dataclass
class ConeReport:
    delta: float
    epsilon: float
    slack: float
    negative_margins: List[Tuple[int, int, float]] = field(default_factory=list)
    negative_count: int = 0
    exempt_levels: List[float] = field(default_factory=list)
    missing_above: List[float] = field(default_factory=list)
    missing_below: List[float] = field(default_factory=list)
    lipschitz_estimate: float = 0.0

    @property
    def cone_condition(self) -> bool:
        return self.negative_count == 0

    @property
    def accumulation_condition(self) -> bool:
        return not self.missing_above and not self.missing_below

    @property
    def lipschitz_within_bound(self) -> bool:
        return self.lipschitz_estimate <= 1.0 / self.delta + self.slack

    @property
    def passed(self) -> bool:
        return self.cone_condition and self.accumulation_condition

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "epsilon": self.epsilon,
            "slack": self.slack,
            "passed": self.passed,
            "cone_condition": self.cone_condition,
            "accumulation_condition": self.accumulation_condition,
            "negative_count": self.negative_count,
            "negative_margins": [[i, j, m] for i, j, m in self.negative_margins],
            "exempt_levels": list(self.exempt_levels),
            "missing_above": list(self.missing_above),
            "missing_below": list(self.missing_below),
            "lipschitz_estimate": _json_float(self.lipschitz_estimate),
            "lipschitz_bound": 1.0 / self.delta,
            "lipschitz_within_bound": self.lipschitz_within_bound,
        }


@dataclass(frozen=True)
class SingularCurve:
    """One centre per level. ``max_horizontal_offset`` is measured from the x3-axis."""

    levels: np.ndarray
    centers: np.ndarray
    lipschitz: float
    max_horizontal_offset: float
    delta: float = 1.0
    slack: float = 0.0

    @property
    def within_bound(self) -> bool:
        return self.lipschitz <= 1.0 / self.delta + self.slack

    def to_dict(self) -> dict:
        return {
            "levels": self.levels.tolist(),
            "centers": self.centers.tolist(),
            "lipschitz": self.lipschitz,
            "lipschitz_bound": 1.0 / self.delta,
            "within_bound": self.within_bound,
            "max_horizontal_offset": self.max_horizontal_offset,
        }


@dataclass(frozen=True)
class ComponentCheck:
    index: int
    vertex_count: int
    sup_A2_r0sq: float
    is_graph: bool

    @property
    def curvature_pass(self) -> bool:
        return self.sup_A2_r0sq <= 1.0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "vertex_count": self.vertex_count,
            "sup_A2_r0sq": self.sup_A2_r0sq,
            "curvature_pass": self.curvature_pass,
            "is_graph": self.is_graph,
        }


@dataclass(frozen=True)
class OneSidedReport:
    r0: float
    epsilon: float
    components: List[ComponentCheck]
    ignored_components: int

    @property
    def passed(self) -> bool:
        return all(c.curvature_pass and c.is_graph for c in self.components)

    def to_dict(self) -> dict:
        return {
            "r0": self.r0,
            "epsilon": self.epsilon,
            "passed": self.passed,
            "components": [c.to_dict() for c in self.components],
            "ignored_components": self.ignored_components,
        }


@dataclass(frozen=True)
class ComponentCensus:
    index: int
    vertex_count: int
    injective: bool
    ordering_consistent: bool
    closed: bool
    turns: int
    separations: np.ndarray

    @property
    def is_multigraph(self) -> bool:
        return self.injective and self.ordering_consistent

    def to_dict(self) -> dict:
        seps = self.separations
        return {
            "index": self.index,
            "vertex_count": self.vertex_count,
            "is_multigraph": self.is_multigraph,
            "injective": self.injective,
            "ordering_consistent": self.ordering_consistent,
            "closed": self.closed,
            "turns": self.turns,
            "min_separation": float(seps.min()) if seps.size else None,
            "max_separation": float(seps.max()) if seps.size else None,
        }


@dataclass(frozen=True)
class Census:
    apex: np.ndarray
    components: List[ComponentCensus]
    fragments: int

    @property
    def component_count(self) -> int:
        return len(self.components)

    @property
    def separations(self) -> np.ndarray:
        parts = [c.separations for c in self.components if c.separations.size]
        return np.concatenate(parts) if parts else np.zeros(0)

    def to_dict(self) -> dict:
        return {
            "apex": self.apex.tolist(),
            "component_count": self.component_count,
            "fragments": self.fragments,
            "components": [c.to_dict() for c in self.components],
        }


@dataclass(frozen=True)
class FoliationReport:
    rho_min: float
    rho_max: float
    z_half: float
    leaf_distance: List[float]
    tilt: List[float]
    component_counts: List[int]
    closed_sheets: List[int]

    @property
    def multiplicity(self) -> int:
        """Closed graph sheets collapsing onto the leaf at the last index"""
        return self.closed_sheets[-1]

    def to_dict(self) -> dict:
        return {
            "region": {"rho_min": self.rho_min, "rho_max": self.rho_max, "z_half": self.z_half},
            "leaf_distance": list(self.leaf_distance),
            "tilt": list(self.tilt),
            "component_counts": list(self.component_counts),
            "closed_sheets": list(self.closed_sheets),
            "multiplicity": self.multiplicity,
        }


# ---------------------------------------------------------------------------
# Blow-up set
# ---------------------------------------------------------------------------

def probe_grid(bounds: Sequence[float], step: float, jitter: float = 0.0, seed: int = 0) -> np.ndarray:
    """Cubic probe lattice over [lo, hi]^3, optionally jittered by a seeded fraction of the step"""
    lo, hi = float(bounds[0]), float(bounds[1])
    if step <= 0 or hi < lo:
        raise UsageError(f"invalid probe grid [{lo}, {hi}] with step {step}")
    count = int(round((hi - lo) / step)) + 1
    axis = np.linspace(lo, hi, count)
    X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
    probes = np.stack((X.ravel(), Y.ravel(), Z.ravel()), axis=1)
    if jitter > 0:
        rng = np.random.default_rng(seed)
        probes = probes + rng.uniform(-jitter, jitter, size=probes.shape) * step
    return probes


def _ball_sup(disk: DiskSample, probes: np.ndarray, radius: float) -> np.ndarray:
    tree = cKDTree(disk.vertices)
    hits = tree.query_ball_point(probes, radius)
    return np.array([disk.A2[h].max() if h else 0.0 for h in hits])


def blowup_set(
    seq: SurfaceSequence,
    radius: Optional[float] = None,
    thresholds: Optional[Sequence[float]] = None,
    burn_in: int = 0,
    probe_bounds: Sequence[float] = (-0.5, 0.5),
    probe_step: float = 0.1,
    jitter: float = 0.0,
    seed: int = 0,
) -> SingularSet:
    """
    Probe points where |A|^2 exceeds the threshold schedule for every index past burn-in.

    Args:
        seq: Surface sequence
        radius: Ball radius around each probe (default half the probe step)
        thresholds: Strictly increasing T_j (default 4^j, j = 1..len(seq))
        burn_in: Number of leading indices not required to exceed their threshold
        probe_bounds, probe_step: Cubic probe lattice
        jitter, seed: Seeded probe jitter as a fraction of the step

    Returns:
        SingularSet of the probe points that qualify
    """
    radius = 0.5 * probe_step if radius is None else float(radius)
    if radius <= 0:
        raise UsageError("probe radius must be positive")
    if thresholds is None:
        thresholds = THRESHOLD_BASE ** np.arange(1, len(seq) + 1)
    thresholds = np.asarray(thresholds, dtype=float)
    if thresholds.size != len(seq):
        raise UsageError(f"{thresholds.size} thresholds for {len(seq)} surfaces")
    if np.any(np.diff(thresholds) <= 0):
        raise UsageError("thresholds must be strictly increasing")
    if not 0 <= burn_in < len(seq):
        raise UsageError(f"burn-in {burn_in} leaves no index to test")

    probes = probe_grid(probe_bounds, probe_step, jitter, seed)
    sups = _ordered_map(lambda j: _ball_sup(seq.samples[j], probes, radius), len(seq))
    witnesses = np.stack(sups, axis=1)
    member = np.all(witnesses[:, burn_in:] >= thresholds[burn_in:], axis=1)
    logger.info("blow-up set: %d of %d probes", int(member.sum()), probes.shape[0])
    return SingularSet(probes[member], witnesses[member], thresholds, burn_in, float(probe_step), radius)


# ---------------------------------------------------------------------------
# Cone property and the singular curve
# ---------------------------------------------------------------------------

def cone_membership(p: Sequence[float], x: Sequence[float], delta: float) -> float:
    """Margin (p3-x3)^2 - delta^2 |p' - x'|^2; p lies in the cone at x iff it is >= 0"""
    if delta <= 0:
        raise UsageError(f"cone aperture delta must be positive, got {delta}")
    d = np.asarray(p, dtype=float) - np.asarray(x, dtype=float)
    return float(d[2] ** 2 - delta ** 2 * (d[0] ** 2 + d[1] ** 2))


def cone_property_check(
    points,
    delta: float,
    epsilon: float,
    levels: Optional[Sequence[float]] = None,
    slack: float = 0.0,
    max_listed: int = 100,
) -> ConeReport:
    """
    Check that a point set lies in the delta-cone of each of its points and
    accumulates from above and below at every sampled level.

    Args:
        points: (n, 3) array, nonempty
        delta: Cone aperture
        epsilon: Window for the accumulation condition
        levels: Heights to test (default: the heights of the points)
        slack: Length slack; margins down to -(delta*slack)^2 are accepted
        max_listed: Cap on listed negative margins

    Returns:
        ConeReport
    """
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    if P.shape[0] == 0:
        raise UsageError("cone property needs a nonempty point set")
    if delta <= 0 or epsilon <= 0:
        raise UsageError("delta and epsilon must be positive")
    report = ConeReport(float(delta), float(epsilon), float(slack))

    dz = P[None, :, 2] - P[:, None, 2]
    dh = np.hypot(P[None, :, 0] - P[:, None, 0], P[None, :, 1] - P[:, None, 1])
    margins = dz ** 2 - delta ** 2 * dh ** 2
    floor = -(delta * slack) ** 2 - 1e-12 * (1.0 + np.max(np.abs(P))) ** 2
    bad = np.argwhere(margins < floor)
    report.negative_count = int(bad.shape[0])
    report.negative_margins = [(int(i), int(j), float(margins[i, j])) for i, j in bad[:max_listed]]

    off_diagonal = ~np.eye(P.shape[0], dtype=bool)
    flat = off_diagonal & (dz == 0)
    if np.any(flat & (dh > 0)):
        report.lipschitz_estimate = float("inf")
    else:
        steep = off_diagonal & (dz != 0)
        report.lipschitz_estimate = float(np.max(dh[steep] / np.abs(dz[steep]))) if np.any(steep) else 0.0

    z = P[:, 2]
    levels = np.unique(z) if levels is None else np.asarray(levels, dtype=float)
    reach = epsilon * (1.0 + LEVEL_RTOL)
    for t in levels:
        if t <= z.min() or t >= z.max():
            report.exempt_levels.append(float(t))
            continue
        if not np.any((z > t) & (z <= t + reach)):
            report.missing_above.append(float(t))
        if not np.any((z >= t - reach) & (z < t)):
            report.missing_below.append(float(t))
    if report.negative_count:
        logger.info("cone condition fails for %d ordered pairs", report.negative_count)
    return report


def lipschitz_parameterize(
    points,
    delta: float = 1.0,
    level_tol: Optional[float] = None,
    slack: Optional[float] = None,
) -> SingularCurve:
    """Bucket points by height and return one centre per level, ordered by height.

    Raises NonGraphError when a level holds more than one cluster, clusters
    being linked at distance 2*slack/delta.
    """
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    if P.shape[0] == 0:
        raise UsageError("cannot parameterize an empty set")
    z = P[:, 2]
    if level_tol is None:
        gaps = np.diff(np.unique(z))
        level_tol = 0.5 * float(gaps.min()) if gaps.size else 1.0
    slack = level_tol if slack is None else slack
    link = 2.0 * slack / delta
    keys = np.floor(z / level_tol + 0.5).astype(np.int64)

    levels, centers = [], []
    for key in np.unique(keys):
        bucket = P[keys == key]
        if bucket.shape[0] > 1:
            dist = np.linalg.norm(bucket[:, None, :] - bucket[None, :, :], axis=2)
            if dist.max() > link:
                count, _ = connected_components(sparse.csr_matrix(dist <= link), directed=False)
                if count > 1:
                    raise NonGraphError(float(bucket[:, 2].mean()), count)
        levels.append(float(bucket[:, 2].mean()))
        centers.append(bucket.mean(axis=0))
    levels = np.asarray(levels)
    centers = np.asarray(centers)

    lipschitz = 0.0
    if centers.shape[0] > 1:
        dh = np.linalg.norm(np.diff(centers[:, :2], axis=0), axis=1)
        lipschitz = float(np.max(dh / np.abs(np.diff(levels))))
    offset = float(np.max(np.hypot(centers[:, 0], centers[:, 1])))
    return SingularCurve(levels, centers, lipschitz, offset, float(delta), float(slack))


# ---------------------------------------------------------------------------
# Mesh helpers for the graph checks
# ---------------------------------------------------------------------------

def _wrap(angle: np.ndarray) -> np.ndarray:
    return (angle + np.pi) % TWO_PI - np.pi


def unwrap_angles(theta: np.ndarray, edges: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Continuous lift of the polar angle over a connected vertex set.

    ``edges`` are local index pairs. Returns the lifted angles and whether the
    lift is consistent on every edge; an inconsistent lift means the
    component winds around the axis and the plain angle is returned.
    """
    n = theta.size
    if n == 1 or edges.size == 0:
        return theta.copy(), True
    graph = edge_graph(n, edges)
    order, parent = breadth_first_order(graph, 0, directed=False, return_predecessors=True)
    lifted = theta.copy()
    step = _wrap(theta[order[1:]] - theta[parent[order[1:]]])
    for v, d in zip(order[1:], step):
        lifted[v] = lifted[parent[v]] + d
    jump = lifted[edges[:, 1]] - lifted[edges[:, 0]] - _wrap(theta[edges[:, 1]] - theta[edges[:, 0]])
    if np.max(np.abs(jump)) > MONODROMY_TOL:
        return theta.copy(), False
    return lifted, True


def _half_min_step(values: np.ndarray, edges: np.ndarray) -> float:
    d = np.abs(values[edges[:, 0]] - values[edges[:, 1]])
    d = d[d > 1e-9]
    return 0.5 * float(d.min()) if d.size else 1.0


def _components(disk: DiskSample, keep: np.ndarray, min_fraction: float):
    """Connected pieces of the kept vertex set, split into components and fragments"""
    vertices, faces = disk.submesh(keep)
    if vertices.size == 0:
        return [], 0
    count, labels = face_components(disk.vertex_count, faces)
    labels = labels[vertices]
    minimum = max(8, int(min_fraction * vertices.size))
    pieces, fragments = [], 0
    all_edges = unique_edges(faces)[0]
    for label in np.unique(labels):
        members = vertices[labels == label]
        if members.size < minimum:
            fragments += 1
            continue
        local = np.full(disk.vertex_count, -1, dtype=np.int64)
        local[members] = np.arange(members.size)
        mask = local[all_edges[:, 0]] >= 0
        pieces.append((members, local[all_edges[mask]]))
    return pieces, fragments


def _census(index: int, disk: DiskSample, members: np.ndarray, edges: np.ndarray, apex: np.ndarray) -> ComponentCensus:
    rel = disk.vertices[members] - apex
    rho = np.hypot(rel[:, 0], rel[:, 1])
    log_rho = np.log(rho)
    lifted, consistent = unwrap_angles(np.arctan2(rel[:, 1], rel[:, 0]), edges)
    c_r = _half_min_step(log_rho, edges)
    c_t = _half_min_step(lifted, edges)
    key_r = np.floor(log_rho / c_r + 0.5).astype(np.int64)
    key_t = np.floor(lifted / c_t + 0.5).astype(np.int64)
    injective = np.unique(np.stack((key_r, key_t), axis=1), axis=0).shape[0] == members.size

    gaps = []
    for row in np.unique(key_r):
        idx = np.flatnonzero(key_r == row)
        order = idx[np.argsort(lifted[idx])]
        angles = lifted[order]
        target = angles + TWO_PI
        pos = np.clip(np.searchsorted(angles, target - c_t), 0, angles.size - 1)
        hit = np.abs(angles[pos] - target) <= c_t
        gaps.append(rel[order[pos[hit]], 2] - rel[order[hit], 2])
    gaps = np.concatenate(gaps) if gaps else np.zeros(0)
    ordering = bool(np.all(gaps > 0) or np.all(gaps < 0)) if gaps.size else True
    turns = int(np.ceil((lifted.max() - lifted.min()) / TWO_PI)) if consistent else 1
    return ComponentCensus(index, int(members.size), bool(injective), ordering, not consistent, turns, np.abs(gaps))


# ---------------------------------------------------------------------------
# One-sided curvature estimate
# ---------------------------------------------------------------------------

def one_sided_check(disk: DiskSample, r0: float, epsilon: float) -> OneSidedReport:
    """
    Curvature and graph check for the components of B_{r0} near the centre.

    Args:
        disk: Piece in {x3 > 0} with boundary on the sphere of radius 2*r0 about its centre
        r0: Inner radius
        epsilon: Components meeting B_{epsilon*r0} are checked

    Returns:
        OneSidedReport; passes iff every checked component has sup|A|^2 r0^2 <= 1 and is a graph

    Raises:
        HypothesisError: a vertex with x3 <= 0, boundary off the sphere, or a non-disk piece
    """
    if r0 <= 0 or not 0 < epsilon <= 1:
        raise UsageError("need r0 > 0 and 0 < epsilon <= 1")
    if np.any(disk.vertices[:, 2] <= 0):
        raise HypothesisError("surface is not contained in the half-space x3 > 0")
    outer = 2.0 * r0
    if abs(disk.radius - outer) > disk.max_edge or not disk.boundary_on_sphere(outer):
        raise HypothesisError(f"boundary does not lie on the sphere of radius 2*r0 = {outer:g}")
    disk.require_disk()

    dist = disk.distances_from_center()
    pieces, fragments = _components(disk, dist <= r0, 0.0)
    checks, ignored = [], fragments
    for k, (members, edges) in enumerate(pieces):
        if not np.any(dist[members] <= epsilon * r0):
            ignored += 1
            continue
        xy = disk.vertices[members, :2]
        horizontal = np.linalg.norm(xy[edges[:, 0]] - xy[edges[:, 1]], axis=1)
        horizontal = horizontal[horizontal > 1e-12]
        cell = 0.5 * float(horizontal.min()) if horizontal.size else 1.0
        keys = np.floor(xy / cell).astype(np.int64)
        is_graph = np.unique(keys, axis=0).shape[0] == members.size
        sup = float(disk.A2[members].max() * r0 * r0)
        checks.append(ComponentCheck(k, int(members.size), sup, bool(is_graph)))
    return OneSidedReport(float(r0), float(epsilon), checks, ignored)


# ---------------------------------------------------------------------------
# Two multi-valued graphs away from the singular curve
# ---------------------------------------------------------------------------

def two_graph_decomposition(
    disk: DiskSample,
    curve=None,
    delta0: float = 1.0,
    exclusion: float = 0.05,
    min_fraction: float = 0.005,
) -> Census:
    """
    Remove the cone around the curve and the exclusion ball, then census the rest.

    Args:
        disk: Surface piece
        curve: (m, 3) points of the singular curve; the x3-axis through the centre if None
        delta0: Cone aperture
        exclusion: Radius of the ball removed around the centre
        min_fraction: Pieces smaller than this share of kept vertices count as fragments

    Returns:
        Census with one entry per component
    """
    if curve is None:
        apex = disk.center.copy()
    else:
        curve = np.asarray(curve, dtype=float).reshape(-1, 3)
        apex = curve[np.argmin(np.linalg.norm(curve - disk.center, axis=1))]
    rel = disk.vertices - apex
    margin = rel[:, 2] ** 2 - delta0 ** 2 * (rel[:, 0] ** 2 + rel[:, 1] ** 2)
    keep = (margin < 0) & (np.linalg.norm(disk.vertices - disk.center, axis=1) > exclusion)
    pieces, fragments = _components(disk, keep, min_fraction)
    components = [_census(k, disk, members, edges, apex) for k, (members, edges) in enumerate(pieces)]
    if fragments:
        logger.debug("census ignored %d small fragments", fragments)
    return Census(apex, components, fragments)


# ---------------------------------------------------------------------------
# Foliation convergence
# ---------------------------------------------------------------------------

def _reference_heights(disk: DiskSample, axis_point: np.ndarray, rho_ref: float) -> np.ndarray:
    """Heights of the sheet points on the ray theta = 0 at the radius closest to rho_ref"""
    rel = disk.vertices - axis_point
    rho = np.hypot(rel[:, 0], rel[:, 1])
    theta = np.abs(np.arctan2(rel[:, 1], rel[:, 0]))
    valid = rho > 0
    tol = max(MONODROMY_TOL, float(theta[valid].min()) * (1.0 + LEVEL_RTOL))
    ray = valid & (theta <= tol)
    gap = np.abs(np.log(rho[ray]) - np.log(rho_ref))
    nearest = gap <= gap.min() + 1e-9
    return np.sort(rel[ray][nearest, 2])


def _leaf_distance(z: np.ndarray, leaves: np.ndarray) -> np.ndarray:
    pos = np.clip(np.searchsorted(leaves, z), 1, max(leaves.size - 1, 1))
    below = leaves[pos - 1]
    above = leaves[np.minimum(pos, leaves.size - 1)]
    return np.minimum(np.abs(z - below), np.abs(z - above))


def foliation_convergence(
    seq: SurfaceSequence,
    rho_min: float = 0.5,
    rho_max: float = 1.0,
    z_half: float = 0.5,
    tube_radius: float = 0.25,
    axis_point: Sequence[float] = (0.0, 0.0, 0.0),
) -> FoliationReport:
    """
    Distance to the horizontal foliation and tilt on an annular box K.

    K = {rho_min <= rho <= rho_max, |x3 - c3| <= z_half} around the vertical
    axis through ``axis_point``. Leaves are the planes through the sheet points
    on the ray theta = 0 at radius rho_min.

    Returns:
        FoliationReport with one entry per sequence index
    """
    if rho_min <= tube_radius:
        raise InvalidRegionError(
            f"region starts at rho = {rho_min:g}, inside the tube of radius {tube_radius:g} around the axis"
        )
    if rho_max <= rho_min or z_half <= 0:
        raise UsageError("region needs rho_max > rho_min and z_half > 0")
    axis_point = np.asarray(axis_point, dtype=float)

    def measure(j: int):
        disk = seq.samples[j]
        rel = disk.vertices - axis_point
        rho = np.hypot(rel[:, 0], rel[:, 1])
        in_box = (rho >= rho_min) & (rho <= rho_max) & (np.abs(rel[:, 2]) <= z_half)
        pieces, _ = _components(disk, in_box, 0.005)
        if not pieces:
            raise InvalidRegionError(
                f"member {j} has no surface in the region rho in [{rho_min:g}, {rho_max:g}], |x3| <= {z_half:g}"
            )
        members = np.concatenate([m for m, _ in pieces])
        leaves = _reference_heights(disk, axis_point, rho_min)
        distance = float(np.max(_leaf_distance(rel[members, 2], leaves)))
        tilt = float(np.max(np.arccos(np.clip(np.abs(disk.normals[members, 2]), 0.0, 1.0))))
        closed = 0
        for k, (m, e) in enumerate(pieces):
            census = _census(k, disk, m, e, axis_point)
            closed += int(census.closed and census.injective)
        return distance, tilt, len(pieces), closed

    results = _ordered_map(measure, len(seq))
    return FoliationReport(
        float(rho_min),
        float(rho_max),
        float(z_half),
        [r[0] for r in results],
        [r[1] for r in results],
        [r[2] for r in results],
        [r[3] for r in results],
    )
