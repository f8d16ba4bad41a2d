"""Ready-made surface pieces and sequences.

Rescaled helicoids and catenoids clipped to balls, flat plane disks, the
sequences built from them, and the sublinear-growth study on solved
multi-valued graphs.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from .disk_sample import DiskSample
from .errors import UsageError
from .multigraph import fit_sublinear_exponent, separation
from .mse_solver import SolverConfig, perturbed_helicoid_problem, solve
from .structure_verify import SurfaceSequence
from .surface_core import graph_from_function, make_catenoid, make_helicoid

logger = logging.getLogger(__name__)

# parameter domains overshoot the ball by this factor before clipping
OVERSHOOT = 1.05
SINH_STRETCH = 3.0


def sinh_nodes(extent: float, half_count: int, stretch: float = SINH_STRETCH) -> np.ndarray:
    """Symmetric nodes on [-extent, extent], dense near 0, with 0 included"""
    u = np.linspace(-1.0, 1.0, 2 * half_count + 1)
    nodes = extent * np.sinh(stretch * u) / np.sinh(stretch)
    nodes[half_count] = 0.0
    return nodes


def helicoid_disk(
    a: float,
    radius: float = 1.0,
    n_per_turn: int = 64,
    half_count: int = 64,
    center: Sequence[float] = (0.0, 0.0, 0.0),
    snap: bool = True,
) -> DiskSample:
    """
    Helicoid of scale a clipped to B_radius(center).

    Args:
        a: Helicoid scale; the pitch is 2*pi*a
        radius: Ball radius
        n_per_turn: t nodes per full turn; t = 0 and every multiple of pi/2 are nodes when divisible by 4
        half_count: s nodes on each side of the axis
        center: Ball centre
        snap: Snap boundary vertices onto the sphere

    Returns:
        DiskSample
    """
    if a <= 0 or radius <= 0:
        raise UsageError("helicoid scale and ball radius must be positive")
    s = sinh_nodes(OVERSHOOT * radius / a, half_count)
    dt = 2.0 * np.pi / n_per_turn
    turns = int(np.ceil(OVERSHOOT * radius / (a * dt)))
    t = dt * np.arange(-turns, turns + 1)
    patch = make_helicoid(s_values=s, t_values=t, scale=a)
    return DiskSample.from_patch(patch, center, radius, snap=snap)


def catenoid_disk(
    a: float,
    radius: float = 1.0,
    n_s: int = 128,
    n_t: int = 64,
    center: Sequence[float] = (0.0, 0.0, 0.0),
    snap: bool = True,
) -> DiskSample:
    """Catenoid of scale a in B_radius(center); an annulus, so the topology check is overridden"""
    if a <= 0 or radius <= 0:
        raise UsageError("catenoid scale and ball radius must be positive")
    extent = float(np.arccosh(max(OVERSHOOT * radius / a, 1.0 + 1e-12)))
    patch = make_catenoid(s_range=(-extent, extent), n_s=n_s, n_t=n_t, scale=a)
    return DiskSample.from_patch(patch, center, radius, periodic_t=True, snap=snap, topology_override=True)


def plane_disk(radius: float = 1.0, n: int = 128, height: float = 0.0, snap: bool = True) -> DiskSample:
    """The plane {x3 = height} clipped to the ball about (0, 0, height)"""
    extent = OVERSHOOT * radius
    patch = graph_from_function(lambda X, Y: np.full_like(X, height), (-extent, extent), (-extent, extent), n, n)
    return DiskSample.from_patch(patch, (0.0, 0.0, height), radius, snap=snap)


def _radii(count: int) -> List[float]:
    return [1.2 + 0.05 * j for j in range(1, count + 1)]


def _scales(count: int) -> List[float]:
    return [2.0 ** -j for j in range(1, count + 1)]


def rescaled_helicoids(count: int = 6, n_per_turn: int = 64, half_count: int = 64) -> SurfaceSequence:
    """Helicoids with a_j = 2^-j in balls of slowly growing radius"""
    scales, radii = _scales(count), _radii(count)
    samples = [helicoid_disk(a, R, n_per_turn, half_count, snap=False) for a, R in zip(scales, radii)]
    return SurfaceSequence(tuple(samples), tuple(scales), tuple(radii), label="rescaled-helicoid")


def rescaled_catenoids(count: int = 6, n_s: int = 128, n_t: int = 64) -> SurfaceSequence:
    scales, radii = _scales(count), _radii(count)
    samples = [catenoid_disk(a, R, n_s, n_t, snap=False) for a, R in zip(scales, radii)]
    return SurfaceSequence(tuple(samples), tuple(scales), tuple(radii), label="rescaled-catenoid")


def constant_planes(count: int = 6, n: int = 128) -> SurfaceSequence:
    radii = _radii(count)
    samples = [plane_disk(R, n, snap=False) for R in radii]
    return SurfaceSequence(tuple(samples), tuple([1.0] * count), tuple(radii), label="plane")


FAMILIES = {
    "rescaled-helicoid": rescaled_helicoids,
    "rescaled-catenoid": rescaled_catenoids,
    "plane": constant_planes,
}

# indices that cannot yet witness the blow-up at the default probe radius
BURN_IN = {"rescaled-helicoid": 0, "rescaled-catenoid": 4, "plane": 0}


def build_family(name: str, count: int) -> SurfaceSequence:
    try:
        builder = FAMILIES[name]
    except KeyError as exc:
        raise UsageError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from exc
    if count < 1:
        raise UsageError("a family needs at least one member")
    return builder(count)


def sublinear_trend_study(
    sheet_counts: Sequence[int] = (4, 8, 16),
    amplitude: float = 2.0,
    rho0: float = 1.0,
    rho_max: float = float(np.exp(5.0)),
    config: Optional[SolverConfig] = None,
) -> List[Dict]:
    """
    Solve the perturbed-helicoid problem for each sheet count and fit the growth exponent.

    Returns:
        One dict per sheet count: sheets, alpha_hat, residual, envelope_holds, converged, iterations
    """
    rows = []
    for sheets in sheet_counts:
        domain, boundary = perturbed_helicoid_problem(sheets, amplitude)
        g, report = solve(domain, boundary, config)
        fit = fit_sublinear_exponent(separation(g), rho0, rho_max * (1.0 + 1e-12))
        logger.info("N = %d: alpha_hat = %.4g", sheets, fit.alpha_hat)
        rows.append({
            "sheets": int(sheets),
            "alpha_hat": fit.alpha_hat,
            "residual": fit.residual,
            "envelope_holds": fit.envelope_holds,
            "converged": report.converged,
            "iterations": report.iterations,
        })
    return rows
