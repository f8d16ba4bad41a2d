"""Sampled parametric surfaces and their discrete differential geometry.

A ParamPatch is a surface X(s, t) sampled on a rectangular parameter grid.
Derivatives come either from closed forms (``analytic``) or from central
differences on the positions (``central-difference``). Mean curvature uses
the convention H = div_S(n), so that moving the patch by t*phi*n changes
its area at rate  integral(phi * H).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.integrate import trapezoid
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import (
    ImmersionError,
    InvalidDomainError,
    InvalidRulingError,
    InvalidScaleError,
    NumericError,
    ShapeMismatchError,
    StepTooLargeError,
    UsageError,
)
from .settings import TOL_EIG, TOL_GEOM, TOL_H, TOL_VAR_ABS, TOL_VAR_REL

logger = logging.getLogger(__name__)

ANALYTIC = "analytic"
DIFFERENCE = "central-difference"
DERIV_MODES = (ANALYTIC, DIFFERENCE)
DERIVATIVE_KEYS = ("xs", "xt", "xss", "xst", "xtt")

# Node rows next to the boundary on which a variation field must vanish.
BOUNDARY_BAND = 3


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ParamPatch:
    """A surface sampled on the grid s x t.

    ``positions[i, j]`` is X(s[i], t[j]). ``derivatives`` holds the closed-form
    first and second derivatives when ``deriv_mode`` is analytic.
    """

    s: np.ndarray
    t: np.ndarray
    positions: np.ndarray
    deriv_mode: str = DIFFERENCE
    derivatives: Optional[Dict[str, np.ndarray]] = None
    kind: str = "custom"

    def __post_init__(self):
        s = _frozen(self.s)
        t = _frozen(self.t)
        positions = _frozen(self.positions)
        if s.ndim != 1 or t.ndim != 1 or s.size < 3 or t.size < 3:
            raise InvalidDomainError("a patch needs at least 2 intervals in each parameter")
        if positions.shape != (s.size, t.size, 3):
            raise ShapeMismatchError(
                f"positions shape {positions.shape} does not match grid {(s.size, t.size, 3)}"
            )
        if np.any(np.diff(s) <= 0) or np.any(np.diff(t) <= 0):
            raise InvalidDomainError("parameter nodes must be strictly increasing")
        if self.deriv_mode not in DERIV_MODES:
            raise UsageError(f"unknown derivative mode {self.deriv_mode!r}")
        derivatives = None
        if self.deriv_mode == ANALYTIC:
            if not self.derivatives or set(DERIVATIVE_KEYS) - set(self.derivatives):
                raise UsageError("analytic mode needs xs, xt, xss, xst and xtt")
            derivatives = {key: _frozen(self.derivatives[key]) for key in DERIVATIVE_KEYS}
            for key, value in derivatives.items():
                if value.shape != positions.shape:
                    raise ShapeMismatchError(f"derivative {key} has shape {value.shape}")
        elif not (_is_uniform(s) and _is_uniform(t)):
            raise InvalidDomainError("central differences need a uniform parameter grid")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "derivatives", derivatives)

    @property
    def grid(self) -> Tuple[int, int]:
        """(n_s, n_t): number of intervals in each parameter"""
        return self.s.size - 1, self.t.size - 1

    @property
    def param_rect(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        return (float(self.s[0]), float(self.s[-1])), (float(self.t[0]), float(self.t[-1]))

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.positions.shape[:2], dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask

    def band_mask(self, width: int = BOUNDARY_BAND) -> np.ndarray:
        """Nodes within ``width`` rows of the parameter boundary"""
        mask = np.zeros(self.positions.shape[:2], dtype=bool)
        mask[:width, :] = mask[-width:, :] = True
        mask[:, :width] = mask[:, -width:] = True
        return mask

    @property
    def vertex_count(self) -> int:
        return self.s.size * self.t.size


@dataclass(frozen=True)
class GeomData:
    """Per-node fundamental forms and curvatures of a ParamPatch"""

    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    e: np.ndarray
    f: np.ndarray
    g: np.ndarray
    H: np.ndarray
    K: np.ndarray
    A2: np.ndarray
    normal: np.ndarray
    area_element: np.ndarray

    @property
    def max_abs_H(self) -> float:
        return float(np.max(np.abs(self.H)))

    def identities_hold(self) -> bool:
        """H^2 - 4K >= 0 everywhere and |A|^2 = -2K wherever H vanishes, to TOL_GEOM relative to 1 + |K|."""
        scale = TOL_GEOM * (1.0 + np.abs(self.K))
        discriminant = self.H ** 2 - 4.0 * self.K >= -scale
        minimal = np.abs(self.H) <= TOL_H
        gauss = np.abs(self.A2 + 2.0 * self.K) <= scale
        return bool(np.all(discriminant) and np.all(gauss[minimal]))


@dataclass(frozen=True)
class VariationField:
    """A scalar field phi on the patch nodes, zero on the boundary band"""

    phi: np.ndarray
    support_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        phi = _frozen(self.phi)
        object.__setattr__(self, "phi", phi)
        support = phi != 0.0 if self.support_mask is None else np.asarray(self.support_mask, dtype=bool)
        object.__setattr__(self, "support_mask", support)


@dataclass(frozen=True)
class FirstVariation:
    numeric_derivative: float
    integral_phi_H: float
    tolerance: float

    @property
    def agrees(self) -> bool:
        return abs(self.numeric_derivative - self.integral_phi_H) <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "numeric_derivative": self.numeric_derivative,
            "integral_phi_H": self.integral_phi_H,
            "tolerance": self.tolerance,
            "agrees": self.agrees,
        }


@dataclass(frozen=True)
class SecondVariation:
    numeric_second_derivative: float
    jacobi_form: float

    def to_dict(self) -> dict:
        return {
            "numeric_second_derivative": self.numeric_second_derivative,
            "jacobi_form": self.jacobi_form,
        }


# ---------------------------------------------------------------------------
# Grids and difference stencils
# ---------------------------------------------------------------------------

def _is_uniform(values: np.ndarray) -> bool:
    steps = np.diff(values)
    return bool(np.allclose(steps, steps[0], rtol=1e-9, atol=0.0))


def parameter_axis(value_range: Sequence[float], n: int) -> np.ndarray:
    """Uniform parameter nodes over a closed interval with ``n`` intervals."""
    lo, hi = float(value_range[0]), float(value_range[1])
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        raise InvalidDomainError(f"degenerate parameter range [{lo}, {hi}]")
    if int(n) < 2:
        raise InvalidDomainError(f"resolution must be at least 2, got {n}")
    return np.linspace(lo, hi, int(n) + 1)


def first_difference(values: np.ndarray, step: float, axis: int) -> np.ndarray:
    """Second-order central difference, one-sided second order at the edges."""
    return np.gradient(values, step, axis=axis, edge_order=2)


def second_difference(values: np.ndarray, step: float, axis: int) -> np.ndarray:
    """Second derivative: three-point interior stencil, four-point one-sided edges"""
    f = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    out = np.empty_like(f)
    h2 = step * step
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h2
    if f.shape[0] >= 4:
        out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2
        out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / h2
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return np.moveaxis(out, 0, axis)


def difference_derivatives(positions: np.ndarray, s: np.ndarray, t: np.ndarray) -> Dict[str, np.ndarray]:
    hs = float(s[1] - s[0])
    ht = float(t[1] - t[0])
    xs = first_difference(positions, hs, axis=0)
    xt = first_difference(positions, ht, axis=1)
    return {
        "xs": xs,
        "xt": xt,
        "xss": second_difference(positions, hs, axis=0),
        "xst": first_difference(xs, ht, axis=1),
        "xtt": second_difference(positions, ht, axis=1),
    }


def patch_derivatives(patch: ParamPatch) -> Dict[str, np.ndarray]:
    if patch.deriv_mode == ANALYTIC:
        return patch.derivatives
    return difference_derivatives(patch.positions, patch.s, patch.t)


def grid_triangles(n_s: int, n_t: int) -> np.ndarray:
    """Two triangles per grid cell, split along the (i,j)->(i+1,j+1) diagonal.

    Node (i, j) has index i*(n_t+1)+j. Faces are returned as 0-based index
    triples, cells in row-major order, lower triangle first.
    """
    cols = n_t + 1
    i, j = np.meshgrid(np.arange(n_s), np.arange(n_t), indexing="ij")
    a = (i * cols + j).ravel()
    b = ((i + 1) * cols + j).ravel()
    c = ((i + 1) * cols + j + 1).ravel()
    d = (i * cols + j + 1).ravel()
    lower = np.stack((a, b, c), axis=1)
    upper = np.stack((a, c, d), axis=1)
    return np.stack((lower, upper), axis=1).reshape(-1, 3)


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def _nodes(values, value_range, n) -> np.ndarray:
    if values is not None:
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 3:
            raise InvalidDomainError("explicit parameter nodes need at least 3 values")
        return values
    return parameter_axis(value_range, n)


def make_helicoid(
    s_range=(0.0, 1.0),
    t_range=(0.0, 2.0 * np.pi),
    n_s: int = 64,
    n_t: int = 64,
    deriv_mode: str = ANALYTIC,
    scale: float = 1.0,
    s_values=None,
    t_values=None,
) -> ParamPatch:
    """
    Sample the helicoid a*(s cos t, s sin t, t).

    Args:
        s_range, t_range: Parameter intervals (ignored when explicit nodes are given)
        n_s, n_t: Number of intervals
        deriv_mode: ``analytic`` or ``central-difference``
        scale: Rescaling factor a > 0
        s_values, t_values: Optional explicit parameter nodes

    Returns:
        ParamPatch of kind ``helicoid``
    """
    if scale <= 0:
        raise InvalidScaleError(f"scale must be positive, got {scale}")
    s = _nodes(s_values, s_range, n_s)
    t = _nodes(t_values, t_range, n_t)
    S, T = np.meshgrid(s, t, indexing="ij")
    cos_t, sin_t = np.cos(T), np.sin(T)
    zeros = np.zeros_like(S)
    positions = np.stack((S * cos_t, S * sin_t, T), axis=-1)
    derivatives = None
    if deriv_mode == ANALYTIC:
        derivatives = {
            "xs": np.stack((cos_t, sin_t, zeros), axis=-1),
            "xt": np.stack((-S * sin_t, S * cos_t, np.ones_like(S)), axis=-1),
            "xss": np.zeros_like(positions),
            "xst": np.stack((-sin_t, cos_t, zeros), axis=-1),
            "xtt": np.stack((-S * cos_t, -S * sin_t, zeros), axis=-1),
        }
    patch = ParamPatch(s, t, positions, deriv_mode, derivatives, kind="helicoid")
    return patch if scale == 1.0 else rescale(patch, scale)


def make_catenoid(
    s_range=(-1.0, 1.0),
    t_range=(0.0, 2.0 * np.pi),
    n_s: int = 64,
    n_t: int = 64,
    deriv_mode: str = ANALYTIC,
    scale: float = 1.0,
    s_values=None,
    t_values=None,
) -> ParamPatch:
    """Sample the catenoid a*(cosh s cos t, cosh s sin t, s)."""
    if scale <= 0:
        raise InvalidScaleError(f"scale must be positive, got {scale}")
    s = _nodes(s_values, s_range, n_s)
    t = _nodes(t_values, t_range, n_t)
    S, T = np.meshgrid(s, t, indexing="ij")
    cos_t, sin_t = np.cos(T), np.sin(T)
    ch, sh = np.cosh(S), np.sinh(S)
    zeros = np.zeros_like(S)
    positions = np.stack((ch * cos_t, ch * sin_t, S), axis=-1)
    derivatives = None
    if deriv_mode == ANALYTIC:
        derivatives = {
            "xs": np.stack((sh * cos_t, sh * sin_t, np.ones_like(S)), axis=-1),
            "xt": np.stack((-ch * sin_t, ch * cos_t, zeros), axis=-1),
            "xss": np.stack((ch * cos_t, ch * sin_t, zeros), axis=-1),
            "xst": np.stack((-sh * sin_t, sh * cos_t, zeros), axis=-1),
            "xtt": np.stack((-ch * cos_t, -ch * sin_t, zeros), axis=-1),
        }
    patch = ParamPatch(s, t, positions, deriv_mode, derivatives, kind="catenoid")
    return patch if scale == 1.0 else rescale(patch, scale)


def make_ruled(
    directrix_samples,
    direction_samples,
    t_values,
    s_range=(0.0, 1.0),
    n_s: int = 32,
    deriv_mode: str = DIFFERENCE,
    directrix_derivs: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    direction_derivs: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> ParamPatch:
    """
    Ruled surface X(s, t) = beta(t) + s * delta(t).

    Args:
        directrix_samples: beta on the t nodes, shape (n_t+1, 3)
        direction_samples: delta on the same nodes, shape (n_t+1, 3)
        t_values: The t nodes
        s_range, n_s: Ruling parameter interval and resolution
        deriv_mode: ``analytic`` needs (beta', beta'') and (delta', delta'')

    Returns:
        ParamPatch of kind ``ruled``
    """
    t = np.asarray(t_values, dtype=float)
    beta = np.asarray(directrix_samples, dtype=float)
    delta = np.asarray(direction_samples, dtype=float)
    if beta.shape != (t.size, 3) or delta.shape != (t.size, 3):
        raise ShapeMismatchError("directrix and direction must be sampled on the t nodes")
    zero_rulings = np.flatnonzero(np.linalg.norm(delta, axis=1) == 0.0)
    if zero_rulings.size:
        raise InvalidRulingError(f"zero direction vector at t index {int(zero_rulings[0])}")
    s = parameter_axis(s_range, n_s)
    positions = beta[None, :, :] + s[:, None, None] * delta[None, :, :]
    derivatives = None
    if deriv_mode == ANALYTIC:
        if directrix_derivs is None or direction_derivs is None:
            raise UsageError("analytic ruled patches need directrix and direction derivatives")
        beta_t, beta_tt = (np.asarray(d, dtype=float) for d in directrix_derivs)
        delta_t, delta_tt = (np.asarray(d, dtype=float) for d in direction_derivs)
        ones = np.ones((s.size, 1, 1))
        derivatives = {
            "xs": ones * delta[None, :, :],
            "xt": beta_t[None, :, :] + s[:, None, None] * delta_t[None, :, :],
            "xss": np.zeros_like(positions),
            "xst": ones * delta_t[None, :, :],
            "xtt": beta_tt[None, :, :] + s[:, None, None] * delta_tt[None, :, :],
        }
    return ParamPatch(s, t, positions, deriv_mode, derivatives, kind="ruled")


def make_graph_patch(
    x1_values,
    x2_values,
    u_field,
    deriv_mode: str = DIFFERENCE,
    u_derivs: Optional[Dict[str, np.ndarray]] = None,
) -> ParamPatch:
    """Graph (x1, x2, u(x1, x2)) over a planar rectangle.

    ``u_derivs`` (keys ux, uy, uxx, uxy, uyy) is required in analytic mode.
    """
    x1 = np.asarray(x1_values, dtype=float)
    x2 = np.asarray(x2_values, dtype=float)
    u = np.asarray(u_field, dtype=float)
    if u.shape != (x1.size, x2.size):
        raise ShapeMismatchError(f"u has shape {u.shape}, grid is {(x1.size, x2.size)}")
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    positions = np.stack((X1, X2, u), axis=-1)
    derivatives = None
    if deriv_mode == ANALYTIC:
        if not u_derivs:
            raise UsageError("analytic graph patches need ux, uy, uxx, uxy, uyy")
        zeros = np.zeros_like(u)
        ones = np.ones_like(u)
        derivatives = {
            "xs": np.stack((ones, zeros, u_derivs["ux"]), axis=-1),
            "xt": np.stack((zeros, ones, u_derivs["uy"]), axis=-1),
            "xss": np.stack((zeros, zeros, u_derivs["uxx"]), axis=-1),
            "xst": np.stack((zeros, zeros, u_derivs["uxy"]), axis=-1),
            "xtt": np.stack((zeros, zeros, u_derivs["uyy"]), axis=-1),
        }
    return ParamPatch(x1, x2, positions, deriv_mode, derivatives, kind="graph")


def graph_from_function(func, x1_range, x2_range, n1: int, n2: int) -> ParamPatch:
    """Sample u = func(x1, x2) on a uniform rectangle, difference mode"""
    x1 = parameter_axis(x1_range, n1)
    x2 = parameter_axis(x2_range, n2)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    return make_graph_patch(x1, x2, func(X1, X2))


def scherk_height(X1: np.ndarray, X2: np.ndarray, k: float = 1.0) -> np.ndarray:
    """Scherk's surface u = log(cos(k x2) / cos(k x1)) / k, minimal for |k x1|, |k x2| < pi/2"""
    return np.log(np.cos(k * X2) / np.cos(k * X1)) / k


# name -> (height function, default x1 range, default x2 range)
GRAPH_PRESETS = {
    "zero": (lambda X1, X2: np.zeros_like(X1), (-1.0, 1.0), (-1.0, 1.0)),
    "paraboloid": (lambda X1, X2: X1 ** 2, (-1.0, 1.0), (-1.0, 1.0)),
    "catenoid-graph": (lambda X1, X2: np.arccosh(np.hypot(X1, X2)), (1.5, 2.5), (-0.5, 0.5)),
    "scherk": (scherk_height, (-1.0, 1.0), (-1.0, 1.0)),
}


def graph_preset(name: str, n1: int = 64, n2: int = 64, x1_range=None, x2_range=None) -> ParamPatch:
    try:
        func, default_x1, default_x2 = GRAPH_PRESETS[name]
    except KeyError as exc:
        raise UsageError(f"unknown graph preset {name!r}; choose from {sorted(GRAPH_PRESETS)}") from exc
    patch = graph_from_function(func, x1_range or default_x1, x2_range or default_x2, n1, n2)
    return replace(patch, kind=f"graph:{name}")


def rescale(patch: ParamPatch, a: float) -> ParamPatch:
    """Dilate the patch about the origin by a > 0."""
    if not np.isfinite(a) or a <= 0:
        raise InvalidScaleError(f"scale must be positive, got {a}")
    derivatives = None
    if patch.derivatives is not None:
        derivatives = {key: a * value for key, value in patch.derivatives.items()}
    return ParamPatch(
        patch.s, patch.t, a * patch.positions, patch.deriv_mode, derivatives, kind=patch.kind
    )


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def _immersion_normals(xs: np.ndarray, xt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    cross = np.cross(xs, xt)
    norm = np.linalg.norm(cross, axis=-1)
    scale = np.linalg.norm(xs, axis=-1) * np.linalg.norm(xt, axis=-1)
    bad = ~np.isfinite(norm) | (norm <= 1e-12 * np.maximum(scale, np.finfo(float).tiny))
    if np.any(bad):
        raise ImmersionError(np.argwhere(bad)[0])
    return cross / norm[..., None], norm


def fundamental_forms(patch: ParamPatch) -> GeomData:
    """
    First and second fundamental forms with H, K and |A|^2 at every node.

    Args:
        patch: An immersed ParamPatch

    Returns:
        GeomData; H = -(eG - 2fF + gE)/(EG - F^2) so that H = div(n)
    """
    d = patch_derivatives(patch)
    xs, xt = d["xs"], d["xt"]
    normal, area_element = _immersion_normals(xs, xt)
    E = np.einsum("...k,...k->...", xs, xs)
    F = np.einsum("...k,...k->...", xs, xt)
    G = np.einsum("...k,...k->...", xt, xt)
    e = np.einsum("...k,...k->...", d["xss"], normal)
    f = np.einsum("...k,...k->...", d["xst"], normal)
    g = np.einsum("...k,...k->...", d["xtt"], normal)
    det = E * G - F * F
    H = -(e * G - 2.0 * f * F + g * E) / det
    K = (e * g - f * f) / det
    A2 = H * H - 2.0 * K
    geom = GeomData(E, F, G, e, f, g, H, K, A2, normal, area_element)
    if patch.deriv_mode == ANALYTIC and not geom.identities_hold():
        logger.warning("curvature identities fail beyond TOL_GEOM on analytic patch %s", patch.kind)
    return geom


def area(patch: ParamPatch, geom: Optional[GeomData] = None) -> float:
    """Trapezoidal sum of sqrt(EG - F^2) over the parameter grid"""
    if geom is None:
        d = patch_derivatives(patch)
        _, element = _immersion_normals(d["xs"], d["xt"])
    else:
        element = geom.area_element
    return float(trapezoid(trapezoid(element, x=patch.t, axis=1), x=patch.s))


def _discrete_area(positions: np.ndarray, s: np.ndarray, t: np.ndarray) -> float:
    xs = first_difference(positions, float(s[1] - s[0]), axis=0)
    xt = first_difference(positions, float(t[1] - t[0]), axis=1)
    _, element = _immersion_normals(xs, xt)
    return float(trapezoid(trapezoid(element, x=t, axis=1), x=s))


def bump_field(patch: ParamPatch, center: Sequence[float], radius: float, power: int = 4) -> VariationField:
    """
    Smooth bump (1 - r^2/R^2)^power in parameter space.

    Args:
        patch: The patch whose nodes carry the field
        center: (s, t) centre of the bump
        radius: Support radius R in parameter units
        power: Smoothness exponent

    Returns:
        VariationField vanishing on the boundary band
    """
    S, T = np.meshgrid(patch.s, patch.t, indexing="ij")
    r2 = ((S - center[0]) ** 2 + (T - center[1]) ** 2) / float(radius) ** 2
    phi = np.where(r2 < 1.0, (1.0 - np.minimum(r2, 1.0)) ** power, 0.0)
    phi[patch.band_mask()] = 0.0
    return VariationField(phi)


def _check_variation(patch: ParamPatch, phi: VariationField) -> np.ndarray:
    values = np.asarray(phi.phi, dtype=float)
    if values.shape != patch.positions.shape[:2]:
        raise ShapeMismatchError(f"variation field shape {values.shape} does not match the grid")
    if np.any(values[patch.band_mask()] != 0.0):
        raise UsageError("variation field must vanish on and near the boundary")
    return values


def _perturbed_areas(patch: ParamPatch, values: np.ndarray, normal: np.ndarray, steps) -> list:
    if not _is_uniform(patch.s) or not _is_uniform(patch.t):
        raise InvalidDomainError("variations are computed on uniform parameter grids")
    areas = []
    for step in steps:
        moved = patch.positions + step * values[..., None] * normal
        try:
            areas.append(_discrete_area(moved, patch.s, patch.t))
        except ImmersionError as exc:
            raise StepTooLargeError(
                f"perturbation by t = {step:g} is not an immersion at node {exc.node}"
            ) from exc
    return areas


def first_variation(patch: ParamPatch, phi: VariationField, h_t: float = 1e-4) -> FirstVariation:
    """
    Compare d/dt Area(X + t phi n) at t = 0 with the integral of phi * H.

    Args:
        patch: Immersed patch on a uniform grid
        phi: Compactly supported variation field
        h_t: Step of the central difference in t

    Returns:
        FirstVariation with both sides and the agreement tolerance
    """
    values = _check_variation(patch, phi)
    geom = fundamental_forms(patch)
    plus, minus = _perturbed_areas(patch, values, geom.normal, (h_t, -h_t))
    numeric = (plus - minus) / (2.0 * h_t)
    integrand = values * geom.H * geom.area_element
    integral = float(trapezoid(trapezoid(integrand, x=patch.t, axis=1), x=patch.s))
    tolerance = max(TOL_VAR_ABS, TOL_VAR_REL * abs(integral))
    logger.debug("first variation: numeric %.6e, integral %.6e", numeric, integral)
    return FirstVariation(float(numeric), integral, tolerance)


# ---------------------------------------------------------------------------
# Jacobi operator
# ---------------------------------------------------------------------------

def _jacobi_forms(patch: ParamPatch, geom: GeomData) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """Stiffness of the Laplace-Beltrami operator and lumped mass.

    Piecewise-linear elements on the parameter triangulation with the metric
    sqrt(g) g^{ij} averaged over each triangle. For an orthogonal metric on
    the uniform grid this is the five-point divergence-form stencil.
    """
    n_s, n_t = patch.grid
    faces = grid_triangles(n_s, n_t)
    S, T = np.meshgrid(patch.s, patch.t, indexing="ij")
    params = np.stack((S.ravel(), T.ravel()), axis=1)
    P = params[faces]
    edges = np.stack((P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=2)
    inverse = np.linalg.inv(edges)
    grads = np.empty((faces.shape[0], 3, 2))
    grads[:, 1:, :] = inverse
    grads[:, 0, :] = -inverse.sum(axis=1)
    tri_area = 0.5 * np.abs(np.linalg.det(edges))

    E = geom.E.ravel()[faces].mean(axis=1)
    F = geom.F.ravel()[faces].mean(axis=1)
    G = geom.G.ravel()[faces].mean(axis=1)
    root_g = np.sqrt(E * G - F * F)
    coeff = np.empty((faces.shape[0], 2, 2))
    coeff[:, 0, 0] = G / root_g
    coeff[:, 0, 1] = coeff[:, 1, 0] = -F / root_g
    coeff[:, 1, 1] = E / root_g

    local = tri_area[:, None, None] * np.einsum("nik,nkl,njl->nij", grads, coeff, grads)
    rows = np.repeat(faces, 3, axis=1).ravel()
    cols = np.tile(faces, (1, 3)).ravel()
    n = patch.vertex_count
    stiffness = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mass = np.bincount(faces.ravel(), weights=np.repeat(tri_area * root_g / 3.0, 3), minlength=n)
    return stiffness, mass


def jacobi_quadratic_form(patch: ParamPatch, phi: VariationField, geom: Optional[GeomData] = None) -> float:
    """-(phi, L phi) = integral(|grad phi|^2 - |A|^2 phi^2)"""
    geom = geom or fundamental_forms(patch)
    stiffness, mass = _jacobi_forms(patch, geom)
    values = np.asarray(phi.phi, dtype=float).ravel()
    return float(values @ (stiffness @ values) - np.sum(mass * geom.A2.ravel() * values * values))


def second_variation(patch: ParamPatch, phi: VariationField, h_t: float = 1e-3) -> SecondVariation:
    """Second difference of Area(X + t phi n) against the Jacobi form."""
    values = _check_variation(patch, phi)
    geom = fundamental_forms(patch)
    plus, zero, minus = _perturbed_areas(patch, values, geom.normal, (h_t, 0.0, -h_t))
    numeric = (plus - 2.0 * zero + minus) / (h_t * h_t)
    return SecondVariation(float(numeric), jacobi_quadratic_form(patch, phi, geom))


def jacobi_smallest_eigenvalues(patch: ParamPatch, k: int = 1, maxiter: Optional[int] = None) -> np.ndarray:
    """
    Smallest Dirichlet eigenvalues of -L = -(Laplace-Beltrami + |A|^2).

    Args:
        patch: Immersed patch
        k: Number of eigenvalues
        maxiter: ARPACK iteration cap

    Returns:
        Ascending array of k eigenvalues
    """
    if k < 1:
        raise UsageError("k must be at least 1")
    geom = fundamental_forms(patch)
    stiffness, mass = _jacobi_forms(patch, geom)
    interior = np.flatnonzero(~patch.boundary_mask.ravel())
    if k >= interior.size:
        raise UsageError(f"k = {k} exceeds the {interior.size} interior nodes")
    K = stiffness[interior][:, interior]
    m = mass[interior]
    a2 = geom.A2.ravel()[interior]
    inv_root = sparse.diags(1.0 / np.sqrt(m))
    operator = (inv_root @ K @ inv_root - sparse.diags(a2)).tocsc()
    # K is positive semi-definite, so the spectrum lies above -max|A|^2.
    shift = -float(np.max(a2, initial=0.0)) - 1.0
    iterations = maxiter or 20 * interior.size
    try:
        values = eigsh(operator, k=k, sigma=shift, which="LM", maxiter=iterations,
                       v0=np.ones(interior.size), return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise NumericError(f"eigen-solver did not converge after {iterations} iterations") from exc
    values = np.sort(values)
    logger.debug("smallest Jacobi eigenvalues: %s", values)
    return values


def is_stable(patch: ParamPatch, tol: float = TOL_EIG) -> bool:
    return bool(jacobi_smallest_eigenvalues(patch, 1)[0] >= -tol)


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def mesh_triangles(patch: ParamPatch) -> np.ndarray:
    """0-based faces of the patch grid, two per cell"""
    return grid_triangles(*patch.grid)


def geometry_table(patch: ParamPatch, geom: Optional[GeomData] = None) -> pd.DataFrame:
    """One row per node, row-major in (i, j): s,t,x,y,z,H,K,A2"""
    geom = geom or fundamental_forms(patch)
    S, T = np.meshgrid(patch.s, patch.t, indexing="ij")
    xyz = patch.positions.reshape(-1, 3)
    return pd.DataFrame(
        {
            "s": S.ravel(),
            "t": T.ravel(),
            "x": xyz[:, 0],
            "y": xyz[:, 1],
            "z": xyz[:, 2],
            "H": geom.H.ravel(),
            "K": geom.K.ravel(),
            "A2": geom.A2.ravel(),
        }
    )
