"""N-valued graphs over the universal cover of the punctured plane.

A MultiGraph stores heights u on a (rho, theta) grid with rho log-uniform in
[r_in, r_out] and theta uniform in [c - N*pi, c + N*pi]. The theta spacing
divides 2*pi, so theta + 2*pi is again a node and the separation
w(rho, theta) = u(rho, theta + 2*pi) - u(rho, theta) is a plain column shift.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import (
    FitUndefinedError,
    InvalidDomainError,
    LogSingularityError,
    NoOverlapError,
    ShapeMismatchError,
    UndefinedHandednessError,
    UsageError,
)
from .settings import ENVELOPE_MARGIN, LOG_FIT_DEVIATION, MAX_SHEETS, MIN_FIT_SAMPLES
from .surface_core import DIFFERENCE, ParamPatch

logger = logging.getLogger(__name__)


class Handedness(str, Enum):
    LEFT = "left"
    RIGHT = "right"


def check_annulus(r_in: float, r_out: float, sheets: int, n_rho: int, n_theta: int) -> None:
    if not (np.isfinite(r_in) and np.isfinite(r_out)) or r_in <= 0 or r_out <= r_in:
        raise InvalidDomainError(f"need 0 < r_in < r_out, got r_in={r_in}, r_out={r_out}")
    if int(sheets) != sheets or not 1 <= sheets <= MAX_SHEETS:
        raise InvalidDomainError(f"sheet count must be an integer in [1, {MAX_SHEETS}], got {sheets}")
    if n_rho < 2:
        raise InvalidDomainError(f"n_rho must be at least 2, got {n_rho}")
    if n_theta < 2 or n_theta % 2 or n_theta % sheets:
        raise InvalidDomainError(
            f"n_theta = {n_theta} must be even and a multiple of the sheet count {sheets}"
        )


def sigma_nodes(r_in: float, r_out: float, n_rho: int) -> np.ndarray:
    return np.linspace(np.log(r_in), np.log(r_out), n_rho + 1)


def theta_nodes(sheets: int, n_theta: int, center: float = 0.0) -> np.ndarray:
    step = 2.0 * np.pi * sheets / n_theta
    return center + (np.arange(n_theta + 1) - n_theta // 2) * step


@dataclass(frozen=True)
class MultiGraph:
    """Heights u[i, j] = u(rho_i, theta_j) of an N-valued graph."""

    r_in: float
    r_out: float
    sheets: int
    u: np.ndarray
    theta_center: float = 0.0

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 2:
            raise ShapeMismatchError(f"u must be a 2-d grid, got shape {u.shape}")
        check_annulus(self.r_in, self.r_out, self.sheets, u.shape[0] - 1, u.shape[1] - 1)
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @classmethod
    def from_function(
        cls,
        func: Callable[[np.ndarray, np.ndarray], np.ndarray],
        r_in: float,
        r_out: float,
        sheets: int,
        n_rho: int,
        n_theta: int,
        theta_center: float = 0.0,
    ) -> "MultiGraph":
        check_annulus(r_in, r_out, sheets, n_rho, n_theta)
        rho = _rho_from_sigma(sigma_nodes(r_in, r_out, n_rho), r_in, r_out)
        theta = theta_nodes(sheets, n_theta, theta_center)
        R, T = np.meshgrid(rho, theta, indexing="ij")
        return cls(r_in, r_out, sheets, func(R, T), theta_center)

    @property
    def n_rho(self) -> int:
        return self.u.shape[0] - 1

    @property
    def n_theta(self) -> int:
        return self.u.shape[1] - 1

    @property
    def sigma(self) -> np.ndarray:
        return sigma_nodes(self.r_in, self.r_out, self.n_rho)

    @property
    def rho(self) -> np.ndarray:
        return _rho_from_sigma(self.sigma, self.r_in, self.r_out)

    @property
    def theta(self) -> np.ndarray:
        return theta_nodes(self.sheets, self.n_theta, self.theta_center)

    @property
    def deck_shift(self) -> int:
        """Column offset corresponding to theta -> theta + 2*pi"""
        return self.n_theta // self.sheets

    def with_heights(self, u: np.ndarray) -> "MultiGraph":
        return MultiGraph(self.r_in, self.r_out, self.sheets, u, self.theta_center)

    def to_frame(self) -> pd.DataFrame:
        """Rows (rho, theta, u) sorted by rho then theta"""
        R, T = np.meshgrid(self.rho, self.theta, indexing="ij")
        return pd.DataFrame({"rho": R.ravel(), "theta": T.ravel(), "u": self.u.ravel()})


def _rho_from_sigma(sigma: np.ndarray, r_in: float, r_out: float) -> np.ndarray:
    rho = np.exp(sigma)
    rho[0], rho[-1] = r_in, r_out
    return rho


@dataclass(frozen=True)
class SeparationProfile:
    """w on the rho nodes and the thetas whose 2*pi translate is still a node."""

    rho: np.ndarray
    theta: np.ndarray
    w: np.ndarray

    @classmethod
    def from_samples(cls, rho, w) -> "SeparationProfile":
        """Single-ray profile at theta = 0 from synthetic (rho, w) samples."""
        rho = np.asarray(rho, dtype=float)
        w = np.asarray(w, dtype=float).reshape(-1, 1)
        if rho.ndim != 1 or w.shape[0] != rho.size:
            raise ShapeMismatchError("rho and w samples must have the same length")
        return cls(rho, np.zeros(1), w)

    @property
    def min_abs(self) -> float:
        return float(np.min(np.abs(self.w)))

    @property
    def sign(self) -> int:
        if np.all(self.w > 0):
            return 1
        if np.all(self.w < 0):
            return -1
        return 0

    def ray(self, aggregate: str = "ray") -> np.ndarray:
        """|w| along theta = 0, or the max of |w| over all theta columns"""
        if aggregate == "ray":
            return np.abs(self.w[:, int(np.argmin(np.abs(self.theta)))])
        if aggregate == "max":
            return np.max(np.abs(self.w), axis=1)
        raise UsageError(f"unknown aggregate {aggregate!r}")

    def to_frame(self) -> pd.DataFrame:
        R, T = np.meshgrid(self.rho, self.theta, indexing="ij")
        return pd.DataFrame({"rho": R.ravel(), "theta": T.ravel(), "w": self.w.ravel()})


@dataclass(frozen=True)
class SublinearFit:
    rho0: float
    alpha_hat: float
    residual: float
    envelope_holds: bool
    samples: int

    def to_dict(self) -> dict:
        return {
            "rho0": self.rho0,
            "alpha_hat": self.alpha_hat,
            "residual": self.residual,
            "envelope_holds": self.envelope_holds,
            "samples": self.samples,
        }


@dataclass(frozen=True)
class LogDecayFit:
    rho0: float
    c_hat: float
    max_deviation: float
    samples: int

    @property
    def logarithmic(self) -> bool:
        return self.max_deviation <= LOG_FIT_DEVIATION

    def to_dict(self) -> dict:
        return {
            "rho0": self.rho0,
            "c_hat": self.c_hat,
            "max_deviation": self.max_deviation,
            "logarithmic": self.logarithmic,
            "samples": self.samples,
        }


@dataclass(frozen=True)
class EnvelopeCheck:
    holds: bool
    worst_margin: float


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def helicoid_sheet(
    which: int,
    r_in: float,
    r_out: float,
    sheets: int,
    n_rho: int = 32,
    n_theta: Optional[int] = None,
    scale: float = 1.0,
) -> MultiGraph:
    """
    One of the two sheets of the helicoid off its axis.

    Args:
        which: 1 for u = a*theta, 2 for u = a*theta + a*pi
        r_in, r_out: Radial extent
        sheets: Number of sheets N
        n_rho, n_theta: Grid resolution (n_theta defaults to 16 per sheet)
        scale: Helicoid scale a

    Returns:
        MultiGraph with the sheet heights
    """
    if which not in (1, 2):
        raise UsageError(f"helicoid sheet must be 1 or 2, got {which}")
    offset = 0.0 if which == 1 else np.pi
    n_theta = n_theta or 16 * sheets
    return MultiGraph.from_function(
        lambda R, T: scale * T + scale * offset, r_in, r_out, sheets, n_rho, n_theta
    )


def nonproper_graph(r_in: float, r_out: float, sheets: int, n_rho: int = 64, n_theta: Optional[int] = None) -> MultiGraph:
    """The harmonic graph u = arctan(theta / log rho), trapped in a slab"""
    if r_in <= 1.0:
        raise LogSingularityError(f"arctan(theta / log rho) needs r_in > 1, got {r_in}")
    n_theta = n_theta or 16 * sheets
    return MultiGraph.from_function(
        lambda R, T: np.arctan(T / np.log(R)), r_in, r_out, sheets, n_rho, n_theta
    )


# ---------------------------------------------------------------------------
# Separation and embeddedness
# ---------------------------------------------------------------------------

def separation(g: MultiGraph) -> SeparationProfile:
    if g.sheets < 2:
        raise NoOverlapError("a single sheet has no overlap, separation is undefined")
    k = g.deck_shift
    w = g.u[:, k:] - g.u[:, :-k]
    return SeparationProfile(g.rho, g.theta[:-k], w)


def is_embedded(g: MultiGraph) -> Tuple[bool, float]:
    min_abs = separation(g).min_abs
    return min_abs > 0.0, min_abs


def handedness(g: MultiGraph) -> Handedness:
    profile = separation(g)
    if profile.min_abs == 0.0:
        raise UndefinedHandednessError("sheets touch, handedness is undefined")
    sign = profile.sign
    if sign == 0:
        raise UndefinedHandednessError("separation changes sign on the profile domain")
    return Handedness.RIGHT if sign > 0 else Handedness.LEFT


def column_gaps(g: MultiGraph) -> List[np.ndarray]:
    """Vertical gaps between consecutive sheets over each (rho, theta mod 2*pi) column.

    Entry j0 holds the gaps for the nodes j0, j0 + k, j0 + 2k, ... where k is
    the deck shift; its columns are consecutive sheet pairs.
    """
    k = g.deck_shift
    gaps = []
    for j0 in range(k):
        stacked = g.u[:, j0::k]
        gaps.append(np.diff(stacked, axis=1))
    return gaps


def embed_to_r3(g: MultiGraph) -> ParamPatch:
    """Image (rho cos theta, rho sin theta, u) on the (log rho, theta) grid"""
    rho = g.rho
    theta = g.theta
    R, T = np.meshgrid(rho, theta, indexing="ij")
    positions = np.stack((R * np.cos(T), R * np.sin(T), g.u), axis=-1)
    return ParamPatch(g.sigma, theta, positions, DIFFERENCE, kind="multigraph")


# ---------------------------------------------------------------------------
# Growth fits
# ---------------------------------------------------------------------------

def _fit_window(profile: SeparationProfile, rho0: float, rho_max: Optional[float], aggregate: str, strict: bool):
    if rho0 <= 0:
        raise UsageError(f"rho0 must be positive, got {rho0}")
    values = profile.ray(aggregate)
    mask = profile.rho > rho0 if strict else profile.rho >= rho0
    if rho_max is not None:
        mask &= profile.rho <= rho_max
    rho = profile.rho[mask]
    values = values[mask]
    beyond = np.unique(rho[rho > rho0]).size
    if beyond < MIN_FIT_SAMPLES:
        raise FitUndefinedError(
            f"only {beyond} radial samples beyond rho0 = {rho0:g}, need {MIN_FIT_SAMPLES}"
        )
    if np.any(values == 0.0) or not np.all(np.isfinite(values)):
        raise FitUndefinedError("separation vanishes in the fit window")
    return rho, values


def sublinear_envelope(profile: SeparationProfile, rho0: float, alpha: float,
                       rho_max: Optional[float] = None, aggregate: str = "ray") -> EnvelopeCheck:
    """Check (rho/rho_ref)^-alpha |w_ref| <= |w(rho)| <= (rho/rho_ref)^alpha |w_ref|.

    rho_ref is the first sample at or beyond rho0. Compared in logs.
    """
    rho, values = _fit_window(profile, rho0, rho_max, aggregate, strict=False)
    log_ratio = np.log(rho / rho[0])
    excess = np.abs(np.log(values) - np.log(values[0])) - alpha * log_ratio
    worst = float(np.max(excess))
    return EnvelopeCheck(worst <= 1e-12, -worst)


def fit_sublinear_exponent(
    profile: SeparationProfile,
    rho0: float,
    rho_max: Optional[float] = None,
    aggregate: str = "ray",
    margin: float = ENVELOPE_MARGIN,
) -> SublinearFit:
    """
    Least-squares power law |w(rho)| ~ rho^slope beyond rho0.

    Args:
        profile: Separation profile
        rho0: Start of the fit window
        rho_max: Optional end of the fit window
        aggregate: ``ray`` for theta = 0, ``max`` for the max over theta
        margin: Absolute margin added to the exponent in the envelope check

    Returns:
        SublinearFit with alpha_hat = |slope| and the RMS residual in log space
    """
    rho, values = _fit_window(profile, rho0, rho_max, aggregate, strict=False)
    x = np.log(rho)
    y = np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    alpha_hat = float(abs(slope))
    envelope = sublinear_envelope(profile, rho0, alpha_hat + margin, rho_max, aggregate)
    logger.debug("sublinear fit: alpha %.6g residual %.3g over %d samples", alpha_hat, residual, rho.size)
    return SublinearFit(float(rho0), alpha_hat, residual, envelope.holds, int(rho.size))


def fit_log_decay(
    profile: SeparationProfile,
    rho0: float,
    rho_max: Optional[float] = None,
    aggregate: str = "ray",
) -> LogDecayFit:
    """Fit |w(rho)| * log(rho/rho0) to a constant c_hat over rho > rho0."""
    rho, values = _fit_window(profile, rho0, rho_max, aggregate, strict=True)
    y = values * np.log(rho / rho0)
    c_hat = float(np.mean(y))
    deviation = float(np.max(np.abs(y - c_hat)) / abs(c_hat))
    return LogDecayFit(float(rho0), c_hat, deviation, int(rho.size))


def log_decay_products(profile: SeparationProfile, rho0: float, aggregate: str = "ray") -> pd.DataFrame:
    """Per-sample |w| * log(rho/rho0) for rho > rho0"""
    mask = profile.rho > rho0
    values = profile.ray(aggregate)[mask]
    return pd.DataFrame({"rho": profile.rho[mask], "product": values * np.log(profile.rho[mask] / rho0)})
