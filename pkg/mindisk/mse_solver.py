"""Damped Newton solver for the minimal surface equation on annular covers.

The unknown u lives on the (sigma, theta) rectangle, sigma = log rho. In these
coordinates the graph area is the integral of

    f(sigma, p) = e^sigma * sqrt(e^(2 sigma) + |p|^2),   p = (u_sigma, u_theta)

over the rectangle. The discrete area uses piecewise-linear u on the two
triangles of every cell and the edge-midpoint rule in each triangle. Its
gradient, scaled by the cell area, is the conservative discretization of
div(grad u / sqrt(1 + |grad u|^2)) in polar form; its Hessian is symmetric
positive definite on the interior nodes.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from .errors import (
    InvalidDomainError,
    NonConvergenceError,
    NumericError,
    ShapeMismatchError,
    UsageError,
)
from .multigraph import MultiGraph, check_annulus, sigma_nodes, theta_nodes
from .settings import (
    ARMIJO_C,
    BACKTRACK_FACTOR,
    LINEAR_RTOL,
    MAX_NEWTON_ITERS,
    MIN_STEP,
    TOL_RESIDUAL,
)

logger = logging.getLogger(__name__)

# Below this max-norm error a convergence study counts as exact.
EXACT_ERROR = 1e-10


@dataclass(frozen=True)
class AnnularDomain:
    r_in: float
    r_out: float
    sheets: int
    n_sigma: int
    n_theta: int
    theta_center: float = 0.0

    def __post_init__(self):
        check_annulus(self.r_in, self.r_out, self.sheets, self.n_sigma, self.n_theta)

    @property
    def sigma(self) -> np.ndarray:
        return sigma_nodes(self.r_in, self.r_out, self.n_sigma)

    @property
    def theta(self) -> np.ndarray:
        return theta_nodes(self.sheets, self.n_theta, self.theta_center)

    @property
    def h_sigma(self) -> float:
        return (np.log(self.r_out) - np.log(self.r_in)) / self.n_sigma

    @property
    def h_theta(self) -> float:
        return 2.0 * np.pi * self.sheets / self.n_theta

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_sigma + 1, self.n_theta + 1

    def graph(self, u: np.ndarray) -> MultiGraph:
        return MultiGraph(self.r_in, self.r_out, self.sheets, u, self.theta_center)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask

    def to_dict(self) -> dict:
        return {
            "r_in": self.r_in,
            "r_out": self.r_out,
            "sheets": self.sheets,
            "n_sigma": self.n_sigma,
            "n_theta": self.n_theta,
            "theta_center": self.theta_center,
        }


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet values on the four edges of the cover rectangle.

    ``inner`` and ``outer`` run over the theta nodes at rho = r_in and
    rho = r_out; ``theta_min`` and ``theta_max`` run over the sigma nodes.
    """

    inner: np.ndarray
    outer: np.ndarray
    theta_min: np.ndarray
    theta_max: np.ndarray

    def __post_init__(self):
        for name in ("inner", "outer", "theta_min", "theta_max"):
            values = np.array(getattr(self, name), dtype=float)
            if values.ndim != 1 or not np.all(np.isfinite(values)):
                raise UsageError(f"boundary edge {name} must be a finite 1-d array")
            values.setflags(write=False)
            object.__setattr__(self, name, values)
        corners = (
            (self.inner[0], self.theta_min[0]),
            (self.inner[-1], self.theta_max[0]),
            (self.outer[0], self.theta_min[-1]),
            (self.outer[-1], self.theta_max[-1]),
        )
        scale = 1.0 + max(float(np.max(np.abs(getattr(self, n)))) for n in ("inner", "outer"))
        for a, b in corners:
            if abs(a - b) > 1e-12 * scale:
                raise UsageError(f"boundary edges disagree at a corner: {a!r} vs {b!r}")

    @classmethod
    def from_function(cls, domain: AnnularDomain, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "BoundaryData":
        """Sample func(rho, theta) on the rectangle edges"""
        rho = np.exp(domain.sigma)
        rho[0], rho[-1] = domain.r_in, domain.r_out
        theta = domain.theta
        return cls(
            inner=func(np.full_like(theta, rho[0]), theta),
            outer=func(np.full_like(theta, rho[-1]), theta),
            theta_min=func(rho, np.full_like(rho, theta[0])),
            theta_max=func(rho, np.full_like(rho, theta[-1])),
        )

    @classmethod
    def from_dict(cls, payload: dict) -> "BoundaryData":
        try:
            return cls(payload["inner"], payload["outer"], payload["theta_min"], payload["theta_max"])
        except KeyError as exc:
            raise UsageError(f"boundary is missing edge {exc.args[0]!r}") from exc

    def check_domain(self, domain: AnnularDomain) -> None:
        n_s, n_t = domain.shape
        if self.inner.size != n_t or self.outer.size != n_t:
            raise ShapeMismatchError(f"inner/outer edges need {n_t} values")
        if self.theta_min.size != n_s or self.theta_max.size != n_s:
            raise ShapeMismatchError(f"theta edges need {n_s} values")

    def apply(self, u: np.ndarray) -> np.ndarray:
        u[:, 0] = self.theta_min
        u[:, -1] = self.theta_max
        u[0, :] = self.inner
        u[-1, :] = self.outer
        return u


@dataclass(frozen=True)
class SolverConfig:
    tol_residual: float = TOL_RESIDUAL
    max_newton_iters: int = MAX_NEWTON_ITERS
    backtrack_factor: float = BACKTRACK_FACTOR
    min_step: float = MIN_STEP
    armijo_c: float = ARMIJO_C
    linear_rtol: float = LINEAR_RTOL

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise UsageError("tol_residual must be positive")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise UsageError("backtrack_factor must lie in (0, 1)")
        if self.max_newton_iters < 0 or not 0.0 < self.min_step <= 1.0:
            raise UsageError("max_newton_iters must be >= 0 and min_step in (0, 1]")
        if not self.linear_rtol > 0:
            raise UsageError("linear_rtol must be positive")

    @classmethod
    def from_dict(cls, payload: Optional[dict]) -> "SolverConfig":
        payload = dict(payload or {})
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise UsageError(f"unknown solver settings: {sorted(unknown)}")
        return cls(**payload)


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: List[float] = field(default_factory=list)
    converged: bool = False
    initial_area: Optional[float] = None
    final_area: Optional[float] = None
    linear_iterations: List[int] = field(default_factory=list)
    step_lengths: List[float] = field(default_factory=list)
    max_error: Optional[float] = None

    @property
    def final_residual(self) -> Optional[float]:
        return self.residual_history[-1] if self.residual_history else None

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_residual": self.final_residual,
            "residual_history": list(self.residual_history),
            "step_lengths": list(self.step_lengths),
            "linear_iterations": list(self.linear_iterations),
            "initial_area": self.initial_area,
            "final_area": self.final_area,
            "max_error": self.max_error,
        }


@dataclass(frozen=True)
class ConvergenceReport:
    resolutions: List[int]
    errors: List[float]
    order: Optional[float]
    status: str

    def to_dict(self) -> dict:
        return {
            "resolutions": list(self.resolutions),
            "errors": list(self.errors),
            "order": self.order,
            "status": self.status,
        }


# ---------------------------------------------------------------------------
# Discrete area functional
# ---------------------------------------------------------------------------

class AreaOperator:
    """Discrete area, its gradient and Hessian on one AnnularDomain"""

    def __init__(self, n_sigma: int, n_theta: int, sigma: np.ndarray, h_sigma: float, h_theta: float):
        self.shape = (n_sigma + 1, n_theta + 1)
        self.h_sigma = h_sigma
        self.h_theta = h_theta
        cols = n_theta + 1
        i, j = np.meshgrid(np.arange(n_sigma), np.arange(n_theta), indexing="ij")
        i, j = i.ravel(), j.ravel()
        a = i * cols + j
        b = (i + 1) * cols + j
        c = (i + 1) * cols + j + 1
        d = i * cols + j + 1
        n_cells = a.size
        n_nodes = self.shape[0] * self.shape[1]
        rows = np.arange(n_cells)
        inv_s, inv_t = 1.0 / h_sigma, 1.0 / h_theta

        def gradient_matrix(plus, minus, inv_h):
            data = np.concatenate((np.full(n_cells, inv_h), np.full(n_cells, -inv_h)))
            return sparse.csr_matrix(
                (data, (np.concatenate((rows, rows)), np.concatenate((plus, minus)))),
                shape=(n_cells, n_nodes),
            )

        # lower triangle (a, b, c) and upper triangle (a, c, d)
        self.G_sigma = sparse.vstack((gradient_matrix(b, a, inv_s), gradient_matrix(c, d, inv_s))).tocsr()
        self.G_theta = sparse.vstack((gradient_matrix(c, b, inv_t), gradient_matrix(d, a, inv_t))).tocsr()

        s_lo = sigma[i]
        s_hi = sigma[i + 1]
        s_mid = 0.5 * (s_lo + s_hi)
        # edge midpoints: lower triangle has sigma_{i+1/2} twice and sigma_{i+1};
        # upper triangle has sigma_{i+1/2} twice and sigma_i
        self.midpoints = np.stack(
            (
                np.concatenate((s_mid, s_mid)),
                np.concatenate((s_mid, s_mid)),
                np.concatenate((s_hi, s_lo)),
            ),
            axis=1,
        )
        self.exp_mid = np.exp(self.midpoints)
        self.exp2_mid = np.exp(2.0 * self.midpoints)
        self.weight = h_sigma * h_theta / 6.0

    @classmethod
    def for_domain(cls, domain: AnnularDomain) -> "AreaOperator":
        return cls(domain.n_sigma, domain.n_theta, domain.sigma, domain.h_sigma, domain.h_theta)

    def _slopes(self, u: np.ndarray):
        flat = np.asarray(u, dtype=float).ravel()
        p_s = self.G_sigma @ flat
        p_t = self.G_theta @ flat
        root = np.sqrt(self.exp2_mid + (p_s * p_s + p_t * p_t)[:, None])
        return p_s, p_t, root

    def area(self, u: np.ndarray) -> float:
        _, _, root = self._slopes(u)
        return float(self.weight * np.sum(self.exp_mid * root))

    def gradient(self, u: np.ndarray) -> np.ndarray:
        p_s, p_t, root = self._slopes(u)
        coeff = self.weight * np.sum(self.exp_mid / root, axis=1)
        return self.G_sigma.T @ (coeff * p_s) + self.G_theta.T @ (coeff * p_t)

    def hessian(self, u: np.ndarray) -> sparse.csr_matrix:
        p_s, p_t, root = self._slopes(u)
        inv = self.exp_mid / root
        inv3 = self.exp_mid / root ** 3
        c0 = self.weight * np.sum(inv, axis=1)
        c3 = self.weight * np.sum(inv3, axis=1)
        d_ss = sparse.diags(c0 - c3 * p_s * p_s)
        d_st = sparse.diags(-c3 * p_s * p_t)
        d_tt = sparse.diags(c0 - c3 * p_t * p_t)
        Gs, Gt = self.G_sigma, self.G_theta
        return (Gs.T @ d_ss @ Gs + Gs.T @ d_st @ Gt + Gt.T @ d_st @ Gs + Gt.T @ d_tt @ Gt).tocsr()

    def residual(self, u: np.ndarray) -> np.ndarray:
        """Scaled residual on interior nodes, zero on the boundary"""
        r = -self.gradient(u).reshape(self.shape) / (self.h_sigma * self.h_theta)
        r[0, :] = r[-1, :] = 0.0
        r[:, 0] = r[:, -1] = 0.0
        return r


def _operator_for(g: MultiGraph) -> AreaOperator:
    domain = AnnularDomain(g.r_in, g.r_out, g.sheets, g.n_rho, g.n_theta, g.theta_center)
    return AreaOperator.for_domain(domain)


def discrete_mse_residual(g: MultiGraph) -> Tuple[np.ndarray, float]:
    """
    Residual of the discrete minimal surface equation.

    Args:
        g: Heights on the annular cover

    Returns:
        (per-node residual field, max-norm over interior nodes)
    """
    r = _operator_for(g).residual(g.u)
    return r, float(np.max(np.abs(r)))


def area_functional(g: MultiGraph) -> float:
    """Discrete area of the graph of u over the cover domain"""
    return _operator_for(g).area(g.u)


def maximum_principle_gap(g: MultiGraph) -> float:
    """How far interior heights leave the range of the boundary heights (0 if not at all)."""
    mask = np.zeros(g.u.shape, dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    edge = g.u[mask]
    inside = g.u[~mask]
    if inside.size == 0:
        return 0.0
    return float(max(0.0, inside.max() - edge.max(), edge.min() - inside.min()))


# ---------------------------------------------------------------------------
# Newton iteration
# ---------------------------------------------------------------------------

def transfinite_guess(domain: AnnularDomain, boundary: BoundaryData) -> np.ndarray:
    """Bilinear Coons patch through the four boundary edges."""
    n_s, n_t = domain.shape
    x = np.linspace(0.0, 1.0, n_s)[:, None]
    y = np.linspace(0.0, 1.0, n_t)[None, :]
    inner = boundary.inner[None, :]
    outer = boundary.outer[None, :]
    left = boundary.theta_min[:, None]
    right = boundary.theta_max[:, None]
    corners = (
        (1 - x) * (1 - y) * boundary.inner[0]
        + (1 - x) * y * boundary.inner[-1]
        + x * (1 - y) * boundary.outer[0]
        + x * y * boundary.outer[-1]
    )
    u = (1 - x) * inner + x * outer + (1 - y) * left + y * right - corners
    return boundary.apply(u)


def _max_interior(r: np.ndarray) -> float:
    return float(np.max(np.abs(r)))


def solve(
    domain: AnnularDomain,
    boundary: BoundaryData,
    config: Optional[SolverConfig] = None,
    initial: Optional[np.ndarray] = None,
) -> Tuple[MultiGraph, SolveReport]:
    """
    Solve the discrete minimal surface equation with Dirichlet data.

    Args:
        domain: The annular cover rectangle
        boundary: Dirichlet values on its four edges
        config: Tolerances and damping
        initial: Optional interior starting values (boundary is overwritten)

    Returns:
        (solved MultiGraph, SolveReport)

    Raises:
        NonConvergenceError: max iterations reached or the line search stalled
        NumericError: the linear solve failed
    """
    config = config or SolverConfig()
    boundary.check_domain(domain)
    operator = AreaOperator.for_domain(domain)
    if initial is None:
        u = transfinite_guess(domain, boundary)
    else:
        u = boundary.apply(np.array(initial, dtype=float).reshape(domain.shape))
    interior = np.flatnonzero(~domain.boundary_mask().ravel())

    report = SolveReport(initial_area=operator.area(u))
    report.residual_history.append(_max_interior(operator.residual(u)))
    while report.residual_history[-1] > config.tol_residual:
        if report.iterations >= config.max_newton_iters:
            raise NonConvergenceError(
                f"no convergence after {report.iterations} Newton steps, "
                f"residual {report.residual_history[-1]:.3e}",
                report.residual_history,
            )
        hess = operator.hessian(u)[interior][:, interior]
        rhs = -operator.gradient(u)[interior]
        precond = sparse.diags(1.0 / hess.diagonal())
        counter = _IterationCounter()
        delta, info = cg(hess, rhs, rtol=config.linear_rtol, atol=0.0,
                         maxiter=10 * interior.size, M=precond, callback=counter)
        if info != 0:
            raise NumericError(f"linear solve failed (cg info {info}) at Newton step {report.iterations + 1}")
        report.linear_iterations.append(counter.count)

        current = report.residual_history[-1]
        step = 1.0
        while True:
            trial = u.copy().ravel()
            trial[interior] += step * delta
            trial = trial.reshape(domain.shape)
            trial_residual = _max_interior(operator.residual(trial))
            if np.isfinite(trial_residual) and trial_residual <= (1.0 - config.armijo_c * step) * current:
                break
            step *= config.backtrack_factor
            if step < config.min_step:
                raise NonConvergenceError(
                    f"line search stalled at Newton step {report.iterations + 1}",
                    report.residual_history,
                )
        u = trial
        report.iterations += 1
        report.step_lengths.append(step)
        report.residual_history.append(trial_residual)
        logger.debug("newton %d: residual %.3e step %g", report.iterations, trial_residual, step)

    report.converged = True
    report.final_area = operator.area(u)
    logger.info("solved in %d Newton steps, residual %.3e", report.iterations, report.residual_history[-1])
    return domain.graph(u), report


class _IterationCounter:
    def __init__(self):
        self.count = 0

    def __call__(self, xk):
        self.count += 1


# ---------------------------------------------------------------------------
# Verification harness
# ---------------------------------------------------------------------------

EXACT_SOLUTIONS = {
    "constant": (lambda R, T: np.full_like(R, 7.0), dict(r_in=1.0, r_out=2.0, sheets=1)),
    "theta": (lambda R, T: T, dict(r_in=1.0, r_out=2.0, sheets=4)),
    "arccosh": (lambda R, T: np.arccosh(R), dict(r_in=1.5, r_out=4.0, sheets=1)),
}


def exact_problem(name: str, resolution: int, theta_resolution: Optional[int] = None,
                  theta_center: float = 0.0) -> Tuple[AnnularDomain, BoundaryData, Callable]:
    """Domain and boundary data for one of the known exact solutions"""
    try:
        func, params = EXACT_SOLUTIONS[name]
    except KeyError as exc:
        raise UsageError(f"unknown exact solution {name!r}; choose from {sorted(EXACT_SOLUTIONS)}") from exc
    n_theta = theta_resolution or resolution
    domain = AnnularDomain(params["r_in"], params["r_out"], params["sheets"], resolution, n_theta, theta_center)
    return domain, BoundaryData.from_function(domain, func), func


def solution_error(g: MultiGraph, func: Callable) -> float:
    R, T = np.meshgrid(g.rho, g.theta, indexing="ij")
    return float(np.max(np.abs(g.u - func(R, T))))


def convergence_order(exact_u: str, resolutions: Sequence[int], config: Optional[SolverConfig] = None) -> ConvergenceReport:
    """
    Observed order of the max-norm error under grid doubling.

    Args:
        exact_u: ``constant``, ``theta`` or ``arccosh``
        resolutions: At least three grid sizes, each doubling the previous

    Returns:
        ConvergenceReport with status ``exact``, ``ok`` or ``non-monotone``
    """
    resolutions = [int(n) for n in resolutions]
    if len(resolutions) < 3:
        raise UsageError("a convergence study needs at least three resolutions")
    if any(b != 2 * a for a, b in zip(resolutions, resolutions[1:])):
        raise InvalidDomainError(f"resolutions must double, got {resolutions}")
    errors = []
    for n in resolutions:
        domain, boundary, func = exact_problem(exact_u, n)
        g, _ = solve(domain, boundary, config)
        errors.append(solution_error(g, func))
    if max(errors) <= EXACT_ERROR:
        return ConvergenceReport(resolutions, errors, None, "exact")
    if any(b >= a for a, b in zip(errors, errors[1:])):
        logger.warning("errors do not decrease under refinement: %s", errors)
        return ConvergenceReport(resolutions, errors, None, "non-monotone")
    h = 1.0 / np.asarray(resolutions, dtype=float)
    slope, _ = np.polyfit(np.log(h), np.log(errors), 1)
    return ConvergenceReport(resolutions, errors, float(slope), "ok")


def perturbed_helicoid_problem(
    sheets: int,
    amplitude: float = 2.0,
    r_in: float = 1.0,
    r_out: float = float(np.exp(10.0)),
    n_sigma: int = 40,
    per_sheet: int = 8,
) -> Tuple[AnnularDomain, BoundaryData]:
    """u = theta on the circles, theta + amplitude*sin(pi*t) on the two end rays.

    t runs from 0 at r_in to 1 at r_out along log rho.
    """
    domain = AnnularDomain(r_in, r_out, sheets, n_sigma, per_sheet * sheets)
    theta = domain.theta
    t = np.linspace(0.0, 1.0, domain.n_sigma + 1)
    bump = amplitude * np.sin(np.pi * t)
    bump[0] = bump[-1] = 0.0
    boundary = BoundaryData(
        inner=theta,
        outer=theta,
        theta_min=theta[0] + bump,
        theta_max=theta[-1] + bump,
    )
    return domain, boundary
