"""Two-dimensional pipeline for sub-critical congestion (0 < alpha < 1).

The transport equation's flux is divergence-free, so in 2D it is the
rotated gradient of a stream function psi up to a constant vector Q.
Rewriting the system in (psi, m) lands back in the variational exponent
range with

    gamma' = gamma/(gamma-1),   alpha~ = alpha - (alpha-1) gamma',

drift Q, potential (gamma/gamma') V and coupling (gamma/gamma') G.  The
pipeline is: solve the dual variational problem for (psi, m), recover the
drift P by quadrature of the flux, then solve the discounted
Hamilton-Jacobi equation

    beta u + |P + Du|^gamma / (gamma m^alpha) + V - g(m) = 0

with a monotone upwind scheme, letting beta -> 0 so that -beta u
approaches the effective Hamiltonian.

Orientation convention: with perp(v) = (-v2, v1), the drift is recovered
from Pperp = integral of m^(1-alpha~) |Q+Dpsi|^(gamma'-2) (Q+Dpsi) as
P = (Pperp_2, -Pperp_1).  The mirrored solution (-u, m, -P) solves the
same system, so the orientation is a labelling choice; it is pinned by the
constant-field round trip Pperp = Q.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .grid import (
    GridFunction,
    central_diff2_values,
    central_diff_values,
    integrate_values,
)
from .model import ProblemSpec
from .optimizer import SolveOptions, SolveResult, minimize
from .variational import DiscreteObjective, estimate_Hbar


class HJBConvergenceError(RuntimeError):
    """Discounted HJB iteration failed to reach the residual tolerance."""


def transform_exponents(alpha: float, gamma: float) -> tuple[float, float]:
    """(gamma', alpha~) for 0 < alpha < 1, gamma > 1; lands in 1 < alpha~ < gamma'."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"transform requires 0 < alpha < 1, got {alpha}")
    if gamma <= 1.0:
        raise ValueError(f"transform requires gamma > 1, got {gamma}")
    gamma_prime = gamma / (gamma - 1.0)
    alpha_tilde = alpha - (alpha - 1.0) * gamma_prime
    assert 1.0 < alpha_tilde < gamma_prime
    return gamma_prime, alpha_tilde


@dataclass
class DualSpec:
    """Sub-critical base problem plus the stream-function drift Q."""

    base: ProblemSpec
    Q: tuple[float, float]

    def __post_init__(self):
        if self.base.dim != 2:
            raise ValueError("the stream-function transform is two-dimensional")
        self.Q = tuple(float(q) for q in self.Q)
        if len(self.Q) != 2:
            raise ValueError("Q must have two components")
        self.gamma_prime, self.alpha_tilde = transform_exponents(
            self.base.alpha, self.base.gamma
        )

    def dual_problem(self) -> ProblemSpec:
        """The transformed problem: exponents (alpha~, gamma'), drift Q,
        potential and coupling scaled by gamma/gamma'."""
        b = self.base
        scale = b.gamma / self.gamma_prime
        return ProblemSpec(
            dim=2,
            n=b.n,
            alpha=self.alpha_tilde,
            gamma=self.gamma_prime,
            P=self.Q,
            V=GridFunction(b.grid, scale * b.V.values),
            coupling=b.coupling.scaled(scale),
        )


def solve_dual(dual: DualSpec, opts: SolveOptions | None = None):
    """Minimise the dual functional; returns (psi, m) grid functions."""
    res = _solve_dual_full(dual, opts)
    return res.u, res.m


def _solve_dual_full(dual: DualSpec, opts: SolveOptions | None = None) -> SolveResult:
    obj = DiscreteObjective(dual.dual_problem())
    if opts is None:
        opts = SolveOptions(step0=float(dual.base.grid.num_nodes), max_iters=200000)
    return minimize(obj, "uniform", opts)


def _dual_flux(psi: np.ndarray, m: np.ndarray, dual: DualSpec,
               m_floor: float = 1e-8) -> list[np.ndarray]:
    """m^(1-alpha~) |Q+Dpsi|^(gamma'-2) (Q+Dpsi), m floored in the power."""
    h = dual.base.grid.h
    gp = dual.gamma_prime
    mf = np.maximum(m, m_floor)
    w = [dual.Q[k] + central_diff_values(psi, h, k) for k in range(2)]
    nsq = w[0] ** 2 + w[1] ** 2
    if gp == 2.0:
        coef = np.ones_like(nsq)
    else:
        with np.errstate(divide="ignore"):
            coef = np.where(nsq > 0.0, nsq ** ((gp - 2.0) / 2.0), 0.0)
    weight = mf ** (1.0 - dual.alpha_tilde) * coef
    return [weight * w[0], weight * w[1]]


def recover_P(psi: GridFunction, m: GridFunction, dual: DualSpec,
              m_floor: float = 1e-8) -> np.ndarray:
    """Drift recovered from the flux quadrature; P = (Pperp_2, -Pperp_1)."""
    h = dual.base.grid.h
    flux = _dual_flux(psi.values, m.values, dual, m_floor)
    pperp = np.array([integrate_values(flux[0], h), integrate_values(flux[1], h)])
    return np.array([pperp[1], -pperp[0]])


def dual_divergence_residual(psi: GridFunction, m: GridFunction, dual: DualSpec,
                             m_floor: float = 1e-8) -> float:
    """Discrete-L1 norm of a scheme-independent divergence of the flux.

    Measured with the plain 2-point central divergence: the 5-point stencil
    is the adjoint of the scheme itself, so its divergence vanishes at the
    discrete optimum by stationarity and would only report solver noise.
    """
    h = dual.base.grid.h
    flux = _dual_flux(psi.values, m.values, dual, m_floor)
    div = central_diff2_values(flux[0], h, 0) + central_diff2_values(flux[1], h, 1)
    return integrate_values(np.abs(div), h)


def curl_proxy(psi: GridFunction, m: GridFunction, dual: DualSpec,
               P: np.ndarray, m_floor: float = 1e-8) -> float:
    """L1 norm of the discrete curl of the reconstructed Du candidate.

    From Pperp + (Du)perp = flux, the candidate gradient field is the
    rotated flux deficit; it is an honest gradient only if its curl
    vanishes, which the construction does not guarantee.
    """
    h = dual.base.grid.h
    flux = _dual_flux(psi.values, m.values, dual, m_floor)
    pperp = np.array([-P[1], P[0]])
    du1 = flux[1] - pperp[1]       # (a_2, -a_1) undoes perp
    du2 = -(flux[0] - pperp[0])
    curl = central_diff2_values(du2, h, 0) - central_diff2_values(du1, h, 1)
    return integrate_values(np.abs(curl), h)


# ---------------------------------------------------------------------------
# discounted Hamilton-Jacobi solve with the monotone upwind scheme

def _upwind_parts(u: np.ndarray, p: np.ndarray, gamma: float, h: float):
    """Active one-sided slopes a_k = (-p_k - D+ u)^+, b_k = (p_k + D- u)^+."""
    a, b = [], []
    for k in range(u.ndim):
        fwd = (np.roll(u, -1, axis=k) - u) / h
        bwd = (u - np.roll(u, 1, axis=k)) / h
        a.append(np.maximum(-p[k] - fwd, 0.0))
        b.append(np.maximum(p[k] + bwd, 0.0))
    return a, b


def solve_hjb_discounted(
    m: GridFunction,
    P,
    spec: ProblemSpec,
    beta: float,
    mass_cutoff: float = 1e-4,
    tol: float = 1e-10,
    max_newton: int = 200,
    u0: np.ndarray | None = None,
) -> GridFunction:
    """Solve beta u + |P+Du|^gamma/(gamma m^alpha) + V - g(m) = 0.

    The upwind scheme is monotone and the residual is componentwise convex
    in u, so a damped semismooth Newton iteration converges globally; the
    Jacobian beta I + diag(1/(gamma m^alpha)) dS/du is a strictly
    diagonally dominant M-matrix.
    """
    if beta <= 0:
        raise ValueError("discount rate beta must be positive")
    grid = m.grid
    h = grid.h
    gamma = spec.gamma
    p = np.asarray(P, dtype=float)
    mfl = np.maximum(m.values, mass_cutoff)
    denom = gamma * mfl**spec.alpha
    source = spec.V.values - spec.coupling.g(np.maximum(m.values, 0.0))

    size = grid.num_nodes
    idx = np.arange(size).reshape(grid.shape)

    def residual(u):
        a, b = _upwind_parts(u, p, gamma, h)
        s = np.zeros_like(u)
        for k in range(grid.dim):
            s += a[k] ** gamma + b[k] ** gamma
        return beta * u + s / denom + source

    def jacobian(u):
        a, b = _upwind_parts(u, p, gamma, h)
        rows, cols, vals = [], [], []
        diag = np.full(grid.shape, beta)
        for k in range(grid.dim):
            ca = gamma * a[k] ** (gamma - 1.0) / (h * denom)
            cb = gamma * b[k] ** (gamma - 1.0) / (h * denom)
            diag += ca + cb
            rows.append(idx.ravel())
            cols.append(np.roll(idx, -1, axis=k).ravel())
            vals.append(-ca.ravel())
            rows.append(idx.ravel())
            cols.append(np.roll(idx, 1, axis=k).ravel())
            vals.append(-cb.ravel())
        rows.append(idx.ravel())
        cols.append(idx.ravel())
        vals.append(diag.ravel())
        return sps.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(size, size),
        )

    u = np.zeros(grid.shape) if u0 is None else np.array(u0, dtype=float)
    r = residual(u)
    best = float(np.max(np.abs(r)))
    for _ in range(max_newton):
        if best <= tol:
            break
        delta = spla.spsolve(jacobian(u), -r.ravel()).reshape(grid.shape)
        step = 1.0
        for _ in range(60):
            u_try = u + step * delta
            r_try = residual(u_try)
            norm_try = float(np.max(np.abs(r_try)))
            if norm_try < best:
                u, r, best = u_try, r_try, norm_try
                break
            step *= 0.5
        else:
            raise HJBConvergenceError(
                f"damped Newton stalled at max residual {best:.3e}"
            )
    if best > tol:
        raise HJBConvergenceError(
            f"discounted HJB did not reach tolerance: max residual {best:.3e}"
        )
    return GridFunction(grid, u)


def hjb_residual(u: GridFunction, m: GridFunction, P, spec: ProblemSpec,
                 beta: float, mass_cutoff: float = 1e-4) -> float:
    p = np.asarray(P, dtype=float)
    mfl = np.maximum(m.values, mass_cutoff)
    a, b = _upwind_parts(u.values, p, spec.gamma, m.grid.h)
    s = np.zeros(m.grid.shape)
    for k in range(m.grid.dim):
        s += a[k] ** spec.gamma + b[k] ** spec.gamma
    r = beta * u.values + s / (spec.gamma * mfl**spec.alpha) \
        + spec.V.values - spec.coupling.g(np.maximum(m.values, 0.0))
    return float(np.max(np.abs(r)))


# ---------------------------------------------------------------------------
# full pipeline

@dataclass
class TransformResult:
    psi: GridFunction
    m: GridFunction
    Q: tuple[float, float]
    P_recovered: np.ndarray
    u: GridFunction
    Hbar: float
    paper_Hbar_beta: float      # max u^(beta), the normalisation constant
    residuals: dict
    discount_estimates: list    # (beta, -beta * integral(u^beta), max residual)
    converged: dict
    dual_result: SolveResult = field(repr=False, default=None)


def pipeline_alpha_lt_1(
    dual: DualSpec,
    beta_schedule=(1e-1, 1e-2, 1e-3),
    opts: SolveOptions | None = None,
    hjb_tol: float = 1e-10,
) -> TransformResult:
    """Exponent transform, dual solve, drift recovery, vanishing discount."""
    base = dual.base
    res = _solve_dual_full(dual, opts)
    psi, m = res.u, res.m
    P = recover_P(psi, m, dual)

    h = base.grid.h
    estimates = []
    hjb_ok = True
    u_beta = None
    for beta in beta_schedule:
        warm = None if u_beta is None else u_beta.values * (last_beta / beta)
        try:
            u_beta = solve_hjb_discounted(m, P, base, beta, tol=hjb_tol, u0=warm)
        except HJBConvergenceError:
            hjb_ok = False
            raise
        last_beta = beta
        est = -beta * integrate_values(u_beta.values, h)
        estimates.append(
            (beta, est, hjb_residual(u_beta, m, P, base, beta))
        )

    beta_last = beta_schedule[-1]
    top = float(u_beta.values.max())
    u_final = GridFunction(base.grid, u_beta.values - top)
    hbar = -beta_last * integrate_values(u_beta.values, h)

    dual_obj = DiscreteObjective(dual.dual_problem())
    hbar_dual, _ = estimate_Hbar(res.point, dual_obj)
    residuals = {
        "dual_divergence_l1": dual_divergence_residual(psi, m, dual),
        "hjb_max_residual": estimates[-1][2],
        "curl_l1": curl_proxy(psi, m, dual, P),
        "hbar_dual_consistency": abs(
            dual.gamma_prime / base.gamma * hbar_dual - hbar
        ),
    }
    return TransformResult(
        psi=psi,
        m=m,
        Q=dual.Q,
        P_recovered=P,
        u=u_final,
        Hbar=hbar,
        paper_Hbar_beta=top,
        residuals=residuals,
        discount_estimates=estimates,
        converged={"dual": res.converged, "hjb": hjb_ok},
        dual_result=res,
    )


def solve_Q_for_P(
    base: ProblemSpec,
    P_target,
    opts: SolveOptions | None = None,
    tol: float = 1e-3,
    max_iters: int = 25,
) -> tuple[np.ndarray, np.ndarray]:
    """Optional inverse map: find Q whose recovered drift matches P_target.

    Broyden secant iteration on Q -> P(Q); the initial Jacobian is the
    constant-field rotation P = (q2, -q1).  Each trial costs a dual solve.
    """
    target = np.asarray(P_target, dtype=float)

    def P_of(Qv):
        d = DualSpec(base, tuple(Qv))
        psi, m = solve_dual(d, opts)
        return recover_P(psi, m, d)

    jac = np.array([[0.0, 1.0], [-1.0, 0.0]])  # dP/dQ at constants
    Q = np.array([target[1], -target[0]])      # its inverse applied to target
    P = P_of(Q)
    for _ in range(max_iters):
        err = P - target
        if np.linalg.norm(err, np.inf) <= tol:
            return Q, P
        dQ = np.linalg.solve(jac, -err)
        Q_new = Q + dQ
        P_new = P_of(Q_new)
        dP = P_new - P
        # Broyden rank-one update
        jac += np.outer(dP - jac @ dQ, dQ) / float(dQ @ dQ)
        Q, P = Q_new, P_new
    raise RuntimeError("drift matching did not converge")
