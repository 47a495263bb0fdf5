"""Constrained minimisation of the discrete congestion functional over A_h.

The engine is projected gradient descent with Armijo backtracking,
alternating between the two blocks of the feasible set:

  u-block: mean-zero hyperplane, handled by de-meaning the step;
  m-block: scaled simplex {m >= 0, h^d sum m = 1}, handled by exact
           Euclidean sort-projection.

The u-step optionally uses the diagonal metric (alpha-1) m^(alpha-1)
(the reciprocal of the kinetic stiffness), which equalises the curvature
of the kinetic term across nodes with very different densities; without it
the line search collapses wherever m approaches the floor.  Every accepted
step decreases the objective (Armijo on the true objective), every iterate
is feasible, and convergence is declared on the projected-gradient mapping,
not the raw gradient, because the constraint multipliers make the raw
gradient nonzero at the constrained optimum.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .grid import GridFunction
from .variational import (
    AprioriDiagnostics,
    DegenerateSolutionError,
    DiscreteObjective,
    FeasiblePoint,
    apriori_diagnostics,
    estimate_Hbar,
    project_feasible,
    project_simplex_values,
)


@dataclass
class SolveOptions:
    max_iters: int = 50000
    tol_gradmap: float = 1e-9      # norm of projected-gradient step per unit step
    tol_obj: float = 1e-13         # relative decrease over 50 iterations
    step0: float = 1.0             # trial-step cap; trial = min(step0, 2 * last)
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    seed: int = 0
    precondition: bool = True      # diagonal metric on the u-block
    mass_cutoff: float = 1e-4      # for the effective-Hamiltonian estimate
    min_step: float = 1e-18

    def __post_init__(self):
        for name in ("tol_gradmap", "tol_obj", "step0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.armijo_c < 1 or not 0 < self.backtrack < 1:
            raise ValueError("armijo_c and backtrack must lie in (0, 1)")


@dataclass
class SolveResult:
    u: GridFunction
    m: GridFunction
    Hbar: float
    Hbar_std: float
    objective: float
    iters: int
    converged: bool
    diagnostics: AprioriDiagnostics
    gradmap: float = float("nan")

    @property
    def point(self) -> FeasiblePoint:
        return FeasiblePoint(self.u, self.m)


_RANDOM_INIT = re.compile(r"random(?:\((?:seed=)?(\d+)\))?$")


def random_feasible_point(grid, seed: int, u_scale: float = 0.1,
                          m_scale: float = 0.3) -> FeasiblePoint:
    """Smooth random start: low-frequency trig noise, projected onto A_h.

    Low-frequency by construction so the init carries no content in the
    central stencil's null modes (the Nyquist checkerboards), which the
    descent could never remove.
    """
    rng = np.random.default_rng(seed)

    def trig_noise(scale):
        out = np.zeros(grid.shape)
        if grid.dim == 1:
            x = grid.axis_coords()
            for k in range(1, 4):
                a, b = rng.normal(scale=scale / k, size=2)
                out += a * np.cos(2 * np.pi * k * x) + b * np.sin(2 * np.pi * k * x)
        else:
            X, Y = grid.coords()
            for kx in range(0, 3):
                for ky in range(0, 3):
                    if kx == 0 and ky == 0:
                        continue
                    a, b = rng.normal(scale=scale / (kx + ky), size=2)
                    phase = 2 * np.pi * (kx * X + ky * Y)
                    out += a * np.cos(phase) + b * np.sin(phase)
        return out

    u = GridFunction(grid, trig_noise(u_scale))
    m = GridFunction(grid, 1.0 + trig_noise(m_scale))
    return project_feasible(u, m)


def _initial_point(obj: DiscreteObjective, init, opts: SolveOptions) -> FeasiblePoint:
    grid = obj.spec.grid
    if isinstance(init, FeasiblePoint):
        return project_feasible(init.u, init.m)
    if init == "uniform":
        return FeasiblePoint(grid.zeros(), grid.constant(1.0))
    if isinstance(init, str):
        match = _RANDOM_INIT.match(init)
        if match:
            seed = int(match.group(1)) if match.group(1) else opts.seed
            return random_feasible_point(grid, seed)
    raise ValueError(f"unrecognised init {init!r}")


def minimize(
    obj: DiscreteObjective,
    init="uniform",
    opts: SolveOptions | None = None,
    trace_file=None,
) -> SolveResult:
    """Projected-gradient minimisation of J_h over A_h.

    init is a FeasiblePoint, "uniform" (u = 0, m = 1) or "random" /
    "random(seed)".  An optional trace file receives one
    "iter,objective,gradmap,step" CSV row per iteration.
    """
    opts = opts or SolveOptions()
    sp = obj.spec
    pt = _initial_point(obj, init, opts)
    u = pt.u.values.copy()
    m = pt.m.values.copy()
    total_mass = float(sp.grid.num_nodes)

    J = obj.value_arrays(u, m)
    if not np.isfinite(J):
        raise ValueError("objective non-finite at the initial point (invalid init)")

    t_u = t_m = opts.step0
    history: deque[float] = deque(maxlen=51)
    history.append(J)
    converged = False
    gradmap = float("inf")
    iters = 0

    own_trace = False
    if isinstance(trace_file, (str, bytes)) or hasattr(trace_file, "__fspath__"):
        trace_file = open(trace_file, "w")
        own_trace = True
    if trace_file is not None:
        trace_file.write("iter,objective,gradmap,step\n")

    def u_step():
        """One Armijo step in the mean-zero u block; returns its gradient map."""
        nonlocal u, J, t_u
        gu = obj.gradient_u_arrays(u, m)
        if opts.precondition:
            mf = np.maximum(m, obj.m_floor)
            direction = (sp.alpha - 1.0) * mf ** (sp.alpha - 1.0) * gu
        else:
            direction = gu
        direction = direction - direction.mean()
        slope = float(np.vdot(gu, direction))  # decrease rate along -direction
        if slope <= 0.0:
            return 0.0, False
        t = min(opts.step0, 2.0 * t_u)
        while t >= opts.min_step:
            u_trial = u - t * direction
            J_trial = obj.value_arrays(u_trial, m)
            if J_trial <= J - opts.armijo_c * t * slope:
                u, J, t_u = u_trial, J_trial, t
                return float(np.linalg.norm(direction)), True
            t *= opts.backtrack
        return 0.0, False

    def m_step():
        """One Armijo step in the simplex m block; returns its gradient map."""
        nonlocal m, J, t_m
        gm = obj.gradient_m_arrays(u, m)
        t = min(opts.step0, 2.0 * t_m)
        while t >= opts.min_step:
            m_trial = project_simplex_values(m - t * gm, total_mass)
            delta = m_trial - m
            slope_m = float(np.vdot(gm, delta))
            if slope_m >= 0.0:  # projected step vanished: stationary here
                return float(np.linalg.norm(delta)) / t, False
            J_trial = obj.value_arrays(u, m_trial)
            if J_trial <= J + opts.armijo_c * slope_m:
                m, J, t_m = m_trial, J_trial, t
                return float(np.linalg.norm(delta)) / t, True
            t *= opts.backtrack
        return 0.0, False

    try:
        iters = 0
        # Relax u at the initial m before touching m.  Descent that lowers m
        # into the congested regime while u still carries noise makes the
        # kinetic term stiff (curvature ~ m^(-alpha-1)) and stalls the line
        # search; settling u first costs little and removes the transient.
        warmup_cap = min(10000, opts.max_iters)
        while iters < warmup_cap:
            map_u, moved = u_step()
            if not moved:
                break
            iters += 1
            history.append(J)
            if trace_file is not None:
                trace_file.write(f"{iters},{J:.17g},{map_u:.17g},{t_u:.17g}\n")
            if map_u <= max(opts.tol_gradmap, 1e-9):
                break

        while iters < opts.max_iters:
            iters += 1
            map_u, _ = u_step()
            map_m, _ = m_step()
            gradmap = float(np.hypot(map_u, map_m))
            history.append(J)
            if trace_file is not None:
                trace_file.write(
                    f"{iters},{J:.17g},{gradmap:.17g},{max(t_u, t_m):.17g}\n"
                )
            if gradmap <= opts.tol_gradmap:
                converged = True
                break
            if len(history) == history.maxlen:
                drop = history[0] - J
                if drop <= opts.tol_obj * max(1.0, abs(J)):
                    converged = True
                    break
    finally:
        if own_trace:
            trace_file.close()

    ugf = GridFunction(sp.grid, u)
    mgf = GridFunction(sp.grid, m)
    point = FeasiblePoint(ugf, mgf)
    try:
        hbar, hstd = estimate_Hbar(point, obj, opts.mass_cutoff)
    except DegenerateSolutionError:
        hbar, hstd = float("nan"), float("nan")
    return SolveResult(
        u=ugf,
        m=mgf,
        Hbar=hbar,
        Hbar_std=hstd,
        objective=J,
        iters=iters,
        converged=converged,
        diagnostics=apriori_diagnostics(point, obj),
        gradmap=gradmap,
    )
