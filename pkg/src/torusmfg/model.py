"""Problem data: congestion exponents, drift, potentials and the coupling.

The density cost is a strictly convex power sum G(z) = sum_k c_k z^{theta_k}
with c_k > 0 and theta_k > 1, so g = G' is strictly increasing with
g(0+) = 0 and the Legendre-conjugate derivative (G*)' is total.  The
congestion integrand

    fbar(p, m) = |P + p|^gamma / (gamma (alpha - 1) m^(alpha - 1))

is extended to m = 0 by +inf unless p = -P (value 0 there), which keeps it
jointly convex and lower semi-continuous for 1 < alpha <= gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridFunction, TorusGrid


@dataclass(frozen=True)
class CouplingG:
    """Convex coupling G(z) = sum_k c_k z^theta_k, c_k > 0, theta_k > 1."""

    terms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "terms", tuple((float(c), float(t)) for c, t in self.terms)
        )
        if not self.terms:
            raise ValueError("coupling needs at least one power term")
        for c, t in self.terms:
            if c <= 0:
                raise ValueError(f"coefficient must be positive, got {c}")
            if t <= 1:
                raise ValueError(f"exponent must exceed 1, got {t}")

    def G(self, z):
        z = np.asarray(z, dtype=float)
        _check_nonneg(z)
        return sum(c * z**t for c, t in self.terms)

    def g(self, z):
        """g = G', strictly increasing on z > 0 with g(0+) = 0."""
        z = np.asarray(z, dtype=float)
        _check_nonneg(z)
        return sum(c * t * z ** (t - 1.0) for c, t in self.terms)

    def g_prime(self, z, z_floor: float = 0.0):
        """g' = G''; z floored before negative powers (theta < 2 terms)."""
        z = np.asarray(z, dtype=float)
        _check_nonneg(z)
        out = np.zeros_like(z)
        for c, t in self.terms:
            zz = np.maximum(z, z_floor) if t < 2.0 else z
            out = out + c * t * (t - 1.0) * zz ** (t - 2.0)
        return out

    def scaled(self, factor: float) -> "CouplingG":
        return CouplingG(tuple((factor * c, t) for c, t in self.terms))

    def conjugate_deriv(self, q):
        """(G*)'(q): the unique m >= 0 with g(m) = q for q > 0, else 0.

        Vectorised bracketed bisection followed by Newton polish; total on
        all of R since g(0+) = 0 and g is increasing and coercive.
        """
        q = np.asarray(q, dtype=float)
        scalar = q.ndim == 0
        q = np.atleast_1d(q).astype(float)
        out = np.zeros_like(q)
        pos = q > 0.0
        if np.any(pos):
            qp = q[pos]
            hi = np.ones_like(qp)
            for _ in range(200):
                need = self.g(hi) < qp
                if not need.any():
                    break
                hi[need] *= 2.0
            lo = np.zeros_like(qp)
            for _ in range(90):
                mid = 0.5 * (lo + hi)
                below = self.g(mid) < qp
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
            m = 0.5 * (lo + hi)
            for _ in range(3):  # Newton polish; g' > 0 at the root since q > 0
                m = m - (self.g(m) - qp) / self.g_prime(m, z_floor=1e-300)
                m = np.maximum(m, 0.0)
            out[pos] = m
        return float(out[0]) if scalar else out

    def serialize(self) -> list[dict]:
        return [{"c": c, "theta": t} for c, t in self.terms]

    @staticmethod
    def quadratic() -> "CouplingG":
        """G(m) = m^2 / 2, so g(m) = m."""
        return CouplingG(((0.5, 2.0),))


def _check_nonneg(z):
    if np.any(np.asarray(z) < 0):
        raise ValueError("coupling evaluated at negative argument")


def eval_G(coupling: CouplingG, z):
    return coupling.G(z)


def eval_g(coupling: CouplingG, z):
    return coupling.g(z)


def conjugate_deriv(coupling: CouplingG, q):
    return coupling.conjugate_deriv(q)


# ---------------------------------------------------------------------------
# extended congestion integrand and its recession function

def barf(p, m: float, P, alpha: float, gamma: float) -> float:
    """Extended integrand; +inf at m = 0 unless p = -P exactly."""
    if not 1.0 < alpha <= gamma:
        raise ValueError(f"need 1 < alpha <= gamma, got alpha={alpha}, gamma={gamma}")
    p = np.atleast_1d(np.asarray(p, dtype=float))
    P = np.atleast_1d(np.asarray(P, dtype=float))
    if m < 0:
        raise ValueError("m must be nonnegative")
    s = float(np.linalg.norm(P + p))
    if m == 0.0:
        return 0.0 if s == 0.0 else math.inf
    return s**gamma / (gamma * (alpha - 1.0) * m ** (alpha - 1.0))


def barf_recession(p, m: float, gamma: float) -> float:
    """Recession function: |p|^gamma / (gamma (gamma-1) m^(gamma-1))."""
    if gamma <= 1:
        raise ValueError(f"gamma must exceed 1, got {gamma}")
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if m < 0:
        raise ValueError("m must be nonnegative")
    s = float(np.linalg.norm(p))
    if m == 0.0:
        return 0.0 if s == 0.0 else math.inf
    return s**gamma / (gamma * (gamma - 1.0) * m ** (gamma - 1.0))


# ---------------------------------------------------------------------------
# potentials

POTENTIAL_FAMILIES = (
    "cosine-shift",
    "sine-cosine-product",
    "gaussian-bump",
    "exp-sin-cos",
    "custom-samples",
)


@dataclass(frozen=True)
class PotentialFamily:
    """Named potential with parameters; sampled onto a grid on demand.

    cosine-shift (d=1):        A cos(2 pi (x - shift))
    gaussian-bump (d=1):       A exp(-(x - center)^2)
    sine-cosine-product (d=2): A sin(2 pi (x + sx)) cos(2 pi (y + sy))
    exp-sin-cos (d=2):         A exp(-sin^2(2 pi (x + sx))) cos(2 pi (y + sy))
    custom-samples:            values supplied directly
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in POTENTIAL_FAMILIES:
            raise ValueError(
                f"unknown potential family {self.family!r}; "
                f"choose from {POTENTIAL_FAMILIES}"
            )

    def sample(self, grid: TorusGrid) -> GridFunction:
        p = self.params
        A = float(p.get("amplitude", 1.0))
        if self.family == "cosine-shift":
            shift = float(p.get("shift", 0.0))
            vals = A * np.cos(2 * np.pi * (grid.coords()[0] - shift))
        elif self.family == "gaussian-bump":
            center = float(p.get("center", 0.5))
            vals = A * np.exp(-((grid.coords()[0] - center) ** 2))
        elif self.family == "sine-cosine-product":
            if grid.dim != 2:
                raise ValueError("sine-cosine-product is two-dimensional")
            sx = float(p.get("shift_x", 0.0))
            sy = float(p.get("shift_y", 0.0))
            X, Y = grid.coords()
            vals = A * np.sin(2 * np.pi * (X + sx)) * np.cos(2 * np.pi * (Y + sy))
        elif self.family == "exp-sin-cos":
            if grid.dim != 2:
                raise ValueError("exp-sin-cos is two-dimensional")
            sx = float(p.get("shift_x", 0.0))
            sy = float(p.get("shift_y", 0.0))
            X, Y = grid.coords()
            vals = (
                A
                * np.exp(-np.sin(2 * np.pi * (X + sx)) ** 2)
                * np.cos(2 * np.pi * (Y + sy))
            )
        else:  # custom-samples
            vals = np.asarray(p["values"], dtype=float)
        f = GridFunction(grid, np.asarray(vals, dtype=float))
        if not np.all(np.isfinite(f.values)):
            raise ValueError("potential samples must be finite")
        return f

    def serialize(self) -> dict:
        rec = {"family": self.family}
        rec.update({k: v for k, v in self.params.items() if k != "values"})
        return rec


# ---------------------------------------------------------------------------
# full problem description

@dataclass
class ProblemSpec:
    """First-order congestion MFG on the torus.

    Exponent ranges by solution path: direct variational 1 < alpha <= gamma,
    two-dimensional transform 0 < alpha < 1, critical algebraic alpha = 1.
    """

    dim: int
    n: int
    alpha: float
    gamma: float
    P: tuple[float, ...]
    V: GridFunction
    coupling: CouplingG

    def __post_init__(self):
        self.P = tuple(float(p) for p in np.atleast_1d(self.P))
        if self.gamma <= 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if len(self.P) != self.dim:
            raise ValueError(f"drift needs {self.dim} components, got {len(self.P)}")
        if self.V.grid.dim != self.dim or self.V.grid.n != self.n:
            raise ValueError("potential sampled on a different grid than (dim, n)")

    @property
    def grid(self) -> TorusGrid:
        return self.V.grid

    @property
    def P_norm(self) -> float:
        return float(np.linalg.norm(self.P))

    def in_variational_range(self) -> bool:
        return 1.0 < self.alpha <= self.gamma

    def with_grid_size(self, n: int, potential: PotentialFamily) -> "ProblemSpec":
        """Same problem resampled on an n-point grid."""
        g = TorusGrid(self.dim, n)
        return ProblemSpec(
            self.dim, n, self.alpha, self.gamma, self.P,
            potential.sample(g), self.coupling,
        )
