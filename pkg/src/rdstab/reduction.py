"""Reduction of a boundary-coupled diffusion / ODE loop to modal form.

The loop couples a scalar reaction-diffusion state z on (0, 1) with a finite
LTI block::

    z_t = (p z_xi)_xi - q_tilde z
    cos(theta1) z(0) - sin(theta1) z_xi(0) = 0
    cos(theta2) z(1) + sin(theta2) z_xi(1) = y,   y = C x
    x_dot = A x + B v,   v = z(zeta_m) or z_xi(zeta_m)

A quadratic boundary lifting moves the inhomogeneous right end condition
into distributed terms, and projection onto the eigenbasis of the shifted
operator (potential q_tilde + q_c) produces a finite closed-loop model whose
unmodeled part is summarized by scalar tail energies.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import block_diag

from .spectral import (
    SpectralBasis,
    SturmLiouvilleProblem,
    _as_profile,
    project,
    residual_energy,
)

TRACE_KINDS = ("value", "derivative")

_SAMPLE_GRID = np.linspace(0.0, 1.0, 2049)


def decompose_reaction(q_tilde, q_c: Optional[float] = None):
    """Split the reaction into a positive potential and a constant shift.

    Returns ``(q_c, q)`` with ``q = q_tilde + q_c``.  When ``q_c`` is not
    given it defaults to ``max(0, -min q_tilde) + 1``, which keeps the
    shifted potential at least 1 everywhere.
    """
    fun, const = _as_profile(q_tilde)
    if q_c is None:
        low = const if const is not None else float(np.min(fun(_SAMPLE_GRID)))
        q_c = max(0.0, -low) + 1.0
    q_c = float(q_c)
    if const is not None:
        q = const + q_c
        if q <= 0:
            raise ValueError(f"shifted potential q_tilde + q_c = {q} must be positive")
        return q_c, q

    def shifted(xs, _f=fun, _c=q_c):
        return _f(xs) + _c

    if np.min(shifted(_SAMPLE_GRID)) <= 0:
        raise ValueError("shifted potential q_tilde + q_c must be positive on [0, 1]")
    return q_c, shifted


@dataclass
class OdePlant:
    """Finite LTI block with scalar input and scalar output."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1, 1)
        self.c = np.asarray(self.c, dtype=float).reshape(1, -1)
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise ValueError(f"state matrix must be square, got {self.a.shape}")
        if self.b.shape[0] != n or self.c.shape[1] != n:
            raise ValueError("input and output vectors must match the state dimension")

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.a)


@dataclass
class CoupledPlant:
    """Full loop description prior to any truncation.

    ``trace_kind`` selects which trace of z feeds the LTI block: "value"
    for z(zeta_m) or "derivative" for z_xi(zeta_m).  ``q_c`` may be left
    None to use the default positive shift.  ``dp`` optionally supplies the
    derivative of a variable diffusion coefficient; when omitted it is taken
    to be 0 for constant p and a central difference otherwise.
    """

    theta1: float
    theta2: float
    p: object
    q_tilde: object
    zeta_m: float
    trace_kind: str
    ode: OdePlant
    q_c: Optional[float] = None
    dp: Optional[Callable] = None
    problem: SturmLiouvilleProblem = field(init=False, repr=False)

    def __post_init__(self):
        if not (0.0 < self.zeta_m < 1.0):
            raise ValueError(f"zeta_m must lie in (0, 1), got {self.zeta_m}")
        if self.trace_kind not in TRACE_KINDS:
            raise ValueError(f"trace_kind must be one of {TRACE_KINDS}")
        self.q_c, q_shifted = decompose_reaction(self.q_tilde, self.q_c)
        self.problem = SturmLiouvilleProblem(self.theta1, self.theta2, self.p, q_shifted)


@dataclass
class LiftingData:
    """Quadratic boundary lifting for the actuated right end.

    ``shape(xi) = xi^2 / den`` with ``den = cos(theta2) + 2 sin(theta2)``,
    so w = z - shape * y satisfies homogeneous conditions at both ends and
    evolves with the distributed source a(xi) y + b(xi) y_dot,
    b = -shape.  ``mu_m`` is the share of y entering the measured trace.
    """

    den: float
    shape: Callable
    dshape: Callable
    a: Callable
    b: Callable
    mu_m: float
    trace_kind: str


def lifting(plant: CoupledPlant) -> LiftingData:
    """Build the boundary lifting for a coupled plant."""
    den = float(np.cos(plant.theta2) + 2.0 * np.sin(plant.theta2))
    # den >= 1 for every admissible angle, so no degeneracy check is needed
    p_fun, p_const = _as_profile(plant.p)
    q_fun, _ = _as_profile(plant.q_tilde)
    if plant.dp is not None:
        dp = plant.dp
    elif p_const is not None:
        dp = lambda xs: np.zeros(np.shape(np.asarray(xs)))
    else:
        dp = lambda xs, _f=p_fun, _h=1e-6: (_f(np.asarray(xs) + _h) - _f(np.asarray(xs) - _h)) / (2 * _h)

    def shape(xs):
        xs = np.asarray(xs, dtype=float)
        return xs**2 / den

    def dshape(xs):
        xs = np.asarray(xs, dtype=float)
        return 2.0 * xs / den

    def a(xs):
        xs = np.asarray(xs, dtype=float)
        return (2.0 * p_fun(xs) + 2.0 * xs * np.asarray(dp(xs)) - q_fun(xs) * xs**2) / den

    def b(xs):
        return -shape(xs)

    mu_m = shape(plant.zeta_m) if plant.trace_kind == "value" else dshape(plant.zeta_m)
    return LiftingData(
        den=den, shape=shape, dshape=dshape, a=a, b=b,
        mu_m=float(mu_m), trace_kind=plant.trace_kind,
    )


def trace_coefficients(basis: SpectralBasis, zeta: float, trace_kind: str, n: int) -> np.ndarray:
    """Modal trace row: phi_i(zeta) or phi_i'(zeta) for i = 1..n."""
    if trace_kind not in TRACE_KINDS:
        raise ValueError(f"trace_kind must be one of {TRACE_KINDS}")
    deriv = trace_kind == "derivative"
    return basis.phi_matrix(np.array([zeta]), n, deriv=deriv)[:, 0]


@dataclass
class ReducedModel:
    """Closed-loop truncation with the data needed for feasibility checks.

    ``f`` and ``g`` describe the retained dynamics driven by the unmodeled
    trace contribution, ``h`` collects the quadratic output weights of the
    retained state that excite the tail, and ``tail_a``, ``tail_b`` are the
    unprojected energies of the lifting sources.
    """

    n: int
    trace_kind: str
    q_c: float
    lam: np.ndarray
    a_coef: np.ndarray
    b_coef: np.ndarray
    c_row: np.ndarray
    tail_a: float
    tail_b: float
    cb: float
    ae: np.ndarray
    mu_m: float
    f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    ode: OdePlant
    plant: CoupledPlant
    basis: SpectralBasis

    @property
    def lam_next(self) -> float:
        """First truncated eigenvalue lambda_{n+1}."""
        return float(self.lam[self.n])

    @property
    def dim(self) -> int:
        return self.n + self.ode.dim


def assemble(plant: CoupledPlant, basis: SpectralBasis, n: int) -> ReducedModel:
    """Project the lifted loop onto the first n modes of the basis.

    The basis must come from the plant's shifted operator and store at least
    n + 1 modes, since the feasibility conditions involve lambda_{n+1}.
    """
    if len(basis) < n + 1:
        raise ValueError(f"basis stores {len(basis)} modes, need at least {n + 1}")
    lift = lifting(plant)
    lams = basis.eigenvalues[: n + 1]
    a_coef = project(basis, lift.a, n)
    b_coef = project(basis, lift.b, n)
    c_row = trace_coefficients(basis, plant.zeta_m, plant.trace_kind, n).reshape(1, n)
    tail_a = residual_energy(basis, lift.a, a_coef)
    tail_b = residual_energy(basis, lift.b, b_coef)

    ode = plant.ode
    cb = (ode.c @ ode.b)[0, 0]
    ae = ode.a + lift.mu_m * (ode.b @ ode.c)
    a_n = np.diag(plant.q_c - lams[:n])
    ba = a_coef.reshape(n, 1)
    bb = b_coef.reshape(n, 1)
    f = np.block([
        [a_n + (bb * cb) @ c_row, ba @ ode.c + bb @ (ode.c @ ae)],
        [ode.b @ c_row, ae],
    ])
    g = np.vstack([bb * cb, ode.b])
    h = block_diag(
        tail_b * cb**2 * (c_row.T @ c_row),
        tail_a * (ode.c.T @ ode.c) + tail_b * (ae.T @ ode.c.T @ ode.c @ ae),
    )
    return ReducedModel(
        n=n, trace_kind=plant.trace_kind, q_c=plant.q_c, lam=lams,
        a_coef=a_coef, b_coef=b_coef, c_row=c_row,
        tail_a=tail_a, tail_b=tail_b, cb=cb, ae=ae, mu_m=lift.mu_m,
        f=f, g=g, h=h, ode=ode, plant=plant, basis=basis,
    )
