"""Eigenstructure of second order diffusion operators on the unit interval.

The operator is ``A f = -(p f')' + q f`` on (0, 1) with separated boundary
conditions parametrized by angles::

    cos(theta1) f(0) - sin(theta1) f'(0) = 0
    cos(theta2) f(1) + sin(theta2) f'(1) = 0

with both angles in [0, pi/2].  ``theta = 0`` is a Dirichlet end and
``theta = pi/2`` a Neumann end.  Three construction routes are provided:

* :func:`closed_form_basis` for constant coefficients with pure
  Dirichlet/Neumann ends,
* :func:`robin_basis` for constant coefficients with arbitrary angles,
  via a transcendental root solve,
* :func:`discretized_basis` for variable coefficients, via a symmetric
  finite-difference eigensolver with Richardson extrapolation.

All bases are orthonormal in L2(0, 1) and every eigenvalue must fall inside
the bracket ``pi^2 (n-1)^2 p_lo <= lambda_n <= pi^2 n^2 p_hi + q_hi``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

from .errors import BracketingError, TailBoundError

log = logging.getLogger(__name__)

_SAMPLE_GRID = np.linspace(0.0, 1.0, 2049)


def _as_profile(value) -> tuple[Callable[[np.ndarray], np.ndarray], Optional[float]]:
    """Normalize a coefficient to (vectorized callable, constant value or None)."""
    if callable(value):
        def fun(xs, _f=value):
            xs = np.asarray(xs, dtype=float)
            out = np.asarray(_f(xs), dtype=float)
            return np.broadcast_to(out, xs.shape).copy()
        return fun, None
    const = float(value)

    def cfun(xs, _c=const):
        xs = np.asarray(xs, dtype=float)
        return np.full(xs.shape, _c)

    return cfun, const


def _is_angle(theta: float, target: float) -> bool:
    return abs(theta - target) <= 1e-12


def _snapped_trig(theta: float) -> tuple[float, float]:
    if _is_angle(theta, 0.0):
        return 0.0, 1.0
    if _is_angle(theta, np.pi / 2):
        return 1.0, 0.0
    return float(np.sin(theta)), float(np.cos(theta))


@dataclass
class SturmLiouvilleProblem:
    """Diffusion operator data: coefficients p, q and boundary angles.

    Parameters
    ----------
    theta1, theta2 : float
        Boundary angles in [0, pi/2] at the left and right end.
    p : float or callable
        Diffusion coefficient, strictly positive on [0, 1].
    q : float or callable
        Potential.  Certified tail bounds additionally require q > 0.
    """

    theta1: float
    theta2: float
    p: object
    q: object
    p_fun: Callable = field(init=False, repr=False)
    q_fun: Callable = field(init=False, repr=False)
    p_const: Optional[float] = field(init=False, repr=False)
    q_const: Optional[float] = field(init=False, repr=False)

    def __post_init__(self):
        for name, theta in (("theta1", self.theta1), ("theta2", self.theta2)):
            if not (0.0 <= theta <= np.pi / 2 + 1e-12):
                raise ValueError(f"{name} must lie in [0, pi/2], got {theta}")
        self.p_fun, self.p_const = _as_profile(self.p)
        self.q_fun, self.q_const = _as_profile(self.q)
        pv = self.p_fun(_SAMPLE_GRID)
        if np.min(pv) <= 0:
            raise ValueError("diffusion coefficient p must be strictly positive")
        qv = self.q_fun(_SAMPLE_GRID)
        self._p_lo = float(np.min(pv))
        self._p_hi = float(np.max(pv))
        self._q_lo = float(np.min(qv))
        self._q_hi = float(np.max(qv))

    @property
    def p_lo(self) -> float:
        return self._p_lo if self.p_const is None else self.p_const

    @property
    def p_hi(self) -> float:
        return self._p_hi if self.p_const is None else self.p_const

    @property
    def q_lo(self) -> float:
        return self._q_lo if self.q_const is None else self.q_const

    @property
    def q_hi(self) -> float:
        return self._q_hi if self.q_const is None else self.q_const

    @property
    def is_constant(self) -> bool:
        return self.p_const is not None and self.q_const is not None

    def eigenvalue_bracket(self, n: int) -> tuple[float, float]:
        """Two-sided a priori bracket for the n-th eigenvalue (n >= 1)."""
        if n < 1:
            raise ValueError("mode index starts at 1")
        lo = np.pi**2 * (n - 1) ** 2 * self.p_lo
        hi = np.pi**2 * n**2 * self.p_hi + self.q_hi
        return lo, hi


@dataclass
class EigenPair:
    """One orthonormal eigenfunction with its eigenvalue and derivative."""

    index: int
    lam: float
    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]


class _ClosedFormFamily:
    """Trigonometric eigenfamily for constant p, q with 0 / pi/2 ends.

    ``nu(i)`` is the spatial frequency multiplier of mode i, so that
    ``lam_i = p (nu pi)^2 + q`` and the normalized amplitude is sqrt(2)
    (1 for the constant first mode of the Neumann-Neumann family).
    ``offset`` is the uniform shift with nu(i) = i - offset for the
    oscillatory modes, used by the certified tail formulas.
    """

    def __init__(self, kind: str, p: float, q: float):
        self.kind = kind
        self.p = p
        self.q = q
        self.offset = {"half_cos": 0.5, "half_sin": 0.5, "full_sin": 0.0, "full_cos": 1.0}[kind]

    def nu(self, idx):
        idx = np.asarray(idx, dtype=float)
        return idx - self.offset

    def lam(self, idx):
        return self.p * (self.nu(idx) * np.pi) ** 2 + self.q

    def amp_sq(self, idx):
        idx = np.asarray(idx)
        if self.kind == "full_cos":
            return np.where(idx == 1, 1.0, 2.0)
        return np.full(np.shape(idx), 2.0)

    def phi_value(self, i: int, xs):
        xs = np.asarray(xs, dtype=float)
        nu = float(self.nu(i))
        if self.kind in ("half_cos", "full_cos"):
            if self.kind == "full_cos" and i == 1:
                return np.ones(xs.shape)
            return np.sqrt(2.0) * np.cos(nu * np.pi * xs)
        return np.sqrt(2.0) * np.sin(nu * np.pi * xs)

    def dphi_value(self, i: int, xs):
        xs = np.asarray(xs, dtype=float)
        nu = float(self.nu(i))
        if self.kind in ("half_cos", "full_cos"):
            if self.kind == "full_cos" and i == 1:
                return np.zeros(xs.shape)
            return -np.sqrt(2.0) * nu * np.pi * np.sin(nu * np.pi * xs)
        return np.sqrt(2.0) * nu * np.pi * np.cos(nu * np.pi * xs)

    def trace_sq(self, idx, zeta: float, deriv: bool):
        """phi_i(zeta)^2 or phi_i'(zeta)^2, vectorized over the index array."""
        idx = np.asarray(idx)
        nu = self.nu(idx)
        arg = nu * np.pi * zeta
        if self.kind in ("half_cos", "full_cos"):
            vals = -np.sqrt(2.0) * nu * np.pi * np.sin(arg) if deriv else np.sqrt(2.0) * np.cos(arg)
            if self.kind == "full_cos":
                vals = np.where(idx == 1, 0.0 if deriv else 1.0, vals)
        else:
            vals = np.sqrt(2.0) * nu * np.pi * np.cos(arg) if deriv else np.sqrt(2.0) * np.sin(arg)
        return vals**2


class _RobinFamily:
    """Eigenfamily for constant p, q with general angles via root finding.

    With ``mu = sqrt((lambda - q)/p)`` the unnormalized eigenfunction
    ``f(xi) = sin(theta1) mu cos(mu xi) + cos(theta1) sin(mu xi)`` satisfies
    the left condition for every mu; eigenvalues come from the roots of the
    right-end defect ``cos(theta2) f(1) + sin(theta2) f'(1)``.
    """

    SCAN_PER_PI = 40

    def __init__(self, theta1: float, theta2: float, p: float, q: float):
        self.theta1 = theta1
        self.theta2 = theta2
        self.p = p
        self.q = q
        # snap sines and cosines of the pure angles to exact values; the
        # 6e-17 left by cos(pi/2) would otherwise plant a spurious defect
        # root at mu ~ 1e-8
        self._s1, self._c1 = _snapped_trig(theta1)
        self._s2, self._c2 = _snapped_trig(theta2)
        # mu = 0 with a constant eigenfunction occurs only for Neumann-Neumann
        self.include_zero = _is_angle(theta1, np.pi / 2) and _is_angle(theta2, np.pi / 2)
        self._roots = np.empty(0)
        self._scan_end = 1e-8

    def _defect(self, mu):
        s1, c1 = self._s1, self._c1
        s2, c2 = self._s2, self._c2
        f1 = s1 * mu * np.cos(mu) + c1 * np.sin(mu)
        df1 = -s1 * mu**2 * np.sin(mu) + c1 * mu * np.cos(mu)
        return c2 * f1 + s2 * df1

    def ensure_roots(self, count: int):
        """Extend the cached positive root list to at least ``count`` entries."""
        while len(self._roots) < count:
            lo = self._scan_end
            hi = lo + np.pi * (count - len(self._roots) + 2)
            grid = np.linspace(lo, hi, int(self.SCAN_PER_PI * (hi - lo) / np.pi) + 2)
            vals = self._defect(grid)
            sign = np.sign(vals)
            hit = np.nonzero(sign[:-1] * sign[1:] <= 0)[0]
            hit = hit[(sign[hit] != 0) | (sign[hit + 1] != 0)]
            if len(hit):
                a, b = grid[hit].copy(), grid[hit + 1].copy()
                fa = vals[hit].copy()
                for _ in range(60):
                    mid = 0.5 * (a + b)
                    fm = self._defect(mid)
                    left = fa * fm <= 0
                    b = np.where(left, mid, b)
                    a = np.where(left, a, mid)
                    fa = np.where(left, fa, fm)
                roots = 0.5 * (a + b)
                merged = np.concatenate([self._roots, roots])
                self._roots = merged[np.concatenate(([True], np.diff(merged) > 1e-6))]
            self._scan_end = hi
            if self._scan_end > np.pi * (count + 4) and len(self._roots) < count:
                raise BracketingError(
                    f"root scan found {len(self._roots)} of {count} eigenvalues; "
                    "the defect function may be degenerate for these angles"
                )

    def mu_of_index(self, idx):
        """Map 1-based mode indices to mu values, accounting for the zero mode."""
        idx = np.asarray(idx, dtype=int)
        shift = 2 if self.include_zero else 1
        self.ensure_roots(int(np.max(idx)) - shift + 1 if np.size(idx) else 0)
        mus = np.empty(idx.shape, dtype=float)
        pos = idx >= shift
        mus[pos] = self._roots[idx[pos] - shift]
        mus[~pos] = 0.0
        return mus

    def lam(self, idx):
        mus = self.mu_of_index(idx)
        return self.p * mus**2 + self.q

    def norm_sq(self, mu):
        """Exact L2 norm squared of the unnormalized eigenfunction."""
        s1, c1 = self._s1, self._c1
        mu = np.asarray(mu, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            osc = np.where(mu > 0, np.sin(2 * mu) / (4 * mu), 0.5)
        return (
            s1**2 * mu**2 * (0.5 + osc)
            + c1**2 * (0.5 - osc)
            + s1 * c1 * np.sin(mu) ** 2
        )

    def raw_value(self, mu, xs, deriv: bool):
        s1, c1 = self._s1, self._c1
        if deriv:
            return -s1 * mu**2 * np.sin(mu * xs) + c1 * mu * np.cos(mu * xs)
        return s1 * mu * np.cos(mu * xs) + c1 * np.sin(mu * xs)

    def trace_sq(self, idx, zeta: float, deriv: bool):
        idx = np.asarray(idx, dtype=int)
        mus = self.mu_of_index(idx)
        out = np.empty(mus.shape)
        pos = mus > 0
        out[pos] = self.raw_value(mus[pos], zeta, deriv) ** 2 / self.norm_sq(mus[pos])
        out[~pos] = 0.0 if deriv else 1.0
        return out

    def sup_sq_beyond(self, mu_lo: float) -> float:
        """Uniform bound on sup |phi|^2 over modes with mu >= mu_lo > 3/2.

        The amplitude of the unnormalized mode is A = sqrt(s1^2 mu^2 + c1^2)
        and its norm satisfies ||f||^2 >= A^2 (1/2 - 3/(4 mu)), so
        sup phi^2 <= 4 mu / (2 mu - 3), decreasing in mu.
        """
        if mu_lo <= 1.5:
            raise TailBoundError("tail cutoff too small for a certified sup bound")
        return 4.0 * mu_lo / (2.0 * mu_lo - 3.0)


def _pair_from_family(fam, i: int) -> EigenPair:
    if isinstance(fam, _ClosedFormFamily):
        return EigenPair(
            index=i,
            lam=float(fam.lam(i)),
            phi=lambda xs, _i=i: fam.phi_value(_i, xs),
            dphi=lambda xs, _i=i: fam.dphi_value(_i, xs),
        )
    mu = float(fam.mu_of_index(np.array([i]))[0])
    if mu == 0.0:
        return EigenPair(
            index=i,
            lam=float(fam.q),
            phi=lambda xs: np.ones(np.asarray(xs, dtype=float).shape),
            dphi=lambda xs: np.zeros(np.asarray(xs, dtype=float).shape),
        )
    scale = 1.0 / np.sqrt(float(fam.norm_sq(mu)))

    def phi(xs, _mu=mu, _s=scale):
        return fam.raw_value(_mu, np.asarray(xs, dtype=float), False) * _s

    def dphi(xs, _mu=mu, _s=scale):
        return fam.raw_value(_mu, np.asarray(xs, dtype=float), True) * _s

    return EigenPair(index=i, lam=float(fam.p * mu**2 + fam.q), phi=phi, dphi=dphi)


@dataclass
class SpectralBasis:
    """A finite stack of orthonormal eigenpairs plus optional tail access.

    ``family`` gives analytic access to eigenvalues and point traces beyond
    the stored pairs; it is available for the closed-form and root-solve
    routes and absent for the discretized route.
    """

    problem: SturmLiouvilleProblem
    pairs: list
    origin: str
    family: object = None

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([pr.lam for pr in self.pairs])

    def eigenvalue(self, i: int) -> float:
        """lambda_i for any 1-based index, extending through the family if needed."""
        if i < 1:
            raise ValueError(f"mode indices are 1-based, got {i}")
        if i <= len(self.pairs):
            return self.pairs[i - 1].lam
        if self.family is None:
            raise TailBoundError(
                f"eigenvalue {i} is beyond the {len(self.pairs)} stored modes and "
                "this basis has no analytic extension; rebuild with a larger n_max"
            )
        return float(self.family.lam(np.array([i]))[0])

    def phi_matrix(self, xs, n: Optional[int] = None, deriv: bool = False) -> np.ndarray:
        """Rows of eigenfunction (or derivative) values at the points xs."""
        n = len(self.pairs) if n is None else n
        if n > len(self.pairs):
            raise ValueError(f"basis stores {len(self.pairs)} modes, requested {n}")
        xs = np.asarray(xs, dtype=float)
        fns = [(pr.dphi if deriv else pr.phi) for pr in self.pairs[:n]]
        return np.stack([fn(xs) for fn in fns])


def _check_bracket(problem, lams, rel_slack: float, context: str):
    for i, lam in enumerate(lams, start=1):
        lo, hi = problem.eigenvalue_bracket(i)
        slack = rel_slack * max(1.0, abs(lam))
        if lam < lo - slack or lam > hi + slack:
            raise BracketingError(
                f"{context}: eigenvalue {i} = {lam:.6g} violates bracket "
                f"[{lo:.6g}, {hi:.6g}]; a root was likely missed or duplicated"
            )


def closed_form_basis(problem: SturmLiouvilleProblem, n_max: int) -> SpectralBasis:
    """Exact trigonometric basis for constant coefficients with 0 / pi/2 ends."""
    if not problem.is_constant:
        raise ValueError("closed-form basis requires constant p and q")
    left_n = _is_angle(problem.theta1, np.pi / 2)
    left_d = _is_angle(problem.theta1, 0.0)
    right_n = _is_angle(problem.theta2, np.pi / 2)
    right_d = _is_angle(problem.theta2, 0.0)
    if not ((left_n or left_d) and (right_n or right_d)):
        raise ValueError(
            "closed-form basis requires each angle to be exactly 0 or pi/2; "
            "use robin_basis for intermediate angles"
        )
    kind = {
        (True, False): "half_cos",
        (False, True): "half_sin",
        (False, False): "full_sin",
        (True, True): "full_cos",
    }[(left_n, right_n)]
    fam = _ClosedFormFamily(kind, problem.p_const, problem.q_const)
    pairs = [_pair_from_family(fam, i) for i in range(1, n_max + 1)]
    basis = SpectralBasis(problem=problem, pairs=pairs, origin="closed-form", family=fam)
    _check_bracket(problem, basis.eigenvalues, 1e-12, "closed-form basis")
    return basis


def robin_basis(problem: SturmLiouvilleProblem, n_max: int) -> SpectralBasis:
    """Basis for constant coefficients and arbitrary angles via root solving.

    Roots of the boundary defect are bracketed on a scan grid with 40 points
    per pi and polished by bisection to full double precision.
    """
    if not problem.is_constant:
        raise ValueError("robin_basis requires constant p and q; use discretized_basis")
    fam = _RobinFamily(problem.theta1, problem.theta2, problem.p_const, problem.q_const)
    fam.ensure_roots(n_max if not fam.include_zero else n_max - 1)
    pairs = [_pair_from_family(fam, i) for i in range(1, n_max + 1)]
    basis = SpectralBasis(problem=problem, pairs=pairs, origin="robin", family=fam)
    _check_bracket(problem, basis.eigenvalues, 1e-9, "robin basis")
    return basis


def discretized_basis(
    problem: SturmLiouvilleProblem, n_max: int, grid_size: int = 8192
) -> SpectralBasis:
    """Variable-coefficient basis from a symmetric finite-difference eigensolve.

    The quadratic form of the operator is assembled on a uniform grid with
    midpoint diffusion samples and trapezoid mass weights; Neumann and Robin
    ends contribute the boundary penalty ``p cot(theta) f^2``.  Eigenvalues
    are Richardson extrapolated across ``grid_size/2`` and ``grid_size``.
    Eigenfunctions are cubic splines on the fine grid, re-orthonormalized
    against the package quadrature rule so Gram defects stay near machine
    precision.
    """
    if grid_size % 2 or grid_size < max(256, 16 * n_max):
        raise ValueError(f"grid_size must be even and >= {max(256, 16 * n_max)}")

    lam_c, _, _ = _fd_modes(problem, grid_size // 2, n_max)
    lam_f, xs, vecs = _fd_modes(problem, grid_size, n_max)
    lams = (4.0 * lam_f - lam_c) / 3.0

    # deterministic sign: the first extremal value of each mode is positive
    for k in range(n_max):
        j = int(np.argmax(np.abs(vecs[:, k])))
        if vecs[j, k] < 0:
            vecs[:, k] = -vecs[:, k]

    splines = [CubicSpline(xs, vecs[:, k], bc_type="not-a-knot") for k in range(n_max)]
    xq, wq = gauss_rule(n_max)
    vals = np.stack([s(xq) for s in splines])
    gram = (vals * wq) @ vals.T
    gl, gu = np.linalg.eigh(gram)
    if np.min(gl) <= 0:
        raise BracketingError("discretized modes are numerically dependent; refine the grid")
    mix = gu @ np.diag(1.0 / np.sqrt(gl)) @ gu.T
    coefs = mix @ vecs.T  # rows are re-orthonormalized grid vectors
    splines = [CubicSpline(xs, coefs[k], bc_type="not-a-knot") for k in range(n_max)]

    pairs = []
    for k in range(n_max):
        s = splines[k]
        pairs.append(
            EigenPair(
                index=k + 1,
                lam=float(lams[k]),
                phi=lambda p_, _s=s: np.asarray(_s(np.asarray(p_, dtype=float))),
                dphi=lambda p_, _d=s.derivative(): np.asarray(_d(np.asarray(p_, dtype=float))),
            )
        )
    basis = SpectralBasis(problem=problem, pairs=pairs, origin="discretized", family=None)
    _check_bracket(problem, basis.eigenvalues, 1e-3, f"discretized basis (grid {grid_size})")
    return basis


def _fd_modes(problem, m: int, n_max: int):
    """Lowest modes of the symmetric grid form at resolution m."""
    h = 1.0 / m
    xs = np.linspace(0.0, 1.0, m + 1)
    pm = problem.p_fun(0.5 * (xs[:-1] + xs[1:]))
    qv = problem.q_fun(xs)
    left_d = _is_angle(problem.theta1, 0.0)
    right_d = _is_angle(problem.theta2, 0.0)
    lo = 1 if left_d else 0
    hi = m - 1 if right_d else m
    idx = np.arange(lo, hi + 1)

    w = np.full(m + 1, h)
    w[0] = w[-1] = h / 2
    diag = np.zeros(len(idx))
    for ii, j in enumerate(idx):
        s = 0.0
        if j >= 1:
            s += pm[j - 1] / h
        if j <= m - 1:
            s += pm[j] / h
        diag[ii] = s + w[j] * qv[j]
    off = -pm[idx[:-1]] / h
    if not left_d and not _is_angle(problem.theta1, np.pi / 2):
        diag[0] += problem.p_fun(np.array([0.0]))[0] / np.tan(problem.theta1)
    if not right_d and not _is_angle(problem.theta2, np.pi / 2):
        diag[-1] += problem.p_fun(np.array([1.0]))[0] / np.tan(problem.theta2)

    ws = w[idx]
    scale = 1.0 / np.sqrt(ws)
    ev, gv = eigh_tridiagonal(
        diag * scale**2,
        off * scale[:-1] * scale[1:],
        select="i",
        select_range=(0, n_max - 1),
    )
    fv = gv * scale[:, None]  # back to nodal values, already mass-normalized
    full = np.zeros((m + 1, n_max))
    full[idx] = fv
    return ev, xs, full


@lru_cache(maxsize=32)
def _cached_rule(panels: int, order: int):
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    xs = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    ws = (half[:, None] * wg[None, :]).ravel()
    xs.setflags(write=False)
    ws.setflags(write=False)
    return xs, ws


def gauss_rule(n_high: int, order: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule resolving modes up to index ``n_high``.

    Panel count scales with the mode index so the most oscillatory retained
    eigenfunction keeps at least 8 quadrature points per half wave.
    """
    panels = max(16, 2 * int(n_high))
    return _cached_rule(panels, order)


def project(basis: SpectralBasis, f: Callable, n: Optional[int] = None) -> np.ndarray:
    """First n modal coefficients of a profile f against the basis."""
    n = len(basis) if n is None else n
    xs, ws = gauss_rule(n)
    fv = np.asarray(f(xs), dtype=float)
    return basis.phi_matrix(xs, n) @ (ws * fv)


def h1_energy(basis: SpectralBasis, coeffs: Sequence[float]) -> float:
    """Energy form value sum lambda_i c_i^2 of a modal expansion.

    For an expansion f = sum c_i phi_i this equals the operator form
    ``int p f'^2 + q f^2`` plus the boundary penalty terms, by
    orthogonality of the eigenfunctions in the energy inner product.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    return float(np.dot(basis.eigenvalues[: len(coeffs)], coeffs**2))


def residual_energy(basis: SpectralBasis, f: Callable, coeffs: Optional[np.ndarray] = None) -> float:
    """L2 energy of a profile left outside the first len(coeffs) modes.

    Computed as ||f||^2 - sum c_i^2; round-off can push the difference a few
    ulp below zero, in which case it is clamped at 0 and the clamp magnitude
    logged.
    """
    if coeffs is None:
        coeffs = project(basis, f)
    coeffs = np.asarray(coeffs, dtype=float)
    xs, ws = gauss_rule(len(coeffs))
    fv = np.asarray(f(xs), dtype=float)
    total = float(np.dot(ws, fv**2))
    res = total - float(np.sum(coeffs**2))
    if res < 0:
        log.warning("residual energy clamped at 0 (raw value %.3e)", res)
        res = 0.0
    return res


def _closed_form_tail(fam: _ClosedFormFamily, n: int, epsilon: Optional[float]) -> float:
    """Certified tail bound for the trigonometric families.

    Uses sup phi^2 <= 2, sup phi'^2 <= 2 (nu pi)^2 and the spectral lower
    bound lambda_i >= p (nu_i pi)^2, then an integral test over the
    frequency ladder nu = i - offset.
    """
    p = fam.p
    c0 = fam.offset
    if epsilon is None:
        if n > c0:
            return 2.0 / (p * np.pi**2 * (n - c0))
        # Neumann-Neumann with n = 1: first oscillatory term plus integral test
        return 2.0 / (p * np.pi**2) * 2.0
    eps = epsilon
    base = 1.0 / (p ** (1.5 + eps) * np.pi ** (1 + 2 * eps))
    if n > c0:
        return base / (eps * (n - c0) ** (2 * eps))
    return base * (2.0 + 0.5 / eps)


def _series_tail(terms, remainder: float) -> float:
    return float(np.sum(terms)) + remainder


def tail_m1(
    basis: SpectralBasis,
    n: int,
    zeta: Optional[float] = None,
    cutoff: int = 10000,
    sup_sq: Optional[float] = None,
) -> float:
    """Upper bound on ``sum_{i>n} phi_i(zeta)^2 / lambda_i``.

    Closed-form bases use the certified formula ``2 / (p pi^2 (n - c0))``
    with the family frequency offset c0 (1/2 for the mixed families); it is
    independent of zeta.  Other bases accumulate exact terms up to
    ``cutoff`` and close the series with an integral-test remainder driven
    by the eigenvalue bracket, which needs a uniform bound on sup phi^2:
    computed analytically for the root-solve route, user supplied via
    ``sup_sq`` for the discretized route.
    """
    if isinstance(basis.family, _ClosedFormFamily):
        return _closed_form_tail(basis.family, n, None)
    if zeta is None:
        raise TailBoundError("partial-sum tail bounds need the trace point zeta")
    p_lo = basis.problem.p_lo
    if isinstance(basis.family, _RobinFamily):
        fam = basis.family
        idx = np.arange(n + 1, cutoff + 1)
        terms = fam.trace_sq(idx, zeta, deriv=False) / fam.lam(idx)
        mu_lo = np.sqrt(max(np.pi**2 * cutoff**2 - fam.q / fam.p, 10.0))
        rem = fam.sup_sq_beyond(mu_lo) / (p_lo * np.pi**2 * (cutoff - 1))
        return _series_tail(terms, rem)
    # discretized route: exact stored terms, then the user-certified sup bound
    stored = len(basis)
    if stored <= n:
        raise TailBoundError("no stored modes beyond n; rebuild with larger n_max")
    if sup_sq is None:
        raise TailBoundError(
            "discretized tail bound needs sup_sq, a uniform bound on sup_i>n |phi_i|^2"
        )
    idx = np.arange(n + 1, stored + 1)
    vals = np.array([basis.pairs[i - 1].phi(np.array([zeta]))[0] for i in idx])
    terms = vals**2 / basis.eigenvalues[n:stored]
    rem = sup_sq / (p_lo * np.pi**2 * (stored - 1))
    return _series_tail(terms, rem)


def tail_m2(
    basis: SpectralBasis,
    n: int,
    epsilon: float,
    zeta: Optional[float] = None,
    cutoff: int = 10000,
    sup_sq_scale: Optional[float] = None,
) -> float:
    """Upper bound on ``sum_{i>n} phi_i'(zeta)^2 / lambda_i^(3/2+epsilon)``.

    Closed-form bases use the certified formula
    ``1 / (epsilon p^(3/2+eps) pi^(1+2 eps) (n - c0)^(2 eps))``.  The
    root-solve route bounds sup phi'^2 by mu^2 sup phi^2 and the discretized
    route needs ``sup_sq_scale`` with sup phi_i'^2 <= sup_sq_scale * lambda_i.
    """
    if not (0 < epsilon <= 0.5):
        raise ValueError("epsilon must lie in (0, 1/2]")
    if isinstance(basis.family, _ClosedFormFamily):
        return _closed_form_tail(basis.family, n, epsilon)
    if zeta is None:
        raise TailBoundError("partial-sum tail bounds need the trace point zeta")
    p_lo = basis.problem.p_lo
    if isinstance(basis.family, _RobinFamily):
        fam = basis.family
        idx = np.arange(n + 1, cutoff + 1)
        terms = fam.trace_sq(idx, zeta, deriv=True) / fam.lam(idx) ** (1.5 + epsilon)
        mu_lo = np.sqrt(max(np.pi**2 * cutoff**2 - fam.q / fam.p, 10.0))
        sup_sq = fam.sup_sq_beyond(mu_lo)
        # sup phi'^2 <= mu^2 sup phi^2 <= (lambda/p) sup phi^2
        rem = (
            sup_sq
            * (cutoff - 1) ** (-2 * epsilon)
            / (2 * epsilon * p_lo ** (1.5 + epsilon) * np.pi ** (1 + 2 * epsilon))
        )
        return _series_tail(terms, rem)
    stored = len(basis)
    if stored <= n:
        raise TailBoundError("no stored modes beyond n; rebuild with larger n_max")
    if sup_sq_scale is None:
        raise TailBoundError(
            "discretized tail bound needs sup_sq_scale with "
            "sup |phi_i'|^2 <= sup_sq_scale * lambda_i"
        )
    idx = np.arange(n + 1, stored + 1)
    vals = np.array([basis.pairs[i - 1].dphi(np.array([zeta]))[0] for i in idx])
    terms = vals**2 / basis.eigenvalues[n:stored] ** (1.5 + epsilon)
    rem = (
        sup_sq_scale
        * (stored - 1) ** (-2 * epsilon)
        / (2 * epsilon * p_lo ** (0.5 + epsilon) * np.pi ** (1 + 2 * epsilon))
    )
    return _series_tail(terms, rem)
