"""Decay certificates for reduced models via matrix inequality feasibility.

A certificate for decay rate eta consists of scalars alpha, beta and a
symmetric positive definite matrix P such that three conditions hold:

* Theta1: the retained closed-loop dynamics, penalized by the tail output
  weights and the unmodeled trace input channel, are dissipative with
  margin 2 eta.
* Theta2: the first truncated mode stays dominated, including the trace
  tail series bound scaled by beta.
* Theta3 (derivative trace only): the trace tail coupling stays subordinate
  to the alpha channel.

The solver searches log-spaced grids in (alpha, beta), deciding the Theta1
inequality in P through an algebraic Riccati equation after a Schur
complement step.  Every returned certificate is re-verified from scratch.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import solve_continuous_are, solve_continuous_lyapunov

from .reduction import ReducedModel
from .spectral import tail_m1, tail_m2

DEFAULT_ALPHA_GRID = (2.01, 1.0e3, 40)
DEFAULT_BETA_GRID = (1.0e-4, 1.0e6, 60)


def default_alpha_grid() -> np.ndarray:
    return np.geomspace(*DEFAULT_ALPHA_GRID[:2], DEFAULT_ALPHA_GRID[2])


def default_beta_grid() -> np.ndarray:
    return np.geomspace(*DEFAULT_BETA_GRID[:2], DEFAULT_BETA_GRID[2])


def trace_tail_bound(model: ReducedModel, epsilon: Optional[float] = None) -> float:
    """Tail series constant entering Theta2/Theta3 for the model's trace kind."""
    zeta = model.plant.zeta_m
    if model.trace_kind == "value":
        return tail_m1(model.basis, model.n, zeta=zeta)
    if epsilon is None:
        raise ValueError("derivative-trace models need epsilon for the tail bound")
    return tail_m2(model.basis, model.n, epsilon, zeta=zeta)


def build_theta1(model: ReducedModel, p_mat: np.ndarray, alpha: float, beta: float, eta: float) -> np.ndarray:
    """Full dissipation block, negative definite iff Theta1 holds."""
    dim = model.dim
    f_eta = model.f + eta * np.eye(dim)
    top = f_eta.T @ p_mat + p_mat @ f_eta + alpha * model.h
    pg = p_mat @ model.g
    corner = np.array([[alpha * model.tail_b * model.cb**2 - beta]])
    return np.block([[top, pg], [pg.T, corner]])


def build_theta2(
    model: ReducedModel, alpha: float, beta: float, eta: float,
    epsilon: Optional[float] = None, m_tail: Optional[float] = None,
) -> np.ndarray:
    """Dominance block for the first truncated mode, must be negative definite."""
    lam_next = model.lam_next
    if m_tail is None:
        m_tail = trace_tail_bound(model, epsilon)
    if model.trace_kind == "value":
        t_extra = beta * m_tail / 2.0
    else:
        t_extra = beta * m_tail / 2.0 * lam_next ** (0.5 + epsilon)
    t11 = -lam_next + model.q_c + eta + t_extra
    off = np.sqrt(2.0 * lam_next)
    return np.array([[t11, off], [off, -alpha]])


def build_theta3(
    model: ReducedModel, alpha: float, beta: float,
    epsilon: float, m_tail: Optional[float] = None,
) -> np.ndarray:
    """Subordination block for the derivative trace, must be positive definite."""
    if model.trace_kind != "derivative":
        raise ValueError("Theta3 applies to derivative-trace models only")
    lam_next = model.lam_next
    if m_tail is None:
        m_tail = trace_tail_bound(model, epsilon)
    t11 = 1.0 - beta * m_tail / (2.0 * lam_next ** (0.5 - epsilon))
    off = np.sqrt(2.0)
    return np.array([[t11, off], [off, alpha]])


def _theta2_scalar_ok(model, alpha, beta, eta, epsilon, m_tail) -> bool:
    lam_next = model.lam_next
    if model.trace_kind == "value":
        t_extra = beta * m_tail / 2.0
    else:
        t_extra = beta * m_tail / 2.0 * lam_next ** (0.5 + epsilon)
    t11 = -lam_next + model.q_c + eta + t_extra
    return t11 < 0 and alpha > 0 and -alpha * t11 - 2.0 * lam_next > 0


def _theta3_scalar_ok(model, alpha, beta, epsilon, m_tail) -> bool:
    lam_next = model.lam_next
    t11 = 1.0 - beta * m_tail / (2.0 * lam_next ** (0.5 - epsilon))
    return t11 > 0 and alpha > 0 and alpha * t11 - 2.0 > 0


def feasible_P(
    model: ReducedModel, alpha: float, beta: float, eta: float,
    method: str = "auto",
) -> Optional[np.ndarray]:
    """Find P > 0 making Theta1 negative definite, or None.

    The "riccati" route takes the Schur complement in the scalar tail input
    channel (denominator s = beta - alpha tail_b cb^2) and solves the
    resulting algebraic Riccati equation with a small definite offset, so a
    solution sits strictly inside the feasible set.  The "descent" route
    minimizes the largest eigenvalue of Theta1 over symmetric P directly,
    a slower fallback for points where the Hamiltonian solve breaks down.
    "auto" tries riccati first and falls through to a budgeted descent.
    """
    if method not in ("auto", "riccati", "descent"):
        raise ValueError("method must be 'auto', 'riccati' or 'descent'")
    s = beta - alpha * model.tail_b * model.cb**2
    if s <= 0:
        return None
    dim = model.dim
    f_eta = model.f + eta * np.eye(dim)
    # Theta1 < 0 forces the retained dynamics to be stable with rate eta
    if np.max(np.linalg.eigvals(f_eta).real) >= 0:
        return None
    if method == "descent":
        return _descent_P(model, alpha, beta, eta)
    delta = 1e-6 * np.linalg.norm(model.f, 2)
    q_mat = alpha * model.h + delta * np.eye(dim)
    q_mat = 0.5 * (q_mat + q_mat.T)
    p_mat = None
    try:
        p_mat = solve_continuous_are(f_eta, model.g, q_mat, np.array([[-s]]))
        p_mat = 0.5 * (p_mat + p_mat.T)
    except Exception:
        p_mat = None
    if p_mat is not None:
        good = (
            np.all(np.isfinite(p_mat))
            and np.min(np.linalg.eigvalsh(p_mat)) > 0
            and np.max(np.linalg.eigvalsh(build_theta1(model, p_mat, alpha, beta, eta))) < 0
        )
        if good:
            return p_mat
    if method == "riccati":
        return None
    return _descent_P(model, alpha, beta, eta, iters=4000)


def _descent_P(model, alpha, beta, eta, iters: int = 30000) -> Optional[np.ndarray]:
    """Eigenvalue descent on max eig of Theta1 over symmetric P >= 0.

    Warm starts from the Lyapunov solve matched to the constant block
    alpha H + delta I, then runs adaptive-moment subgradient steps.  Near
    the boundary the top eigenvalues of Theta1 cluster, so the subgradient
    is softmax-averaged over the cluster instead of taking the single top
    eigenvector; plain steepest descent zig-zags there and stalls.
    """
    dim = model.dim
    eye = np.eye(dim)
    f_eta = model.f + eta * eye
    delta = 1e-6 * np.linalg.norm(model.f, 2)
    rhs = alpha * model.h + delta * eye
    try:
        p_mat = solve_continuous_lyapunov(f_eta.T, -0.5 * (rhs + rhs.T))
        p_mat = 0.5 * (p_mat + p_mat.T)
    except Exception:
        p_mat = eye.copy()
    if not np.all(np.isfinite(p_mat)):
        p_mat = eye.copy()
    floor = 1e-12 * max(1.0, np.linalg.norm(p_mat, 2))
    w, v = np.linalg.eigh(p_mat)
    p_mat = (v * np.maximum(w, floor)) @ v.T
    mom = np.zeros_like(p_mat)
    sq = np.zeros_like(p_mat)
    b1, b2 = 0.9, 0.999
    rate = 0.02 * max(1.0, np.linalg.norm(p_mat, 2))
    best = None
    stall = 0
    for k in range(iters):
        theta = build_theta1(model, p_mat, alpha, beta, eta)
        evals, vecs = np.linalg.eigh(theta)
        fmax = evals[-1]
        if fmax < 0 and np.min(np.linalg.eigvalsh(p_mat)) > 0:
            return p_mat
        if best is None or fmax < best - 1e-9 * max(1.0, abs(best)):
            best = fmax
            stall = 0
        else:
            stall += 1
            if stall > 300:
                rate *= 0.5
                stall = 0
                if rate < 1e-12:
                    return None
        tau = max(1e-6, 0.05 * abs(fmax))
        wts = np.exp((evals - fmax) / tau)
        wts /= wts.sum()
        grad = np.zeros((dim, dim))
        for i in range(len(evals)):
            if wts[i] < 1e-12:
                continue
            u = vecs[:, i]
            u1, u2 = u[:dim], u[dim:]
            gi = np.outer(u1, f_eta @ u1 + (model.g @ u2).ravel())
            grad += wts[i] * (gi + gi.T)
        mom = b1 * mom + (1 - b1) * grad
        sq = b2 * sq + (1 - b2) * grad * grad
        mh = mom / (1 - b1 ** (k + 1))
        vh = sq / (1 - b2 ** (k + 1))
        p_mat = p_mat - rate * mh / (np.sqrt(vh) + 1e-12)
        w, v = np.linalg.eigh(0.5 * (p_mat + p_mat.T))
        p_mat = (v * np.maximum(w, floor)) @ v.T
    return None


@dataclass
class Certificate:
    """Exponential decay certificate for a reduced model."""

    n: int
    ode_dim: int
    trace_kind: str
    eta: float
    alpha: float
    beta: float
    epsilon: Optional[float]
    p_mat: np.ndarray
    margins: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": "rdstab-certificate",
            "version": 1,
            "n_modes": self.n,
            "ode_dim": self.ode_dim,
            "trace_kind": self.trace_kind,
            "eta": self.eta,
            "alpha": self.alpha,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "p_matrix": [[float(v) for v in row] for row in self.p_mat],
            "margins": {k: float(v) for k, v in self.margins.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Certificate":
        if data.get("format") != "rdstab-certificate" or data.get("version") != 1:
            raise ValueError("not a recognized certificate document")
        return cls(
            n=int(data["n_modes"]),
            ode_dim=int(data["ode_dim"]),
            trace_kind=str(data["trace_kind"]),
            eta=float(data["eta"]),
            alpha=float(data["alpha"]),
            beta=float(data["beta"]),
            epsilon=None if data["epsilon"] is None else float(data["epsilon"]),
            p_mat=np.array(data["p_matrix"], dtype=float),
            margins={k: float(v) for k, v in data.get("margins", {}).items()},
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Certificate":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def sha256(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class VerificationReport:
    """Independent margins of a certificate against a model."""

    ok: bool
    margins: dict
    reason: str = ""


def verify(cert: Certificate, model: ReducedModel, tol: float = 0.0) -> VerificationReport:
    """Re-derive all certificate conditions from scratch.

    Rebuilds every block from the model data and the certificate scalars
    and measures definiteness through dense symmetric eigensolves; nothing
    from the search path is reused.  Margins must exceed ``tol``.
    """
    if cert.n != model.n or cert.ode_dim != model.ode.dim or cert.trace_kind != model.trace_kind:
        return VerificationReport(False, {}, "certificate does not match the model shape")
    p_mat = np.asarray(cert.p_mat, dtype=float)
    if p_mat.shape != (model.dim, model.dim):
        return VerificationReport(False, {}, "P has the wrong shape")
    skew = np.max(np.abs(p_mat - p_mat.T))
    if skew > 1e-9 * max(1.0, np.max(np.abs(p_mat))):
        return VerificationReport(False, {}, "P is not symmetric")
    margins = {}
    margins["p_definite"] = float(np.min(np.linalg.eigvalsh(0.5 * (p_mat + p_mat.T))))
    theta1 = build_theta1(model, p_mat, cert.alpha, cert.beta, cert.eta)
    margins["theta1"] = float(-np.max(np.linalg.eigvalsh(theta1)))
    theta2 = build_theta2(model, cert.alpha, cert.beta, cert.eta, cert.epsilon)
    margins["theta2"] = float(-np.max(np.linalg.eigvalsh(theta2)))
    if model.trace_kind == "derivative":
        if cert.epsilon is None:
            return VerificationReport(False, margins, "derivative trace requires epsilon")
        theta3 = build_theta3(model, cert.alpha, cert.beta, cert.epsilon)
        margins["theta3"] = float(np.min(np.linalg.eigvalsh(theta3)))
    ok = all(v > tol for v in margins.values())
    reason = "" if ok else "one or more margins are not positive"
    return VerificationReport(ok, margins, reason)


def schur_feasibility(model: ReducedModel, p_mat: np.ndarray, alpha: float, beta: float, eta: float) -> bool:
    """Theta1 test routed through the scalar Schur complement.

    Mathematically equivalent to the dense eigenvalue test on the full
    block; kept as an independent code path for cross-checking.
    """
    s = beta - alpha * model.tail_b * model.cb**2
    if s <= 0:
        return False
    dim = model.dim
    f_eta = model.f + eta * np.eye(dim)
    block = f_eta.T @ p_mat + p_mat @ f_eta + alpha * model.h
    pg = p_mat @ model.g
    block = block + (pg @ pg.T) / s
    return float(np.max(np.linalg.eigvalsh(0.5 * (block + block.T)))) < 0


def search_certificate(
    model: ReducedModel,
    eta: float,
    epsilon: Optional[float] = None,
    alpha_grid: Optional[np.ndarray] = None,
    beta_grid: Optional[np.ndarray] = None,
    method: str = "riccati",
) -> Optional[Certificate]:
    """Scan the (alpha, beta) grid for a verified certificate at rate eta.

    Grids are ascending and the first verified hit is returned, so smaller
    alpha and beta are preferred.  Each grid point solves the P-subproblem
    by the Riccati reduction; this keeps the scan fast, at the cost of
    skipping points only the slower descent route could certify.  Returns
    None when the scan is exhausted, in particular when the retained
    dynamics cannot be stable at rate eta for any scalars.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if model.trace_kind == "derivative":
        if epsilon is None or not (0 < epsilon <= 0.5):
            raise ValueError("derivative-trace certification needs epsilon in (0, 1/2]")
    else:
        epsilon = None
    alpha_grid = default_alpha_grid() if alpha_grid is None else np.asarray(alpha_grid, dtype=float)
    beta_grid = default_beta_grid() if beta_grid is None else np.asarray(beta_grid, dtype=float)

    f_eta = model.f + eta * np.eye(model.dim)
    if np.max(np.linalg.eigvals(f_eta).real) >= 0:
        return None
    m_tail = trace_tail_bound(model, epsilon)

    for alpha in alpha_grid:
        for beta in beta_grid:
            if not _theta2_scalar_ok(model, alpha, beta, eta, epsilon, m_tail):
                continue
            if model.trace_kind == "derivative" and not _theta3_scalar_ok(
                model, alpha, beta, epsilon, m_tail
            ):
                continue
            p_mat = feasible_P(model, alpha, beta, eta, method=method)
            if p_mat is None:
                continue
            cert = Certificate(
                n=model.n, ode_dim=model.ode.dim, trace_kind=model.trace_kind,
                eta=float(eta), alpha=float(alpha), beta=float(beta),
                epsilon=epsilon, p_mat=p_mat,
            )
            report = verify(cert, model)
            if report.ok:
                cert.margins = report.margins
                return cert
    return None


def max_decay(
    model: ReducedModel,
    epsilon: Optional[float] = None,
    alpha_grid: Optional[np.ndarray] = None,
    beta_grid: Optional[np.ndarray] = None,
    tol: float = 1e-3,
    eta_cap: float = 1024.0,
) -> Optional[tuple[float, Certificate]]:
    """Largest certifiable decay rate by bisection over eta.

    Starts from eta = 0; if even that fails, returns None.  The upper end
    grows by doubling until infeasible or ``eta_cap`` is reached, then the
    feasible rate is refined to within ``tol``.
    """
    kw = dict(epsilon=epsilon, alpha_grid=alpha_grid, beta_grid=beta_grid)
    best = search_certificate(model, 0.0, **kw)
    if best is None:
        return None
    lo = 0.0
    hi = 1.0
    while True:
        cert = search_certificate(model, hi, **kw)
        if cert is None:
            break
        best, lo = cert, hi
        if hi >= eta_cap:
            return lo, best
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        cert = search_certificate(model, mid, **kw)
        if cert is None:
            hi = mid
        else:
            best, lo = cert, mid
    return lo, best
