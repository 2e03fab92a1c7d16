"""Feasible optimization on the complex Stiefel manifold with Cayley search curves.

For a point ``xi`` (``m x n`` with orthonormal columns) and Euclidean gradient
``G`` (convention ``dF = Re Tr(G^H dxi)``), the skew-Hermitian direction
``W = G xi^H - xi G^H`` defines the curve

    Y(tau) = (I + tau/2 W)^{-1} (I - tau/2 W) xi,

which stays on the manifold for every ``tau`` and starts in a descent
direction with ``F'(0) = -||W||_F^2 / 2``. ``W`` is kept in factored form
``U V^H`` with ``U = [G, xi]`` and ``V = [xi, -G]`` so that every solve is
``2n x 2n``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .channel_reps import feasibility
from .errors import ConfigError, LineSearchError, StepTooLargeError

REORTHO_TOL = 1e-10
COND_LIMIT = 1e12


@dataclass(frozen=True)
class OptimizerOptions:
    tau0: float = 1.0
    shrink: float = 0.5
    armijo_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_iters: int = 500
    grad_tol: float = 1e-8
    feas_tol: float = 1e-8
    restarts: int = 1
    rng_seed: int = 0
    max_ls_steps: int = 60
    value_tol: float = 1e-15
    stall_iters: int = 5
    bb_step: bool = True
    tau_probe: float = 1e-3
    patience: int = 50

    def __post_init__(self):
        if not 0.0 < self.armijo_c1 < self.wolfe_c2 < 1.0:
            raise ConfigError("need 0 < armijo_c1 < wolfe_c2 < 1")
        if not 0.0 < self.shrink < 1.0:
            raise ConfigError("shrink must lie in (0, 1)")
        if self.tau0 <= 0 or self.tau_probe <= 0:
            raise ConfigError("step sizes must be positive")
        if self.max_iters < 0 or self.restarts < 1 or self.patience < 1:
            raise ConfigError("max_iters >= 0, restarts >= 1, patience >= 1 required")


@dataclass(frozen=True)
class Objective:
    """Value callback plus optional Euclidean gradient (``dF = Re Tr(G^H dxi)``)."""
    value: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass
class OptReport:
    point: np.ndarray
    value: float
    iterations: int
    converged: bool
    values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    feasibility: list = field(default_factory=list)
    evaluations: int = 0
    reorthonormalizations: int = 0
    message: str = ""

    @property
    def feasibility_max(self):
        return max(self.feasibility) if self.feasibility else 0.0

    def to_dict(self):
        return {
            "iterations": int(self.iterations),
            "final_value": float(self.value),
            "converged": bool(self.converged),
            "feasibility_max": float(self.feasibility_max),
            "evaluations": int(self.evaluations),
            "reorthonormalizations": int(self.reorthonormalizations),
            "message": self.message,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


# --------------------------------------------------------------------------
# search curve
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Direction:
    """Skew-Hermitian ``W = U V^H`` stored by its factors."""
    u: np.ndarray
    v: np.ndarray

    def dense(self):
        m = self.u @ self.v.conj().T
        return 0.5 * (m - m.conj().T)  # exactly skew in floating point

    def apply(self, x):
        return self.u @ (self.v.conj().T @ x)

    def norm(self):
        gram = (self.u.conj().T @ self.u) @ (self.v.conj().T @ self.v)
        return math.sqrt(max(float(np.trace(gram).real), 0.0))


def search_direction(xi, g):
    xi = np.asarray(xi, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if xi.shape != g.shape:
        raise ValueError("gradient and point shapes differ")
    return Direction(np.hstack([g, xi]), np.hstack([xi, -g]))


def _inner(direction, tau):
    p = direction.u.shape[1]
    m = np.eye(p, dtype=complex) + 0.5 * tau * (direction.v.conj().T @ direction.u)
    if not np.all(np.isfinite(m)) or np.linalg.cond(m) > COND_LIMIT:
        raise StepTooLargeError(f"Cayley system singular at tau={tau:g}")
    return m


def cayley_retract(xi, direction, tau):
    """``Y(tau)`` by the low-rank (Woodbury) form."""
    xi = np.asarray(xi, dtype=complex)
    if tau == 0:
        return xi.copy()
    m = _inner(direction, tau)
    return xi - tau * (direction.u @ np.linalg.solve(m, direction.v.conj().T @ xi))


def cayley_dense(xi, w, tau):
    """Dense reference ``(I + tau/2 W)^{-1} (I - tau/2 W) xi``."""
    eye = np.eye(w.shape[0], dtype=complex)
    return np.linalg.solve(eye + 0.5 * tau * w, (eye - 0.5 * tau * w) @ xi)


def cayley_derivative(xi, direction, tau, y=None):
    """``Y'(tau) = -(I + tau/2 W)^{-1} W (xi + Y(tau)) / 2``."""
    if y is None:
        y = cayley_retract(xi, direction, tau)
    rhs = direction.v.conj().T @ (xi + y)
    if tau == 0:
        return -0.5 * (direction.u @ rhs)
    return -0.5 * (direction.u @ np.linalg.solve(_inner(direction, tau), rhs))


def directional_derivative(g, dy):
    return float(np.vdot(g, dy).real)


def _guard(y, report):
    err = feasibility(y)
    if err > REORTHO_TOL:
        q, r = np.linalg.qr(y)
        d = np.diag(r)
        y = q * (d / np.abs(d))
        report.reorthonormalizations += 1
        err = feasibility(y)
    return y, err


# --------------------------------------------------------------------------
# gradient descent
# --------------------------------------------------------------------------

@dataclass
class _Trial:
    tau: float
    point: np.ndarray
    value: float
    grad: np.ndarray


def line_search(obj, xi, direction, opts, f0=None, df0=None, tau_init=None, counter=None):
    """Armijo-Wolfe step along the Cayley curve.

    Backtracks by ``opts.shrink`` while sufficient decrease fails and expands
    (or bisects a bracket) while the curvature condition fails. Returns the
    accepted trial; raises ``LineSearchError`` if no step with sufficient
    decrease is found within ``opts.max_ls_steps`` trials.
    """
    if f0 is None:
        f0 = obj.value(xi)
    if df0 is None:
        df0 = -0.5 * direction.norm() ** 2
    if df0 >= 0:
        raise LineSearchError("not a descent direction")
    tau = opts.tau0 if tau_init is None else tau_init
    lo, hi = 0.0, math.inf
    best = None
    for _ in range(opts.max_ls_steps):
        try:
            y = cayley_retract(xi, direction, tau)
        except StepTooLargeError:
            hi = tau
            tau = 0.5 * (lo + hi) if lo > 0 else tau * opts.shrink
            continue
        f = obj.value(y)
        if counter is not None:
            counter[0] += 1
        if not np.isfinite(f) or f > f0 + opts.armijo_c1 * tau * df0:
            hi = tau
            tau = 0.5 * (lo + hi) if lo > 0 else tau * opts.shrink
            continue
        g = obj.gradient(y)
        trial = _Trial(tau, y, f, g)
        if best is None or f < best.value:
            best = trial
        dfy = directional_derivative(g, cayley_derivative(xi, direction, tau, y))
        if dfy >= opts.wolfe_c2 * df0:
            return trial
        lo = tau
        tau = 2.0 * tau if hi == math.inf else 0.5 * (lo + hi)
    if best is not None:
        return best
    raise LineSearchError("no step satisfies the sufficient-decrease condition")


def riemannian_gradient(xi, direction):
    """``W xi``, the tangent vector opposite to ``Y'(0)``."""
    return direction.apply(xi)


def minimize(obj, xi0, opts=None):
    """Cayley-curve gradient descent with Armijo-Wolfe steps.

    Trial steps after the first use the alternating Barzilai-Borwein length
    when ``opts.bb_step`` is set. Stops when ``||W||_F < grad_tol``, when the
    relative decrease stays below ``value_tol`` for ``stall_iters`` iterations,
    or after ``max_iters``.
    """
    opts = opts or OptimizerOptions()
    if obj.gradient is None:
        raise ConfigError("minimize needs a gradient; use stochastic_minimize")
    report = OptReport(point=None, value=math.nan, iterations=0, converged=False)
    xi, err = _guard(np.array(xi0, dtype=complex), report)
    f = obj.value(xi)
    g = obj.gradient(xi)
    report.evaluations = 1
    report.values.append(f)
    report.feasibility.append(err)
    counter = [0]
    prev_xi = prev_rg = None
    tau_init = opts.tau0
    stall = 0
    it = 0
    while True:
        d = search_direction(xi, g)
        gnorm = d.norm()
        report.grad_norms.append(gnorm)
        if gnorm < opts.grad_tol:
            report.converged = True
            report.message = "gradient tolerance reached"
            break
        if it >= opts.max_iters:
            report.message = "iteration budget exhausted"
            break
        rg = riemannian_gradient(xi, d)
        if opts.bb_step and prev_xi is not None:
            s = xi - prev_xi
            yv = rg - prev_rg
            sy = abs(np.vdot(s, yv).real)
            if sy > 0:
                if it % 2:
                    tau_init = float(np.vdot(s, s).real) / sy
                else:
                    tau_init = sy / float(np.vdot(yv, yv).real)
                tau_init = min(max(tau_init, 1e-12), 1e12)
            else:
                tau_init = opts.tau0
        try:
            trial = line_search(obj, xi, d, opts, f0=f, df0=-0.5 * gnorm ** 2,
                                tau_init=tau_init, counter=counter)
        except LineSearchError as exc:
            report.message = f"line search failed: {exc}"
            break
        it += 1
        prev_xi, prev_rg = xi, rg
        fixes = report.reorthonormalizations
        xi, err = _guard(trial.point, report)
        decrease = f - trial.value
        if report.reorthonormalizations > fixes:
            f, g = obj.value(xi), obj.gradient(xi)
        else:
            f, g = trial.value, trial.grad
        report.values.append(f)
        report.feasibility.append(err)
        if decrease <= opts.value_tol * max(1.0, abs(f)):
            stall += 1
            if stall >= opts.stall_iters:
                report.converged = True
                report.message = "objective stalled at machine precision"
                break
        else:
            stall = 0
    report.point = xi
    report.value = f
    report.iterations = it
    report.evaluations += counter[0]
    return report


# --------------------------------------------------------------------------
# derivative-free mode
# --------------------------------------------------------------------------

def orthonormal_complement(xi):
    m, n = xi.shape
    q, _ = np.linalg.qr(xi, mode="complete")
    return q[:, n:]


def random_tangent(xi, rng):
    """``Z = xi B + xi_perp C`` with ``B`` skew-Hermitian, normalized to unit norm."""
    rng = np.random.default_rng(rng)
    xi = np.asarray(xi, dtype=complex)
    m, n = xi.shape
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    b = 0.5 * (a - a.conj().T)
    perp = orthonormal_complement(xi)
    c = rng.standard_normal((m - n, n)) + 1j * rng.standard_normal((m - n, n))
    z = xi @ b + perp @ c
    return z / np.linalg.norm(z)


def stochastic_minimize(obj, xi0, opts=None, rng=None):
    """Value-only descent along random Cayley curves.

    Each iteration draws a random tangent ``Z`` and uses ``W = Z xi^H - xi Z^H``.
    A probe step ``tau_probe`` is tried in both orientations; on improvement a
    backtracking search from ``tau0`` keeps the first step that beats the
    probe. Stops after ``max_iters`` or ``patience`` consecutive failed draws.
    """
    opts = opts or OptimizerOptions()
    rng = np.random.default_rng(opts.rng_seed if rng is None else rng)
    report = OptReport(point=None, value=math.nan, iterations=0, converged=False)
    xi, err = _guard(np.array(xi0, dtype=complex), report)
    f = obj.value(xi)
    report.evaluations = 1
    report.values.append(f)
    report.feasibility.append(err)
    fails = 0
    it = 0
    while it < opts.max_iters:
        if fails >= opts.patience:
            report.converged = True
            report.message = "no improving direction within patience"
            break
        z = random_tangent(xi, rng)
        accepted = None
        for sign in (1.0, -1.0):
            d = search_direction(xi, sign * z)
            y = cayley_retract(xi, d, opts.tau_probe)
            fy = obj.value(y)
            report.evaluations += 1
            if fy < f:
                accepted = (d, y, fy)
                break
        it += 1
        if accepted is None:
            fails += 1
            report.values.append(f)
            report.feasibility.append(err)
            continue
        fails = 0
        d, y, fy = accepted
        tau = opts.tau0
        while tau > opts.tau_probe:
            try:
                yt = cayley_retract(xi, d, tau)
            except StepTooLargeError:
                tau *= opts.shrink
                continue
            ft = obj.value(yt)
            report.evaluations += 1
            if ft < fy:
                y, fy = yt, ft
                break
            tau *= opts.shrink
        fixes = report.reorthonormalizations
        xi, err = _guard(y, report)
        f = obj.value(xi) if report.reorthonormalizations > fixes else fy
        report.values.append(f)
        report.feasibility.append(err)
    else:
        report.message = "iteration budget exhausted"
    report.point = xi
    report.value = f
    report.iterations = it
    return report
