"""Binomial process tomography with MLE and MAP estimation on the Stiefel manifold."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from . import stiefel_opt
from .channel_reps import (
    apply_channel,
    check_choi,
    check_density,
    identity_choi,
    process_fidelity,
    random_cptp,
    stiefel_to_choi,
    stiefel_to_factor,
    factor_to_stiefel,
    unitary_choi,
    vectorize,
)
from .errors import ConfigError, DimensionError, LineSearchError, NumericError
from .frame_bingham import chain_rng, identity_stiefel, natural_parameter, sample_uniform

EPS = 1e-12
PROB_TOL = 1e-9

_KET = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "-i": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}


def projector(label):
    v = _KET[label]
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class ExperimentDesign:
    """Preparation/effect pairs; ``p_i = Tr((rho_i^T (x) E_i) Lambda)``."""
    name: str
    dim: int
    preps: tuple
    effects: tuple
    labels: tuple = ()
    _ops: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.preps) != len(self.effects) or not self.preps:
            raise ConfigError("design needs matching, nonempty preparation and effect lists")
        ops = []
        for rho, e in zip(self.preps, self.effects):
            rho = check_density(rho)
            e = np.asarray(e, dtype=complex)
            if rho.shape != (self.dim, self.dim) or e.shape != (self.dim, self.dim):
                raise DimensionError("setting dimension does not match design")
            ops.append(np.kron(rho.T, e))
        object.__setattr__(self, "_ops", np.array(ops))

    @property
    def m(self):
        return len(self.preps)

    @property
    def operators(self):
        """``rho^T (x) E`` for every setting, shape ``(m, N^2, N^2)``."""
        return self._ops

    @property
    def vectors(self):
        """``A_i = vec(rho_i^T (x) E_i)`` as rows."""
        return np.array([vectorize(op) for op in self._ops])

    def probabilities(self, choi):
        return np.einsum("iab,ba->i", self._ops, choi).real

    def rank(self, tol=1e-10):
        """Rank of ``Lambda -> p`` over Hermitian matrices (real coordinates)."""
        d = self.dim * self.dim
        basis = []
        for a in range(d):
            for b in range(a, d):
                h = np.zeros((d, d), dtype=complex)
                h[a, b] = h[b, a] = 1.0
                basis.append(h)
                if a != b:
                    h = np.zeros((d, d), dtype=complex)
                    h[a, b], h[b, a] = 1j, -1j
                    basis.append(h)
        mat = np.array([self.probabilities(h) for h in basis]).T
        return int(np.linalg.matrix_rank(mat, tol=tol))

    @property
    def informationally_complete(self):
        return self.rank() == self.dim ** 4


def _design(name, states):
    preps, effects, labels = [], [], []
    for s in states:
        for t in states:
            preps.append(projector(s))
            effects.append(projector(t))
            labels.append((s, t))
    return ExperimentDesign(name, 2, tuple(preps), tuple(effects), tuple(labels))


def design_pauli4():
    """All 16 pairs from {|0>, |1>, |+>, |->}; not informationally complete."""
    return _design("pauli4", ["0", "1", "+", "-"])


def design_pauli6():
    """All 36 pairs from the six Pauli eigenstates."""
    return _design("pauli6", ["0", "1", "+", "-", "+i", "-i"])


DESIGNS = {"pauli4": design_pauli4, "pauli6": design_pauli6}


def get_design(name):
    try:
        return DESIGNS[name]()
    except KeyError:
        raise ConfigError(f"unknown design {name!r}; expected one of {sorted(DESIGNS)}") from None


def outcome_probability(choi, rho, effect, tol=PROB_TOL):
    """``<<rho^T (x) E | Lambda>>``, checked against the operational route."""
    choi = np.asarray(choi, dtype=complex)
    a = vectorize(np.kron(np.asarray(rho).T, effect))
    p = np.vdot(a, vectorize(choi))
    if abs(p.imag) > tol or not -tol <= p.real <= 1 + tol:
        raise NumericError(f"probability {p} outside [0, 1]")
    return float(p.real)


def outcome_probability_operational(choi, rho, effect):
    return float(np.trace(effect @ apply_channel(choi, rho)).real)


# --------------------------------------------------------------------------
# data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CountData:
    """Per-setting success counts ``x`` out of ``n`` trials.

    ``x`` may be real-valued for expected-count (noise-free) data.
    """
    x: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        n = np.asarray(self.n, dtype=float)
        if n.ndim == 0:
            n = np.full(x.shape, float(n))
        if x.shape != n.shape or x.ndim != 1:
            raise DimensionError("counts and trials must be matching vectors")
        if np.any(n <= 0) or np.any(x < 0) or np.any(x > n):
            raise ConfigError("counts must satisfy 0 <= x <= n with n > 0")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "n", n)

    @property
    def is_integer(self):
        return bool(np.all(self.x == np.round(self.x)))


def _checked_probabilities(choi, design):
    p = design.probabilities(choi)
    if np.any(p < -PROB_TOL) or np.any(p > 1 + PROB_TOL):
        raise NumericError("setting probability outside [0, 1]")
    return np.clip(p, 0.0, 1.0)


def simulate_counts(choi, design, n_per_setting, rng):
    if int(n_per_setting) < 1:
        raise ConfigError("n_per_setting must be >= 1")
    rng = np.random.default_rng(rng)
    p = _checked_probabilities(choi, design)
    n = np.full(design.m, int(n_per_setting))
    return CountData(rng.binomial(n, p), n)


def expected_counts(choi, design, n_per_setting):
    p = _checked_probabilities(choi, design)
    n = np.full(design.m, float(n_per_setting))
    return CountData(n * p, n)


# --------------------------------------------------------------------------
# objective
# --------------------------------------------------------------------------

@dataclass
class LikelihoodModel:
    """Negative log-likelihood (plus optional ``-Tr(Theta Lambda)``) as a Stiefel objective."""
    data: CountData
    design: ExperimentDesign
    theta: np.ndarray = None
    eps: float = EPS
    clamp_events: int = 0

    def __post_init__(self):
        if self.data.x.shape[0] != self.design.m:
            raise DimensionError("count vector length does not match the design")
        self._x = self.data.x
        self._nx = self.data.n - self.data.x
        self._has_x = self._x > 0
        self._has_nx = self._nx > 0
        if self.theta is not None and not np.any(self.theta):
            self.theta = None

    def _probs(self, choi):
        p = self.design.probabilities(choi)
        lo, hi = self.eps, 1.0 - self.eps
        if np.any(p < lo) or np.any(p > hi):
            self.clamp_events += 1
        return np.clip(p, lo, hi)

    def nll(self, xi):
        p = self._probs(stiefel_to_choi(xi))
        val = -(np.sum(self._x[self._has_x] * np.log(p[self._has_x]))
                + np.sum(self._nx[self._has_nx] * np.log1p(-p[self._has_nx])))
        return float(val)

    def value(self, xi):
        val = self.nll(xi)
        if self.theta is not None:
            val -= float(np.vdot(self.theta, stiefel_to_choi(xi)).real)
        return val

    def gradient(self, xi):
        n = xi.shape[1]
        s = stiefel_to_factor(xi)
        p = self._probs(s.conj().T @ s)
        w = np.zeros_like(p)
        w[self._has_x] -= self._x[self._has_x] / p[self._has_x]
        w[self._has_nx] += self._nx[self._has_nx] / (1.0 - p[self._has_nx])
        m = np.einsum("i,iab->ab", w, self.design.operators)
        if self.theta is not None:
            m = m - self.theta
        return factor_to_stiefel(2.0 * (s @ m), n)

    def objective(self):
        return stiefel_opt.Objective(self.value, self.gradient)


def neg_log_likelihood(xi, data, design):
    return LikelihoodModel(data, design).nll(xi)


def nll_gradient(xi, data, design):
    return LikelihoodModel(data, design).gradient(xi)


# --------------------------------------------------------------------------
# estimation
# --------------------------------------------------------------------------

@dataclass
class EstimationResult:
    choi: np.ndarray
    point: np.ndarray
    value: float
    report: stiefel_opt.OptReport
    mode: str
    start_values: list
    clamp_events: int
    incomplete_design: bool
    boundary_settings: int = 0

    def to_dict(self):
        out = self.report.to_dict()
        out.update({
            "mode": self.mode,
            "objective": float(self.value),
            "start_values": [float(v) for v in self.start_values],
            "clamp_events": int(self.clamp_events),
            "incomplete_design": bool(self.incomplete_design),
            "boundary_settings": int(self.boundary_settings),
        })
        return out


def initial_points(n, k, restarts, seed):
    """Perturbed identity first, then Haar-uniform starts, each with its own stream."""
    rng = chain_rng(seed, 0)
    base = identity_stiefel(n, k)
    z = stiefel_opt.random_tangent(base, rng)
    d = stiefel_opt.search_direction(base, z)
    starts = [stiefel_opt.cayley_retract(base, d, 1e-2)]
    for r in range(1, restarts):
        starts.append(sample_uniform(n, k, chain_rng(seed, r)))
    return starts


def _estimate(model, design, opts, k, mode):
    n = design.dim
    k = n * n if k is None else k
    best = None
    values = []
    for xi0 in initial_points(n, k, opts.restarts, opts.rng_seed):
        try:
            rep = stiefel_opt.minimize(model.objective(), xi0, opts)
        except LineSearchError:
            values.append(float("nan"))
            continue
        values.append(rep.value)
        if best is None or rep.value < best.value:
            best = rep
    if best is None:
        raise NumericError("every start failed")
    choi = stiefel_to_choi(best.point)
    check_choi(choi, psd_tol=1e-8, tp_tol=1e-8)
    x, trials = model.data.x, model.data.n
    boundary = int(np.sum((x == 0) | (x == trials)))
    return EstimationResult(choi, best.point, best.value, best, mode, values,
                            model.clamp_events, design.name == "pauli4", boundary)


def mle(data, design, opts=None, k=None):
    opts = opts or stiefel_opt.OptimizerOptions(restarts=5)
    return _estimate(LikelihoodModel(data, design), design, opts, k, "mle")


def map_estimate(data, design, theta, opts=None, k=None):
    """Minimizes ``NLL - Tr(Theta Lambda)``; ``Theta = 0`` reproduces ``mle`` exactly."""
    opts = opts or stiefel_opt.OptimizerOptions(restarts=5)
    theta = natural_parameter(theta)
    return _estimate(LikelihoodModel(data, design, theta), design, opts, k, "map")


# --------------------------------------------------------------------------
# truth channels
# --------------------------------------------------------------------------

def random_channel_with_fidelity(fidelity, n=2, rng=None, unitary_share=0.5):
    """Near-unitary channel with process fidelity exactly ``fidelity``.

    A mixture ``(1-s) U + s R`` of a unitary ``U = exp(-i t H)`` (``H`` from
    the Gaussian unitary ensemble) and a Haar-random full-rank channel ``R``.
    ``s`` assigns ``1 - unitary_share`` of the infidelity to ``R``; ``t`` is
    then solved so the total fidelity matches.
    """
    if not 0.0 < fidelity < 1.0:
        raise ConfigError("fidelity must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = 0.5 * (a + a.conj().T)
    h -= np.trace(h) / n * np.eye(n)
    h /= np.linalg.norm(h)
    r = random_cptp(n, n * n, rng)
    fr = process_fidelity(r)
    s = (1.0 - unitary_share) * (1.0 - fidelity) / (1.0 - fr)
    if not 0.0 <= s < 1.0:
        raise ConfigError("cannot reach the requested fidelity")

    def fid(t):
        return (1.0 - s) * process_fidelity(unitary_choi(expm(-1j * t * h))) + s * fr - fidelity

    t = 0.0 if fid(0.0) <= 0 else brentq(fid, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
    return (1.0 - s) * unitary_choi(expm(-1j * t * h)) + s * r
