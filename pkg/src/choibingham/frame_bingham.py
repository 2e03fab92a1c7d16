"""Exponential family on the Stiefel manifold with the Choi matrix as sufficient statistic.

The density of a Stiefel point ``xi`` is proportional to
``exp(Tr(Theta^dagger Lambda(xi)))`` with respect to the uniform (Haar) measure.
Expanding the trace over the columns of ``xi`` gives a generalized
frame-Bingham form ``sum_ij xi_i^dagger A_ij xi_j`` with
``A_ij = conj(B_ij) (x) I_k`` and ``B_ij`` the ``(i, j)`` block of ``Theta``.

Sampling is column-wise Gibbs. The full conditional of one column lives on the
unit sphere of the orthogonal complement of the other columns, where it is a
Bingham-von Mises-Fisher density; it is real-stacked, rotated to the
eigenbasis of its quadratic part and updated by exact angle-pair draws in the
sphere kernel (compiled or pure Python, see ``_kernels``). Column moves alone
cannot rotate two columns within their joint span, so each sweep ends with
exact draws along one-parameter unitary rotations of every column pair.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .channel_reps import check_choi, stiefel_shape, stiefel_to_choi, vectorize
from .errors import ConditioningError, ConfigError, DegenerateStiefelError, DimensionError

THETA_GUARD = 1e6
IMAG_TOL = 1e-12


# --------------------------------------------------------------------------
# natural parameter
# --------------------------------------------------------------------------

def natural_parameter(theta, herm_tol=1e-10):
    """Validate a Hermitian ``Theta`` and shift it so its minimum eigenvalue is 0.

    Adding ``c I`` changes ``Tr(Theta Lambda)`` by the constant ``c N``, so the
    shift leaves the distribution unchanged.
    """
    theta = np.asarray(theta, dtype=complex)
    n2 = theta.shape[0]
    if theta.ndim != 2 or theta.shape[1] != n2 or round(np.sqrt(n2)) ** 2 != n2:
        raise DimensionError(f"Theta must be N^2 x N^2, got {theta.shape}")
    if np.abs(theta - theta.conj().T).max() > herm_tol * max(1.0, np.abs(theta).max()):
        raise ValueError("Theta is not Hermitian")
    theta = 0.5 * (theta + theta.conj().T)
    lam_min = np.linalg.eigvalsh(theta).min()
    if lam_min != 0.0:
        theta = theta - lam_min * np.eye(n2)
    return theta


def depolarizing_parameter(theta_scalar, n=2):
    """``theta |I>><<I|``: the family whose sufficient statistic is process fidelity."""
    if theta_scalar < 0:
        raise ValueError("theta must be nonnegative")
    v = vectorize(np.eye(n, dtype=complex))
    return theta_scalar * np.outer(v, v.conj())


@dataclass(frozen=True)
class BlockCoupling:
    """Column couplings ``A_ij = conj(B_ij) (x) I_k`` derived from ``Theta``."""

    theta: np.ndarray
    n: int
    k: int

    @classmethod
    def from_theta(cls, theta, k):
        theta = np.asarray(theta, dtype=complex)
        n = int(round(np.sqrt(theta.shape[0])))
        if n * n != theta.shape[0]:
            raise DimensionError("Theta side is not a perfect square")
        if not 1 <= k <= n * n:
            raise DimensionError(f"Kraus rank {k} outside [1, {n * n}]")
        return cls(theta, n, k)

    def block(self, i, j):
        n = self.n
        return self.theta[i * n:(i + 1) * n, j * n:(j + 1) * n]

    def coupling(self, i, j):
        return np.kron(self.block(i, j).conj(), np.eye(self.k))

    def apply(self, i, j, col):
        """``A_ij @ col`` without forming the Kronecker product."""
        x = np.asarray(col).reshape(self.n, self.k)
        return (self.block(i, j).conj() @ x).reshape(-1)


# --------------------------------------------------------------------------
# density
# --------------------------------------------------------------------------

def _real_checked(val, scale):
    if abs(val.imag) > IMAG_TOL * max(1.0, scale):
        raise ValueError(f"imaginary residue {val.imag:.3e}: Theta is not Hermitian")
    return float(val.real)


def sufficient_stat(xi, theta):
    """``Tr(Theta^dagger Lambda(xi))``."""
    theta = np.asarray(theta)
    choi = stiefel_to_choi(xi)
    if theta.shape != choi.shape:
        raise DimensionError("Theta and Lambda(xi) shapes differ")
    val = np.vdot(theta, choi)
    return _real_checked(val, np.abs(theta).sum())


def sufficient_stat_blocks(xi, theta):
    """Same quantity through the column form ``sum_ij xi_i^dagger A_ij xi_j``."""
    n, k = stiefel_shape(xi)
    cp = BlockCoupling.from_theta(theta, k)
    xi = np.asarray(xi)
    val = sum(np.vdot(xi[:, i], cp.coupling(i, j) @ xi[:, j])
              for i in range(n) for j in range(n))
    return _real_checked(complex(val), np.abs(cp.theta).sum())


def log_density_unnormalized(xi, theta):
    """Log density up to the (unknown) log-normalizer; the carrier is implicit."""
    return sufficient_stat(xi, theta)


# --------------------------------------------------------------------------
# samplers
# --------------------------------------------------------------------------

def sample_uniform(n, k, rng=None):
    """Haar-uniform point on V_N(C^{kN}) via QR with a positive-real R diagonal."""
    if not 1 <= k <= n * n:
        raise DimensionError(f"Kraus rank {k} outside [1, {n * n}]")
    rng = np.random.default_rng(rng)
    g = rng.standard_normal((k * n, n)) + 1j * rng.standard_normal((k * n, n))
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    return q * (d / np.abs(d)).conj()


def complement_basis(xi, j, rank_tol=1e-10):
    """Orthonormal basis of the complement of every column of ``xi`` except ``j``."""
    rows, n = xi.shape
    if n == 1:
        return np.eye(rows, dtype=complex)
    others = np.delete(xi, j, axis=1)
    q, r = np.linalg.qr(others, mode="complete")
    if np.abs(np.diag(r)).min() < rank_tol:
        raise DegenerateStiefelError("other columns are rank deficient")
    return q[:, n - 1:]


def column_conditional(xi, j, coupling):
    """Complement basis and the complex quadratic/linear terms of column ``j``.

    The conditional density of ``z`` (with ``xi_j = basis @ z``) is proportional
    to ``exp(z^dagger Q z + 2 Re(b^dagger z))`` on the unit sphere.
    """
    n = xi.shape[1]
    basis = complement_basis(xi, j)
    c = np.zeros(xi.shape[0], dtype=complex)
    for i in range(n):
        if i != j:
            c += coupling.apply(j, i, xi[:, i])
    quad = basis.conj().T @ coupling.coupling(j, j) @ basis
    lin = basis.conj().T @ c
    return basis, 0.5 * (quad + quad.conj().T), lin


def real_stack(quad, lin):
    """Real form of ``z^dagger Q z + 2 Re(b^dagger z)`` as ``x^T M x + c^T x``."""
    qr, qi = quad.real, quad.imag
    m = np.block([[qr, -qi], [qi, qr]])
    return m, 2.0 * np.concatenate([lin.real, lin.imag])


def gibbs_column_update(xi, j, coupling, rng, pair_sweeps=2, backend=None):
    """Resample column ``j`` from its full conditional; returns a new point."""
    kernel = _kernels.get_kernel(backend)
    basis, quad, lin = column_conditional(xi, j, coupling)
    d = basis.shape[1]
    m, cvec = real_stack(quad, lin)
    lam, evec = np.linalg.eigh(m)
    z = basis.conj().T @ xi[:, j]
    x = np.concatenate([z.real, z.imag])
    y = np.ascontiguousarray(evec.T @ x)
    y /= np.linalg.norm(y)
    kernel.pair_gibbs(y, np.ascontiguousarray(lam), np.ascontiguousarray(evec.T @ cvec),
                      int(pair_sweeps), rng)
    x = evec @ y
    z = x[:d] + 1j * x[d:]
    z /= np.linalg.norm(z)
    out = np.array(xi, dtype=complex, copy=True)
    out[:, j] = basis @ z
    return out


# one-parameter subgroups exp(w G) of U(2), G^2 = -I
ROTATION_GENERATORS = (
    np.array([[0, -1], [1, 0]], dtype=complex),
    np.array([[0, 1j], [1j, 0]], dtype=complex),
    np.array([[1j, 0], [0, -1j]], dtype=complex),
)


def pair_rotation_update(xi, i, j, coupling, rng, generator, backend=None):
    """Exact draw of ``w`` for ``[xi_i, xi_j] <- [xi_i, xi_j] exp(w G)``.

    Right multiplication by a one-parameter unitary subgroup preserves the
    Haar measure, so drawing ``w`` from ``p(xi exp(w G))`` leaves the target
    invariant. Column-wise updates cannot move within the span of two columns
    (each column is pinned orthogonal to the other), which this move does.
    """
    kernel = _kernels.get_kernel(backend)
    n = xi.shape[1]
    x = xi[:, [i, j]]
    y = x @ generator
    pair = (i, j)
    qxx = qyy = 0.0
    qxy = 0.0j
    lx = ly = 0.0
    for a_idx, a in enumerate(pair):
        h = np.zeros(xi.shape[0], dtype=complex)
        for o in range(n):
            if o not in pair:
                h += coupling.apply(a, o, xi[:, o])
        lx += 2.0 * np.vdot(x[:, a_idx], h).real
        ly += 2.0 * np.vdot(y[:, a_idx], h).real
        for b_idx, b in enumerate(pair):
            ax = coupling.apply(a, b, x[:, b_idx])
            ay = coupling.apply(a, b, y[:, b_idx])
            qxx += np.vdot(x[:, a_idx], ax).real
            qyy += np.vdot(y[:, a_idx], ay).real
            qxy += np.vdot(x[:, a_idx], ay)
    a_cos = 0.5 * (qxx - qyy)
    a_sin = qxy.real
    phi0 = 0.5 * np.arctan2(a_sin, a_cos)
    amp = np.hypot(a_cos, a_sin)
    b = lx * np.cos(phi0) + ly * np.sin(phi0)
    c = ly * np.cos(phi0) - lx * np.sin(phi0)
    w = kernel.sample_angle(float(amp), float(b), float(c), rng) + phi0
    out = np.array(xi, dtype=complex, copy=True)
    out[:, [i, j]] = np.cos(w) * x + np.sin(w) * y
    return out


def rejection_sample_sphere(lam, c, rng, size=1, max_tries=10**7):
    """Slow exact oracle: uniform proposals on the sphere, accept ``exp(f - fmax)``.

    ``f(y) = sum lam_i y_i^2 + c . y``; ``fmax`` uses the bound
    ``max(lam) + ||c||``. Only practical for mild concentrations.
    """
    lam = np.asarray(lam, float)
    c = np.asarray(c, float)
    bound = lam.max() + np.linalg.norm(c)
    out = []
    tries = 0
    while len(out) < size:
        y = rng.standard_normal(lam.size)
        y /= np.linalg.norm(y)
        tries += 1
        if rng.random() < np.exp(lam @ y**2 + c @ y - bound):
            out.append(y)
        if tries > max_tries:
            raise RuntimeError("rejection oracle budget exhausted")
    return np.array(out)


# --------------------------------------------------------------------------
# chains
# --------------------------------------------------------------------------

@dataclass
class ChainConfig:
    """Gibbs chain settings; ``init`` is ``"uniform"``, ``"identity"`` or a Stiefel point."""

    sample_count: int = 1000
    burn_in: int = 500
    thinning: int = 5
    seed: int = 0
    init: object = "uniform"
    pair_sweeps: int = 2
    rotation_moves: bool = True
    backend: str | None = None

    def __post_init__(self):
        if self.sample_count < 1:
            raise ConfigError("sample_count must be >= 1")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ConfigError("thinning must be >= 1")
        if self.pair_sweeps < 1:
            raise ConfigError("pair_sweeps must be >= 1")


def chain_rng(seed, index=0):
    """Generator for chain ``index`` derived from the master seed (order independent)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def identity_stiefel(n, k):
    xi = np.zeros((n * k, n), dtype=complex)
    for j in range(n):
        xi[j * k, j] = 1.0
    return xi


def _initial_point(cfg, n, k, rng):
    if isinstance(cfg.init, str):
        if cfg.init == "uniform":
            return sample_uniform(n, k, rng)
        if cfg.init == "identity":
            return identity_stiefel(n, k)
        raise ValueError(f"unknown init policy {cfg.init!r}")
    xi = np.array(cfg.init, dtype=complex)
    if xi.shape != (n * k, n):
        raise DimensionError("initial point has the wrong shape")
    return xi


def check_conditioning(theta):
    top = np.linalg.eigvalsh(np.asarray(theta)).max()
    if top >= THETA_GUARD:
        raise ConditioningError(
            f"largest eigenvalue of Theta is {top:.3g} >= {THETA_GUARD:g}; sampler refuses")


def gibbs_sweep(xi, coupling, rng, cfg):
    """Column updates ``0..N-1`` followed by pair rotations (if enabled)."""
    n = xi.shape[1]
    for j in range(n):
        xi = gibbs_column_update(xi, j, coupling, rng, cfg.pair_sweeps, cfg.backend)
    if cfg.rotation_moves:
        for i in range(n):
            for j in range(i + 1, n):
                for gen in ROTATION_GENERATORS:
                    xi = pair_rotation_update(xi, i, j, coupling, rng, gen, cfg.backend)
    return xi


def sample_chain(theta, n, k, cfg=None, chain_index=0):
    """Run one Gibbs chain; returns an array of shape ``(M, k N, N)``."""
    cfg = ChainConfig() if cfg is None else cfg
    theta = natural_parameter(theta)
    if theta.shape[0] != n * n:
        raise DimensionError("Theta does not match N")
    check_conditioning(theta)
    coupling = BlockCoupling.from_theta(theta, k)
    rng = chain_rng(cfg.seed, chain_index)
    xi = _initial_point(cfg, n, k, rng)
    out = np.empty((cfg.sample_count, n * k, n), dtype=complex)
    total = cfg.burn_in + cfg.sample_count * cfg.thinning
    kept = 0
    for sweep in range(total):
        xi = gibbs_sweep(xi, coupling, rng, cfg)
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in + 1) % cfg.thinning == 0:
            out[kept] = xi
            kept += 1
    return out


def _chain_task(args):
    theta, n, k, cfg, index = args
    return index, sample_chain(theta, n, k, cfg, chain_index=index)


def run_chains(theta, n, k, cfg, n_chains, workers=1):
    """Independent chains with seeds derived from ``(cfg.seed, index)``."""
    tasks = [(theta, n, k, cfg, i) for i in range(n_chains)]
    if workers <= 1:
        results = map(_chain_task, tasks)
    else:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_chain_task, tasks))
    by_index = dict(results)
    return [by_index[i] for i in range(n_chains)]


# --------------------------------------------------------------------------
# statistics of samples
# --------------------------------------------------------------------------

def choi_batch(samples):
    samples = np.asarray(samples)
    m, rows, n = samples.shape
    k = rows // n
    s = samples.reshape(m, n, k, n).transpose(0, 2, 3, 1).reshape(m, k, n * n)
    return np.einsum("mla,mlb->mab", s.conj(), s)


def fidelity_batch(samples):
    """Process fidelity to the identity of every sample."""
    samples = np.asarray(samples)
    m, rows, n = samples.shape
    k = rows // n
    x = samples.reshape(m, n, k, n)
    amp = np.einsum("mclc->ml", x)
    return (np.abs(amp) ** 2).sum(axis=1) / n**2


def mean_choi(samples, weights=None):
    """(Weighted) arithmetic mean of the Choi matrices of ``samples``."""
    samples = np.asarray(samples)
    if samples.ndim == 2:
        samples = samples[None]
    if samples.shape[0] == 0:
        raise ValueError("mean_choi needs at least one sample")
    chois = choi_batch(samples)
    if weights is None:
        return chois.mean(axis=0)
    w = np.asarray(weights, dtype=float)
    if w.shape != (samples.shape[0],) or (w < 0).any() or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with a positive sum")
    return np.tensordot(w, chois, axes=1) / w.sum()


def batch_means_se(values, n_batches=20):
    """Standard error of the mean from batch means (autocorrelation-robust)."""
    values = np.asarray(values)
    m = values.shape[0]
    nb = min(n_batches, m)
    size = m // nb
    means = values[:nb * size].reshape(nb, size, *values.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(nb)


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------

@dataclass
class CalibrationResult:
    theta: np.ndarray
    achieved: np.ndarray
    target: np.ndarray
    residual: float
    converged: bool
    evaluations: int
    scalar: float | None = None
    history: list = field(default_factory=list)


def _mean_fidelity(theta_scalar, n, k, cfg):
    samples = sample_chain(depolarizing_parameter(theta_scalar, n), n, k, cfg)
    return float(fidelity_batch(samples).mean())


def calibrate_fidelity(target_fidelity, n=2, k=None, cfg=None, tol=1e-5,
                       bounds=None, max_evals=40):
    """Find ``theta`` with mean process fidelity of ``theta |I>><<I|`` equal to the target.

    Bisection in ``log theta`` with common random numbers (every candidate uses
    the same chain seed), which keeps the Monte Carlo map monotone.
    """
    k = n * n if k is None else k
    cfg = ChainConfig(sample_count=200) if cfg is None else cfg
    history = []

    def evaluate(t):
        f = _mean_fidelity(t, n, k, cfg)
        history.append((t, f))
        return f

    # the guard applies to the top eigenvalue of theta |I>><<I|, which is N theta
    lo, hi = (1e-2, 0.999 * THETA_GUARD / n) if bounds is None else bounds
    f0 = evaluate(0.0)
    if target_fidelity <= f0 + tol:
        return _scalar_result(0.0, f0, target_fidelity, n, tol, history)
    f_lo, f_hi = evaluate(lo), evaluate(hi)
    best = min(history, key=lambda h: abs(h[1] - target_fidelity))
    if not f_lo <= target_fidelity <= f_hi:
        return _scalar_result(*best, target_fidelity, n, tol, history)
    while len(history) < max_evals and abs(best[1] - target_fidelity) > tol:
        mid = np.sqrt(lo * hi)
        f_mid = evaluate(mid)
        if f_mid < target_fidelity:
            lo = mid
        else:
            hi = mid
        best = min(history, key=lambda h: abs(h[1] - target_fidelity))
        if hi / lo < 1 + 1e-6:
            break
    return _scalar_result(*best, target_fidelity, n, tol, history)


def _scalar_result(t, f, target, n, tol, history):
    res = abs(f - target)
    return CalibrationResult(theta=depolarizing_parameter(t, n), achieved=np.array(f),
                             target=np.array(target), residual=res, converged=res <= tol,
                             evaluations=len(history), scalar=t, history=list(history))


def calibrate(target_mean, cfg=None, tol=1e-2, k=None, max_evals=200, upper=0.999 * THETA_GUARD):
    """Fit the eigenvalues of ``Theta`` so the sampled mean Choi matches ``target_mean``.

    The eigenvectors of ``Theta`` are those of the target; the eigenvalue paired
    with the smallest target eigenvalue is pinned to 0. The remaining ones are
    adjusted coordinate-wise by bisection in log scale on the Rayleigh quotient
    of the sampled mean, all runs sharing one chain seed.
    """
    target_mean = np.asarray(target_mean, dtype=complex)
    n = check_choi(target_mean)
    k = n * n if k is None else k
    cfg = ChainConfig(sample_count=200) if cfg is None else cfg
    t_val, vecs = np.linalg.eigh(target_mean)
    eta = np.zeros(n * n)
    history = []

    def rayleigh(eta_vec):
        theta = (vecs * eta_vec) @ vecs.conj().T
        mc = mean_choi(sample_chain(theta, n, k, cfg))
        r = np.real(np.einsum("ai,ab,bi->i", vecs.conj(), mc, vecs))
        history.append((eta_vec.copy(), r))
        return r

    current = rayleigh(eta)
    free = list(range(1, n * n))
    for _ in range(10):
        if np.abs(current - t_val).max() <= tol or len(history) >= max_evals:
            break
        for i in sorted(free, key=lambda i: -abs(current[i] - t_val[i])):
            if abs(current[i] - t_val[i]) <= tol or len(history) >= max_evals:
                continue
            lo, hi = 0.0, None
            if current[i] < t_val[i]:
                lo = eta[i]
                hi = upper
            else:
                hi = eta[i]
            if hi <= lo:
                continue
            for _ in range(40):
                mid = np.sqrt(max(lo, 1e-3) * hi) if lo > 0 or hi > 1e-3 else 0.5 * hi
                trial = eta.copy()
                trial[i] = mid
                r = rayleigh(trial)
                if r[i] < t_val[i]:
                    lo = mid
                else:
                    hi = mid
                if abs(r[i] - t_val[i]) <= tol or len(history) >= max_evals or hi - lo < 1e-9 * hi:
                    eta, current = trial, r
                    break
            else:
                eta, current = trial, r
    residual = float(np.abs(current - t_val).max())
    theta = natural_parameter((vecs * eta) @ vecs.conj().T)
    return CalibrationResult(theta=theta, achieved=current, target=t_val, residual=residual,
                             converged=residual <= tol, evaluations=len(history),
                             history=history)
