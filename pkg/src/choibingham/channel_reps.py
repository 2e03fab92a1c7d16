"""Channel representations: Choi, Stiefel, Kraus and Pauli transfer matrix.

Conventions
-----------
Vectorization is column stacking: ``M[r, c]`` lives at index ``c * N + r``.
A Choi matrix is ``sum_m |K_m>><<K_m|``, so its row index ``c * N + r`` has the
input index ``c`` slow and the output index ``r`` fast, and trace preservation
reads ``Tr_B Lambda = I_N`` with the partial trace over the fast factor.

A Stiefel point ``xi`` is a ``(k N) x N`` matrix with orthonormal columns.
Column ``j`` stacks the columns ``S[:, j N + a]`` (``a = 0..N-1``, each of length
``k``) of a square-root factor ``Lambda = S^dagger S``; row ``a * k + l`` of
``xi`` therefore holds ``S[l, j N + a]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    NotCPError,
    NotTPError,
    RankDeficiencyError,
)

PSD_TOL = 1e-10
RANK_TOL = 1e-8
TP_TOL = 1e-8

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
PAULI_LIST = [PAULI[p] for p in "IXYZ"]


# --------------------------------------------------------------------------
# vectorization and validation
# --------------------------------------------------------------------------

def vectorize(m):
    """Column-stacking vectorization ``|M>>``."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"vectorize expects a square matrix, got shape {m.shape}")
    return m.reshape(-1, order="F")


def unvectorize(v):
    v = np.asarray(v)
    n = int(round(np.sqrt(v.size)))
    if v.ndim != 1 or n * n != v.size:
        raise DimensionError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape(n, n, order="F")


def _choi_dim(choi):
    choi = np.asarray(choi)
    if choi.ndim != 2 or choi.shape[0] != choi.shape[1]:
        raise DimensionError(f"Choi matrix must be square, got {choi.shape}")
    n = int(round(np.sqrt(choi.shape[0])))
    if n * n != choi.shape[0]:
        raise DimensionError(f"Choi side {choi.shape[0]} is not a perfect square")
    return n


def partial_trace_output(choi):
    """``Tr_B`` over the fast (output) factor; equals ``I_N`` for TP maps."""
    n = _choi_dim(choi)
    return np.einsum("arbr->ab", np.asarray(choi).reshape(n, n, n, n))


def check_density(rho, tol=1e-10):
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError("density matrix must be square")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ValueError("density matrix does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ValueError("density matrix has a negative eigenvalue")
    return rho


def check_choi(choi, psd_tol=PSD_TOL, tp_tol=TP_TOL):
    """Raise unless ``choi`` is the Choi matrix of a CPTP map; return N."""
    n = _choi_dim(choi)
    choi = np.asarray(choi)
    if np.abs(choi - choi.conj().T).max() > tp_tol:
        raise NotCPError("Choi matrix is not Hermitian")
    lam_min = np.linalg.eigvalsh(choi).min()
    if lam_min < -psd_tol:
        raise NotCPError(f"Choi matrix has eigenvalue {lam_min:.3e} < -{psd_tol:g}")
    err = np.abs(partial_trace_output(choi) - np.eye(n)).max()
    if err > tp_tol:
        raise NotTPError(f"partial trace deviates from identity by {err:.3e}")
    return n


def stiefel_shape(xi):
    xi = np.asarray(xi)
    if xi.ndim != 2:
        raise DimensionError("Stiefel point must be a matrix")
    rows, n = xi.shape
    if n == 0 or rows % n:
        raise DimensionError(f"Stiefel shape {xi.shape} is not (k N) x N")
    return n, rows // n


def feasibility(xi):
    """``||xi^dagger xi - I||_F``."""
    xi = np.asarray(xi)
    return float(np.linalg.norm(xi.conj().T @ xi - np.eye(xi.shape[1])))


def check_stiefel(xi, tol=1e-10):
    n, k = stiefel_shape(xi)
    if not 1 <= k <= n * n:
        raise DimensionError(f"Kraus rank {k} outside [1, {n * n}]")
    err = feasibility(xi)
    if err > tol:
        raise ValueError(f"columns are not orthonormal (||xi'xi - I|| = {err:.3e})")
    return n, k


# --------------------------------------------------------------------------
# Stiefel <-> Choi <-> Kraus
# --------------------------------------------------------------------------

def stiefel_to_factor(xi):
    """Undo the column packing: return the ``k x N^2`` factor ``S``."""
    n, k = stiefel_shape(xi)
    return np.asarray(xi).reshape(n, k, n).transpose(1, 2, 0).reshape(k, n * n)


def factor_to_stiefel(s, n):
    k = s.shape[0]
    return s.reshape(k, n, n).transpose(2, 0, 1).reshape(n * k, n)


def stiefel_to_choi(xi):
    s = stiefel_to_factor(xi)
    return s.conj().T @ s


def _phase_fix(vecs, tol=1e-12):
    # first component with magnitude above tol made real positive, per column
    vecs = vecs.copy()
    for m in range(vecs.shape[1]):
        col = vecs[:, m]
        idx = np.flatnonzero(np.abs(col) > tol)
        if idx.size:
            ph = col[idx[0]] / abs(col[idx[0]])
            vecs[:, m] = col / ph
    return vecs


def _eig_desc(choi, k, psd_tol, rank_tol):
    n = check_choi(choi, psd_tol=psd_tol)
    if not 1 <= k <= n * n:
        raise DimensionError(f"Kraus rank {k} outside [1, {n * n}]")
    w, v = np.linalg.eigh(choi)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], _phase_fix(v[:, order])
    dropped = w[k:].clip(min=0).sum()
    if dropped > rank_tol:
        raise RankDeficiencyError(
            f"rank {k} discards eigenvalue mass {dropped:.3e} > {rank_tol:g}")
    return n, w[:k].clip(min=0), v[:, :k]


def choi_to_stiefel(choi, k=None, psd_tol=PSD_TOL, rank_tol=RANK_TOL):
    """Square-root factor ``S = D^{1/2} V^dagger`` (top ``k`` rows), packed."""
    choi = np.asarray(choi, dtype=complex)
    if k is None:
        k = choi.shape[0]
    n, w, v = _eig_desc(choi, k, psd_tol, rank_tol)
    s = np.sqrt(w)[:, None] * v.conj().T
    return factor_to_stiefel(s, n)


def choi_to_kraus(choi, k=None, psd_tol=PSD_TOL, rank_tol=RANK_TOL):
    choi = np.asarray(choi, dtype=complex)
    if k is None:
        k = choi.shape[0]
    n, w, v = _eig_desc(choi, k, psd_tol, rank_tol)
    return [unvectorize(np.sqrt(w[m]) * v[:, m]) for m in range(k)]


def kraus_to_choi(kraus):
    vecs = np.stack([vectorize(np.asarray(K, dtype=complex)) for K in kraus], axis=1)
    return vecs @ vecs.conj().T


def check_kraus(kraus, tol=1e-10):
    total = sum(np.asarray(K).conj().T @ np.asarray(K) for K in kraus)
    err = np.abs(total - np.eye(total.shape[0])).max()
    if err > tol:
        raise NotTPError(f"sum K^dagger K deviates from identity by {err:.3e}")


def stacked_kraus_permutation(n, k):
    """Row permutation ``perm`` with ``stacked[l N + r] = conj(xi)[perm[l N + r]]``.

    ``perm[l N + r] = r k + l``. Only the index bookkeeping depends on (N, k);
    the conjugation is forced by ``Lambda = S^dagger S`` together with
    ``Lambda = sum |K>><<K|``.
    """
    l, r = np.divmod(np.arange(n * k), n)
    return r * k + l


def stacked_kraus_permutation_matrix(n, k):
    perm = stacked_kraus_permutation(n, k)
    p = np.zeros((n * k, n * k))
    p[np.arange(n * k), perm] = 1.0
    return p


def stiefel_to_stacked_kraus(xi):
    """Vertical stack ``[K_0; K_1; ...]`` of the Kraus operators encoded by ``xi``."""
    n, k = stiefel_shape(xi)
    return np.asarray(xi).conj()[stacked_kraus_permutation(n, k)]


def unstack_kraus(stacked, n):
    stacked = np.asarray(stacked)
    return [stacked[i * n:(i + 1) * n] for i in range(stacked.shape[0] // n)]


def kraus_to_stiefel(kraus):
    n = np.asarray(kraus[0]).shape[0]
    stacked = np.vstack([np.asarray(K, dtype=complex) for K in kraus])
    xi = np.empty_like(stacked)
    xi[stacked_kraus_permutation(n, len(kraus))] = stacked.conj()
    return xi


# --------------------------------------------------------------------------
# action, fidelity, PTM
# --------------------------------------------------------------------------

def apply_choi(choi, x):
    """Action of the map on an arbitrary (not necessarily density) operator."""
    n = _choi_dim(choi)
    x = np.asarray(x)
    if x.shape != (n, n):
        raise DimensionError(f"operator shape {x.shape} does not match channel dimension {n}")
    return np.einsum("crds,cd->rs", np.asarray(choi).reshape(n, n, n, n), x)


def apply_channel(choi, rho):
    return apply_choi(choi, check_density(rho))


def process_fidelity(choi, u=None):
    """``<<U|Lambda|U>> / N^2``; ``U`` defaults to the identity."""
    n = _choi_dim(choi)
    u = np.eye(n) if u is None else np.asarray(u)
    if u.shape != (n, n):
        raise DimensionError("unitary has the wrong dimension")
    if np.abs(u.conj().T @ u - np.eye(n)).max() > 1e-10:
        raise ValueError("target operator is not unitary")
    vu = vectorize(u)
    val = np.real(vu.conj() @ np.asarray(choi) @ vu) / n**2
    return float(min(max(val, 0.0), 1.0))


@dataclass(frozen=True)
class PauliTransferMatrix:
    """Single-qubit PTM ``R`` with Bloch action ``phi -> A phi + tau``."""

    R: np.ndarray

    @property
    def unital_block(self):
        return self.R[1:, 1:]

    @property
    def nonunital_vector(self):
        return self.R[1:, 0]


def choi_to_ptm(choi):
    if _choi_dim(choi) != 2:
        raise DimensionError("Pauli transfer matrices are implemented for N = 2 only")
    R = np.empty((4, 4))
    for j, pj in enumerate(PAULI_LIST):
        out = apply_choi(choi, pj)
        for i, pi in enumerate(PAULI_LIST):
            R[i, j] = 0.5 * np.real(np.trace(pi @ out))
    return PauliTransferMatrix(R)


# --------------------------------------------------------------------------
# named channels
# --------------------------------------------------------------------------

def identity_choi(n=2):
    v = vectorize(np.eye(n, dtype=complex))
    return np.outer(v, v.conj())


def unitary_choi(u):
    v = vectorize(np.asarray(u, dtype=complex))
    return np.outer(v, v.conj())


def depolarizing_choi(f):
    """Single-qubit uniform depolarizing channel with process fidelity ``f``."""
    out = f * unitary_choi(PAULI["I"])
    for p in "XYZ":
        out = out + (1 - f) / 3 * unitary_choi(PAULI[p])
    return out


def random_cptp(n, k=None, rng=None):
    """Choi matrix of a channel drawn from the uniform Stiefel measure."""
    rng = np.random.default_rng(rng)
    k = n * n if k is None else k
    g = rng.standard_normal((k * n, n)) + 1j * rng.standard_normal((k * n, n))
    q, r = np.linalg.qr(g)
    q = q * (np.diag(r) / np.abs(np.diag(r))).conj()
    return stiefel_to_choi(q)


# --------------------------------------------------------------------------
# diamond distance
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DiamondResult:
    """Lower bound on the diamond distance plus restart diagnostics."""

    value: float
    n_agree: int
    restarts: int
    converged: bool
    best_state: np.ndarray

    def __float__(self):
        return self.value


def _output_on_ancilla(jd, psi, n):
    # (Delta (x) id)(|psi><psi|), psi[c, a] with c system input, a ancilla
    p = psi.reshape(n, n)
    out = np.einsum("ca,db,crds->rasb", p, p.conj(), jd)
    return out.reshape(n * n, n * n)


def _pullback(jd, h, n):
    # adjoint of psi psi^dagger -> output, as a matrix on (c, a)
    k = np.einsum("crds,sbra->dbca", jd, h.reshape(n, n, n, n))
    k = k.reshape(n * n, n * n)
    return 0.5 * (k + k.conj().T)


def trace_norm(m):
    return float(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T))).sum())


def diamond_at_state(choi1, choi2, psi):
    n = _choi_dim(choi1)
    jd = (np.asarray(choi1) - np.asarray(choi2)).reshape(n, n, n, n)
    psi = np.asarray(psi, dtype=complex)
    return trace_norm(_output_on_ancilla(jd, psi / np.linalg.norm(psi), n))


def diamond_distance(choi1, choi2, restarts=20, rng=0, max_iter=500, dd_tol=1e-6,
                     step_tol=1e-13):
    """Diamond distance (full trace-norm convention) by multi-start ascent.

    Each restart alternates the two exact partial maximizations of
    ``max_{psi, ||H|| <= 1} Tr(H (Delta (x) id)(psi psi^dagger))``: ``H`` is the
    sign of the current output and ``psi`` the top eigenvector of the pulled-back
    ``H``. The objective never decreases, so every restart ends at a local
    maximum; the best value is a certified lower bound.
    """
    n = _choi_dim(choi1)
    if _choi_dim(choi2) != n:
        raise DimensionError("channels have different dimensions")
    jd = (np.asarray(choi1) - np.asarray(choi2)).reshape(n, n, n, n)
    if np.abs(jd).max() == 0:
        return DiamondResult(0.0, restarts, restarts, True, np.eye(n).reshape(-1) / np.sqrt(n))
    rng = np.random.default_rng(rng)
    values, states = [], []
    for start in range(restarts):
        if start == 0:
            psi = np.eye(n, dtype=complex).reshape(-1) / np.sqrt(n)
        else:
            psi = rng.standard_normal(n * n) + 1j * rng.standard_normal(n * n)
            psi /= np.linalg.norm(psi)
        val = -np.inf
        for _ in range(max_iter):
            out = _output_on_ancilla(jd, psi, n)
            w, v = np.linalg.eigh(0.5 * (out + out.conj().T))
            new = np.abs(w).sum()
            if new - val <= step_tol * max(1.0, new):
                val = max(val, new)
                break
            val = new
            h = (v * np.sign(w)) @ v.conj().T
            _, vk = np.linalg.eigh(_pullback(jd, h, n))
            psi = vk[:, -1]
        values.append(val)
        states.append(psi)
    values = np.array(values)
    best = int(np.argmax(values))
    n_agree = int(np.sum(values >= values[best] - dd_tol))
    return DiamondResult(float(values[best]), n_agree, restarts, n_agree >= 2 or restarts == 1,
                         states[best])
