import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from choibingham.channel_reps import (
    PAULI, DimensionError, NotCPError, RankDeficiencyError, apply_channel, apply_choi,
    check_choi, choi_to_kraus, choi_to_ptm, choi_to_stiefel, depolarizing_choi,
    diamond_at_state, diamond_distance, feasibility, identity_choi, kraus_to_choi,
    kraus_to_stiefel, partial_trace_output, process_fidelity, random_cptp,
    stacked_kraus_permutation_matrix, stiefel_to_choi, stiefel_to_factor,
    stiefel_to_stacked_kraus, trace_norm, unitary_choi, unstack_kraus, unvectorize, vectorize,
)
from choibingham.frame_bingham import sample_uniform


def a_theta(theta):
    return np.diag([np.exp(1j * theta), np.exp(-1j * theta)])


def lambda_theta(theta):
    out = np.zeros((4, 4), dtype=complex)
    out[0, 0] = out[3, 3] = 1
    out[0, 3] = np.exp(2j * theta)
    out[3, 0] = np.exp(-2j * theta)
    return out


def ket(label):
    v = {"0": [1, 0], "1": [0, 1], "+": [1, 1]}[label]
    v = np.array(v, dtype=complex)
    return v / np.linalg.norm(v)


def proj(label):
    v = ket(label)
    return np.outer(v, v.conj())


# ---------------------------------------------------------------- vectorize

def test_vectorize_identity():
    assert np.array_equal(vectorize(np.eye(2)), [1, 0, 0, 1])


def test_vectorize_a_theta():
    th = 0.37
    assert np.allclose(vectorize(a_theta(th)), [np.exp(1j * th), 0, 0, np.exp(-1j * th)])


def test_vectorize_index_order():
    m = np.arange(9).reshape(3, 3)
    v = vectorize(m)
    for r in range(3):
        for c in range(3):
            assert v[c * 3 + r] == m[r, c]


def test_unvectorize_round_trip():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    assert np.array_equal(unvectorize(vectorize(m)), m)


def test_vectorize_rejects_non_square():
    with pytest.raises(DimensionError):
        vectorize(np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        unvectorize(np.zeros(5))


# ---------------------------------------------------------------- Stiefel <-> Choi

def test_identity_stiefel_gives_identity_choi():
    xi = kraus_to_stiefel([np.eye(2)])
    lam = stiefel_to_choi(xi)
    expect = np.zeros((4, 4))
    expect[np.ix_([0, 3], [0, 3])] = 1
    assert np.allclose(lam, expect, atol=1e-15)


def test_a_theta_gives_lambda_theta_corner():
    th = 0.21
    lam = stiefel_to_choi(kraus_to_stiefel([a_theta(th)]))
    assert np.allclose(lam, lambda_theta(th), atol=1e-15)
    assert np.isclose(lam[0, 3], np.exp(2j * th))


def test_random_stiefel_is_trace_preserving():
    rng = np.random.default_rng(1)
    xi = sample_uniform(2, 4, rng)
    lam = stiefel_to_choi(xi)
    # direct partial trace over the fast (output) index
    direct = np.zeros((2, 2), dtype=complex)
    for a in range(2):
        for b in range(2):
            direct[a, b] = sum(lam[a * 2 + r, b * 2 + r] for r in range(2))
    assert np.abs(direct - np.eye(2)).max() < 1e-12
    assert np.abs(partial_trace_output(lam) - np.eye(2)).max() < 1e-12


def test_gram_identity():
    rng = np.random.default_rng(2)
    xi = sample_uniform(3, 5, rng)
    s = stiefel_to_factor(xi)
    lam = stiefel_to_choi(xi)
    for i in range(9):
        for j in range(9):
            assert abs(lam[i, j] - np.vdot(s[:, i], s[:, j])) < 1e-14


def test_identity_choi_to_stiefel_k1():
    xi = choi_to_stiefel(identity_choi(2), k=1)
    target = kraus_to_stiefel([np.eye(2)])
    phase = np.vdot(xi.ravel(), target.ravel())
    assert abs(abs(phase) - 2) < 1e-12
    assert np.allclose(xi * phase / abs(phase), target, atol=1e-12)


def test_depolarizing_round_trip_k4():
    lam = depolarizing_choi(0.9999)
    assert np.abs(stiefel_to_choi(choi_to_stiefel(lam, 4)) - lam).max() < 1e-10


def test_depolarizing_k1_is_rank_deficient():
    with pytest.raises(RankDeficiencyError):
        choi_to_stiefel(depolarizing_choi(0.9999), 1)


def test_not_cp_rejected():
    lam = identity_choi(2).copy()
    lam[1, 1] = -1e-3
    lam[2, 2] = 1e-3
    with pytest.raises(NotCPError):
        choi_to_stiefel(lam)


@pytest.mark.parametrize("n", [2, 3])
def test_stiefel_round_trip_random(n):
    rng = np.random.default_rng(3 + n)
    for _ in range(20):
        lam = random_cptp(n, rng=rng)
        check_choi(lam)
        back = stiefel_to_choi(choi_to_stiefel(lam, n * n))
        assert np.abs(back - lam).max() < 1e-10


# ---------------------------------------------------------------- Kraus

def test_lambda_theta_single_kraus():
    th = 0.4
    (K,) = choi_to_kraus(lambda_theta(th), 1)
    phase = K[0, 0] / np.exp(1j * th)
    assert abs(abs(phase) - 1) < 1e-12
    assert np.allclose(K / phase, a_theta(th), atol=1e-12)


def test_kraus_to_choi_identity():
    assert np.allclose(kraus_to_choi([np.eye(2)]), identity_choi(2))


def test_kraus_round_trip_random():
    rng = np.random.default_rng(5)
    lam = random_cptp(2, rng=rng)
    assert np.abs(kraus_to_choi(choi_to_kraus(lam, 4)) - lam).max() < 1e-10


# ---------------------------------------------------------------- stacked Kraus

def test_stacked_kraus_identity_permutation():
    xi = kraus_to_stiefel([np.eye(2)])
    assert np.allclose(stiefel_to_stacked_kraus(xi), np.eye(2))
    assert np.array_equal(stacked_kraus_permutation_matrix(2, 1), np.eye(2))


def test_stacked_kraus_orthonormal_and_equivalent():
    rng = np.random.default_rng(6)
    xi = sample_uniform(2, 3, rng)
    stacked = stiefel_to_stacked_kraus(xi)
    assert feasibility(stacked) < 1e-12
    assert np.allclose(kraus_to_choi(unstack_kraus(stacked, 2)), stiefel_to_choi(xi), atol=1e-14)


def test_stacked_kraus_permutation_independent_of_point():
    rng = np.random.default_rng(7)
    p = stacked_kraus_permutation_matrix(3, 4)
    for _ in range(2):
        xi = sample_uniform(3, 4, rng)
        assert np.array_equal(stiefel_to_stacked_kraus(xi), p @ xi.conj())


# ---------------------------------------------------------------- action and fidelity

def test_identity_action():
    rng = np.random.default_rng(8)
    g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    assert np.allclose(apply_channel(identity_choi(2), rho), rho)


def test_lambda_theta_on_plus():
    th = 0.3
    out = apply_channel(lambda_theta(th), proj("+"))
    p = np.real(ket("+").conj() @ out @ ket("+"))
    assert np.isclose(p, 0.5 + 0.5 * np.cos(2 * th))


def test_depolarizing_on_zero():
    f = 0.9
    out = apply_channel(depolarizing_choi(f), proj("0"))
    assert np.isclose(out[0, 0].real, f + (1 - f) / 3)


def test_apply_choi_matches_kraus_sum():
    rng = np.random.default_rng(9)
    lam = random_cptp(3, rng=rng)
    x = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    expect = sum(K @ x @ K.conj().T for K in choi_to_kraus(lam, 9))
    assert np.allclose(apply_choi(lam, x), expect, atol=1e-12)


def test_apply_channel_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply_channel(identity_choi(2), np.eye(3) / 3)


def test_process_fidelity_examples():
    assert np.isclose(process_fidelity(identity_choi(2)), 1.0)
    assert np.isclose(process_fidelity(depolarizing_choi(0.93)), 0.93)
    th = 0.25
    assert np.isclose(process_fidelity(lambda_theta(th)), 0.5 + 0.5 * np.cos(2 * th))


def test_process_fidelity_non_unitary():
    with pytest.raises(ValueError):
        process_fidelity(identity_choi(2), np.diag([1.0, 0.5]))


def test_process_fidelity_range_and_equality():
    rng = np.random.default_rng(10)
    for _ in range(20):
        f = process_fidelity(random_cptp(2, rng=rng))
        assert 0 <= f < 1 - 1e-6
    h = PAULI["X"] + 0.3 * PAULI["Z"]
    u = np.linalg.qr(h + 1j * np.eye(2))[0]
    assert np.isclose(process_fidelity(unitary_choi(u), u), 1.0)


# ---------------------------------------------------------------- PTM

def test_ptm_identity():
    assert np.allclose(choi_to_ptm(identity_choi(2)).R, np.eye(4))


def test_ptm_lambda_theta_is_z_rotation():
    th = 0.3
    ptm = choi_to_ptm(lambda_theta(th))
    c, s = np.cos(2 * th), np.sin(2 * th)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    a = ptm.unital_block
    # rotation by 2 theta about z, either orientation
    assert np.allclose(a, rot) or np.allclose(a, rot.T)
    assert np.allclose(ptm.nonunital_vector, 0)


def test_ptm_depolarizing():
    f = 0.8
    ptm = choi_to_ptm(depolarizing_choi(f))
    assert np.allclose(ptm.unital_block, (4 * f - 1) / 3 * np.eye(3))
    assert np.allclose(ptm.nonunital_vector, 0)


def test_ptm_first_row_and_n_check():
    rng = np.random.default_rng(11)
    for _ in range(20):
        r = choi_to_ptm(random_cptp(2, rng=rng)).R
        assert np.abs(r[0] - [1, 0, 0, 0]).max() < 1e-10
    with pytest.raises(DimensionError):
        choi_to_ptm(identity_choi(3))


# ---------------------------------------------------------------- diamond distance

def test_diamond_self_is_zero():
    lam = random_cptp(2, rng=12)
    assert diamond_distance(lam, lam).value == 0.0


@pytest.mark.parametrize("theta", [0.1, 0.3])
def test_diamond_unitary_pair(theta):
    res = diamond_distance(identity_choi(2), lambda_theta(theta))
    assert abs(res.value - 2 * abs(np.sin(theta))) < 1e-7
    assert res.converged


def _unitary_pair_oracle(u, v):
    # 2 sqrt(1 - m^2), m the distance from 0 to the numerical range of U^dagger V
    w = np.linalg.eigvals(u.conj().T @ v)
    angles = np.sort(np.angle(w))
    gaps = np.diff(np.concatenate([angles, angles[:1] + 2 * np.pi]))
    if gaps.max() <= np.pi:
        return 2.0
    i = int(np.argmax(gaps))
    half = 0.5 * (2 * np.pi - gaps[i])
    return 2 * np.sqrt(1 - np.cos(half) ** 2)


def test_diamond_random_unitary_pair_oracle():
    rng = np.random.default_rng(13)
    for _ in range(3):
        u = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))[0]
        h = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        h = 0.2 * (h + h.conj().T)
        w, vec = np.linalg.eigh(h)
        v = u @ vec @ np.diag(np.exp(1j * w)) @ vec.conj().T
        got = diamond_distance(unitary_choi(u), unitary_choi(v)).value
        assert abs(got - _unitary_pair_oracle(u, v)) < 1e-6


def _sdp_diamond(j1, j2):
    cp = pytest.importorskip("cvxpy")
    n = int(round(np.sqrt(j1.shape[0])))
    jd = j1 - j2
    w = cp.Variable((n * n, n * n), hermitian=True)
    s = cp.Variable((n, n), hermitian=True)
    cons = [w >> 0, cp.kron(s, np.eye(n)) - w >> 0, cp.trace(s) == 1]
    prob = cp.Problem(cp.Maximize(cp.real(cp.trace(jd @ w))), cons)
    prob.solve(solver="CLARABEL")
    return 2 * prob.value


def test_diamond_matches_sdp_oracle():
    rng = np.random.default_rng(14)
    for _ in range(3):
        a = random_cptp(2, 4, rng)
        b = random_cptp(2, 2, rng)
        got = diamond_distance(a, b).value
        assert abs(got - _sdp_diamond(a, b)) < 1e-5


def test_diamond_dominates_fixed_inputs():
    rng = np.random.default_rng(15)
    a, b = random_cptp(2, rng=rng), random_cptp(2, rng=rng)
    d = diamond_distance(a, b).value
    for _ in range(10):
        psi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        psi /= np.linalg.norm(psi)
        assert diamond_at_state(a, b, psi) <= d + 1e-9
    for label in "01+":
        out = apply_channel(a, proj(label)) - apply_channel(b, proj(label))
        assert trace_norm(out) <= d + 1e-9


def test_diamond_dimension_mismatch():
    with pytest.raises(DimensionError):
        diamond_distance(identity_choi(2), identity_choi(3))


# ---------------------------------------------------------------- properties

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_random_stiefel_gives_valid_choi(seed, k):
    xi = sample_uniform(2, k, np.random.default_rng(seed))
    check_choi(stiefel_to_choi(xi), psd_tol=1e-10, tp_tol=1e-10)
