import numpy as np
import pytest
from scipy import stats

from choibingham import _kernels, _sphere_py
from choibingham.frame_bingham import rejection_sample_sphere

BACKENDS = sorted(_kernels.BACKENDS)


def angle_cdf(a, b, g, edges):
    phi = np.linspace(-np.pi, np.pi, 200001)
    f = a * np.cos(2 * phi) + b * np.cos(phi) + g * np.sin(phi)
    dens = np.exp(f - f.max())
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(phi))])
    return np.interp(edges, phi, cum / cum[-1])


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("params", [(0.0, 0.0, 0.0), (3.0, 1.0, -2.0), (-40.0, 5.0, 0.5),
                                    (200.0, 0.0, 30.0), (0.0, 500.0, 0.0)])
def test_angle_sampler_matches_quadrature_cdf(backend, params):
    kernel = _kernels.get_kernel(backend)
    rng = np.random.default_rng(42)
    draws = np.array([kernel.sample_angle(*params, rng) for _ in range(4000)])
    assert draws.min() >= -np.pi and draws.max() < np.pi
    # equiprobable bins under the quadrature CDF
    fine = np.linspace(-np.pi, np.pi, 20001)
    cdf = angle_cdf(*params, fine)
    edges = np.interp(np.linspace(0, 1, 21), cdf, fine)
    edges[0], edges[-1] = -np.pi, np.pi
    observed, _ = np.histogram(draws, edges)
    expected = np.diff(angle_cdf(*params, edges)) * draws.size
    keep = expected > 5
    p = stats.chisquare(observed[keep], expected[keep] * observed[keep].sum() / expected[keep].sum()).pvalue
    assert p > 0.01


def test_backends_identical_angles():
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    out = {}
    for name in BACKENDS:
        rng = np.random.default_rng(7)
        kernel = _kernels.get_kernel(name)
        out[name] = [kernel.sample_angle(25.0, -3.0, 4.0, rng) for _ in range(500)]
    assert out["python"] == out["cython"]


def test_backends_identical_pair_gibbs():
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    lam = np.linspace(-30, 30, 10)
    c = np.linspace(-4, 4, 10)
    ys = {}
    for name in BACKENDS:
        rng = np.random.default_rng(8)
        y = np.ones(10) / np.sqrt(10)
        for _ in range(100):
            _kernels.get_kernel(name).pair_gibbs(y, lam, c, 2, rng)
        ys[name] = y
    assert np.array_equal(ys["python"], ys["cython"])


@pytest.mark.parametrize("backend", BACKENDS)
def test_pair_gibbs_stays_on_sphere(backend):
    rng = np.random.default_rng(9)
    y = rng.standard_normal(7)
    y /= np.linalg.norm(y)
    _kernels.get_kernel(backend).pair_gibbs(y, np.arange(7.0), np.ones(7), 50, rng)
    assert abs(np.linalg.norm(y) - 1) < 1e-12


@pytest.mark.parametrize("backend", BACKENDS)
def test_pair_gibbs_matches_rejection_oracle(backend):
    lam = np.array([2.0, 1.0, 0.0, -1.0])
    c = np.array([0.5, 0.0, 0.3, 0.0])
    rng = np.random.default_rng(10)
    kernel = _kernels.get_kernel(backend)
    y = np.array([0.5, 0.5, 0.5, 0.5])
    gibbs = []
    for t in range(24000):
        kernel.pair_gibbs(y, lam, c, 1, rng)
        if t % 6 == 5:
            gibbs.append(y.copy())
    gibbs = np.array(gibbs)
    oracle = rejection_sample_sphere(lam, c, np.random.default_rng(11), size=4000)
    for stat in (lambda s: s[:, 0], lambda s: s[:, 2], lambda s: s**2 @ lam + s @ c):
        a, b = stat(gibbs), stat(oracle)
        edges = np.quantile(np.concatenate([a, b]), np.linspace(0, 1, 16))
        edges[0], edges[-1] = -np.inf, np.inf
        table = np.array([np.histogram(a, edges)[0], np.histogram(b, edges)[0]])
        assert stats.chi2_contingency(table).pvalue > 0.01


def test_pure_python_module_exposes_kernel_api():
    assert callable(_sphere_py.sample_angle) and callable(_sphere_py.pair_gibbs)
    assert "python" in _kernels.BACKENDS
    with pytest.raises(ValueError):
        _kernels.get_kernel("fortran")
