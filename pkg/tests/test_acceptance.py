"""Acceptance suite: one PASS/FAIL line per criterion, printed to the terminal."""
import math
import time

import numpy as np
import pytest

from choibingham import experiments as ex
from choibingham import frame_bingham as fb
from choibingham.channel_reps import (
    choi_to_kraus, choi_to_stiefel, diamond_distance, feasibility, kraus_to_choi, process_fidelity,
    random_cptp, stacked_kraus_permutation_matrix, stiefel_to_choi, stiefel_to_stacked_kraus,
)
from choibingham.cli import run
from choibingham.stiefel_opt import (
    Objective, OptimizerOptions, cayley_dense, cayley_retract, minimize, search_direction,
)
from choibingham.tomography import (
    LikelihoodModel, design_pauli4, design_pauli6, expected_counts, map_estimate, mle,
    random_channel_with_fidelity, simulate_counts,
)


@pytest.fixture
def verdict(capsys):
    start = time.perf_counter()

    def emit(number, checks, limit):
        elapsed = time.perf_counter() - start
        checks = dict(checks, runtime=elapsed < limit)
        ok = all(bool(v) for v in checks.values())
        failed = [k for k, v in checks.items() if not v]
        line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f} s, limit {limit:.0f} s)"
        if failed:
            line += " failed: " + ", ".join(failed)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


def _rand_complex(shape, rng):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_criterion_1_round_trips(verdict):
    rng = np.random.default_rng(101)
    stiefel_err = kraus_err = 0.0
    perm_exact = True
    for n in (2, 3):
        for _ in range(100):
            choi = random_cptp(n, rng=rng)
            xi = choi_to_stiefel(choi)
            stiefel_err = max(stiefel_err, np.abs(stiefel_to_choi(xi) - choi).max())
            kraus_err = max(kraus_err, np.abs(kraus_to_choi(choi_to_kraus(choi)) - choi).max())
            p = stacked_kraus_permutation_matrix(n, xi.shape[0] // n)
            perm_exact &= np.array_equal(stiefel_to_stacked_kraus(xi), p @ xi.conj())
    verdict(1, {"choi-stiefel-choi": stiefel_err < 1e-10, "choi-kraus-choi": kraus_err < 1e-10,
                "stacked permutation": perm_exact}, 10)


def test_criterion_2_exponential_family_identity(verdict):
    rng = np.random.default_rng(102)
    worst = 0.0
    for i in range(50):
        n = 2 + i % 2
        k = int(rng.integers(1, n * n + 1))
        g = _rand_complex((n * n, n * n), rng)
        theta = g @ g.conj().T
        xi = fb.sample_uniform(n, k, rng)
        worst = max(worst, abs(fb.sufficient_stat(xi, theta) - fb.sufficient_stat_blocks(xi, theta)))
    verdict(2, {"trace form equals column form": worst < 1e-10}, 5)


def test_criterion_3_uniform_reference(verdict):
    cfg = fb.ChainConfig(sample_count=2000, burn_in=200, thinning=1, seed=103)
    samples = fb.sample_chain(np.zeros((4, 4)), 2, 4, cfg)
    chois = fb.choi_batch(samples)
    mean = chois.mean(axis=0)
    target = np.eye(4) / 2
    entry_ok = True
    for part in (np.real, np.imag):
        for a in range(4):
            for b in range(4):
                series = part(chois[:, a, b])
                se = fb.batch_means_se(series)
                entry_ok &= abs(part(mean[a, b]) - part(target[a, b])) <= 3 * se
    f_chain = fb.fidelity_batch(samples)
    rng = np.random.default_rng(203)
    f_qr = np.array([process_fidelity(stiefel_to_choi(fb.sample_uniform(2, 4, rng))) for _ in range(2000)])
    se = math.hypot(fb.batch_means_se(f_chain), f_qr.std(ddof=1) / math.sqrt(len(f_qr)))
    verdict(3, {"mean Choi within 3 SE": entry_ok,
                "fidelity matches QR sampler": abs(f_chain.mean() - f_qr.mean()) <= 3 * se}, 60)


def test_criterion_4_calibration_curve(verdict):
    res = ex.fig3(104, sample_count=200)
    verdict(4, {"strictly increasing": res.increasing,
                "fidelity at 1e4": abs(res.means[-1] - 0.9997) <= 0.0002,
                "negative slope": res.slope < 0, "R^2 > 0.9": res.r2 > 0.9}, 300)


def _recording(obj, log):
    def value(x):
        log.append(feasibility(x))
        return obj.value(x)
    return Objective(value, obj.gradient)


def test_criterion_5_optimizer(verdict):
    rng = np.random.default_rng(105)
    feas, grad_ok, cayley_ok = [], True, True
    for i in range(20):
        design = design_pauli6() if i % 2 else design_pauli4()
        data = simulate_counts(random_cptp(2, rng=rng), design, 100, rng)
        model = LikelihoodModel(data, design, fb.depolarizing_parameter(50.0) if i % 4 == 0 else None)
        log = []
        rep = minimize(_recording(model.objective(), log), fb.sample_uniform(2, 4, rng),
                       OptimizerOptions(max_iters=200))
        feas.append(max(max(log), rep.feasibility_max))
        xi = fb.sample_uniform(2, 4, rng)
        e = _rand_complex(xi.shape, rng)
        h = 1e-6
        fd = (model.value(xi + h * e) - model.value(xi - h * e)) / (2 * h)
        grad_ok &= abs(np.vdot(model.gradient(xi), e).real - fd) <= 1e-5 * abs(fd)
        d = search_direction(xi, _rand_complex(xi.shape, rng))
        tau = float(rng.uniform(0.01, 2.0))
        cayley_ok &= np.abs(cayley_retract(xi, d, tau) - cayley_dense(xi, d.dense(), tau)).max() < 1e-10
    verdict(5, {"every iterate feasible": max(feas) < 1e-8, "gradient matches FD": grad_ok,
                "low-rank equals dense Cayley": cayley_ok}, 60)


def test_criterion_6_mle_consistency(verdict):
    rng = np.random.default_rng(106)
    design = design_pauli6()
    worst = 0.0
    for _ in range(10):
        truth = random_cptp(2, rng=rng)
        res = mle(expected_counts(truth, design, 1000), design, OptimizerOptions(restarts=5))
        worst = max(worst, diamond_distance(res.choi, truth, restarts=10).value)
    verdict(6, {"diamond distance < 1e-3": worst < 1e-3}, 120)


def test_criterion_7_map_vs_mle(verdict, capsys):
    res = ex.fig5(107, reps=20, ns=(10, 10000), sqrt_ns=ex.SQRT_NS)
    dd_mle, dd_map = res.mc.medians("mle_diamond"), res.mc.medians("map_diamond")
    f_mle, f_map = res.mc.medians("mle_fidelity"), res.mc.medians("map_fidelity")
    agree = abs(f_mle[10000] - f_map[10000]) <= 0.1 * max(f_mle[10000], f_map[10000])
    # theta = 0 MAP against MLE at the large-n end
    design = design_pauli4()
    identical = True
    for r in range(3):
        truth = random_channel_with_fidelity(0.9999, rng=ex.derived_rng(107, 8, r))
        data = simulate_counts(truth, design, 10000, ex.derived_rng(107, 9, r))
        opts = OptimizerOptions(restarts=5, rng_seed=r)
        a = mle(data, design, opts)
        b = map_estimate(data, design, np.zeros((4, 4)), opts)
        identical &= np.array_equal(a.choi, b.choi)
    with capsys.disabled():
        print(f"\n  n=10 median diamond MLE {dd_mle[10]:.4g} MAP {dd_map[10]:.4g};"
              f" PTM improvement {res.ptm_improvement:.2f}x;"
              f" n=1e4 median fidelity MLE {f_mle[10000]:.6f} MAP {f_map[10000]:.6f};"
              f" sqrt(n) spread {res.sqrt_n_spread:.3f}")
    verdict(7, {"MAP diamond below MLE at n=10": dd_map[10] < dd_mle[10],
                "PTM improvement >= 3x": res.ptm_improvement >= 3,
                "fidelities agree at n=1e4": agree, "theta=0 MAP equals MLE": identical,
                "sqrt(n) decay within 2x": res.sqrt_n_spread <= 2}, 600)


def test_criterion_8_dephasing_posterior(verdict):
    res = ex.fig1(0.99, 96, 100)
    s = res.summary()
    mode = s["von_mises"]["posterior"]["mode"]
    verdict(8, {"mode strictly inside": 0 < mode < math.acos(0.92) / 2,
                "posterior concentrates": s["posterior_more_concentrated"],
                "chi2 prior tighter": s["chi2_prior_more_concentrated"],
                "grid doubling": abs(s["refined_grid_mode"] - mode) < s["grid_spacing"]}, 10)


def _snapshot(folder):
    return {p.relative_to(folder): p.read_bytes() for p in sorted(folder.rglob("*")) if p.is_file()}


def test_criterion_9_determinism(verdict, tmp_path):
    small = {
        "sample": "thetas = 10,1000\nreps = 5\nburn_in = 20\nemit_channels = true\n",
        "simulate": "truth = random\ndesign = pauli4\nn = 10\n",
        "calibrate": "reps = 20\nburn_in = 20\nthinning = 1\ntol = 1e-2\nfidelity = 0.99\n",
        "fig1": "grid = 1024\n",
        "fig3": "reps = 5\nburn_in = 20\n",
        "fig4": "reps = 2\nns = 10\nrestarts = 1\ndd_restarts = 2\n",
        "fig5": "reps = 2\nns = 10\nsqrt_ns = 100\nrestarts = 1\ndd_restarts = 2\n",
    }
    same = {}
    for name, text in small.items():
        cfg = tmp_path / f"{name}.cfg"
        cfg.write_text(text)
        argv = ["experiment", name] if name.startswith("fig") else [name]
        outs = []
        for rerun in ("a", "b"):
            out = tmp_path / name / rerun
            assert run(argv + ["--seed", "9", "--config", str(cfg), "--out", str(out)]) == 0
            outs.append(_snapshot(out))
        same[name] = bool(outs[0]) and outs[0] == outs[1]
    counts = str(tmp_path / "simulate" / "a" / "counts.json")
    outs = []
    for rerun in ("a", "b"):
        out = tmp_path / "estimate" / rerun
        assert run(["estimate", "--seed", "9", "--counts", counts, "--mode", "map", "--theta", "1e4",
                    "--out", str(out)]) == 0
        outs.append(_snapshot(out))
    same["estimate"] = outs[0] == outs[1]
    verdict(9, same, 120)
