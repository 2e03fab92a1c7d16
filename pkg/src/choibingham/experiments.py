"""Scripted reproductions: dephasing posterior, calibration sweep, MLE/MAP Monte Carlo.

Every replicate draws from its own generator derived from the master seed and
the replicate's coordinates, so results do not depend on worker scheduling.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dephasing_bayes as db
from . import frame_bingham as fb
from . import io, report, stiefel_opt, tomography
from .channel_reps import choi_to_ptm, depolarizing_choi, diamond_distance, process_fidelity

FIG3_THETAS = (10.0, 100.0, 1000.0, 10000.0)
FIG4_NS = (10, 100, 1000, 10000)
SQRT_NS = (100, 1000, 10000)


def derived_rng(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


def _pmap(func, tasks, workers):
    if workers <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(func, tasks))


def loglog_fit(x, y):
    """Least-squares slope, intercept and R^2 of ``log10 y`` against ``log10 x``."""
    lx, ly = np.log10(x), np.log10(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


# --------------------------------------------------------------------------
# calibration sweep
# --------------------------------------------------------------------------

@dataclass
class SweepResult:
    thetas: list
    fidelities: list
    means: list
    ses: list
    mean_chois: list
    slope: float
    intercept: float
    r2: float

    @property
    def increasing(self):
        return all(b > a for a, b in zip(self.means, self.means[1:]))

    def summary(self):
        groups = []
        for t, f, m, se, mc in zip(self.thetas, self.fidelities, self.means, self.ses, self.mean_chois):
            groups.append({"theta": t, "mean": m, "se": se, "min": float(f.min()),
                           "max": float(f.max()), "mean_choi_re": mc.real, "mean_choi_im": mc.imag})
        out = {"groups": groups, "strictly_increasing": self.increasing}
        if len(self.thetas) >= 2 and all(t > 0 for t in self.thetas):
            out.update({"loglog_slope": self.slope, "loglog_intercept": self.intercept,
                        "loglog_r2": self.r2})
        return out


def _sweep_task(args):
    theta, n, k, cfg, index = args
    samples = fb.sample_chain(fb.depolarizing_parameter(theta, n), n, k, cfg, chain_index=index)
    return samples


def fidelity_sweep(thetas, seed, sample_count=200, n=2, k=None, burn_in=500, thinning=5,
                   workers=1, keep_samples=False):
    k = n * n if k is None else k
    cfg = fb.ChainConfig(sample_count=sample_count, burn_in=burn_in, thinning=thinning, seed=seed)
    tasks = [(float(t), n, k, cfg, i) for i, t in enumerate(thetas)]
    all_samples = _pmap(_sweep_task, tasks, workers)
    fids = [fb.fidelity_batch(s) for s in all_samples]
    means = [float(f.mean()) for f in fids]
    ses = [float(fb.batch_means_se(f)) for f in fids]
    mcs = [fb.mean_choi(s) for s in all_samples]
    positive = [(t, 1.0 - m) for t, m in zip(thetas, means) if t > 0]
    if len(positive) >= 2:
        slope, intercept, r2 = loglog_fit(*map(np.array, zip(*positive)))
    else:
        slope = intercept = r2 = math.nan
    res = SweepResult([float(t) for t in thetas], fids, means, ses, mcs, slope, intercept, r2)
    return (res, all_samples) if keep_samples else res


def theta_tag(theta):
    return format(float(theta), "g").replace("+", "")


def write_sweep(res, out, meta, samples=None):
    out = Path(out)
    for i, (t, f) in enumerate(zip(res.thetas, res.fidelities)):
        io.write_csv(out / f"fidelity_theta_{theta_tag(t)}.csv", ["sample_index", "process_fidelity"],
                     [(j, float(v)) for j, v in enumerate(f)], meta)
        if samples is not None:
            d = out / f"channels_theta_{theta_tag(t)}"
            d.mkdir(exist_ok=True)
            for j, choi in enumerate(fb.choi_batch(samples[i])):
                io.write_channel(d / f"sample_{j:05d}.json", choi, meta)
    io.write_json(out / "summary.json", {"meta": meta, **res.summary()})


def fig3(seed, sample_count=200, thetas=FIG3_THETAS, workers=1, burn_in=500, thinning=5):
    return fidelity_sweep(thetas, seed, sample_count, burn_in=burn_in, thinning=thinning,
                          workers=workers)


def write_fig3(res, out, meta):
    write_sweep(res, out, meta)
    labels = [f"theta={theta_tag(t)}" for t in res.thetas]
    groups = [np.log10(np.maximum(1.0 - f, 1e-300)) for f in res.fidelities]
    ds = report.ViolinDataset(labels, groups)
    write_violin(ds, Path(out) / "fig3_violin", meta, "process infidelity by theta",
                 "log10(1 - process fidelity)")


def write_violin(ds, stem, meta, title, ylabel):
    stem = Path(stem)
    stem.with_suffix(".svg").write_text(report.violin_svg(ds, title, ylabel, meta=meta), encoding="utf-8",
                                        newline="\n")
    io.write_csv(stem.with_name(stem.name + "_kde.csv"), ["group", "y", "density"],
                 report.kde_rows(ds), meta)


# --------------------------------------------------------------------------
# MLE vs MAP Monte Carlo
# --------------------------------------------------------------------------

@dataclass
class Replicate:
    n: int
    index: int
    mle_fidelity: float
    map_fidelity: float
    mle_diamond: float
    map_diamond: float
    mle_choi: np.ndarray = field(repr=False, default=None)
    map_choi: np.ndarray = field(repr=False, default=None)
    truth: np.ndarray = field(repr=False, default=None)


def _truth(kind, seed, index, fidelity):
    if kind == "depolarizing":
        return depolarizing_choi(fidelity)
    return tomography.random_channel_with_fidelity(fidelity, rng=derived_rng(seed, 5, index))


def _replicate_task(args):
    (kind, seed, stage, n_idx, n, index, fidelity, design_name, theta, restarts,
     dd_restarts, do_map) = args
    truth = _truth(kind, seed, index, fidelity)
    design = tomography.get_design(design_name)
    data = tomography.simulate_counts(truth, design, n, derived_rng(seed, stage, n_idx, index))
    opts = stiefel_opt.OptimizerOptions(restarts=restarts, rng_seed=int(seed) + index)
    a = tomography.mle(data, design, opts)
    dd_seed = int(seed)
    rep = Replicate(n, index, process_fidelity(a.choi), math.nan,
                    diamond_distance(a.choi, truth, restarts=dd_restarts, rng=dd_seed).value,
                    math.nan, a.choi, None, truth)
    if do_map:
        b = tomography.map_estimate(data, design, fb.depolarizing_parameter(theta), opts)
        rep.map_fidelity = process_fidelity(b.choi)
        rep.map_diamond = diamond_distance(b.choi, truth, restarts=dd_restarts, rng=dd_seed).value
        rep.map_choi = b.choi
    return rep


@dataclass
class MonteCarloResult:
    kind: str
    design: str
    ns: list
    replicates: list
    theta: float
    fidelity: float

    def by_n(self, n):
        return [r for r in self.replicates if r.n == n]

    def medians(self, attr):
        return {n: float(np.median([getattr(r, attr) for r in self.by_n(n)])) for n in self.ns}

    def rows(self):
        return [(r.n, r.index, r.mle_fidelity, r.map_fidelity, r.mle_diamond, r.map_diamond)
                for r in self.replicates]

    def summary(self):
        out = {"kind": self.kind, "design": self.design, "theta": self.theta,
               "true_fidelity": self.fidelity, "n_values": list(self.ns)}
        for attr in ("mle_fidelity", "map_fidelity", "mle_diamond", "map_diamond"):
            out["median_" + attr] = {str(k): v for k, v in self.medians(attr).items()}
        return out


ROW_HEADER = ["n", "replicate", "mle_fidelity", "map_fidelity", "mle_diamond", "map_diamond"]


def monte_carlo(kind, seed, reps, ns, design="pauli4", theta=1e4, fidelity=0.9999,
                restarts=5, dd_restarts=10, workers=1, do_map=True, stage=4):
    tasks = [(kind, seed, stage, i, int(n), r, fidelity, design, theta, restarts, dd_restarts, do_map)
             for i, n in enumerate(ns) for r in range(reps)]
    reps_out = _pmap(_replicate_task, tasks, workers)
    return MonteCarloResult(kind, design, [int(n) for n in ns], reps_out, theta, fidelity)


def fig4(seed, reps=20, ns=FIG4_NS, workers=1, **kw):
    return monte_carlo("depolarizing", seed, reps, ns, workers=workers, stage=4, **kw)


def _violin_groups(res, attr_pair):
    labels, groups = [], []
    for n in res.ns:
        for name, attr in attr_pair:
            vals = np.array([getattr(r, attr) for r in res.by_n(n)])
            labels.append(f"{name} n={n}")
            groups.append(vals)
    return report.ViolinDataset(labels, groups)


def write_fig4(res, out, meta):
    out = Path(out)
    io.write_csv(out / "fig4_estimates.csv", ROW_HEADER, res.rows(), meta)
    io.write_json(out / "fig4_summary.json", {"meta": meta, **res.summary()})
    ds = _violin_groups(res, [("MLE", "mle_fidelity"), ("MAP", "map_fidelity")])
    write_violin(ds, out / "fig4_violin", meta, "estimated process fidelity", "process fidelity")


@dataclass
class Fig5Result:
    mc: MonteCarloResult
    exemplar: Replicate
    ptm_mle: np.ndarray
    ptm_map: np.ndarray
    sqrt_n: MonteCarloResult = None

    @property
    def ptm_improvement(self):
        return float(np.abs(self.ptm_mle).max() / np.abs(self.ptm_map).max())

    def sqrt_n_scaled(self):
        if self.sqrt_n is None:
            return {}
        med = self.sqrt_n.medians("mle_diamond")
        return {n: med[n] * math.sqrt(n) for n in self.sqrt_n.ns}

    @property
    def sqrt_n_spread(self):
        scaled = list(self.sqrt_n_scaled().values())
        return max(scaled) / min(scaled) if scaled else math.nan

    def summary(self):
        out = self.mc.summary()
        ex = choi_to_ptm(self.exemplar.truth)
        out["exemplar"] = {
            "n": self.exemplar.n, "replicate": self.exemplar.index,
            "mle_ptm_max_abs_error": float(np.abs(self.ptm_mle).max()),
            "map_ptm_max_abs_error": float(np.abs(self.ptm_map).max()),
            "improvement": self.ptm_improvement,
            "truth_nonunital_norm": float(np.linalg.norm(ex.nonunital_vector)),
            "truth_det_unital_block": float(np.linalg.det(ex.unital_block)),
        }
        if self.sqrt_n is not None:
            out["sqrt_n"] = {
                "design": self.sqrt_n.design,
                "median_mle_diamond": {str(k): v for k, v in self.sqrt_n.medians("mle_diamond").items()},
                "median_times_sqrt_n": {str(k): v for k, v in self.sqrt_n_scaled().items()},
                "spread": self.sqrt_n_spread,
            }
        return out


def fig5(seed, reps=20, ns=FIG4_NS, workers=1, exemplar_n=10, sqrt_ns=SQRT_NS, **kw):
    mc = monte_carlo("random", seed, reps, ns, workers=workers, stage=6, **kw)
    n_ex = exemplar_n if exemplar_n in mc.ns else mc.ns[0]
    ex = mc.by_n(n_ex)[0]
    truth_ptm = choi_to_ptm(ex.truth).R
    ptm_mle = choi_to_ptm(ex.mle_choi).R - truth_ptm
    ptm_map = choi_to_ptm(ex.map_choi).R - truth_ptm
    sq = None
    if sqrt_ns:
        sq_kw = {k: v for k, v in kw.items() if k in ("fidelity", "restarts", "dd_restarts")}
        sq = monte_carlo("random", seed, reps, sqrt_ns, design="pauli6", workers=workers,
                         do_map=False, stage=7, **sq_kw)
    return Fig5Result(mc, ex, ptm_mle, ptm_map, sq)


def write_fig5(res, out, meta):
    out = Path(out)
    io.write_csv(out / "fig5_estimates.csv", ROW_HEADER, res.mc.rows(), meta)
    if res.sqrt_n is not None:
        io.write_csv(out / "fig5_sqrt_n.csv", ROW_HEADER, res.sqrt_n.rows(), meta)
    for name, mat in (("mle", res.ptm_mle), ("map", res.ptm_map)):
        io.write_csv(out / f"fig5_ptm_diff_{name}.csv", ["I", "X", "Y", "Z"],
                     [tuple(float(v) for v in row) for row in mat], meta)
    io.write_json(out / "fig5_summary.json", {"meta": meta, **res.summary()})
    ds = _violin_groups(res.mc, [("MLE", "mle_diamond"), ("MAP", "map_diamond")])
    ds = report.ViolinDataset(ds.labels, [np.log10(g) for g in ds.groups])
    write_violin(ds, out / "fig5_violin", meta, "diamond distance to truth", "log10 diamond distance")


# --------------------------------------------------------------------------
# dephasing posterior
# --------------------------------------------------------------------------

@dataclass
class Fig1Result:
    von_mises: db.AngleGrid
    chi2: db.AngleGrid
    kappa: float
    gamma: float
    refined_mode: float

    @property
    def likelihood_mode(self):
        return self.von_mises.summary(self.von_mises.likelihood)["mode"]

    def summary(self):
        vm, c2 = self.von_mises.summaries(), self.chi2.summaries()
        return {
            "kappa": self.kappa, "gamma": self.gamma,
            "von_mises": vm, "chi2": c2,
            "mode_between_prior_and_likelihood":
                vm["prior"]["mode"] < vm["posterior"]["mode"] < vm["likelihood"]["mode"],
            "posterior_more_concentrated":
                vm["posterior"]["circular_variance"] < vm["prior"]["circular_variance"],
            "chi2_prior_more_concentrated":
                c2["prior"]["circular_variance"] < vm["prior"]["circular_variance"],
            "refined_grid_mode": self.refined_mode,
            "grid_spacing": self.von_mises.spacing,
        }


def fig1(prior_fidelity=0.99, x=96, n=100, grid=db.DEFAULT_GRID, n_rep=100, gamma=None):
    kappa = db.kappa_from_fidelity(prior_fidelity)
    vm = db.VonMisesPrior(kappa)
    c2 = db.Chi2DerivedPrior(kappa, n_rep, gamma)
    g_vm = db.grid_posterior(vm, x, n, grid)
    g_c2 = db.grid_posterior(c2, x, n, grid)
    refined = db.grid_posterior(vm, x, n, 2 * grid).summary()["mode"]
    return Fig1Result(g_vm, g_c2, kappa, c2.gamma, refined)


def write_fig1(res, out, meta):
    out = Path(out)
    for name, g in (("vonmises", res.von_mises), ("chi2", res.chi2)):
        io.write_csv(out / f"fig1_posterior_{name}.csv", ["theta", "prior", "likelihood", "posterior"],
                     list(zip(g.theta, g.prior, g.likelihood, g.posterior)), meta)
    io.write_json(out / "fig1_summary.json", {"meta": meta, **res.summary()})
