"""Grid posterior for the single-angle dephasing channel.

The channel has the one Kraus operator ``diag(e^{i theta}, e^{-i theta})``; a
Ramsey setting (prepare and measure ``|+>``) succeeds with probability
``(1 + cos 2 theta) / 2``. Priors live on the doubled angle ``phi = 2 theta``.
Everything is evaluated in log space on a uniform periodic grid over
``(-pi/2, pi/2]``.

The likelihood and both priors are even in ``theta``, so the sign of the
angle cannot be identified. Summaries are therefore reported for the folded
angle ``|theta|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammainc

from .channel_reps import kraus_to_choi
from .errors import ConfigError, NumericDegeneracyError

SERIES_MAX = 15.0
DEFAULT_GRID = 4096


def dephasing_kraus(theta):
    return np.diag([np.exp(1j * theta), np.exp(-1j * theta)])


def dephasing_choi(theta):
    return kraus_to_choi([dephasing_kraus(theta)])


# --------------------------------------------------------------------------
# modified Bessel functions of the first kind, orders 0 and 1
# --------------------------------------------------------------------------

def _series(x, nu):
    """``sum_m (x/2)^(2m+nu) / (m! (m+nu)!)``."""
    if x == 0.0:
        return 1.0 if nu == 0 else 0.0
    q = 0.25 * x * x
    term = (0.5 * x) ** nu / math.factorial(nu)
    total = term
    m = 0
    while True:
        m += 1
        term *= q / (m * (m + nu))
        total += term
        if term <= 1e-17 * total:
            return total


def _asymptotic_factor(x, nu, terms=30):
    """``I_nu(x) sqrt(2 pi x) e^{-x}`` by the large-argument expansion."""
    mu = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    prev = math.inf
    for k in range(1, terms + 1):
        term *= -(mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(term) >= prev:
            break
        total += term
        prev = abs(term)
        if abs(term) < 1e-17 * abs(total):
            break
    return total


def bessel_i(nu, x):
    if nu not in (0, 1):
        raise ValueError("only orders 0 and 1 are implemented")
    ax = abs(x)
    if ax <= SERIES_MAX:
        val = _series(ax, nu)
    else:
        val = math.exp(ax) / math.sqrt(2.0 * math.pi * ax) * _asymptotic_factor(ax, nu)
    return -val if (nu == 1 and x < 0) else val


def bessel_i0(x):
    return bessel_i(0, x)


def bessel_i1(x):
    return bessel_i(1, x)


def log_bessel_i0(x):
    ax = abs(x)
    if ax <= SERIES_MAX:
        return math.log(_series(ax, 0))
    return ax - 0.5 * math.log(2.0 * math.pi * ax) + math.log(_asymptotic_factor(ax, 0))


def bessel_ratio(kappa):
    """``I1(kappa) / I0(kappa)``, increasing from 0 to 1 on ``[0, inf)``."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if kappa <= SERIES_MAX:
        return _series(kappa, 1) / _series(kappa, 0)
    return _asymptotic_factor(kappa, 1) / _asymptotic_factor(kappa, 0)


def kappa_from_fidelity(fidelity, tol=1e-14, max_iter=400):
    """Concentration whose von Mises mean resultant ``I1/I0`` equals ``2F - 1``."""
    if not 0.5 < fidelity < 1.0:
        raise ConfigError("prior fidelity must lie in (1/2, 1)")
    target = 2.0 * fidelity - 1.0
    lo, hi = 0.0, 1.0
    while bessel_ratio(hi) < target:
        lo, hi = hi, 2.0 * hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if bessel_ratio(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(hi, 1.0):
            break
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# priors (log densities on theta)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VonMisesPrior:
    """von Mises law on ``phi = 2 theta``; density on theta is twice the vM density."""
    kappa: float
    mu: float = 0.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ConfigError("kappa must be nonnegative")

    @classmethod
    def from_fidelity(cls, fidelity):
        return cls(kappa_from_fidelity(fidelity))

    def log_density(self, theta):
        phi = 2.0 * np.asarray(theta, dtype=float)
        return (self.kappa * np.cos(phi - self.mu) - math.log(2.0 * math.pi)
                - log_bessel_i0(self.kappa) + math.log(2.0))

    def __call__(self, theta):
        return np.exp(self.log_density(theta))


@dataclass(frozen=True)
class Chi2DerivedPrior:
    """Density of theta induced by ``u = 2 n gamma (1 - cos 2 theta) ~ chi2_n``.

    ``gamma`` defaults to ``kappa``. The map is two-to-one over ``+-theta`` so
    each branch carries half the mass. Only ``u <= 4 n gamma`` is reachable,
    so the chi-square law is conditioned on that range.
    """
    kappa: float
    n_rep: int = 100
    gamma: float = None

    def __post_init__(self):
        if self.kappa <= 0 or self.n_rep < 1:
            raise ConfigError("need kappa > 0 and n_rep >= 1")
        if self.gamma is None:
            object.__setattr__(self, "gamma", float(self.kappa))
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")

    @property
    def _reachable_mass(self):
        return float(gammainc(0.5 * self.n_rep, 2.0 * self.n_rep * self.gamma))

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        n = self.n_rep
        scale = 2.0 * n * self.gamma
        u = scale * (1.0 - np.cos(2.0 * theta))
        jac = 2.0 * scale * np.abs(np.sin(2.0 * theta))
        with np.errstate(divide="ignore", invalid="ignore"):
            log_chi2 = ((0.5 * n - 1.0) * np.log(u) - 0.5 * u
                        - 0.5 * n * math.log(2.0) - math.lgamma(0.5 * n))
            out = log_chi2 + np.log(jac) - math.log(2.0) - math.log(self._reachable_mass)
        return np.where(np.isnan(out), -np.inf, out)

    def __call__(self, theta):
        return np.exp(self.log_density(theta))


def chi2_prior_density(kappa, n_rep=100, gamma=None):
    return Chi2DerivedPrior(kappa, n_rep, gamma)


@dataclass(frozen=True)
class FlatPrior:
    def log_density(self, theta):
        return np.full(np.shape(theta), -math.log(math.pi))


# --------------------------------------------------------------------------
# grid posterior
# --------------------------------------------------------------------------

def angle_grid(size=DEFAULT_GRID):
    h = math.pi / size
    return -0.5 * math.pi + h * np.arange(1, size + 1)


def ramsey_probability(theta):
    return 0.5 + 0.5 * np.cos(2.0 * np.asarray(theta, dtype=float))


def log_likelihood(theta, x, n):
    p = ramsey_probability(theta)
    with np.errstate(divide="ignore"):
        out = np.zeros_like(p)
        if x > 0:
            out = out + x * np.log(p)
        if n - x > 0:
            out = out + (n - x) * np.log1p(-p)
    return out


def _normalize_log(logv, h):
    top = np.max(logv)
    if not np.isfinite(top):
        raise NumericDegeneracyError("density vanishes on the whole grid")
    w = np.exp(logv - top)
    return w / (h * w.sum())


def _log_prior(prior, theta):
    if hasattr(prior, "log_density"):
        return np.asarray(prior.log_density(theta), dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(prior(theta), dtype=float))


@dataclass(frozen=True)
class AngleGrid:
    theta: np.ndarray
    prior: np.ndarray
    likelihood: np.ndarray
    posterior: np.ndarray

    @property
    def spacing(self):
        return math.pi / len(self.theta)

    def integral(self, density):
        return float(self.spacing * np.sum(density))

    def summary(self, density=None):
        return folded_summary(self.theta, self.posterior if density is None else density)

    def summaries(self):
        return {"prior": self.summary(self.prior),
                "likelihood": self.summary(self.likelihood),
                "posterior": self.summary(self.posterior)}


def folded_summary(theta, density, level=0.95):
    """Mode, circular mean and variance of ``2|theta|``, central credible interval of ``|theta|``."""
    h = math.pi / len(theta)
    w = density * h
    w = w / w.sum()
    a = np.abs(theta)
    mode = float(a[np.argmax(density)])
    resultant = np.sum(w * np.exp(2j * a))
    order = np.argsort(a, kind="stable")
    cdf = np.cumsum(w[order])
    tail = 0.5 * (1.0 - level)
    lo = float(a[order][np.searchsorted(cdf, tail)])
    hi = float(a[order][min(np.searchsorted(cdf, 1.0 - tail), len(a) - 1)])
    return {
        "mode": mode,
        "circular_mean_2theta": float(np.angle(resultant)),
        "circular_variance": float(1.0 - abs(resultant)),
        "ci_low": lo,
        "ci_high": hi,
    }


def grid_posterior(prior, x, n, size=DEFAULT_GRID):
    """Prior, binomial likelihood and posterior on the angle grid.

    ``prior`` is a prior object with ``log_density`` or any callable returning
    densities. Each returned curve integrates to one on the grid.
    """
    if size < 512:
        raise ConfigError("grid needs at least 512 points")
    if not (0 <= x <= n and n >= 1):
        raise ConfigError("need 0 <= x <= n and n >= 1")
    theta = angle_grid(size)
    h = math.pi / size
    lp = _log_prior(prior, theta)
    ll = log_likelihood(theta, x, n)
    return AngleGrid(theta, _normalize_log(lp, h), _normalize_log(ll, h),
                     _normalize_log(lp + ll, h))


def circular_variance(grid, density):
    return grid.summary(density)["circular_variance"]
