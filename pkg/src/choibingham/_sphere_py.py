"""Pure-Python sphere kernel (fallback for ``_sphere_ext``).

Samples ``y`` on the unit sphere in R^D from the density proportional to
``exp(sum_i lam_i y_i^2 + c . y)`` by Gibbs updates of coordinate pairs. Each
pair update is an exact draw of the pair angle from its full conditional, a
degree-two trigonometric exponential ``exp(a cos 2phi + b cos phi + g sin phi)``,
via rejection from an adaptively refined piecewise-constant envelope.

The compiled kernel implements the same arithmetic in the same order and pulls
the same doubles from the generator, so both produce identical output.
"""
import math

TWO_PI = 2.0 * math.pi
N_INIT = 16
MAX_CELLS = 4096
TAIL = 40.0
SLACK = 1.0
MAX_TRIES = 100000


def _g(a, b, g, phi):
    s = math.sin(phi)
    c = math.cos(phi)
    return a * (2.0 * c * c - 1.0) + b * c + g * s


def _dg(a, b, g, phi):
    s = math.sin(phi)
    c = math.cos(phi)
    return -4.0 * a * s * c - b * s + g * c


def sample_angle(a, b, g, rng):
    """One exact draw from ``exp(a cos 2phi + b cos phi + g sin phi)`` on [-pi, pi)."""
    curv = 4.0 * abs(a) + math.sqrt(b * b + g * g)
    if curv == 0.0:
        return -math.pi + TWO_PI * rng.random()
    center = []
    half = []
    gval = []
    bound = []
    h0 = math.pi / N_INIT
    best = -math.inf
    for i in range(N_INIT):
        x = -math.pi + (2 * i + 1) * h0
        gx = _g(a, b, g, x)
        center.append(x)
        half.append(h0)
        gval.append(gx)
        bound.append(gx + abs(_dg(a, b, g, x)) * h0 + 0.5 * curv * h0 * h0)
        if gx > best:
            best = gx
    i = 0
    while i < len(center):
        if (bound[i] > best - TAIL and bound[i] - gval[i] > SLACK
                and len(center) < MAX_CELLS):
            h = 0.5 * half[i]
            xl = center[i] - h
            xr = center[i] + h
            gl = _g(a, b, g, xl)
            gr = _g(a, b, g, xr)
            center[i] = xl
            half[i] = h
            gval[i] = gl
            bound[i] = gl + abs(_dg(a, b, g, xl)) * h + 0.5 * curv * h * h
            center.append(xr)
            half.append(h)
            gval.append(gr)
            bound.append(gr + abs(_dg(a, b, g, xr)) * h + 0.5 * curv * h * h)
            if gl > best:
                best = gl
            if gr > best:
                best = gr
        else:
            i += 1
    m = len(center)
    top = max(bound)
    cum = []
    total = 0.0
    for j in range(m):
        total += math.exp(bound[j] - top) * half[j]
        cum.append(total)
    for _ in range(MAX_TRIES):
        u = rng.random() * total
        j = 0
        while j < m - 1 and cum[j] <= u:
            j += 1
        phi = center[j] + (2.0 * rng.random() - 1.0) * half[j]
        v = rng.random()
        if v < math.exp(_g(a, b, g, phi) - bound[j]):
            if phi >= math.pi:
                phi -= TWO_PI
            elif phi < -math.pi:
                phi += TWO_PI
            return phi
    raise RuntimeError("angle sampler exceeded its rejection budget")


def pair_gibbs(y, lam, c, n_sweeps, rng):
    """In-place pair-Gibbs sweeps; ``y`` is a writable float64 vector."""
    d = len(y)
    perm = list(range(d))
    for _ in range(n_sweeps):
        for i in range(d - 1, 0, -1):
            j = int(rng.random() * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        for t in range(0, d - 1, 2):
            p = perm[t]
            q = perm[t + 1]
            yp = float(y[p])
            yq = float(y[q])
            r = math.sqrt(yp * yp + yq * yq)
            if r == 0.0:
                continue
            a = 0.5 * r * r * (float(lam[p]) - float(lam[q]))
            phi = sample_angle(a, float(c[p]) * r, float(c[q]) * r, rng)
            y[p] = r * math.cos(phi)
            y[q] = r * math.sin(phi)
