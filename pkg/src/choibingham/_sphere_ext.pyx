# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sphere kernel; mirrors ``_sphere_py`` operation for operation."""
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport sin, cos, sqrt, exp, fabs, M_PI, INFINITY
from numpy.random cimport bitgen_t

cdef enum:
    N_INIT = 16
    MAX_CELLS = 4096
    MAX_TRIES = 100000
    MAX_DIM = 1024

cdef double TAIL = 40.0
cdef double SLACK = 1.0


cdef inline double _g(double a, double b, double g, double phi) noexcept nogil:
    cdef double s = sin(phi)
    cdef double c = cos(phi)
    return a * (2.0 * c * c - 1.0) + b * c + g * s


cdef inline double _dg(double a, double b, double g, double phi) noexcept nogil:
    cdef double s = sin(phi)
    cdef double c = cos(phi)
    return -4.0 * a * s * c - b * s + g * c


cdef inline double _next(bitgen_t *bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef int _sample_angle(double a, double b, double g, bitgen_t *bg, double *out) noexcept nogil:
    cdef double center[MAX_CELLS]
    cdef double half[MAX_CELLS]
    cdef double gval[MAX_CELLS]
    cdef double bound[MAX_CELLS]
    cdef double cum[MAX_CELLS]
    cdef double curv = 4.0 * fabs(a) + sqrt(b * b + g * g)
    cdef double h0, x, gx, best, h, xl, xr, gl, gr, top, total, u, phi, v
    cdef int i, j, m, n, t
    if curv == 0.0:
        out[0] = -M_PI + 2.0 * M_PI * _next(bg)
        return 0
    h0 = M_PI / N_INIT
    best = -INFINITY
    for i in range(N_INIT):
        x = -M_PI + (2 * i + 1) * h0
        gx = _g(a, b, g, x)
        center[i] = x
        half[i] = h0
        gval[i] = gx
        bound[i] = gx + fabs(_dg(a, b, g, x)) * h0 + 0.5 * curv * h0 * h0
        if gx > best:
            best = gx
    n = N_INIT
    i = 0
    while i < n:
        if bound[i] > best - TAIL and bound[i] - gval[i] > SLACK and n < MAX_CELLS:
            h = 0.5 * half[i]
            xl = center[i] - h
            xr = center[i] + h
            gl = _g(a, b, g, xl)
            gr = _g(a, b, g, xr)
            center[i] = xl
            half[i] = h
            gval[i] = gl
            bound[i] = gl + fabs(_dg(a, b, g, xl)) * h + 0.5 * curv * h * h
            center[n] = xr
            half[n] = h
            gval[n] = gr
            bound[n] = gr + fabs(_dg(a, b, g, xr)) * h + 0.5 * curv * h * h
            n += 1
            if gl > best:
                best = gl
            if gr > best:
                best = gr
        else:
            i += 1
    m = n
    top = bound[0]
    for j in range(1, m):
        if bound[j] > top:
            top = bound[j]
    total = 0.0
    for j in range(m):
        total += exp(bound[j] - top) * half[j]
        cum[j] = total
    for t in range(MAX_TRIES):
        u = _next(bg) * total
        j = 0
        while j < m - 1 and cum[j] <= u:
            j += 1
        phi = center[j] + (2.0 * _next(bg) - 1.0) * half[j]
        v = _next(bg)
        if v < exp(_g(a, b, g, phi) - bound[j]):
            if phi >= M_PI:
                phi -= 2.0 * M_PI
            elif phi < -M_PI:
                phi += 2.0 * M_PI
            out[0] = phi
            return 0
    return -1


cdef bitgen_t *_bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, b"BitGenerator"):
        raise ValueError("invalid bit generator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, b"BitGenerator")


def sample_angle(double a, double b, double g, rng):
    cdef bitgen_t *bg = _bitgen(rng)
    cdef double phi
    cdef int status
    with rng.bit_generator.lock:
        with nogil:
            status = _sample_angle(a, b, g, bg, &phi)
    if status:
        raise RuntimeError("angle sampler exceeded its rejection budget")
    return phi


def pair_gibbs(double[::1] y, const double[::1] lam, const double[::1] c, int n_sweeps, rng):
    cdef bitgen_t *bg = _bitgen(rng)
    cdef Py_ssize_t d = y.shape[0]
    cdef int perm[MAX_DIM]
    cdef int s, i, j, t, p, q, tmp, status = 0
    cdef double yp, yq, r, a, phi
    if d > MAX_DIM:
        raise ValueError("sphere dimension above 1024 is not supported by the compiled kernel")
    for i in range(d):
        perm[i] = i
    with rng.bit_generator.lock:
        with nogil:
            for s in range(n_sweeps):
                for i in range(d - 1, 0, -1):
                    j = <int> (_next(bg) * (i + 1))
                    tmp = perm[i]
                    perm[i] = perm[j]
                    perm[j] = tmp
                for t in range(0, d - 1, 2):
                    p = perm[t]
                    q = perm[t + 1]
                    yp = y[p]
                    yq = y[q]
                    r = sqrt(yp * yp + yq * yq)
                    if r == 0.0:
                        continue
                    a = 0.5 * r * r * (lam[p] - lam[q])
                    status = _sample_angle(a, c[p] * r, c[q] * r, bg, &phi)
                    if status:
                        break
                    y[p] = r * cos(phi)
                    y[q] = r * sin(phi)
                if status:
                    break
    if status:
        raise RuntimeError("angle sampler exceeded its rejection budget")
