"""Compiled inner loops for the section tracers."""
from __future__ import annotations

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi

# status codes shared with tracer.py
OPEN = 0
CLOSED = 1
DIVERGED = 2


@njit(cache=True)
def field_eval(freqs, amps, phases, x, grad, hess):
    """Value of a cosine sum; fills ``grad`` and ``hess`` in place."""
    val = 0.0
    for a in range(3):
        grad[a] = 0.0
        for b in range(3):
            hess[a, b] = 0.0
    for t in range(freqs.shape[0]):
        arg = TWO_PI * (freqs[t, 0] * x[0] + freqs[t, 1] * x[1] + freqs[t, 2] * x[2]) + phases[t]
        ca = amps[t] * np.cos(arg)
        sa = amps[t] * np.sin(arg)
        val += ca
        for a in range(3):
            grad[a] -= TWO_PI * sa * freqs[t, a]
            for b in range(3):
                hess[a, b] -= TWO_PI * TWO_PI * ca * freqs[t, a] * freqs[t, b]
    return val


@njit(cache=True)
def _tangent(freqs, amps, phases, B, x, out, grad, hess):
    field_eval(freqs, amps, phases, x, grad, hess)
    out[0] = grad[1] * B[2] - grad[2] * B[1]
    out[1] = grad[2] * B[0] - grad[0] * B[2]
    out[2] = grad[0] * B[1] - grad[1] * B[0]
    n = np.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2)
    if n > 0.0:
        for a in range(3):
            out[a] /= n
    return n


@njit(cache=True)
def _project(freqs, amps, phases, c, B, s, x, grad, hess, tol):
    """Minimal-norm Newton correction onto {field = c, <B,x> = s}. Returns residual."""
    res = 1.0
    for _ in range(12):
        v = field_eval(freqs, amps, phases, x, grad, hess)
        r0 = v - c
        r1 = B[0] * x[0] + B[1] * x[1] + B[2] * x[2] - s
        res = abs(r0) + abs(r1)
        if res < tol:
            return res
        gg = grad[0] ** 2 + grad[1] ** 2 + grad[2] ** 2
        gb = grad[0] * B[0] + grad[1] * B[1] + grad[2] * B[2]
        bb = B[0] ** 2 + B[1] ** 2 + B[2] ** 2
        det = gg * bb - gb * gb
        if det <= 0.0:
            return 1e300
        l0 = (bb * r0 - gb * r1) / det
        l1 = (gg * r1 - gb * r0) / det
        for a in range(3):
            x[a] -= grad[a] * l0 + B[a] * l1
    v = field_eval(freqs, amps, phases, x, grad, hess)
    return abs(v - c) + abs(B[0] * x[0] + B[1] * x[1] + B[2] * x[2] - s)


@njit(cache=True)
def _land(freqs, amps, phases, c, B, s, T0, target, x, grad, hess):
    """Newton on {field=c, <B,x>=s, <T0, x-target>=0}; returns distance to target."""
    for _ in range(20):
        v = field_eval(freqs, amps, phases, x, grad, hess)
        r = np.empty(3)
        r[0] = v - c
        r[1] = B[0] * x[0] + B[1] * x[1] + B[2] * x[2] - s
        r[2] = T0[0] * (x[0] - target[0]) + T0[1] * (x[1] - target[1]) + T0[2] * (x[2] - target[2])
        J = np.empty((3, 3))
        for a in range(3):
            J[0, a] = grad[a]
            J[1, a] = B[a]
            J[2, a] = T0[a]
        if abs(np.linalg.det(J)) < 1e-300:
            break
        dx = np.linalg.solve(J, r)
        for a in range(3):
            x[a] -= dx[a]
        if abs(dx[0]) + abs(dx[1]) + abs(dx[2]) < 1e-15:
            break
    d = 0.0
    for a in range(3):
        d += (x[a] - target[a]) ** 2
    return np.sqrt(d)


@njit(cache=True)
def trace_field_kernel(freqs, amps, phases, c, B, s, seed, budget, h0, hmax, angle,
                       close_tol, singular_tol, store_every, max_store):
    """Arc-length flow along grad x B, projected back onto the section each step.

    Returns (points, n_points, status, translation, length, min_singular_distance).
    """
    grad = np.empty(3)
    hess = np.empty((3, 3))
    x = seed.copy()
    if _project(freqs, amps, phases, c, B, s, x, grad, hess, 1e-13) > 1e-9:
        return np.zeros((1, 3)), 0, DIVERGED, np.zeros(3), 0.0, 0.0
    start = x.copy()
    T0 = np.empty(3)
    _tangent(freqs, amps, phases, B, x, T0, grad, hess)
    bnorm = np.sqrt(B[0] ** 2 + B[1] ** 2 + B[2] ** 2)
    pts = np.empty((max_store, 3))
    pts[0] = x
    npts = 1
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    y = np.empty(3)
    xn = np.empty(3)
    Tn = np.empty(3)
    h = h0
    length = 0.0
    min_sing = 1e300
    step = 0
    trans = np.zeros(3)
    while length < budget:
        gn = _tangent(freqs, amps, phases, B, x, k1, grad, hess)
        hn = 0.0
        for a in range(3):
            for b in range(3):
                hn += hess[a, b] ** 2
        hn = np.sqrt(hn)
        if hn > 0.0:
            sd = gn / (hn * bnorm)
            if sd < min_sing:
                min_sing = sd
        for a in range(3):
            y[a] = x[a] + 0.5 * h * k1[a]
        _tangent(freqs, amps, phases, B, y, k2, grad, hess)
        for a in range(3):
            y[a] = x[a] + 0.5 * h * k2[a]
        _tangent(freqs, amps, phases, B, y, k3, grad, hess)
        for a in range(3):
            y[a] = x[a] + h * k3[a]
        _tangent(freqs, amps, phases, B, y, k4, grad, hess)
        for a in range(3):
            xn[a] = x[a] + h * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]) / 6.0
        if _project(freqs, amps, phases, c, B, s, xn, grad, hess, 1e-12) > 1e-8:
            if h > 1e-9:
                h *= 0.25
                continue
            return pts, npts, DIVERGED, trans, length, min_sing
        _tangent(freqs, amps, phases, B, xn, Tn, grad, hess)
        turn = np.sqrt((Tn[0] - k1[0]) ** 2 + (Tn[1] - k1[1]) ** 2 + (Tn[2] - k1[2]) ** 2)
        if turn > 2.0 * angle and h > 1e-9:
            h *= 0.5
            continue
        dl = np.sqrt((xn[0] - x[0]) ** 2 + (xn[1] - x[1]) ** 2 + (xn[2] - x[2]) ** 2)
        length += dl
        step += 1
        # closure: crossing of the normal plane of the start, translated by n
        n0 = np.round(xn[0] - start[0])
        n1 = np.round(xn[1] - start[1])
        n2 = np.round(xn[2] - start[2])
        d0 = xn[0] - start[0] - n0
        d1 = xn[1] - start[1] - n1
        d2 = xn[2] - start[2] - n2
        phase = T0[0] * d0 + T0[1] * d1 + T0[2] * d2
        near = d0 * d0 + d1 * d1 + d2 * d2 < 0.01
        bn = B[0] * n0 + B[1] * n1 + B[2] * n2
        if near and abs(bn) <= 1e-9 * bnorm and step > 1:
            p0 = T0[0] * (x[0] - start[0] - n0) + T0[1] * (x[1] - start[1] - n1) + T0[2] * (x[2] - start[2] - n2)
            if p0 < 0.0 <= phase:
                target = np.empty(3)
                target[0] = start[0] + n0
                target[1] = start[1] + n1
                target[2] = start[2] + n2
                z = xn.copy()
                dist = _land(freqs, amps, phases, c, B, s + bn, T0, target, z, grad, hess)
                if dist < close_tol:
                    length -= np.sqrt((xn[0] - z[0]) ** 2 + (xn[1] - z[1]) ** 2 + (xn[2] - z[2]) ** 2)
                    if npts < max_store:
                        pts[npts] = target
                        npts += 1
                    trans[0] = n0
                    trans[1] = n1
                    trans[2] = n2
                    return pts, npts, CLOSED, trans, length, min_sing
        for a in range(3):
            x[a] = xn[a]
        if step % store_every == 0 and npts < max_store:
            pts[npts] = x
            npts += 1
        if turn > 0.0:
            h = min(hmax, h * min(2.0, angle / turn))
        else:
            h = min(hmax, 2.0 * h)
    if npts < max_store:
        pts[npts] = x
        npts += 1
    return pts, npts, OPEN, trans, length, min_sing


@njit(cache=True)
def trace_mesh_kernel(lifted, nbr, nbr_side, shift, B, s, f0, delta0, budget, max_steps,
                      store_every, max_store):
    """Walk plane-triangle crossings through the mesh.

    ``lifted`` holds face corner positions in each face's lift; the current
    lift of the walk is the face lift translated by an integer frame.

    Returns (points, n_points, status, translation, length, steps).
    """
    f = f0
    frame = delta0.copy()
    h = np.empty(3)
    pts = np.empty((max_store, 3))
    npts = 0
    length = 0.0
    steps = 0
    # locate the exit side of the starting face
    for i in range(3):
        h[i] = (B[0] * (lifted[f, i, 0] + frame[0]) + B[1] * (lifted[f, i, 1] + frame[1])
                + B[2] * (lifted[f, i, 2] + frame[2])) - s
    exit_side = -1
    for i in range(3):
        if h[i] > 0.0 and h[(i + 1) % 3] <= 0.0:
            exit_side = i
    if exit_side < 0:
        return pts, 0, DIVERGED, np.zeros(3), 0.0, 0
    f_start = f
    side_start = exit_side
    frame_start = frame.copy()
    prev = np.empty(3)
    have_prev = False
    bnorm = np.sqrt(B[0] ** 2 + B[1] ** 2 + B[2] ** 2)
    while steps < max_steps:
        i = exit_side
        j = (i + 1) % 3
        t = h[i] / (h[i] - h[j])
        p = np.empty(3)
        for a in range(3):
            p[a] = lifted[f, i, a] + t * (lifted[f, j, a] - lifted[f, i, a]) + frame[a]
        if have_prev:
            length += np.sqrt((p[0] - prev[0]) ** 2 + (p[1] - prev[1]) ** 2 + (p[2] - prev[2]) ** 2)
        for a in range(3):
            prev[a] = p[a]
        have_prev = True
        if steps % store_every == 0 and npts < max_store:
            pts[npts] = p
            npts += 1
        if steps > 0 and f == f_start and i == side_start:
            n = frame - frame_start
            if abs(B[0] * n[0] + B[1] * n[1] + B[2] * n[2]) <= 1e-9 * bnorm:
                if npts < max_store and (steps - 1) % store_every != 0:
                    pts[npts] = p
                    npts += 1
                return pts, npts, CLOSED, n, length, steps
        if length >= budget:
            break
        g = nbr[f, i]
        gs = nbr_side[f, i]
        for a in range(3):
            frame[a] += shift[f, i, a]
        f = g
        for k in range(3):
            h[k] = (B[0] * (lifted[f, k, 0] + frame[0]) + B[1] * (lifted[f, k, 1] + frame[1])
                    + B[2] * (lifted[f, k, 2] + frame[2])) - s
        exit_side = -1
        for k in range(3):
            if k != gs and h[k] > 0.0 and h[(k + 1) % 3] <= 0.0:
                exit_side = k
        if exit_side < 0:
            return pts, npts, DIVERGED, frame - frame_start, length, steps
        steps += 1
    return pts, npts, OPEN, frame - frame_start, length, steps
