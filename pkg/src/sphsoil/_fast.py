"""Fused numba pair loops used by the time integrator.

Each function mirrors a vectorised routine in :mod:`sphsoil.kernel`,
:mod:`sphsoil.sph_ops` or :mod:`sphsoil.momentum`; the test-suite checks
that both paths agree. Pairs are visited in table order so reductions are
reproducible run to run.
"""

import math

import numpy as np
from numba import njit

KIND_SOIL = 0


@njit(cache=True)
def pair_geometry(x, pi, pj, h, alpha):
    npair = pi.shape[0]
    r_ab = np.empty((npair, 2))
    dist = np.empty(npair)
    w = np.empty(npair)
    grad = np.empty((npair, 2))
    inv_h = 1.0 / h
    for p in range(npair):
        a = pi[p]
        b = pj[p]
        rx = x[a, 0] - x[b, 0]
        ry = x[a, 1] - x[b, 1]
        d = math.sqrt(rx * rx + ry * ry)
        q = d * inv_h
        if q < 1.0:
            wv = alpha * (1.0 - 1.5 * q * q + 0.75 * q * q * q)
            dw = alpha * inv_h * (-3.0 * q + 2.25 * q * q)
        elif q < 2.0:
            t = 2.0 - q
            wv = alpha * 0.25 * t * t * t
            dw = -alpha * inv_h * 0.75 * t * t
        else:
            wv = 0.0
            dw = 0.0
        r_ab[p, 0] = rx
        r_ab[p, 1] = ry
        dist[p] = d
        w[p] = wv
        if d > 0.0:
            f = dw / d
            grad[p, 0] = f * rx
            grad[p, 1] = f * ry
        else:
            grad[p, 0] = 0.0
            grad[p, 1] = 0.0
    return r_ab, dist, w, grad


@njit(cache=True)
def corrected_gradients(n, pi, pj, r_ab, grad, vol, kind, max_condition, min_neighbors):
    """Returns (corrected grad, L, number of degenerate soil particles)."""
    m = np.zeros((n, 2, 2))
    cnt = np.zeros(n, dtype=np.int64)
    npair = pi.shape[0]
    for p in range(npair):
        a = pi[p]
        vb = vol[pj[p]]
        gx = grad[p, 0]
        gy = grad[p, 1]
        bx = -r_ab[p, 0]
        by = -r_ab[p, 1]
        m[a, 0, 0] += vb * gx * bx
        m[a, 0, 1] += vb * gx * by
        m[a, 1, 0] += vb * gy * bx
        m[a, 1, 1] += vb * gy * by
        if gx != 0.0 or gy != 0.0:
            cnt[a] += 1
    L = np.empty((n, 2, 2))
    bad = 0
    for a in range(n):
        A = m[a, 0, 0]
        B = m[a, 0, 1]
        C = m[a, 1, 0]
        D = m[a, 1, 1]
        det = A * D - B * C
        fro2 = A * A + B * B + C * C + D * D
        disc = math.sqrt(max(fro2 * fro2 - 4.0 * det * det, 0.0))
        smax2 = 0.5 * (fro2 + disc)
        smin2 = max(0.5 * (fro2 - disc), 0.0)
        ok = cnt[a] >= min_neighbors and smin2 > 0.0 and math.sqrt(smax2 / smin2) <= max_condition
        if ok:
            L[a, 0, 0] = D / det
            L[a, 0, 1] = -B / det
            L[a, 1, 0] = -C / det
            L[a, 1, 1] = A / det
        else:
            L[a, 0, 0] = 1.0
            L[a, 0, 1] = 0.0
            L[a, 1, 0] = 0.0
            L[a, 1, 1] = 1.0
            if kind[a] == KIND_SOIL:
                bad += 1
    gc = np.empty_like(grad)
    for p in range(npair):
        a = pi[p]
        gc[p, 0] = L[a, 0, 0] * grad[p, 0] + L[a, 0, 1] * grad[p, 1]
        gc[p, 1] = L[a, 1, 0] * grad[p, 0] + L[a, 1, 1] * grad[p, 1]
    return gc, L, bad


@njit(cache=True)
def kinematics(n, pi, pj, v, m, rho, grad):
    """Velocity gradient (n, 2, 2) and continuity rate (n,)."""
    lg = np.zeros((n, 2, 2))
    drho = np.zeros(n)
    for p in range(pi.shape[0]):
        a = pi[p]
        b = pj[p]
        vb = m[b] / rho[b]
        dvx = v[b, 0] - v[a, 0]
        dvy = v[b, 1] - v[a, 1]
        gx = grad[p, 0]
        gy = grad[p, 1]
        lg[a, 0, 0] += vb * dvx * gx
        lg[a, 0, 1] += vb * dvx * gy
        lg[a, 1, 0] += vb * dvy * gx
        lg[a, 1, 1] += vb * dvy * gy
        drho[a] -= m[b] * (dvx * gx + dvy * gy)
    return lg, drho


@njit(cache=True)
def accelerations(
    n, pi, pj, v, m, rho, sigma, pw, r_ab, dist, w, grad, kind,
    rhoab, corrected_pw, h, G, alpha_visc, beta_visc, visc_on,
    astress, eps_as, n_as, w_ref,
):
    """Internal-force acceleration (stress, pore water, stabilisation) per particle."""
    acc = np.zeros((n, 2))
    R = np.zeros((n, 2, 2))
    if astress:
        for a in range(n):
            sxx = sigma[a, 0, 0]
            syy = sigma[a, 1, 1]
            sxy = sigma[a, 0, 1]
            mean = 0.5 * (sxx + syy)
            rad = math.sqrt(0.25 * (sxx - syy) ** 2 + sxy * sxy)
            s1 = mean + rad
            s2 = mean - rad
            theta = 0.5 * math.atan2(2.0 * sxy, sxx - syy)
            c = math.cos(theta)
            s = math.sin(theta)
            r2 = rho[a] * rho[a]
            r1v = -eps_as * s1 / r2 if s1 > 0.0 else 0.0
            r2v = -eps_as * s2 / r2 if s2 > 0.0 else 0.0
            R[a, 0, 0] = c * c * r1v + s * s * r2v
            R[a, 1, 1] = s * s * r1v + c * c * r2v
            R[a, 0, 1] = c * s * (r1v - r2v)
            R[a, 1, 0] = R[a, 0, 1]
    for p in range(pi.shape[0]):
        a = pi[p]
        if kind[a] != KIND_SOIL:
            continue
        b = pj[p]
        ra = rho[a]
        rb = rho[b]
        mb = m[b]
        if rhoab:
            inv = 1.0 / (ra * rb)
            txx = (sigma[a, 0, 0] + sigma[b, 0, 0]) * inv
            txy = (sigma[a, 0, 1] + sigma[b, 0, 1]) * inv
            tyx = (sigma[a, 1, 0] + sigma[b, 1, 0]) * inv
            tyy = (sigma[a, 1, 1] + sigma[b, 1, 1]) * inv
        else:
            ia = 1.0 / (ra * ra)
            ib = 1.0 / (rb * rb)
            txx = sigma[a, 0, 0] * ia + sigma[b, 0, 0] * ib
            txy = sigma[a, 0, 1] * ia + sigma[b, 0, 1] * ib
            tyx = sigma[a, 1, 0] * ia + sigma[b, 1, 0] * ib
            tyy = sigma[a, 1, 1] * ia + sigma[b, 1, 1] * ib
        if visc_on:
            vx = v[a, 0] - v[b, 0]
            vy = v[a, 1] - v[b, 1]
            vr = vx * r_ab[p, 0] + vy * r_ab[p, 1]
            if vr < 0.0:
                mu = h * vr / (dist[p] * dist[p] + 0.01 * h * h)
                cbar = 0.5 * (math.sqrt(G / ra) + math.sqrt(G / rb))
                rbar = 0.5 * (ra + rb)
                pi_ab = (-alpha_visc * cbar * mu + beta_visc * mu * mu) / rbar
                txx -= pi_ab
                tyy -= pi_ab
        if astress:
            f = (w[p] / w_ref) ** n_as
            txx += f * (R[a, 0, 0] + R[b, 0, 0])
            txy += f * (R[a, 0, 1] + R[b, 0, 1])
            tyx += f * (R[a, 1, 0] + R[b, 1, 0])
            tyy += f * (R[a, 1, 1] + R[b, 1, 1])
        if corrected_pw:
            pterm = (pw[b] - pw[a]) / (ra * rb)
        else:
            pterm = (pw[b] + pw[a]) / (ra * rb)
        gx = grad[p, 0]
        gy = grad[p, 1]
        acc[a, 0] += mb * (txx * gx + txy * gy + pterm * gx)
        acc[a, 1] += mb * (tyx * gx + tyy * gy + pterm * gy)
    return acc


@njit(cache=True)
def soil_field_gradients(n_soil, pi, pj, r_ab, grad, vol, vals, max_condition, need):
    """Corrected gradients (n_soil, k, 2) of soil fields ``vals`` (n_soil, k) from soil-soil pairs only.

    Only particles flagged in ``need`` are evaluated; the rest, and particles
    whose moment matrix is ill-conditioned, get a zero gradient.
    """
    k = vals.shape[1]
    m = np.zeros((n_soil, 2, 2))
    s = np.zeros((n_soil, k, 2))
    for p in range(pi.shape[0]):
        a = pi[p]
        b = pj[p]
        if a >= n_soil or b >= n_soil or not need[a]:
            continue
        vb = vol[b]
        gx = grad[p, 0] * vb
        gy = grad[p, 1] * vb
        bx = -r_ab[p, 0]
        by = -r_ab[p, 1]
        m[a, 0, 0] += gx * bx
        m[a, 0, 1] += gx * by
        m[a, 1, 0] += gy * bx
        m[a, 1, 1] += gy * by
        for c in range(k):
            d = vals[b, c] - vals[a, c]
            s[a, c, 0] += d * gx
            s[a, c, 1] += d * gy
    out = np.zeros((n_soil, k, 2))
    for a in range(n_soil):
        if not need[a]:
            continue
        A = m[a, 0, 0]
        B = m[a, 0, 1]
        C = m[a, 1, 0]
        D = m[a, 1, 1]
        det = A * D - B * C
        fro2 = A * A + B * B + C * C + D * D
        disc = math.sqrt(max(fro2 * fro2 - 4.0 * det * det, 0.0))
        smin2 = max(0.5 * (fro2 - disc), 0.0)
        smax2 = 0.5 * (fro2 + disc)
        if smin2 <= 0.0 or math.sqrt(smax2 / smin2) > max_condition:
            continue
        for c in range(k):
            out[a, c, 0] = (D * s[a, c, 0] - B * s[a, c, 1]) / det
            out[a, c, 1] = (-C * s[a, c, 0] + A * s[a, c, 1]) / det
    return out
