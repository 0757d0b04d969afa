"""Compiled inner loops for the stage problem.

All value tables live on a uniform grid ``lo + k*h``; evaluation outside the
grid extends the first/last cell linearly.
"""
import os

import numpy as np
from numba import config, njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ and "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # probing an outdated TBB first only produces a warning
    config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

INVPHI = (np.sqrt(5.0) - 1.0) / 2.0
PROBE = 64.0  # plateau probe distance, in units of xtol


@njit(cache=True)
def interp_uniform(x, lo, h, vals, slopes):
    n = vals.shape[0]
    k = int(np.floor((x - lo) / h))
    if k < 0:
        k = 0
    elif k > n - 2:
        k = n - 2
    return vals[k] + slopes[k] * (x - (lo + k * h))


@njit(cache=True)
def revenue_pl(d, dk, pk):
    """``d * p(d)`` with ``p`` piecewise linear through ``(dk, pk)``."""
    n = dk.shape[0]
    k = 0
    while k < n - 2 and d > dk[k + 1]:
        k += 1
    p = pk[k] + (pk[k + 1] - pk[k]) * (d - dk[k]) / (dk[k + 1] - dk[k])
    return d * p


@njit(cache=True)
def expected_terms(y0, ds, dl, he, ho, hw, es, os, el, ol, w, ch, cp, alpha,
                   v_lo, v_h, v_vals, v_slopes):
    """``-E H(y0 - eps_s ds - om_s) + alpha E V(y0 - eps_s ds - om_s - eps_l dl - om_l)``.

    ``(he, ho, hw)`` is the on-site marginal used for the holding term;
    ``(es, os, el, ol, w)`` the full scenario table.
    """
    eh = 0.0
    for k in range(hw.shape[0]):
        y = y0 - he[k] * ds - ho[k]
        if y >= 0.0:
            eh += hw[k] * ch * y
        else:
            eh -= hw[k] * cp * y
    ev = 0.0
    n = v_vals.shape[0]
    for k in range(w.shape[0]):
        x = y0 - es[k] * ds - os[k] - el[k] * dl - ol[k]
        j = int(np.floor((x - v_lo) / v_h))
        if j < 0:
            j = 0
        elif j > n - 2:
            j = n - 2
        ev += w[k] * (v_vals[j] + v_slopes[j] * (x - (v_lo + j * v_h)))
    return -eh + alpha * ev


@njit(cache=True)
def stage_value(y0, ds, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp, alpha,
                v_lo, v_h, v_vals, v_slopes):
    return (revenue_pl(ds, dks, pks) + revenue_pl(dl, dkl, pkl)
            + expected_terms(y0, ds, dl, he, ho, hw, es, os, el, ol, w, ch, cp, alpha,
                             v_lo, v_h, v_vals, v_slopes))


@njit(cache=True)
def _best_ds(y0, dl, lo, hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w,
             ch, cp, alpha, v_lo, v_h, v_vals, v_slopes):
    """Golden-section maximization over ``ds`` for fixed ``dl``; ties go left."""
    if hi - lo <= 0.0:
        return lo, stage_value(y0, lo, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w,
                               ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
    a, b = lo, hi
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc = stage_value(y0, c, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp, alpha,
                     v_lo, v_h, v_vals, v_slopes)
    fd = stage_value(y0, d, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp, alpha,
                     v_lo, v_h, v_vals, v_slopes)
    while b - a > xtol:
        if fc >= fd:
            b = d
            d = c
            fd = fc
            c = b - INVPHI * (b - a)
            fc = stage_value(y0, c, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp,
                             alpha, v_lo, v_h, v_vals, v_slopes)
        else:
            a = c
            c = d
            fc = fd
            d = a + INVPHI * (b - a)
            fd = stage_value(y0, d, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp,
                             alpha, v_lo, v_h, v_vals, v_slopes)
    x = 0.5 * (a + b)
    fx = stage_value(y0, x, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp, alpha,
                     v_lo, v_h, v_vals, v_slopes)
    flo = stage_value(y0, lo, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp, alpha,
                      v_lo, v_h, v_vals, v_slopes)
    if flo >= fx - tie * (1.0 + abs(fx)):
        return lo, flo
    fhi = stage_value(y0, hi, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp, alpha,
                      v_lo, v_h, v_vals, v_slopes)
    if fhi > fx + tie * (1.0 + abs(fx)):
        return hi, fhi
    # on a plateau the search stops anywhere; walk to its left edge
    thr = fx - tie * (1.0 + abs(fx))
    p = x - PROBE * xtol
    if p > lo and stage_value(y0, p, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp,
                              alpha, v_lo, v_h, v_vals, v_slopes) >= thr:
        a, b = lo, p
        while b - a > xtol:
            m = 0.5 * (a + b)
            if stage_value(y0, m, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp,
                           alpha, v_lo, v_h, v_vals, v_slopes) >= thr:
                b = m
            else:
                a = m
        return b, stage_value(y0, b, dl, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp,
                              alpha, v_lo, v_h, v_vals, v_slopes)
    return x, fx


@njit(cache=True)
def optimize_point(y0, ds_lo, ds_hi, dl_lo, dl_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw,
                   es, os, el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes):
    """Maximize the stage objective over the box by nested golden section.

    The profile ``dl -> max_ds J`` of a jointly concave ``J`` is concave, so
    an outer golden search over ``dl`` with an inner one over ``ds`` finds
    the joint maximum.  Returns ``(ds, dl, J)``.
    """
    if dl_hi - dl_lo <= 0.0:
        ds, f = _best_ds(y0, dl_lo, ds_lo, ds_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw,
                         es, os, el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
        return ds, dl_lo, f
    a, b = dl_lo, dl_hi
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    sc, fc = _best_ds(y0, c, ds_lo, ds_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw, es, os, el,
                      ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
    sd, fd = _best_ds(y0, d, ds_lo, ds_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw, es, os, el,
                      ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
    while b - a > xtol:
        if fc >= fd:
            b = d
            d = c
            fd = fc
            c = b - INVPHI * (b - a)
            sc, fc = _best_ds(y0, c, ds_lo, ds_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw,
                              es, os, el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
        else:
            a = c
            c = d
            fc = fd
            d = a + INVPHI * (b - a)
            sd, fd = _best_ds(y0, d, ds_lo, ds_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw,
                              es, os, el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
    xl = 0.5 * (a + b)
    xs, fx = _best_ds(y0, xl, ds_lo, ds_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw, es, os,
                      el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
    s0, f0 = _best_ds(y0, dl_lo, ds_lo, ds_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw, es, os,
                      el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
    if f0 >= fx - tie * (1.0 + abs(fx)):
        return s0, dl_lo, f0
    s1, f1 = _best_ds(y0, dl_hi, ds_lo, ds_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw, es, os,
                      el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
    if f1 > fx + tie * (1.0 + abs(fx)):
        return s1, dl_hi, f1
    thr = fx - tie * (1.0 + abs(fx))
    p = xl - PROBE * xtol
    if p > dl_lo:
        sp, fp = _best_ds(y0, p, ds_lo, ds_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw, es, os,
                          el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
        if fp >= thr:
            a, b = dl_lo, p
            sb, fb = sp, fp
            while b - a > xtol:
                m = 0.5 * (a + b)
                sm, fm = _best_ds(y0, m, ds_lo, ds_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw,
                                  es, os, el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
                if fm >= thr:
                    b, sb, fb = m, sm, fm
                else:
                    a = m
            return sb, b, fb
    return xs, xl, fx


@njit(cache=True)
def _best_dl(y0, ds, lo, hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w,
             ch, cp, alpha, v_lo, v_h, v_vals, v_slopes):
    # mirror of _best_ds; only used for the convergence certificate
    a, b = lo, hi
    if b - a <= 0.0:
        return lo, stage_value(y0, ds, lo, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w,
                               ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc = stage_value(y0, ds, c, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp, alpha,
                     v_lo, v_h, v_vals, v_slopes)
    fd = stage_value(y0, ds, d, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp, alpha,
                     v_lo, v_h, v_vals, v_slopes)
    while b - a > xtol:
        if fc >= fd:
            b = d
            d = c
            fd = fc
            c = b - INVPHI * (b - a)
            fc = stage_value(y0, ds, c, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp,
                             alpha, v_lo, v_h, v_vals, v_slopes)
        else:
            a = c
            c = d
            fc = fd
            d = a + INVPHI * (b - a)
            fd = stage_value(y0, ds, d, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp,
                             alpha, v_lo, v_h, v_vals, v_slopes)
    x = 0.5 * (a + b)
    return x, stage_value(y0, ds, x, dks, pks, dkl, pkl, he, ho, hw, es, os, el, ol, w, ch, cp,
                          alpha, v_lo, v_h, v_vals, v_slopes)


@njit(cache=True, parallel=True)
def optimize_grid(y0s, ds_lo, ds_hi, dl_lo, dl_hi, xtol, tie, certify_tol, dks, pks, dkl, pkl,
                  he, ho, hw, es, os, el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes):
    """Run :func:`optimize_point` at every ``y0 = I + q``.

    ``gap[i]`` is the best improvement a single coordinate line search finds
    from the returned point; values above ``certify_tol`` mean the search
    did not converge.
    """
    n = y0s.shape[0]
    out_s = np.empty(n)
    out_l = np.empty(n)
    out_j = np.empty(n)
    gap = np.zeros(n)
    for i in prange(n):
        s, l, f = optimize_point(y0s[i], ds_lo, ds_hi, dl_lo, dl_hi, xtol, tie, dks, pks, dkl,
                                 pkl, he, ho, hw, es, os, el, ol, w, ch, cp, alpha,
                                 v_lo, v_h, v_vals, v_slopes)
        out_s[i] = s
        out_l[i] = l
        out_j[i] = f
        if certify_tol > 0.0:
            _, f1 = _best_ds(y0s[i], l, ds_lo, ds_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw,
                             es, os, el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
            _, f2 = _best_dl(y0s[i], s, dl_lo, dl_hi, xtol, tie, dks, pks, dkl, pkl, he, ho, hw,
                             es, os, el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals, v_slopes)
            gap[i] = max(f1, f2) - f
    return out_s, out_l, out_j, gap


@njit(cache=True, parallel=True)
def optimize_unified(y0s, u_hi, beta_s, beta_l, p_max, xtol, tie, he, ho, hw, es, os, el, ol, w,
                     ch, cp, alpha, v_lo, v_h, v_vals, v_slopes):
    """Shared-price stage problem in ``u = 1 - p/p_max``; ties go to the higher price."""
    n = y0s.shape[0]
    out_u = np.empty(n)
    out_j = np.empty(n)
    rev = (beta_s + beta_l) * p_max
    for i in prange(n):
        y0 = y0s[i]
        a, b = 0.0, u_hi
        c = b - INVPHI * (b - a)
        d = a + INVPHI * (b - a)
        fc = rev * c * (1.0 - c) + expected_terms(y0, beta_s * c, beta_l * c, he, ho, hw, es, os,
                                                  el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals,
                                                  v_slopes)
        fd = rev * d * (1.0 - d) + expected_terms(y0, beta_s * d, beta_l * d, he, ho, hw, es, os,
                                                  el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals,
                                                  v_slopes)
        while b - a > xtol:
            if fc >= fd:
                b = d
                d = c
                fd = fc
                c = b - INVPHI * (b - a)
                fc = rev * c * (1.0 - c) + expected_terms(y0, beta_s * c, beta_l * c, he, ho, hw,
                                                          es, os, el, ol, w, ch, cp, alpha, v_lo,
                                                          v_h, v_vals, v_slopes)
            else:
                a = c
                c = d
                fc = fd
                d = a + INVPHI * (b - a)
                fd = rev * d * (1.0 - d) + expected_terms(y0, beta_s * d, beta_l * d, he, ho, hw,
                                                          es, os, el, ol, w, ch, cp, alpha, v_lo,
                                                          v_h, v_vals, v_slopes)
        x = 0.5 * (a + b)
        fx = rev * x * (1.0 - x) + expected_terms(y0, beta_s * x, beta_l * x, he, ho, hw, es, os,
                                                  el, ol, w, ch, cp, alpha, v_lo, v_h, v_vals,
                                                  v_slopes)
        f0 = expected_terms(y0, 0.0, 0.0, he, ho, hw, es, os, el, ol, w, ch, cp, alpha, v_lo, v_h,
                            v_vals, v_slopes)
        if f0 >= fx - tie * (1.0 + abs(fx)):
            x = 0.0
            fx = f0
        out_u[i] = x
        out_j[i] = fx
    return out_u, out_j
