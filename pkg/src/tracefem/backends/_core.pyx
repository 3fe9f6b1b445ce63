# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython implementations of the hot kernels.

Mirrors tracefem.backends.py: equispaced simplex basis evaluation, the
batched deformation root solve, and symmetric local-matrix
accumulation.  Semantics (including the Newton safeguards and the
bisection fallback) match the numpy reference implementation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()

from . import py as _py

NAME = "cython"

ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64


cdef inline void _tables(int k, double* lam, double* L, double* dL) noexcept nogil:
    # L[a*4+m], dL[a*4+m] for a = 0..k, m = 0..3
    cdef int a, m
    cdef double fac
    for m in range(4):
        L[m] = 1.0
        dL[m] = 0.0
    for a in range(1, k + 1):
        for m in range(4):
            fac = (k * lam[m] - (a - 1)) / a
            dL[a * 4 + m] = dL[(a - 1) * 4 + m] * fac + L[(a - 1) * 4 + m] * (<double>k / a)
            L[a * 4 + m] = L[(a - 1) * 4 + m] * fac


cdef inline void _phi_dphi_line(
    int k, int nb, const i64* mi, const f64* coeffs,
    double* lam, double* gl, double* out_g, double* out_gp,
) noexcept nogil:
    """phi_h and d/dd along lam + d*gl, evaluated at the current lam."""
    cdef double L[24]
    cdef double dL[24]
    cdef double comp[4]
    cdef double dcomp[4]
    cdef double val, dv, prod
    cdef int b, m, mm
    _tables(k, lam, L, dL)
    out_g[0] = 0.0
    out_gp[0] = 0.0
    for b in range(nb):
        for m in range(4):
            comp[m] = L[mi[b * 4 + m] * 4 + m]
            dcomp[m] = dL[mi[b * 4 + m] * 4 + m]
        val = comp[0] * comp[1] * comp[2] * comp[3]
        dv = 0.0
        for m in range(4):
            prod = dcomp[m] * gl[m]
            for mm in range(4):
                if mm != m:
                    prod *= comp[mm]
            dv += prod
        out_g[0] += coeffs[b] * val
        out_gp[0] += coeffs[b] * dv


def eval_basis(int k, lam, bint grad=True):
    """Basis values (and barycentric gradients) at barycentric points."""
    if k < 0 or k > 5:
        raise ValueError("degree out of range for compiled backend")
    lam_arr = np.asarray(lam, dtype=np.float64)
    squeeze = lam_arr.ndim == 1
    if squeeze:
        lam_arr = lam_arr[None, :]
    cdef cnp.ndarray[f64, ndim=2] lam_c = np.ascontiguousarray(lam_arr)
    cdef cnp.ndarray[i64, ndim=2] mi = np.ascontiguousarray(_py.multi_indices(k))
    cdef int P = lam_c.shape[0]
    cdef int nb = mi.shape[0]
    cdef cnp.ndarray[f64, ndim=2] vals = np.empty((P, nb))
    cdef cnp.ndarray[f64, ndim=3] dlam
    cdef double L[24]
    cdef double dL[24]
    cdef double comp[4]
    cdef double dcomp[4]
    cdef double lamp[4]
    cdef int p, b, m, mm
    cdef double prod
    if not grad:
        for p in range(P):
            for m in range(4):
                lamp[m] = lam_c[p, m]
            _tables(k, lamp, L, dL)
            for b in range(nb):
                prod = 1.0
                for m in range(4):
                    prod *= L[mi[b, m] * 4 + m]
                vals[p, b] = prod
        return vals[0] if squeeze else vals
    dlam = np.empty((P, nb, 4))
    for p in range(P):
        for m in range(4):
            lamp[m] = lam_c[p, m]
        _tables(k, lamp, L, dL)
        for b in range(nb):
            for m in range(4):
                comp[m] = L[mi[b, m] * 4 + m]
                dcomp[m] = dL[mi[b, m] * 4 + m]
            vals[p, b] = comp[0] * comp[1] * comp[2] * comp[3]
            # multiply factors in index order so results match the
            # numpy reference bit for bit
            for m in range(4):
                prod = dcomp[0] if m == 0 else comp[0]
                for mm in range(1, 4):
                    prod *= dcomp[mm] if mm == m else comp[mm]
                dlam[p, b, m] = prod
    if squeeze:
        return vals[0], dlam[0]
    return vals, dlam


def solve_dh(
    int k,
    coeffs,
    lam_x,
    glam,
    phihat,
    delta,
    double rtol=1e-12,
    int max_newton=50,
    int scan=16,
):
    """Batched safeguarded-Newton root solve; see the numpy reference."""
    if k < 0 or k > 5:
        raise ValueError("degree out of range for compiled backend")
    cdef cnp.ndarray[f64, ndim=2] C = np.ascontiguousarray(coeffs, dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=2] LX = np.ascontiguousarray(lam_x, dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=2] GL = np.ascontiguousarray(glam, dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=1] PH = np.ascontiguousarray(phihat, dtype=np.float64)
    cdef int P = LX.shape[0]
    cdef cnp.ndarray[f64, ndim=1] DEL = np.ascontiguousarray(
        np.broadcast_to(np.asarray(delta, dtype=np.float64), (P,))
    )
    cdef cnp.ndarray[i64, ndim=2] mi = np.ascontiguousarray(_py.multi_indices(k))
    cdef int nb = mi.shape[0]
    cdef cnp.ndarray[f64, ndim=1] D = np.zeros(P)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] OK = np.zeros(P, dtype=np.uint8)

    cdef double lamp[4]
    cdef double gl[4]
    cdef double d, g, gp, tol, dn, dlt
    cdef double lo, hi, flo, mid, fmid, best, near, ta, tb, fa
    cdef int p, it, m, i, besti
    cdef bint fail
    cdef const i64* mip = &mi[0, 0]
    cdef const f64* cp
    cdef int nscan = scan + 1

    with nogil:
        for p in range(P):
            cp = &C[p, 0]
            for m in range(4):
                gl[m] = GL[p, m]
            dlt = DEL[p]
            tol = rtol * (1.0 if fabs(PH[p]) < 1.0 else fabs(PH[p]))
            d = 0.0
            fail = False
            for it in range(max_newton):
                for m in range(4):
                    lamp[m] = LX[p, m] + d * gl[m]
                _phi_dphi_line(k, nb, mip, cp, lamp, gl, &g, &gp)
                g -= PH[p]
                if fabs(g) <= tol:
                    D[p] = d
                    OK[p] = 1
                    break
                if fabs(gp) < 1e-300:
                    fail = True
                    break
                dn = d - g / gp
                if fabs(dn) > dlt:
                    fail = True
                    break
                d = dn
            else:
                fail = True
            if OK[p]:
                continue
            if not fail:
                continue
            # bisection fallback on the sign-change bracket nearest zero
            best = INFINITY
            besti = -1
            ta = -1.0
            for m in range(4):
                lamp[m] = LX[p, m] - dlt * gl[m]
            _phi_dphi_line(k, nb, mip, cp, lamp, gl, &fa, &gp)
            fa -= PH[p]
            for i in range(1, nscan):
                tb = -1.0 + 2.0 * i / scan
                for m in range(4):
                    lamp[m] = LX[p, m] + tb * dlt * gl[m]
                _phi_dphi_line(k, nb, mip, cp, lamp, gl, &fmid, &gp)
                fmid -= PH[p]
                if fa * fmid <= 0.0:
                    near = fabs(ta) if fabs(ta) < fabs(tb) else fabs(tb)
                    if near < best:
                        best = near
                        besti = i
                ta = tb
                fa = fmid
            if besti < 0:
                continue
            lo = (-1.0 + 2.0 * (besti - 1) / scan) * dlt
            hi = (-1.0 + 2.0 * besti / scan) * dlt
            for m in range(4):
                lamp[m] = LX[p, m] + lo * gl[m]
            _phi_dphi_line(k, nb, mip, cp, lamp, gl, &flo, &gp)
            flo -= PH[p]
            for it in range(100):
                mid = 0.5 * (lo + hi)
                for m in range(4):
                    lamp[m] = LX[p, m] + mid * gl[m]
                _phi_dphi_line(k, nb, mip, cp, lamp, gl, &fmid, &gp)
                fmid -= PH[p]
                if flo * fmid > 0.0:
                    lo = mid
                    flo = fmid
                else:
                    hi = mid
            d = 0.5 * (lo + hi)
            for m in range(4):
                lamp[m] = LX[p, m] + d * gl[m]
            _phi_dphi_line(k, nb, mip, cp, lamp, gl, &fmid, &gp)
            fmid -= PH[p]
            near = tol
            if 64.0 * 2.220446049250313e-16 * fabs(PH[p]) + 1e-15 > near:
                near = 64.0 * 2.220446049250313e-16 * fabs(PH[p]) + 1e-15
            if fabs(fmid) <= near:
                D[p] = d
                OK[p] = 1
    return D, OK.astype(bool)


def accumulate_sym(vec, w):
    """Weighted symmetric outer-product accumulation of local matrices."""
    cdef cnp.ndarray[f64, ndim=4] V = np.ascontiguousarray(vec, dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=2] W = np.ascontiguousarray(w, dtype=np.float64)
    cdef int E = V.shape[0]
    cdef int Q = V.shape[1]
    cdef int NB = V.shape[2]
    cdef int M = V.shape[3]
    cdef cnp.ndarray[f64, ndim=3] out = np.zeros((E, NB, NB))
    cdef int e, q, i, j, m
    cdef double s, wq
    with nogil:
        for e in range(E):
            for q in range(Q):
                wq = W[e, q]
                for i in range(NB):
                    for j in range(i, NB):
                        s = 0.0
                        for m in range(M):
                            s += V[e, q, i, m] * V[e, q, j, m]
                        out[e, i, j] += wq * s
            for i in range(NB):
                for j in range(i):
                    out[e, i, j] = out[e, j, i]
    return out
