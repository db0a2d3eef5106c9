# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping loops; drop-in twin of the pure-python engine.

Same call contract and status convention as _engine_np: -1 on success, else
the 1-based index of the first non-finite step.
"""

import numpy as np

from libc.math cimport sqrt, isfinite, fabs

BACKEND = "compiled"


cdef void _synth(const double[:, ::1] S, const double[::1] c, double[::1] g) noexcept nogil:
    cdef Py_ssize_t M = S.shape[0], P = S.shape[1], j, m
    cdef double s
    for j in range(M):
        s = 0.0
        for m in range(P):
            s += S[j, m] * c[m]
        g[j] = s


cdef void _analyze(const double[:, ::1] AT, const double[::1] g, double[::1] out) noexcept nogil:
    cdef Py_ssize_t P = AT.shape[0], M = AT.shape[1], m, j
    cdef double s
    for m in range(P):
        s = 0.0
        for j in range(M):
            s += AT[m, j] * g[j]
        out[m] = s


cdef void _nl_coeffs(const double[::1] c, const double[:, ::1] S, const double[:, ::1] AT,
                     int nl_kind, const double[:, ::1] C, double[::1] g,
                     double[::1] q, double[::1] conv, double[::1] out) noexcept nogil:
    cdef Py_ssize_t P = c.shape[0], M = S.shape[0], j, i, m
    cdef double s
    if nl_kind == 0:
        for m in range(P):
            out[m] = 0.0
        return
    _synth(S, c, g)
    if nl_kind == 1:
        for j in range(M):
            q[j] = g[j] * g[j] * g[j]
    else:
        for j in range(M):
            conv[j] = g[j] * g[j]
        for j in range(M):
            s = 0.0
            for i in range(M):
                s += C[j, i] * conv[i]
            q[j] = g[j] * s
    _analyze(AT, q, out)
    for m in range(P):
        out[m] = -out[m]


def run_single(const double[::1] c0, Py_ssize_t n_steps, double dt,
               const double[::1] E, const double[::1] PhiD, const double[::1] PhiW,
               const double[:, ::1] S, const double[:, ::1] AT, int nl_kind,
               const double[:, ::1] C, const double[::1] b, const Py_ssize_t[::1] forced,
               const double[:, ::1] xi, double[::1] out_normsq,
               const Py_ssize_t[::1] snap_steps, double[:, ::1] out_snaps,
               double[:, ::1] out_states):
    cdef Py_ssize_t P = c0.shape[0], M = S.shape[0]
    cdef Py_ssize_t n, m, f, si = 0
    cdef int record = out_states.shape[0] == n_steps + 1
    cdef double sqdt = sqrt(dt), nsq
    cdef double[::1] c = np.array(c0, dtype=np.float64)
    cdef double[::1] nl = np.empty(P)
    cdef double[::1] dW = np.zeros(P)
    cdef double[::1] g = np.empty(M)
    cdef double[::1] q = np.empty(M)
    cdef double[::1] conv = np.empty(M)

    nsq = 0.0
    for m in range(P):
        nsq += c[m] * c[m]
    out_normsq[0] = nsq
    if si < snap_steps.shape[0] and snap_steps[si] == 0:
        for m in range(P):
            out_snaps[si, m] = c[m]
        si += 1
    if record:
        for m in range(P):
            out_states[0, m] = c[m]

    for n in range(n_steps):
        _nl_coeffs(c, S, AT, nl_kind, C, g, q, conv, nl)
        for f in range(forced.shape[0]):
            dW[forced[f]] = b[forced[f]] * (sqdt * xi[n, f])
        nsq = 0.0
        for m in range(P):
            c[m] = E[m] * c[m] + PhiD[m] * nl[m] + PhiW[m] * dW[m]
            nsq += c[m] * c[m]
        out_normsq[n + 1] = nsq
        if record:
            for m in range(P):
                out_states[n + 1, m] = c[m]
        if si < snap_steps.shape[0] and snap_steps[si] == n + 1:
            for m in range(P):
                out_snaps[si, m] = c[m]
            si += 1
        if not isfinite(nsq):
            return n + 1
    return -1


def run_slaved(const double[:, ::1] l_path, const double[::1] h0, Py_ssize_t n_steps,
               double dt, const double[::1] E, const double[::1] PhiD,
               const double[:, ::1] S, const double[:, ::1] AT, int nl_kind,
               const double[:, ::1] C, Py_ssize_t n_low, double[:, ::1] out_h):
    cdef Py_ssize_t P = h0.shape[0], M = S.shape[0], n, m
    cdef double nsq
    cdef double[::1] h = np.array(h0, dtype=np.float64)
    cdef double[::1] u = np.empty(P)
    cdef double[::1] nl = np.empty(P)
    cdef double[::1] g = np.empty(M)
    cdef double[::1] q = np.empty(M)
    cdef double[::1] conv = np.empty(M)

    for m in range(n_low):
        h[m] = 0.0
    for m in range(P):
        out_h[0, m] = h[m]

    for n in range(n_steps):
        for m in range(n_low):
            u[m] = l_path[n, m]
        for m in range(n_low, P):
            u[m] = h[m]
        _nl_coeffs(u, S, AT, nl_kind, C, g, q, conv, nl)
        nsq = 0.0
        for m in range(n_low, P):
            h[m] = E[m] * h[m] + PhiD[m] * nl[m]
            nsq += h[m] * h[m]
        for m in range(P):
            out_h[n + 1, m] = h[m]
        if not isfinite(nsq):
            return n + 1
    return -1


def run_pair(const double[::1] c01, const double[::1] c02, Py_ssize_t n_steps, double dt,
             const double[::1] E, const double[::1] PhiD, const double[::1] PhiW,
             const double[:, ::1] S, const double[:, ::1] AT, int nl_kind,
             const double[:, ::1] C, const double[::1] b, const Py_ssize_t[::1] forced,
             const double[:, ::1] xi, Py_ssize_t n_low, Py_ssize_t sync_steps,
             double[::1] out_normsq1, double[::1] out_normsq2,
             double[::1] out_gap, double[:, ::1] out_beta,
             double[:, ::1] out_dw_low, double[:, ::1] out_states1,
             double[:, ::1] out_states2, const Py_ssize_t[::1] snap_steps,
             double[:, ::1] out_snaps1, double[:, ::1] out_snaps2):
    cdef Py_ssize_t P = c01.shape[0], M = S.shape[0]
    cdef Py_ssize_t n, m, f, si = 0
    cdef int record = out_states1.shape[0] == n_steps + 1
    cdef double sqdt = sqrt(dt), n1, n2, resid, r, expected_m, ctrl_m, tgt
    cdef double[::1] c1 = np.array(c01, dtype=np.float64)
    cdef double[::1] c2 = np.array(c02, dtype=np.float64)
    cdef double[::1] gap0 = np.empty(n_low)
    cdef double[::1] nl1 = np.empty(P)
    cdef double[::1] nl2 = np.empty(P)
    cdef double[::1] dW = np.zeros(P)
    cdef double[::1] ctrl = np.empty(n_low)
    cdef double[::1] expected = np.zeros(n_low)
    cdef double[::1] g = np.empty(M)
    cdef double[::1] q = np.empty(M)
    cdef double[::1] conv = np.empty(M)

    for m in range(n_low):
        gap0[m] = c02[m] - c01[m]

    n1 = 0.0
    n2 = 0.0
    for m in range(P):
        n1 += c1[m] * c1[m]
        n2 += c2[m] * c2[m]
    out_normsq1[0] = n1
    out_normsq2[0] = n2
    if record:
        for m in range(P):
            out_states1[0, m] = c1[m]
            out_states2[0, m] = c2[m]
    if si < snap_steps.shape[0] and snap_steps[si] == 0:
        for m in range(P):
            out_snaps1[si, m] = c1[m]
            out_snaps2[si, m] = c2[m]
        si += 1

    for n in range(n_steps):
        _nl_coeffs(c1, S, AT, nl_kind, C, g, q, conv, nl1)
        _nl_coeffs(c2, S, AT, nl_kind, C, g, q, conv, nl2)
        for f in range(forced.shape[0]):
            dW[forced[f]] = b[forced[f]] * (sqdt * xi[n, f])

        if n < sync_steps:
            tgt = 1.0 - (<double>(n + 1)) / (<double>sync_steps)
            for m in range(n_low):
                expected[m] = gap0[m] * tgt
                ctrl[m] = (expected[m] - E[m] * (c2[m] - c1[m])) / PhiD[m] \
                    - (nl2[m] - nl1[m])
        else:
            for m in range(n_low):
                expected[m] = 0.0
                ctrl[m] = nl1[m] - nl2[m]
        for m in range(n_low):
            out_beta[n, m] = -ctrl[m] / b[m]
            out_dw_low[n, m] = sqdt * xi[n, m]

        n1 = 0.0
        for m in range(P):
            c1[m] = E[m] * c1[m] + PhiD[m] * nl1[m] + PhiW[m] * dW[m]
            n1 += c1[m] * c1[m]
        resid = 0.0
        for m in range(P):
            if m < n_low:
                ctrl_m = nl2[m] + ctrl[m]
            else:
                ctrl_m = nl2[m]
            c2[m] = E[m] * c2[m] + PhiD[m] * ctrl_m + PhiW[m] * dW[m]
        for m in range(n_low):
            r = fabs(c2[m] - c1[m] - expected[m])
            if r > resid:
                resid = r
            c2[m] = c1[m] + expected[m]
        out_gap[n] = resid
        n2 = 0.0
        for m in range(P):
            n2 += c2[m] * c2[m]
        out_normsq1[n + 1] = n1
        out_normsq2[n + 1] = n2
        if record:
            for m in range(P):
                out_states1[n + 1, m] = c1[m]
                out_states2[n + 1, m] = c2[m]
        if si < snap_steps.shape[0] and snap_steps[si] == n + 1:
            for m in range(P):
                out_snaps1[si, m] = c1[m]
                out_snaps2[si, m] = c2[m]
            si += 1
        if not (isfinite(n1) and isfinite(n2)):
            return n + 1
    return -1
