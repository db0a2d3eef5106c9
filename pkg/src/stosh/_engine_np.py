"""Reference stepping loops (pure numpy).

All engine entry points work on plain float64 arrays so the compiled
extension can implement the identical contract.  One step of the scheme is

    c_{n+1} = E * c_n + PhiD * (nl(c_n) + ctrl_n) + PhiW * (b * dW_n)

with E = exp(lam*dt), PhiD = dt*phi1(lam*dt), PhiW = phi1(lam*dt) per mode,
lam the linear rate of the mode, nl the Galerkin-projected nonlinearity
(sign included) and dW_n = sqrt(dt)*xi_n on forced modes.  Because
PhiD == dt*PhiW, adding ctrl*dt to the noise term is the exact mean shift
dW -> dW + dt*(ctrl/b) of the driving Gaussian, which is what makes the
discrete change-of-measure weight in the coupling module exact.

Status convention: every loop returns -1 on success, or the 1-based index of
the first step whose new state is non-finite.
"""

import numpy as np

BACKEND = "python"


def _nl_coeffs(c, S, AT, nl_kind, C):
    # returns the projected nonlinearity contribution, sign included
    if nl_kind == 0:
        return np.zeros(c.shape[0])
    g = S @ c
    if nl_kind == 1:
        return -(AT @ (g * g * g))
    q = g * g
    return -(AT @ (g * (C @ q)))


def run_single(c0, n_steps, dt, E, PhiD, PhiW, S, AT, nl_kind, C, b, forced,
               xi, out_normsq, snap_steps, out_snaps, out_states):
    c = np.array(c0, dtype=float)
    P = c.shape[0]
    sqdt = np.sqrt(dt)
    record = out_states.shape[0] == n_steps + 1

    out_normsq[0] = c @ c
    si = 0
    if si < snap_steps.shape[0] and snap_steps[si] == 0:
        out_snaps[si] = c
        si += 1
    if record:
        out_states[0] = c

    dW = np.zeros(P)
    for n in range(n_steps):
        nl = _nl_coeffs(c, S, AT, nl_kind, C)
        dW[forced] = b[forced] * (sqdt * xi[n])
        c = E * c + PhiD * nl + PhiW * dW
        nsq = c @ c
        out_normsq[n + 1] = nsq
        if record:
            out_states[n + 1] = c
        if si < snap_steps.shape[0] and snap_steps[si] == n + 1:
            out_snaps[si] = c
            si += 1
        if not np.isfinite(nsq):
            return n + 1
    return -1


def run_slaved(l_path, h0, n_steps, dt, E, PhiD, S, AT, nl_kind, C, n_low,
               out_h):
    h = np.array(h0, dtype=float)
    h[:n_low] = 0.0
    out_h[0] = h
    for n in range(n_steps):
        u = h.copy()
        u[:n_low] = l_path[n]
        nl = _nl_coeffs(u, S, AT, nl_kind, C)
        h = E * h + PhiD * nl
        h[:n_low] = 0.0
        out_h[n + 1] = h
        if not np.isfinite(h @ h):
            return n + 1
    return -1


def run_pair(c01, c02, n_steps, dt, E, PhiD, PhiW, S, AT, nl_kind, C, b,
             forced, xi, n_low, sync_steps, out_normsq1, out_normsq2,
             out_gap, out_beta, out_dw_low, out_states1, out_states2,
             snap_steps, out_snaps1, out_snaps2):
    c1 = np.array(c01, dtype=float)
    c2 = np.array(c02, dtype=float)
    P = c1.shape[0]
    sqdt = np.sqrt(dt)
    gap0 = c2[:n_low] - c1[:n_low]
    record = out_states1.shape[0] == n_steps + 1

    out_normsq1[0] = c1 @ c1
    out_normsq2[0] = c2 @ c2
    if record:
        out_states1[0] = c1
        out_states2[0] = c2
    si = 0
    if si < snap_steps.shape[0] and snap_steps[si] == 0:
        out_snaps1[si] = c1
        out_snaps2[si] = c2
        si += 1

    dW = np.zeros(P)
    ctrl_full = np.zeros(P)
    for n in range(n_steps):
        nl1 = _nl_coeffs(c1, S, AT, nl_kind, C)
        nl2 = _nl_coeffs(c2, S, AT, nl_kind, C)
        dW[forced] = b[forced] * (sqdt * xi[n])

        if n < sync_steps:
            # steer the low-mode gap down the linear schedule; the gap
            # dynamics is deterministic because both copies share the noise
            tgt_next = gap0 * (1.0 - (n + 1) / sync_steps)
            gap_now = c2[:n_low] - c1[:n_low]
            ctrl = (tgt_next - E[:n_low] * gap_now) / PhiD[:n_low] \
                - (nl2[:n_low] - nl1[:n_low])
            expected = tgt_next
        else:
            ctrl = nl1[:n_low] - nl2[:n_low]
            expected = 0.0
        out_beta[n] = -ctrl / b[:n_low]
        out_dw_low[n] = sqdt * xi[n, :n_low]

        c1 = E * c1 + PhiD * nl1 + PhiW * dW
        ctrl_full[:n_low] = ctrl
        c2 = E * c2 + PhiD * (nl2 + ctrl_full) + PhiW * dW

        resid = c2[:n_low] - c1[:n_low] - expected
        out_gap[n] = np.max(np.abs(resid))
        c2[:n_low] = c1[:n_low] + expected

        n1 = c1 @ c1
        n2 = c2 @ c2
        out_normsq1[n + 1] = n1
        out_normsq2[n + 1] = n2
        if record:
            out_states1[n + 1] = c1
            out_states2[n + 1] = c2
        if si < snap_steps.shape[0] and snap_steps[si] == n + 1:
            out_snaps1[si] = c1
            out_snaps2[si] = c2
            si += 1
        if not (np.isfinite(n1) and np.isfinite(n2)):
            return n + 1
    return -1
