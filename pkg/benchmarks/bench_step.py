"""Stepping-kernel benchmark: compiled extension vs numpy fallback.

Runs the same forced trajectory through both engine implementations and
reports steps/second plus the speedup.  The two differ only in matvec
summation order (BLAS vs plain loops), so agreement is asserted at rounding
level, not bitwise; each backend on its own is exactly reproducible.
"""

import time

import numpy as np

from stosh import ModelParams, NoiseSpec, SpectralBasis, SpectralField
from stosh.dynamics import EnginePlan
from stosh.forcing import standard_normals
from stosh import _engine_np

try:
    from stosh import _core
except ImportError:
    _core = None


def drive(engine, plan, noise, n_steps, xi):
    basis = plan.params.basis
    u0 = np.zeros(basis.n_modes)
    out_normsq = np.empty(n_steps + 1)
    snap = np.empty(0, dtype=np.intp)
    out_snaps = np.empty((0, basis.n_modes))
    out_states = np.empty((n_steps + 1, basis.n_modes))
    status = engine.run_single(
        u0, n_steps, plan.params.dt, plan.E, plan.PhiD, plan.PhiW, plan.S,
        plan.AT, plan.nl_kind, plan.C, np.ascontiguousarray(noise.amplitude_vector),
        noise.forced_indices.astype(np.intp), xi, out_normsq, snap, out_snaps,
        out_states)
    assert status < 0, f"diverged at step {status}"
    return out_states


def bench(engine, plan, noise, n_steps, xi, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        drive(engine, plan, noise, n_steps, xi)
        best = min(best, time.perf_counter() - t0)
    return n_steps / best


def main():
    K, N, dt, n_steps = 8, 3, 2e-3, 20000
    basis = SpectralBasis(K)
    params = ModelParams(rho=1.0, nonlinearity="local", low_cutoff=N,
                         dt=dt, basis=basis)
    coeffs = np.zeros(basis.n_modes)
    coeffs[:basis.low_mode_count(N)] = 1.0
    noise = NoiseSpec(basis=basis, coefficients=coeffs, forced_cutoff=N,
                      seed=2024)
    plan = EnginePlan(params)
    xi = np.ascontiguousarray(standard_normals(noise, n_steps))

    ref = drive(_engine_np, plan, noise, n_steps, xi)
    rate_np = bench(_engine_np, plan, noise, n_steps, xi)
    print(f"python backend:   {rate_np:12.0f} steps/s")

    if _core is None:
        print("compiled backend: not built")
        return
    out = drive(_core, plan, noise, n_steps, xi)
    dev = float(np.max(np.abs(ref - out)))
    print(f"max backend deviation over {n_steps} steps: {dev:.3e}")
    assert dev < 1e-9
    rate_c = bench(_core, plan, noise, n_steps, xi)
    print(f"compiled backend: {rate_c:12.0f} steps/s   "
          f"({rate_c / rate_np:.1f}x)")


if __name__ == "__main__":
    main()
