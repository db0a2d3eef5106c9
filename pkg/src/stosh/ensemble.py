"""Ensemble orchestration: independent trajectory jobs, deterministic merge.

Each trajectory i draws from its own counter-based stream (base_stream + i),
so results are identical for any worker count or execution order; workers
return chunks keyed by trajectory index and the parent writes them into
preallocated arrays.  All statistics downstream run over the merged arrays,
never over per-worker partial reductions.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coupling import run_bound_coupling, still_uncoupled
from .diagnostics import EnsembleStats, wilson_interval
from .dynamics import StepDiverged, integrate
from .spectral import TWO_PI


class TrajectoryDiverged(RuntimeError):
    """A member trajectory blew up; carries seed/stream/step for the report."""

    def __init__(self, seed, stream, step):
        super().__init__(f"trajectory diverged at step {step} "
                         f"(seed={seed}, stream={stream})")
        self.seed = seed
        self.stream = stream
        self.step = step

    def __reduce__(self):
        return (TrajectoryDiverged, (self.seed, self.stream, self.step))


def _chunks(n, n_chunks):
    edges = np.linspace(0, n, n_chunks + 1).astype(int)
    return [range(edges[i], edges[i + 1]) for i in range(n_chunks)
            if edges[i] < edges[i + 1]]


# ---------------------------------------------------------------------------
# plain ensembles

def _simulate_chunk(args):
    (params, noise, u0_coeffs, idxs, n_steps, snap_steps, stride,
     base_stream) = args
    from .spectral import SpectralField
    basis = params.basis
    u0 = SpectralField(u0_coeffs, basis)
    S = basis.synthesis_matrix()
    quad = TWO_PI / basis.grid_size
    n_low = params.n_low
    dt = params.dt
    ns = len(snap_steps)
    nd = len(range(0, n_steps + 1, stride))
    nc = len(idxs)

    normsq = np.empty((ns, nc))
    l4q = np.empty((ns, nc))
    low = np.empty((ns, nc, n_low))
    dense_n = np.empty((nc, nd))
    dense_i = np.empty((nc, nd))
    for j, i in enumerate(idxs):
        spec = noise.with_stream(base_stream + i)
        try:
            res = integrate(u0, params, spec, n_steps, snapshot_steps=snap_steps)
        except StepDiverged as e:
            raise TrajectoryDiverged(spec.seed, spec.stream_id,
                                     e.step_index) from None
        v = res.normsq
        run = np.concatenate([[0.0], np.cumsum(0.5 * dt * (v[:-1] + v[1:]))])
        dense_n[j] = v[::stride]
        dense_i[j] = run[::stride]
        normsq[:, j] = np.sum(res.snaps ** 2, axis=1)
        g = res.snaps @ S.T
        l4q[:, j] = quad * np.sum(g ** 4, axis=1)
        low[:, j, :] = res.snaps[:, :n_low]
    return list(idxs), normsq, l4q, low, dense_n, dense_i


def run_ensemble(params, noise, u0, n_paths, n_steps, snapshot_steps,
                 workers=1, dense_stride=5, base_stream=0):
    """Simulate n_paths independent trajectories; returns EnsembleStats."""
    snap_steps = tuple(sorted(set(int(s) for s in snapshot_steps)))
    if any(not 0 <= s <= n_steps for s in snap_steps):
        raise ValueError(f"snapshot steps {snap_steps} outside 0..{n_steps}")
    basis = params.basis
    n_low = params.n_low
    ns = len(snap_steps)
    nd = len(range(0, n_steps + 1, dense_stride))

    normsq = np.empty((ns, n_paths))
    l4q = np.empty((ns, n_paths))
    low = np.empty((ns, n_paths, n_low))
    dense_n = np.empty((n_paths, nd))
    dense_i = np.empty((n_paths, nd))

    jobs = [(params, noise, np.asarray(u0.coeffs), list(r), n_steps,
             snap_steps, dense_stride, base_stream)
            for r in _chunks(n_paths, max(workers * 4, 1))]
    if workers <= 1:
        results = map(_simulate_chunk, jobs)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_simulate_chunk, jobs)
    try:
        for idxs, c_normsq, c_l4q, c_low, c_dn, c_di in results:
            normsq[:, idxs] = c_normsq
            l4q[:, idxs] = c_l4q
            low[:, idxs, :] = c_low
            dense_n[idxs] = c_dn
            dense_i[idxs] = c_di
    finally:
        if workers > 1:
            pool.shutdown()

    dt = params.dt
    return EnsembleStats(
        times=dt * np.asarray(snap_steps, dtype=float),
        normsq=normsq, l4q=l4q, low_coeffs=low,
        low_cutoff=params.low_cutoff,
        stream_ids=base_stream + np.arange(n_paths),
        seed=noise.seed,
        dense_times=dt * np.arange(0, n_steps + 1, dense_stride, dtype=float),
        dense_normsq=dense_n, dense_integral=dense_i)


def mean_energy_series(stats):
    """(times, mean |u|^2, standard error) across the ensemble."""
    mean = np.mean(stats.normsq, axis=1)
    se = np.std(stats.normsq, axis=1, ddof=1) / np.sqrt(stats.count)
    return stats.times, mean, se


# ---------------------------------------------------------------------------
# coupled pairs

@dataclass(frozen=True)
class PairSummary:
    """Picklable per-pair digest of one bound-coupling run."""

    pair_id: int
    stream_id: int
    sync_steps: int
    labels: tuple               # SetLabel for k = 1..count
    drift_energies: tuple
    log_weights: tuple
    boundary_distances: tuple   # |u1 - u2| at kT, k = 0..count
    max_gap_residual: float     # over the post-schedule steps


def _couple_chunk(args):
    params, window, noise, u01_coeffs, u02_coeffs, idxs, base_stream = args
    from .spectral import SpectralField
    basis = params.basis
    u01 = SpectralField(u01_coeffs, basis)
    u02 = SpectralField(u02_coeffs, basis)
    out = []
    for i in idxs:
        spec = noise.with_stream(base_stream + i)
        try:
            pair = run_bound_coupling(u01, u02, params, window, spec)
        except StepDiverged as e:
            raise TrajectoryDiverged(spec.seed, spec.stream_id,
                                     e.step_index) from None
        out.append(PairSummary(
            pair_id=i, stream_id=spec.stream_id, sync_steps=pair.sync_steps,
            labels=pair.labels,
            drift_energies=tuple(r.drift_energy for r in pair.records),
            log_weights=tuple(r.log_weight for r in pair.records),
            boundary_distances=tuple(pair.boundary_distance(k)
                                     for k in range(window.count + 1)),
            max_gap_residual=pair.max_gap_residual(pair.sync_steps)))
    return out


def run_pair_ensemble(params, window, noise, u01, u02, n_pairs, workers=1,
                      base_stream=0):
    """Bound-couple n_pairs independent pairs; returns sorted PairSummary list."""
    jobs = [(params, window, noise, np.asarray(u01.coeffs),
             np.asarray(u02.coeffs), list(r), base_stream)
            for r in _chunks(n_pairs, max(workers * 4, 1))]
    if workers <= 1:
        results = map(_couple_chunk, jobs)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_couple_chunk, jobs)
    try:
        summaries = [s for chunk in results for s in chunk]
    finally:
        if workers > 1:
            pool.shutdown()
    return sorted(summaries, key=lambda s: s.pair_id)


def uncoupled_frequency(summaries, k_values=None):
    """Per-horizon frequency of the still-uncoupled class, with Wilson CI.

    Returns {k: (frequency, low, high)}.  Frequencies use the (x + 1/2) /
    (n + 1) continuity correction so a zero count stays loggable.
    """
    if not summaries:
        raise ValueError("no pair summaries")
    count = len(summaries[0].labels)
    if k_values is None:
        k_values = range(1, count + 1)
    out = {}
    n = len(summaries)
    for k in k_values:
        x = sum(1 for s in summaries if still_uncoupled(s.labels[k - 1], k))
        lo, hi = wilson_interval(x, n)
        out[int(k)] = ((x + 0.5) / (n + 1.0), lo, hi)
    return out
