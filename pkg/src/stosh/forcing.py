"""Finite-mode white-in-time forcing with reproducible substreams.

The noise is W(x, t) = sum_i b_i e_i(x) w_i(t) over the modes of a
SpectralBasis, with b_i nonzero only up to a finite wavenumber.  Increments
are generated from a counter-based generator (Philox) keyed by
(seed, stream_id), with the counter block derived from the step index, so

  * any (trajectory, step) increment can be regenerated in isolation,
  * batch generation and per-step generation agree bitwise,
  * parallel ensembles are reproducible independent of scheduling order.

Each 64-bit raw word maps to one normal deviate through the inverted CDF;
word w -> uniform ((w >> 11) + 0.5) * 2^-53, strictly inside (0, 1).
"""

from dataclasses import dataclass, replace

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

from .spectral import SpectralBasis, SpectralField

_INV_2_53 = 1.0 / 9007199254740992.0  # 2^-53


@dataclass(frozen=True)
class NoiseSpec:
    """Forcing amplitudes plus the RNG identity of one trajectory.

    coefficients are aligned with the basis mode table; they must be nonzero
    on every mode with wavenumber <= forced_cutoff and may extend above it,
    but only finitely (enforced by the fixed basis size).
    """

    basis: SpectralBasis
    coefficients: tuple
    forced_cutoff: int
    seed: int
    stream_id: int = 0
    # the coupling construction needs every low mode forced; degenerate
    # amplitude vectors are still representable for plain sampling
    strict: bool = True

    def __post_init__(self):
        b = np.asarray(self.coefficients, dtype=float)
        if b.shape != (self.basis.n_modes,):
            raise ValueError(f"need {self.basis.n_modes} coefficients, got {b.shape}")
        if np.any(b < 0):
            raise ValueError("amplitudes must be nonnegative")
        N = self.forced_cutoff
        if not 1 <= N <= self.basis.max_wavenumber:
            raise ValueError(f"forced_cutoff {N} outside 1..{self.basis.max_wavenumber}")
        low = self.basis.low_mode_count(N)
        if self.strict and np.any(b[:low] == 0.0):
            k = self.basis.mode_table[int(np.flatnonzero(b[:low] == 0.0)[0])]
            raise ValueError(f"every mode with wavenumber <= {N} needs a nonzero "
                             f"amplitude; mode {k} has b=0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        object.__setattr__(self, "coefficients", tuple(float(v) for v in b))

    @property
    def amplitude_vector(self):
        return np.array(self.coefficients)

    @property
    def forced_indices(self):
        """Mode-table positions with b != 0, in table order."""
        return np.flatnonzero(self.amplitude_vector != 0.0)

    def with_stream(self, stream_id):
        return replace(self, stream_id=int(stream_id))


def effective_constants(spec):
    """(B0, b_max) = (sum of squared amplitudes, largest amplitude)."""
    b = spec.amplitude_vector
    return float(np.dot(b, b)), float(np.max(b))


def _blocks_per_step(n_forced):
    # one Philox block yields 4 raw words
    return max(1, (n_forced + 3) // 4)


def standard_normals(spec, n_steps, start_step=0):
    """(n_steps, n_forced) unit normals for steps start_step .. start_step+n_steps-1.

    Deterministic in (seed, stream_id, step); the row for step n is identical
    whether generated here in a batch or alone via a fresh call.
    """
    n_forced = len(spec.forced_indices)
    if n_forced == 0:
        return np.zeros((n_steps, 0))
    bps = _blocks_per_step(n_forced)
    gen = Philox(counter=np.array([start_step * bps, 0, 0, 0], dtype=np.uint64),
                 key=np.array([spec.seed, spec.stream_id], dtype=np.uint64))
    raw = gen.random_raw(4 * bps * n_steps).reshape(n_steps, 4 * bps)
    u = ((raw[:, :n_forced] >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
    return ndtri(u)


def sample_increment(spec, dt, step=0):
    """One noise increment Delta W over a step of length dt.

    Mode i gets coefficient b_i * sqrt(dt) * xi with xi standard normal;
    unforced modes stay exactly zero.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    b = spec.amplitude_vector
    c = np.zeros(spec.basis.n_modes)
    idx = spec.forced_indices
    if idx.size:
        xi = standard_normals(spec, 1, start_step=step)[0]
        c[idx] = b[idx] * np.sqrt(dt) * xi
    return SpectralField(c, spec.basis)


def save_noise_path(path, spec, n_steps, dt, start_step=0):
    """Persist increments as CSV rows (step, mode, increment) for replay."""
    xi = standard_normals(spec, n_steps, start_step)
    idx = spec.forced_indices
    b = spec.amplitude_vector[idx]
    inc = xi * (b * np.sqrt(dt))[None, :]
    with open(path, "w") as fh:
        fh.write("step,mode,increment\n")
        for n in range(n_steps):
            for j, m in enumerate(idx):
                fh.write(f"{start_step + n},{m},{inc[n, j]:.17g}\n")


def load_noise_path(path, basis):
    """Read a CSV noise path back into a dense (n_steps, n_modes) array."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.size == 0:
        return np.zeros((0, basis.n_modes))
    steps = rows[:, 0].astype(int)
    first = steps.min()
    out = np.zeros((steps.max() - first + 1, basis.n_modes))
    out[steps - first, rows[:, 1].astype(int)] = rows[:, 2]
    return out
