"""Time integration of the stochastically forced model.

Two nonlinearities are supported: the local cubic u^3 and the nonlocal
u * (G conv u^2) with a periodic kernel G.  The linear operator is handled
exactly per mode (exponential factors), the nonlinearity explicitly, so the
k^4 stiffness of the spectrum imposes no step restriction.

Kernel families:

  * bounded_positive: tabulated G with 0 < b <= G <= a on the grid;
  * mollifier: the compactly supported bump J_d(x) = d^-2 J(x/d) with
    J(x) = c exp(-1/(1-x^2)) on |x| < 1, kept verbatim (its mass is 2/d).
    A unit-mass rescaling is available behind an explicit flag for
    approximation work; nothing selects it silently.
  * custom: tabulated G with stated bounds a >= G >= b >= 0.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from . import _engine
from .forcing import NoiseSpec, standard_normals
from .spectral import (SpectralBasis, SpectralField, circulant_matrix,
                       eigenvalue, from_physical, project_high, to_physical)


class StepDiverged(RuntimeError):
    """Raised when a state turns non-finite; carries the 1-based step index."""

    def __init__(self, step_index, context=""):
        self.step_index = step_index
        msg = f"non-finite state at step {step_index}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


@lru_cache(maxsize=1)
def bump_normalizer():
    """c = 1 / integral_0^1 exp(-1/(1-x^2)) dx, about 4.504."""
    val, _err = quad(lambda x: math.exp(-1.0 / (1.0 - x * x)), 0.0, 1.0)
    return 1.0 / val


def mollifier_samples(delta0, basis, unit_mass=False):
    """Samples of J_{delta0} on the periodic grid of `basis`.

    Verbatim scaling d^-2 J(x/d) by default (mass 2/delta0); with
    unit_mass=True the kernel is rescaled by delta0/2 to integrate to 1.
    Support is |x| < delta0 around 0, periodically wrapped.
    """
    if not 0.0 < delta0 < math.pi:
        raise ValueError(f"delta0 must lie in (0, pi), got {delta0}")
    c = bump_normalizer()
    x = basis.x.copy()
    x[x > math.pi] -= 2.0 * math.pi  # signed distance to 0 in (-pi, pi]
    out = np.zeros_like(x)
    inside = np.abs(x) < delta0
    s = x[inside] / delta0
    out[inside] = c / delta0 ** 2 * np.exp(-1.0 / (1.0 - s * s))
    if unit_mass:
        out *= delta0 / 2.0
    return out


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A periodic interaction kernel with certified bounds 0 <= b <= G <= a."""

    family: str                    # bounded_positive | mollifier | custom
    samples: np.ndarray            # grid samples, aligned with a basis grid
    a: float                       # upper bound on G
    b: float = 0.0                 # lower bound on G (positive families only)
    delta0: float = 0.0            # mollifier support radius
    unit_mass: bool = False        # mollifier variant flag

    def __post_init__(self):
        g = np.asarray(self.samples, dtype=float)
        g = g.copy()
        g.setflags(write=False)
        object.__setattr__(self, "samples", g)
        if self.family == "bounded_positive":
            if not 0.0 < self.b <= self.a:
                raise ValueError(f"need 0 < b <= a, got b={self.b}, a={self.a}")
            if np.any(g < self.b - 1e-12) or np.any(g > self.a + 1e-12):
                raise ValueError("samples leave the declared [b, a] range")
        elif self.family == "mollifier":
            if not 0.0 < self.delta0 < math.pi:
                raise ValueError(f"delta0 must lie in (0, pi), got {self.delta0}")
            cap = self.a  # a = c/delta0^2 certified upper bound
            if np.any(g < -1e-12) or np.any(g > cap * (1 + 1e-12)):
                raise ValueError("mollifier samples leave [0, c/delta0^2]")
        elif self.family == "custom":
            if self.b < 0 or self.a < self.b:
                raise ValueError(f"need a >= b >= 0, got a={self.a}, b={self.b}")
        else:
            raise ValueError(f"unknown kernel family {self.family!r}")

    @classmethod
    def bounded_positive(cls, samples, a, b):
        return cls(family="bounded_positive", samples=np.asarray(samples, float),
                   a=float(a), b=float(b))

    @classmethod
    def mollifier(cls, delta0, basis, unit_mass=False):
        g = mollifier_samples(delta0, basis, unit_mass=unit_mass)
        a = bump_normalizer() / delta0 ** 2
        if unit_mass:
            a *= delta0 / 2.0
        return cls(family="mollifier", samples=g, a=a, b=0.0,
                   delta0=float(delta0), unit_mass=unit_mass)

    @classmethod
    def custom(cls, samples, a, b=0.0):
        return cls(family="custom", samples=np.asarray(samples, float),
                   a=float(a), b=float(b))


@dataclass(frozen=True)
class ModelParams:
    """Model selector: rho, nonlinearity, low-mode cutoff, step size, basis."""

    rho: float
    nonlinearity: str              # local | nonlocal | linear
    low_cutoff: int
    dt: float
    basis: SpectralBasis
    kernel: KernelSpec | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 1 <= self.low_cutoff <= self.basis.max_wavenumber:
            raise ValueError(f"low_cutoff {self.low_cutoff} outside "
                             f"1..{self.basis.max_wavenumber}")
        if self.nonlinearity not in ("local", "nonlocal", "linear"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.nonlinearity == "nonlocal":
            if self.kernel is None:
                raise ValueError("nonlocal model needs a kernel")
            if self.kernel.samples.shape != (self.basis.grid_size,):
                raise ValueError("kernel sampled on a different grid")

    @property
    def n_low(self):
        return self.basis.low_mode_count(self.low_cutoff)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled path of coefficient states."""

    times: np.ndarray              # (n+1,)
    coeffs: np.ndarray             # (n+1, P)
    params: ModelParams
    noise: NoiseSpec | None = None
    start_step: int = 0

    def __post_init__(self):
        t = np.asarray(self.times, float)
        c = np.asarray(self.coeffs, float)
        if t.ndim != 1 or c.shape != (t.shape[0], self.params.basis.n_modes):
            raise ValueError("times/coeffs shape mismatch")
        dt = np.diff(t)
        if t.shape[0] > 1 and not np.allclose(dt, self.params.dt, rtol=1e-9, atol=1e-12):
            raise ValueError("times must be uniform with the params step")
        t.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "coeffs", c)

    def __len__(self):
        return self.times.shape[0]

    def state(self, i):
        return SpectralField(self.coeffs[i], self.params.basis)

    @property
    def states(self):
        return [self.state(i) for i in range(len(self))]

    def normsq_series(self):
        return np.einsum("ij,ij->i", self.coeffs, self.coeffs)


# ---------------------------------------------------------------------------
# engine plumbing

def linear_factors(params):
    """(E, PhiD, PhiW): exp(lam dt), dt*phi1(lam dt), phi1(lam dt) per mode."""
    lam = np.array([eigenvalue(k) + params.rho
                    for k in params.basis.wavenumbers])
    z = lam * params.dt
    E = np.exp(z)
    phi1 = np.empty_like(z)
    small = np.abs(z) < 1e-8
    phi1[small] = 1.0 + z[small] / 2.0 + z[small] ** 2 / 6.0
    zs = z[~small]
    phi1[~small] = np.expm1(zs) / zs
    return E, params.dt * phi1, phi1


def _nl_kind(params):
    return {"linear": 0, "local": 1, "nonlocal": 2}[params.nonlinearity]


def _kernel_matrix(params):
    if params.nonlinearity == "nonlocal":
        return np.ascontiguousarray(circulant_matrix(params.kernel.samples))
    return np.zeros((0, 0))


class EnginePlan:
    """Precomputed arrays shared by every engine call for fixed params."""

    def __init__(self, params):
        self.params = params
        self.E, self.PhiD, self.PhiW = linear_factors(params)
        self.S = np.ascontiguousarray(params.basis.synthesis_matrix())
        self.AT = np.ascontiguousarray(params.basis.analysis_matrix())
        self.nl_kind = _nl_kind(params)
        self.C = _kernel_matrix(params)


def _empty_snaps(n_modes):
    return np.empty(0, dtype=np.intp), np.empty((0, n_modes))


# ---------------------------------------------------------------------------
# public operations

def nonlocal_term(u, kernel):
    """Galerkin projection of u * (G conv u^2), evaluated on the grid."""
    if kernel.samples.shape != (u.basis.grid_size,):
        raise ValueError("kernel sampled on a different grid")
    g = to_physical(u)
    conv = circulant_matrix(kernel.samples) @ (g * g)
    return from_physical(g * conv, u.basis)


def evaluate_drift(u, params):
    """A u + rho u - nonlinearity(u), Galerkin truncated."""
    lam = np.array([eigenvalue(k) + params.rho for k in u.basis.wavenumbers])
    lin = lam * u.coeffs
    if params.nonlinearity == "linear":
        return SpectralField(lin, u.basis)
    if params.nonlinearity == "local":
        g = to_physical(u)
        nl = from_physical(g ** 3, u.basis).coeffs
    else:
        nl = nonlocal_term(u, params.kernel).coeffs
    return SpectralField(lin - nl, u.basis)


def step(state, params, dW):
    """One integrator step driven by the given noise increment."""
    if dW.basis != state.basis:
        raise ValueError("noise increment lives on a different basis")
    plan = EnginePlan(params)
    g = to_physical(state)
    if plan.nl_kind == 0:
        nl = np.zeros(state.basis.n_modes)
    elif plan.nl_kind == 1:
        nl = -(plan.AT @ (g ** 3))
    else:
        nl = -(plan.AT @ (g * (plan.C @ (g * g))))
    c = plan.E * state.coeffs + plan.PhiD * nl + plan.PhiW * dW.coeffs
    if not np.all(np.isfinite(c)):
        raise StepDiverged(1)
    return SpectralField(c, state.basis)


@dataclass(frozen=True, eq=False)
class IntegrationResult:
    normsq: np.ndarray             # |u|^2 at every step, (n_steps+1,)
    snap_steps: np.ndarray
    snaps: np.ndarray              # states at the snapshot steps, (ns, P)
    trajectory: Trajectory | None  # full path when record_states was set


def integrate(u0, params, spec, n_steps, snapshot_steps=(), record_states=False,
              start_step=0):
    """Run the scheme for n_steps from u0 with the noise stream of `spec`."""
    basis = params.basis
    plan = EnginePlan(params)
    b = spec.amplitude_vector
    forced = spec.forced_indices.astype(np.intp)
    xi = np.ascontiguousarray(standard_normals(spec, n_steps, start_step))

    out_normsq = np.empty(n_steps + 1)
    snap = np.asarray(sorted(set(int(s) for s in snapshot_steps)), dtype=np.intp)
    out_snaps = np.empty((snap.shape[0], basis.n_modes))
    if record_states:
        out_states = np.empty((n_steps + 1, basis.n_modes))
    else:
        out_states = np.empty((0, basis.n_modes))

    status = _engine.run_single(
        np.ascontiguousarray(u0.coeffs), n_steps, params.dt, plan.E, plan.PhiD,
        plan.PhiW, plan.S, plan.AT, plan.nl_kind, plan.C,
        np.ascontiguousarray(b), forced, xi, out_normsq, snap, out_snaps,
        out_states)
    if status >= 0:
        raise StepDiverged(status, f"stream {spec.stream_id}")

    traj = None
    if record_states:
        times = start_step * params.dt + params.dt * np.arange(n_steps + 1)
        traj = Trajectory(times, out_states, params, spec, start_step)
    return IntegrationResult(out_normsq, snap, out_snaps, traj)


def slave_high_modes(low_traj, h0, params):
    """Integrate the high-mode flow driven by a prescribed low-mode path.

    low_traj must be a full-resolution trajectory (recorded every step); its
    coefficients above the cutoff are ignored.  h0 must live entirely in the
    high-mode space.  The slaved equation carries no noise.
    """
    basis = params.basis
    n_low = params.n_low
    if h0.basis != basis:
        raise ValueError("h0 lives on a different basis")
    if np.any(h0.coeffs[:n_low] != 0.0):
        raise ValueError("h0 has low-mode content")
    if low_traj.params.basis != basis:
        raise ValueError("low trajectory lives on a different basis")
    if abs(low_traj.params.dt - params.dt) > 1e-15:
        raise ValueError("low trajectory sampled at a different step")

    n_steps = len(low_traj) - 1
    l_path = np.ascontiguousarray(low_traj.coeffs[:, :n_low])
    plan = EnginePlan(params)
    out_h = np.empty((n_steps + 1, basis.n_modes))
    status = _engine.run_slaved(l_path, np.ascontiguousarray(h0.coeffs),
                                n_steps, params.dt, plan.E, plan.PhiD, plan.S,
                                plan.AT, plan.nl_kind, plan.C, n_low, out_h)
    if status >= 0:
        raise StepDiverged(status, "slaved flow")
    return Trajectory(low_traj.times.copy(), out_h, params)


# ---------------------------------------------------------------------------
# import/export

def trajectory_to_csv(traj, path):
    """Rows: time then one column per mode coefficient, 17 significant digits."""
    basis = traj.params.basis
    header = "time," + ",".join(
        f"c_{k}_{p}" for k, p in basis.mode_table)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(len(traj)):
            row = ",".join(f"{v:.17g}" for v in traj.coeffs[i])
            fh.write(f"{traj.times[i]:.17g},{row}\n")


def trajectory_json_summary(traj):
    nsq = traj.normsq_series()
    return {
        "n_states": len(traj),
        "dt": traj.params.dt,
        "t_first": float(traj.times[0]),
        "t_last": float(traj.times[-1]),
        "normsq": [float(v) for v in nsq],
    }


def load_kernel_table(path, basis, a=None, b=0.0, family="custom"):
    """Two-column CSV (x, G(x)) resampled onto the basis grid.

    Linear interpolation with periodic wrap; declared bounds default to the
    observed range of the resampled values.
    """
    tab = np.loadtxt(path, delimiter=",", ndmin=2)
    if tab.shape[1] != 2:
        raise ValueError(f"kernel table must have two columns, got {tab.shape[1]}")
    xs = np.mod(tab[:, 0], 2.0 * np.pi)
    order = np.argsort(xs)
    xs, gs = xs[order], tab[order, 1]
    xp = np.concatenate([xs, [xs[0] + 2.0 * np.pi]])
    gp = np.concatenate([gs, [gs[0]]])
    g = np.interp(basis.x, xp, gp, period=2.0 * np.pi)
    if a is None:
        a = float(np.max(g))
    if family == "bounded_positive":
        return KernelSpec.bounded_positive(g, a=a, b=b if b > 0 else float(np.min(g)))
    return KernelSpec.custom(g, a=a, b=b)
