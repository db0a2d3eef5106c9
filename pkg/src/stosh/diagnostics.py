"""Certificates, thresholds, ensemble statistics and distance estimation.

The closed-form certificates all reduce to maximizing a downward scalar
quartic p*x^2 - q*x^4 + const over x >= 0, which is const + p^2/(4q) when
p > 0 and const at x = 0 otherwise.  Every closed form is cross-checkable
against a dense 1-D grid search (quartic_max_grid) so the two routes act as
mutual oracles.

Distribution distance is the bounded-Lipschitz metric: test functions with
sup norm <= 1 and Lipschitz constant <= 1 (so two point masses at gap z are
min(z, 2) apart).  On empirical samples of a scalar observable the dual is a
small linear program over the potential values at the merged support points;
the reported ensemble distance is the maximum over a fixed panel of scalar
observables and is a lower bound of the full metric on the state space.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .forcing import effective_constants
from .spectral import eigenvalue

PANEL_VERSION = 1
WILSON_Z = 1.96


class FitDomainError(ValueError):
    """Nonpositive values handed to the log-linear decay fit."""


# ---------------------------------------------------------------------------
# scalar quartic maximization (closed form + grid cross-check)

def quartic_max(p, q, const):
    """max over x of p*x^2 - q*x^4 + const, q > 0."""
    if q <= 0:
        raise ValueError(f"quartic coefficient must be positive, got {q}")
    if p <= 0:
        return float(const)
    return float(p * p / (4.0 * q) + const)


def quartic_max_grid(p, q, const, x_max=None, step=1e-4):
    """Dense-grid evaluation of the same maximum, for cross-checking."""
    if x_max is None:
        x_max = 2.0 * math.sqrt(max(p, 0.0) / (2.0 * q)) + 1.0
    x = np.arange(0.0, x_max + step, step)
    return float(np.max(p * x * x - q * x ** 4 + const))


def _check_dual(closed, p, q, const):
    grid = quartic_max_grid(p, q, const)
    scale = max(abs(closed), 1.0)
    if abs(closed - grid) > 1e-6 * scale:
        raise RuntimeError(f"certificate closed form {closed} and grid "
                           f"search {grid} disagree")


# ---------------------------------------------------------------------------
# certificates

@dataclass(frozen=True)
class Certificates:
    """Computed constants for one model configuration; None = not applicable."""

    C1: float | None = None
    C1_tilde: float | None = None
    alpha: float | None = None
    R: float | None = None
    threshold_N: int | None = None
    threshold_N_tilde: int | None = None
    threshold_N_nonneg: int | None = None
    predicted_contraction: float | None = None         # uses the first high mode
    predicted_contraction_cutoff: float | None = None  # uses the cutoff mode
    epsilon: float | None = None

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def energy_certificate(params, spec, epsilon=None, cross_check=True):
    """The maximized quartic constant for the configured model.

    local:            max 2(rho + b_max^2 + 1/2) x^2 - x^4/(2 pi) + B0
    positive kernel:  same numerator with quartic coefficient b (its lower
                      bound), needs b > 0
    mollifier kernel: the epsilon-slack variant with quartic 1/(2 pi)
    """
    B0, bmax = effective_constants(spec)
    if params.nonlinearity == "nonlocal" and params.kernel.family != "mollifier":
        b = params.kernel.b
        if b <= 0:
            raise ValueError("positive-kernel certificate needs lower bound b > 0")
        q = b
        c = params.rho + bmax ** 2 + 0.5
    elif params.nonlinearity == "nonlocal":
        if epsilon is None:
            raise ValueError("mollifier certificate needs epsilon")
        q = 1.0 / (2.0 * math.pi)
        c = params.rho + bmax ** 2 + 0.5 + epsilon
    else:
        q = 1.0 / (2.0 * math.pi)
        c = params.rho + bmax ** 2 + 0.5
    out = quartic_max(2.0 * c, q, B0)
    if cross_check:
        _check_dual(out, 2.0 * c, q, B0)
    return out


def mean_energy_bound(params, spec, alpha, cross_check=True):
    """R with E|u(t)|^2 <= exp(-alpha t) E|u0|^2 + R."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    B0, _ = effective_constants(spec)
    p = 2.0 * params.rho - alpha
    r_alpha = quartic_max(p, 1.0 / (2.0 * math.pi), B0)
    if cross_check:
        _check_dual(r_alpha, p, 1.0 / (2.0 * math.pi), B0)
    return r_alpha / alpha


def _threshold_from_offset(offset):
    """Smallest integer n with (n^2 - 1)^2 > offset, by formula and spectrum.

    Formula route: strict n > sqrt(sqrt(offset) + 1).  Spectral route: first
    n whose operator eigenvalue satisfies alpha_n + offset < 0.  Both are
    computed and must agree.
    """
    if offset < 0:
        raise ValueError(f"threshold offset must be nonnegative, got {offset}")
    s = math.sqrt(math.sqrt(offset) + 1.0)
    by_formula = int(math.floor(s)) + 1
    n = 1
    while not (eigenvalue(n) + offset < 0):
        n += 1
        if n > 10 ** 6:
            raise RuntimeError("threshold search ran away")
    if n != by_formula:
        raise RuntimeError(f"threshold disagreement: formula {by_formula}, "
                           f"spectral {n} (offset {offset})")
    return n


def mode_threshold(params, spec, epsilon=None):
    """Smallest forced-mode cutoff satisfying the model's strict inequality."""
    if params.rho < 0:
        raise ValueError(f"rho must be nonnegative, got {params.rho}")
    if params.nonlinearity == "nonlocal":
        k = params.kernel
        if k.a < k.b:
            raise ValueError(f"inconsistent kernel bounds: a={k.a} < b={k.b}")
        if k.family == "mollifier":
            c_eps = energy_certificate(params, spec, epsilon=epsilon,
                                       cross_check=False)
            offset = params.rho + k.a + 2.5 * k.a * c_eps
        else:
            c_tilde = energy_certificate(params, spec, cross_check=False)
            offset = params.rho + k.a + 2.5 * k.a * c_tilde
        return _threshold_from_offset(offset)
    return _threshold_from_offset(params.rho)


def compute_certificates(params, spec, alpha=1.0, epsilon=0.1):
    """Bundle every certificate derivable from this configuration."""
    N = params.low_cutoff
    rho = params.rho
    contraction = None
    contraction_cutoff = None
    kw = {}
    if params.nonlinearity == "local" or params.nonlinearity == "linear":
        kw["C1"] = energy_certificate(params, spec)
        kw["threshold_N"] = _threshold_from_offset(rho)
        contraction = -2.0 * (eigenvalue(N + 1) + rho)
        contraction_cutoff = -2.0 * (eigenvalue(N) + rho)
    elif params.kernel.family == "mollifier":
        kw["C1_tilde"] = energy_certificate(params, spec, epsilon=epsilon)
        kw["threshold_N_nonneg"] = mode_threshold(params, spec, epsilon=epsilon)
        kw["epsilon"] = epsilon
        off = rho + params.kernel.a + 2.5 * params.kernel.a * kw["C1_tilde"]
        contraction = -2.0 * (eigenvalue(N + 1) + off)
        contraction_cutoff = -2.0 * (eigenvalue(N) + off)
    else:
        kw["C1_tilde"] = energy_certificate(params, spec)
        kw["threshold_N_tilde"] = mode_threshold(params, spec)
        off = rho + params.kernel.a + 2.5 * params.kernel.a * kw["C1_tilde"]
        contraction = -2.0 * (eigenvalue(N + 1) + off)
        contraction_cutoff = -2.0 * (eigenvalue(N) + off)
    return Certificates(alpha=alpha,
                        R=mean_energy_bound(params, spec, alpha),
                        predicted_contraction=contraction,
                        predicted_contraction_cutoff=contraction_cutoff,
                        **kw)


# ---------------------------------------------------------------------------
# ensemble statistics

@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Per-snapshot observable samples of one simulated ensemble.

    The observable panel is fixed (version PANEL_VERSION): |u|^2, the L4
    quadrature of u^4, and the low-mode coefficients up to the cutoff.  The
    optional dense block carries |u|^2 and its running trapezoid integral on
    a thinned uniform grid for the pathwise energy-envelope test.
    """

    times: np.ndarray         # (nt,)
    normsq: np.ndarray        # (nt, n)
    l4q: np.ndarray           # (nt, n)
    low_coeffs: np.ndarray    # (nt, n, n_low)
    low_cutoff: int
    stream_ids: np.ndarray    # (n,)
    seed: int
    dense_times: np.ndarray | None = None
    dense_normsq: np.ndarray | None = None     # (n, nd)
    dense_integral: np.ndarray | None = None   # (n, nd)

    @property
    def count(self):
        return self.normsq.shape[1]

    def snapshot_index(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"no snapshot at t={t}; have {self.times}")
        return i

    def observable_panel(self, t):
        """name -> (n,) samples at snapshot t, fixed panel order."""
        i = self.snapshot_index(t)
        panel = {"normsq": self.normsq[i], "l4q": self.l4q[i]}
        for j in range(self.low_coeffs.shape[2]):
            panel[f"coeff_{j}"] = self.low_coeffs[i, :, j]
        return panel


def wilson_interval(successes, n, z=WILSON_Z):
    """(low, high) Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("empty sample")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    hw = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - hw), min(1.0, center + hw)


@dataclass(frozen=True)
class ViolationReport:
    frequency: float
    wilson_low: float
    wilson_high: float
    bound: float           # exp(-r)
    passed: bool
    count: int


def supermartingale_test(ensemble, C1, r):
    """Fraction of paths whose energy functional ever leaves the envelope.

    The envelope is |u(0)|^2 + C1*t + r against E(t) = |u(t)|^2 +
    integral_0^t |u|^2 ds, checked at every stored dense time.  Passes when
    the frequency is at most exp(-r) plus the Wilson half-width.
    """
    if ensemble.dense_normsq is None or ensemble.dense_integral is None:
        raise ValueError("ensemble lacks the dense energy series")
    t = ensemble.dense_times
    E = ensemble.dense_normsq + ensemble.dense_integral
    bound = ensemble.dense_normsq[:, :1] + C1 * t[None, :] + r
    violated = np.any(E > bound, axis=1)
    n = violated.shape[0]
    freq = float(np.mean(violated))
    lo, hi = wilson_interval(int(np.sum(violated)), n)
    halfwidth = 0.5 * (hi - lo)
    target = math.exp(-r)
    return ViolationReport(frequency=freq, wilson_low=lo, wilson_high=hi,
                           bound=target, passed=freq <= target + halfwidth,
                           count=n)


# ---------------------------------------------------------------------------
# bounded-Lipschitz distance

def bl_distance_1d(x, y):
    """Exact BL distance between two 1-D empirical distributions.

    Solves the dual over potentials f on the merged support: maximize
    sum w_i f(z_i) subject to |f| <= 1 and |f(z_{i+1}) - f(z_i)| <= dz_i,
    where w carries +1/nx at x-points and -1/ny at y-points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise ValueError("empty sample")
    z, inv = np.unique(np.concatenate([x, y]), return_inverse=True)
    w = np.zeros(z.shape[0])
    np.add.at(w, inv[:x.size], 1.0 / x.size)
    np.add.at(w, inv[x.size:], -1.0 / y.size)
    n = z.shape[0]
    if n == 1:
        return 0.0
    dz = np.diff(z)
    # rows: f_{i+1} - f_i <= dz_i and f_i - f_{i+1} <= dz_i
    eye = sparse.eye(n, format="csr")
    D = eye[1:] - eye[:-1]
    A = sparse.vstack([D, -D], format="csr")
    b_ub = np.concatenate([dz, dz])
    res = linprog(-w, A_ub=A, b_ub=b_ub, bounds=(-1.0, 1.0), method="highs")
    if not res.success:
        raise RuntimeError(f"BL dual LP failed: {res.message}")
    return float(max(0.0, -res.fun))


def bl_distance_profile(a, b, t):
    """Per-observable BL distances between two ensembles at snapshot t."""
    if not np.array_equal(a.times, b.times):
        raise ValueError("ensembles have different snapshot grids")
    pa = a.observable_panel(t)
    pb = b.observable_panel(t)
    if pa.keys() != pb.keys():
        raise ValueError("ensembles have different observable panels")
    return {name: bl_distance_1d(pa[name], pb[name]) for name in pa}


def bl_distance(a, b, t):
    """Max over the observable panel; a lower bound of the full-space metric."""
    return max(bl_distance_profile(a, b, t).values())


# ---------------------------------------------------------------------------
# kernel inequality battery

@dataclass(frozen=True)
class BatteryReport:
    """Worst signed violations (lhs - rhs; <= slack passes) per inequality."""

    worst: dict
    sup_errors: dict        # delta -> sup |smoothed f - f| (unit-mass bump)
    bound_violation: float  # bump sample outside [0, c/delta^2]
    slack: float
    passed: bool


def _battery_names():
    return ("low_sq_cross", "diff_sum_cross", "conv_low_sq",
            "cubic_high_diff", "mixed_low_cross", "cubic_growth",
            "coercivity")


def kernel_inequality_battery(n_triples=1000, seed=0, slack=1e-9,
                              deltas=(0.4, 0.2, 0.1, 0.05)):
    """Check every kernel product bound on random fields and random kernels.

    Each inequality pairs a pointwise-bounded kernel b <= G <= a with the
    discrete L2/L1 norms of random band-limited fields; the bounds are exact
    for the discrete inner products, so any excess beyond rounding slack is
    a real violation.  The mollifier block checks the verbatim bump stays in
    [0, c/delta^2] and that the unit-mass smoothing sup-error is monotone in
    delta on fixed smooth targets.
    """
    from .dynamics import bump_normalizer, mollifier_samples
    from .spectral import SpectralBasis, TWO_PI, circulant_matrix

    basis = SpectralBasis(6, grid_size=64)
    M = basis.grid_size
    quad = TWO_PI / M
    S = basis.synthesis_matrix()
    n_modes = basis.n_modes
    rng = np.random.default_rng(seed)

    def l2(f):
        return math.sqrt(quad * float(np.sum(f * f)))

    worst = {name: -math.inf for name in _battery_names()}
    for _ in range(n_triples):
        a = rng.uniform(0.5, 3.0)
        b = a * rng.uniform(0.02, 1.0)
        C = circulant_matrix(rng.uniform(b, a, M))
        amp = rng.uniform(0.2, 2.0)
        l, h1, h2, u = (S @ (amp * rng.standard_normal(n_modes))
                        for _ in range(4))
        d = h1 - h2
        s = h1 + h2
        nl, nd, ns, nu = l2(l), l2(d), l2(s), l2(u)

        checks = {
            "low_sq_cross": (l2(2.0 * l * (C @ (l * d))),
                             2.0 * a * nd * nl * nl),
            "diff_sum_cross": (l2(l * (C @ (d * s))), a * nd * ns * nl),
            "conv_low_sq": (l2(d * (C @ (l * l))), a * nd * nl * nl),
            "cubic_high_diff": (l2(h1 * (C @ (h1 * h1)) - h2 * (C @ (h2 * h2))),
                                a * nd * l2(h1) ** 2 + a * nd * ns * l2(h2)),
            "mixed_low_cross": (2.0 * l2(h1 * (C @ (l * h1))
                                         - h2 * (C @ (l * h2))),
                                2.0 * a * nd * ns * nl),
            "cubic_growth": (l2(u * (C @ (u * u))), a * nu ** 3),
            "coercivity": (b * (quad * float(np.sum(u * u))) ** 2,
                           quad * float(np.sum((u * u) * (C @ (u * u))))),
        }
        for name, (lhs, rhs) in checks.items():
            worst[name] = max(worst[name], lhs - rhs)

    fine = SpectralBasis(4, grid_size=2048)
    xg = fine.x
    targets = [np.sin(xg) + 0.5 * np.cos(2 * xg) + 0.3 * np.cos(3 * xg),
               (1.0 + np.sin(xg)) ** 2]
    c = bump_normalizer()
    bound_violation = -math.inf
    sup_errors = {}
    for delta in deltas:
        raw = mollifier_samples(delta, fine)
        bound_violation = max(bound_violation,
                              float(np.max(-raw)),
                              float(np.max(raw - c / delta ** 2)))
        Cd = circulant_matrix(mollifier_samples(delta, fine, unit_mass=True))
        sup_errors[delta] = max(float(np.max(np.abs(Cd @ f - f)))
                                for f in targets)

    errs = [sup_errors[d] for d in deltas]
    monotone = all(errs[i + 1] <= errs[i] + slack for i in range(len(errs) - 1))
    passed = (monotone and bound_violation <= slack
              and all(v <= slack for v in worst.values()))
    return BatteryReport(worst=worst, sup_errors=sup_errors,
                         bound_violation=bound_violation, slack=slack,
                         passed=passed)


# ---------------------------------------------------------------------------
# decay fitting

@dataclass(frozen=True)
class DecayFit:
    rate: float          # positive = decay per unit time
    prefactor: float
    goodness: float      # R^2 of the log-linear fit
    window: tuple        # (t_first, t_last)


def fit_exponential_decay(times, values=None):
    """Least squares of log(v) on t; v(t) ~ prefactor * exp(-rate * t)."""
    if values is None:
        arr = np.asarray(times, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("series must be (n, 2) time-value pairs")
        t, v = arr[:, 0], arr[:, 1]
    else:
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("times and values must be equal-length vectors")
    if t.shape[0] < 3:
        raise ValueError(f"need at least 3 points, got {t.shape[0]}")
    if np.any(v <= 0.0):
        raise FitDomainError("values must be positive for a log-linear fit")
    logv = np.log(v)
    slope, intercept = np.polyfit(t, logv, 1)
    resid = logv - (slope * t + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((logv - np.mean(logv)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return DecayFit(rate=float(-slope), prefactor=float(np.exp(intercept)),
                    goodness=r2, window=(float(t[0]), float(t[-1])))
