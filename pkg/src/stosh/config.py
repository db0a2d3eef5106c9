"""Flat key = value run configuration.

The file format is one `key = value` assignment per line; `#` starts a
comment, blank lines are skipped.  Unknown keys, duplicate keys, and
malformed values are rejected with the offending line number.  Times are in
model time units, seeds are unsigned 64-bit integers.

Initial conditions use a tiny grammar: `zero`, or a `+`-separated list of
`mode:<k>:<const|cos|sin>:<amplitude>` terms, e.g. `mode:1:cos:5.0`.
"""

import hashlib
import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .dynamics import KernelSpec, ModelParams
from .forcing import NoiseSpec
from .spectral import SpectralBasis, SpectralField

EXPERIMENTS = ("certify", "simulate", "slave", "couple", "ergodicity",
               "kernels")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _parse_experiment(s):
    if s not in EXPERIMENTS:
        raise ValueError(f"expected one of {', '.join(EXPERIMENTS)}")
    return s


def _parse_float_list(s):
    return tuple(float(tok) for tok in s.split(",") if tok.strip())


def _parse_seed(s):
    v = int(s, 0)
    if not 0 <= v < 2 ** 64:
        raise ValueError("seed must fit in unsigned 64 bits")
    return v


# key -> (parser, default); _REQUIRED means the experiment decides at
# validation time, None stays None when the key is absent.
_REQUIRED = object()

_SCHEMA = {
    "experiment": (_parse_experiment, _REQUIRED),
    "rho": (float, _REQUIRED),
    "nonlinearity": (str, "local"),
    "low_cutoff": (int, _REQUIRED),
    "max_wavenumber": (int, _REQUIRED),
    "grid_size": (int, None),
    "dt": (float, _REQUIRED),
    "horizon": (float, _REQUIRED),
    "ensemble_size": (int, 1),
    "snapshot_times": (_parse_float_list, None),
    "seed": (_parse_seed, _REQUIRED),
    "workers": (int, 1),
    "output_dir": (str, "out"),
    "forcing_amplitude": (float, 1.0),
    "forced_cutoff": (int, None),
    "init_1": (str, "zero"),
    "init_2": (str, None),
    "window_T": (float, 0.5),
    "window_count": (int, 8),
    "radius_r": (float, 3.0),
    "bound_D": (float, None),
    "alpha": (float, 1.0),
    "kernel_family": (str, None),
    "kernel_a": (float, None),
    "kernel_b": (float, None),
    "kernel_delta0": (float, None),
    "kernel_epsilon": (float, 0.1),
    "dense_stride": (int, 5),
}


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    rho: float
    nonlinearity: str
    low_cutoff: int
    max_wavenumber: int
    grid_size: int | None
    dt: float
    horizon: float
    ensemble_size: int
    snapshot_times: tuple
    seed: int
    workers: int
    output_dir: str
    forcing_amplitude: float
    forced_cutoff: int
    init_1: str
    init_2: str | None
    window_T: float
    window_count: int
    radius_r: float
    bound_D: float | None
    alpha: float
    kernel_family: str | None
    kernel_a: float | None
    kernel_b: float | None
    kernel_delta0: float | None
    kernel_epsilon: float
    dense_stride: int

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    def snapshot_steps(self):
        return tuple(int(round(t / self.dt)) for t in self.snapshot_times)

    def basis(self):
        return SpectralBasis(self.max_wavenumber, self.grid_size)

    def kernel(self, basis):
        if self.nonlinearity != "nonlocal":
            return None
        if self.kernel_family == "mollifier":
            return KernelSpec.mollifier(self.kernel_delta0, basis)
        samples = np.full(basis.grid_size, self.kernel_a)
        if self.kernel_family == "bounded_positive":
            return KernelSpec.bounded_positive(samples, self.kernel_a,
                                               self.kernel_b)
        return KernelSpec.custom(samples, self.kernel_a, self.kernel_b or 0.0)

    def model(self):
        basis = self.basis()
        params = ModelParams(rho=self.rho, nonlinearity=self.nonlinearity,
                             low_cutoff=self.low_cutoff, dt=self.dt,
                             basis=basis, kernel=self.kernel(basis))
        coeffs = np.zeros(basis.n_modes)
        n_forced = basis.low_mode_count(self.forced_cutoff)
        coeffs[:n_forced] = self.forcing_amplitude
        noise = NoiseSpec(basis=basis, coefficients=coeffs,
                          forced_cutoff=self.forced_cutoff, seed=self.seed)
        return params, noise

    def initial_field(self, which, basis):
        text = self.init_1 if which == 1 else self.init_2
        if text is None:
            raise ConfigError(f"init_{which} is required for this experiment")
        return parse_initial_condition(text, basis)

    def as_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def canonical_json(self):
        return json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))

    def content_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def parse_initial_condition(text, basis):
    """`zero` or `mode:<k>:<const|cos|sin>:<amp>` terms joined by `+`."""
    text = text.strip()
    if text == "zero":
        return SpectralField.zeros(basis)
    coeffs = np.zeros(basis.n_modes)
    for term in text.split("+"):
        parts = [p.strip() for p in term.strip().split(":")]
        if len(parts) != 4 or parts[0] != "mode":
            raise ConfigError(f"bad initial-condition term {term!r}; expected "
                              "'zero' or 'mode:<k>:<const|cos|sin>:<amp>'")
        try:
            k = int(parts[1])
            amp = float(parts[3])
            coeffs[basis.index_of(k, parts[2])] += amp
        except ValueError as e:
            raise ConfigError(f"bad initial-condition term {term!r}: {e}") from None
    return SpectralField(coeffs, basis)


def _on_grid(t, dt):
    s = round(t / dt)
    return abs(s * dt - t) <= 1e-9 * max(1.0, abs(t))


def parse_config(text, path="<config>"):
    """Parse and validate; raises ConfigError naming the offending line."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = body.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        parser, _ = _SCHEMA[key]
        try:
            raw[key] = parser(value)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {e}") from None

    values = {}
    for key, (_, default) in _SCHEMA.items():
        if key in raw:
            values[key] = raw[key]
        elif default is _REQUIRED:
            raise ConfigError(f"{path}: missing required key {key!r}")
        else:
            values[key] = default

    if values["forced_cutoff"] is None:
        values["forced_cutoff"] = values["low_cutoff"]
    if values["snapshot_times"] is None:
        values["snapshot_times"] = (values["horizon"],)

    cfg = RunConfig(**values)
    _validate(cfg, path)
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), path=str(path))


def _validate(cfg, path):
    def bad(msg):
        raise ConfigError(f"{path}: {msg}")

    if cfg.rho < 0:
        bad(f"rho must be nonnegative, got {cfg.rho}")
    if cfg.nonlinearity not in ("local", "nonlocal", "linear"):
        bad(f"nonlinearity must be local, nonlocal or linear, got {cfg.nonlinearity!r}")
    if cfg.dt <= 0:
        bad(f"dt must be positive, got {cfg.dt}")
    if cfg.horizon <= 0:
        bad(f"horizon must be positive, got {cfg.horizon}")
    if not _on_grid(cfg.horizon, cfg.dt):
        bad(f"horizon {cfg.horizon} is not a multiple of dt {cfg.dt}")
    if cfg.low_cutoff < 1:
        bad(f"low_cutoff must be >= 1, got {cfg.low_cutoff}")
    if cfg.max_wavenumber < cfg.low_cutoff:
        bad(f"max_wavenumber {cfg.max_wavenumber} below low_cutoff {cfg.low_cutoff}")
    if not 1 <= cfg.forced_cutoff <= cfg.max_wavenumber:
        bad(f"forced_cutoff {cfg.forced_cutoff} outside 1..{cfg.max_wavenumber}")
    if cfg.ensemble_size < 1:
        bad(f"ensemble_size must be >= 1, got {cfg.ensemble_size}")
    if cfg.workers < 1:
        bad(f"workers must be >= 1, got {cfg.workers}")
    if cfg.dense_stride < 1:
        bad(f"dense_stride must be >= 1, got {cfg.dense_stride}")
    if cfg.forcing_amplitude <= 0:
        bad(f"forcing_amplitude must be positive, got {cfg.forcing_amplitude}")
    for t in cfg.snapshot_times:
        if not 0.0 <= t <= cfg.horizon + 1e-12:
            bad(f"snapshot time {t} outside [0, horizon]")
        if not _on_grid(t, cfg.dt):
            bad(f"snapshot time {t} is not a multiple of dt {cfg.dt}")

    if cfg.nonlinearity == "nonlocal":
        if cfg.kernel_family not in ("bounded_positive", "mollifier"):
            bad("nonlocal runs need kernel_family = bounded_positive or mollifier")
        if cfg.kernel_family == "bounded_positive":
            if cfg.kernel_a is None or cfg.kernel_b is None:
                bad("bounded_positive kernel needs kernel_a and kernel_b")
            if cfg.kernel_a < cfg.kernel_b:
                bad(f"inconsistent kernel bounds: kernel_a {cfg.kernel_a} "
                    f"< kernel_b {cfg.kernel_b}")
            if cfg.kernel_b <= 0:
                bad(f"kernel_b must be positive, got {cfg.kernel_b}")
        else:
            if cfg.kernel_delta0 is None:
                bad("mollifier kernel needs kernel_delta0")
            if not 0.0 < cfg.kernel_delta0 < math.pi:
                bad(f"kernel_delta0 must lie in (0, pi), got {cfg.kernel_delta0}")

    if cfg.experiment in ("couple", "ergodicity") and cfg.init_2 is None:
        bad(f"experiment {cfg.experiment!r} needs init_2")
    if cfg.experiment == "couple":
        if not _on_grid(cfg.window_T, cfg.dt):
            bad(f"window_T {cfg.window_T} is not a multiple of dt {cfg.dt}")
        if cfg.window_T <= 0 or cfg.window_count < 1:
            bad("couple needs window_T > 0 and window_count >= 1")
    if cfg.alpha <= 0:
        bad(f"alpha must be positive, got {cfg.alpha}")
    if cfg.radius_r <= 0:
        bad(f"radius_r must be positive, got {cfg.radius_r}")
