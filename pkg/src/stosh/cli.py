"""Command-line front end.

Exit codes: 0 when the requested checks pass (or the command only reports),
2 when a check fails, 1 on configuration or runtime errors.  Every command
writes its outputs plus a manifest.json tying them to the config hash, the
seed, and the per-trajectory stream ids.
"""

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._engine import BACKEND
from .config import ConfigError, load_config
from .coupling import CouplingWindow
from .diagnostics import (FitDomainError, bl_distance_profile,
                          compute_certificates, energy_certificate,
                          fit_exponential_decay, kernel_inequality_battery,
                          mean_energy_bound, supermartingale_test)
from .dynamics import (KernelSpec, ModelParams, StepDiverged, integrate,
                       slave_high_modes)
from .ensemble import (TrajectoryDiverged, mean_energy_series, run_ensemble,
                       run_pair_ensemble, uncoupled_frequency)
from .manifest import RunManifest
from .spectral import SpectralField

FMT = "{:.17g}"


def _fmt(x):
    return FMT.format(float(x))


def _say(check, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'} {check}" + (f": {detail}" if detail else ""))
    return ok


def _manifest(cfg, command, outdir, streams, wall, outputs):
    man = RunManifest(command=command, config_hash=cfg.content_hash(),
                      seed=cfg.seed, stream_ids=list(map(int, streams)),
                      workers=cfg.workers, wall_seconds=wall)
    for p in outputs:
        man.add_output(p)
    man.write(outdir / "manifest.json")


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands

def cmd_certify(cfg, outdir):
    basis = cfg.basis()
    t0 = time.perf_counter()
    _, noise = cfg.model()

    local = ModelParams(rho=cfg.rho, nonlinearity="local",
                        low_cutoff=cfg.low_cutoff, dt=cfg.dt, basis=basis)
    report = {"rho": cfg.rho, "alpha": cfg.alpha,
              "local": compute_certificates(local, noise, cfg.alpha).as_dict(),
              "positive_kernel": None, "nonneg_kernel": None}

    if cfg.kernel_a is not None and cfg.kernel_b is not None:
        if cfg.kernel_a < cfg.kernel_b:
            raise ConfigError(f"inconsistent kernel bounds: kernel_a "
                              f"{cfg.kernel_a} < kernel_b {cfg.kernel_b}")
        kern = KernelSpec.bounded_positive(
            np.full(basis.grid_size, cfg.kernel_a), cfg.kernel_a, cfg.kernel_b)
        pk = ModelParams(rho=cfg.rho, nonlinearity="nonlocal",
                         low_cutoff=cfg.low_cutoff, dt=cfg.dt, basis=basis,
                         kernel=kern)
        report["positive_kernel"] = compute_certificates(pk, noise, cfg.alpha).as_dict()

    if cfg.kernel_delta0 is not None:
        kern = KernelSpec.mollifier(cfg.kernel_delta0, basis)
        nn = ModelParams(rho=cfg.rho, nonlinearity="nonlocal",
                         low_cutoff=cfg.low_cutoff, dt=cfg.dt, basis=basis,
                         kernel=kern)
        report["nonneg_kernel"] = compute_certificates(
            nn, noise, cfg.alpha, epsilon=cfg.kernel_epsilon).as_dict()

    out = outdir / "certify.json"
    _write_json(out, report)
    _manifest(cfg, "certify", outdir, [], time.perf_counter() - t0, [out])
    print(f"wrote {out}")
    return True


def cmd_simulate(cfg, outdir):
    t0 = time.perf_counter()
    params, noise = cfg.model()
    u0 = cfg.initial_field(1, params.basis)
    stats = run_ensemble(params, noise, u0, cfg.ensemble_size, cfg.n_steps,
                         cfg.snapshot_steps(), workers=cfg.workers,
                         dense_stride=cfg.dense_stride)

    csv_path = outdir / "ensemble.csv"
    low_names = [f"c_{k}_{p}" for k, p in params.basis.mode_table[:params.n_low]]
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("time,path,stream,normsq,l4q," + ",".join(low_names) + "\n")
        for i, t in enumerate(stats.times):
            for j in range(stats.count):
                row = [_fmt(t), str(j), str(int(stats.stream_ids[j])),
                       _fmt(stats.normsq[i, j]), _fmt(stats.l4q[i, j])]
                row += [_fmt(v) for v in stats.low_coeffs[i, j]]
                fh.write(",".join(row) + "\n")

    times, mean, se = mean_energy_series(stats)
    summary = {"backend": BACKEND, "count": stats.count,
               "times": list(times), "mean_normsq": list(mean),
               "stderr_normsq": list(se), "checks": {}}
    ok = True
    if params.nonlinearity != "linear":
        C1 = energy_certificate(params, noise, epsilon=cfg.kernel_epsilon)
        rep = supermartingale_test(stats, C1, cfg.radius_r)
        summary["checks"]["energy_envelope"] = {
            "C1": C1, "r": cfg.radius_r, "frequency": rep.frequency,
            "bound": rep.bound, "wilson": [rep.wilson_low, rep.wilson_high],
            "passed": rep.passed}
        ok &= _say("energy-envelope frequency", rep.passed,
                   f"{rep.frequency:.4f} vs exp(-r)={rep.bound:.4f}")
    if params.nonlinearity == "local":
        R = mean_energy_bound(params, noise, cfg.alpha)
        u0sq = float(u0.normsq())
        bound = np.exp(-cfg.alpha * times) * u0sq + R + 3.0 * se
        mean_ok = bool(np.all(mean <= bound))
        summary["checks"]["mean_energy"] = {
            "R": R, "alpha": cfg.alpha, "bound": list(bound), "passed": mean_ok}
        ok &= _say("mean-energy bound", mean_ok,
                   f"max excess {float(np.max(mean - bound)):.3e}")

    json_path = outdir / "summary.json"
    _write_json(json_path, summary)
    _manifest(cfg, "simulate", outdir, stats.stream_ids,
              time.perf_counter() - t0, [csv_path, json_path])
    return ok


def cmd_slave(cfg, outdir):
    t0 = time.perf_counter()
    params, noise = cfg.model()
    basis = params.basis
    n_low = params.n_low
    if basis.n_modes == n_low:
        raise ConfigError("slave needs max_wavenumber above low_cutoff")
    u0 = cfg.initial_field(1, basis)
    res = integrate(u0, params, noise, cfg.n_steps, record_states=True)

    rng = np.random.default_rng(cfg.seed)
    paths = []
    for _ in range(2):
        c = np.zeros(basis.n_modes)
        v = rng.standard_normal(basis.n_modes - n_low)
        c[n_low:] = v / np.linalg.norm(v) * rng.uniform(0.5, 1.0)
        paths.append(slave_high_modes(res.trajectory, SpectralField(c, basis),
                                      params))
    gap = np.sum((paths[0].coeffs - paths[1].coeffs) ** 2, axis=1)
    times = paths[0].times

    csv_path = outdir / "slave.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("time,gap_normsq\n")
        for t, g in zip(times, gap):
            fh.write(f"{_fmt(t)},{_fmt(g)}\n")

    keep = (gap >= 1e-24) & (gap <= 1e-4)
    fit = None
    if int(np.sum(keep)) >= 3:
        fit = fit_exponential_decay(times[keep], gap[keep])
    certs = compute_certificates(params, noise, cfg.alpha,
                                 epsilon=cfg.kernel_epsilon)
    doc = {"backend": BACKEND,
           "predicted_contraction": certs.predicted_contraction,
           "predicted_contraction_cutoff": certs.predicted_contraction_cutoff,
           "fit": None if fit is None else {
               "rate": fit.rate, "prefactor": fit.prefactor,
               "goodness": fit.goodness, "window": list(fit.window)}}
    json_path = outdir / "slave.json"
    _write_json(json_path, doc)
    _manifest(cfg, "slave", outdir, [noise.stream_id],
              time.perf_counter() - t0, [csv_path, json_path])
    if fit is not None:
        print(f"fitted gap decay rate {fit.rate:.6g} "
              f"(predicted {certs.predicted_contraction:.6g}, "
              f"R^2 {fit.goodness:.4f})")
    else:
        print("gap never entered the fit window; constants reported only")
    return True


def cmd_couple(cfg, outdir):
    t0 = time.perf_counter()
    params, noise = cfg.model()
    C1 = energy_certificate(params, noise, epsilon=cfg.kernel_epsilon)
    R = mean_energy_bound(params, noise, cfg.alpha) if params.nonlinearity == "local" else None
    D = cfg.bound_D
    if D is None:
        D = 2.0 * np.sqrt(R) if R is not None else 2.0 * np.sqrt(C1)
    window = CouplingWindow(T=cfg.window_T, count=cfg.window_count, D=D,
                            r=cfg.radius_r, C1=C1)
    u01 = cfg.initial_field(1, params.basis)
    u02 = cfg.initial_field(2, params.basis)
    summaries = run_pair_ensemble(params, window, noise, u01, u02,
                                  cfg.ensemble_size, workers=cfg.workers)

    jsonl_path = outdir / "pairs.jsonl"
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for s in summaries:
            for w in range(window.count):
                fh.write(json.dumps({
                    "pair": s.pair_id, "stream": s.stream_id, "window": w + 1,
                    "label": s.labels[w].render(),
                    "drift_energy": s.drift_energies[w],
                    "log_weight": s.log_weights[w],
                    "boundary_distance": s.boundary_distances[w + 1],
                }) + "\n")

    ok = True
    outputs = [jsonl_path]
    max_resid = max(s.max_gap_residual for s in summaries)
    ok &= _say("post-coupling gap residual", max_resid <= 1e-10,
               f"max {max_resid:.3e}")
    if cfg.ensemble_size >= 100 and window.count >= 3:
        freq = uncoupled_frequency(summaries)
        ks = [k for k in sorted(freq) if k >= 2]
        fit = fit_exponential_decay(np.array(ks, float),
                                    np.array([freq[k][0] for k in ks]))
        table = {str(k): {"frequency": freq[k][0], "wilson_low": freq[k][1],
                          "wilson_high": freq[k][2]} for k in sorted(freq)}
        doc = {"window_T": window.T, "D": D, "r": window.r, "C1": C1,
               "count": cfg.ensemble_size, "frequencies": table,
               "fit": {"log_slope": -fit.rate, "goodness": fit.goodness}}
        freq_path = outdir / "frequencies.json"
        _write_json(freq_path, doc)
        outputs.append(freq_path)
        ok &= _say("still-uncoupled trend", fit.rate > 0.0,
                   f"log-slope {-fit.rate:.4f} over k={ks[0]}..{ks[-1]}")
    else:
        print("ensemble too small for the frequency table (need >= 100 pairs)")

    _manifest(cfg, "couple", outdir, [s.stream_id for s in summaries],
              time.perf_counter() - t0, outputs)
    return ok


def cmd_ergodicity(cfg, outdir):
    t0 = time.perf_counter()
    params, noise = cfg.model()
    u0a = cfg.initial_field(1, params.basis)
    u0b = cfg.initial_field(2, params.basis)
    kw = dict(workers=cfg.workers, dense_stride=cfg.dense_stride)
    ens_a = run_ensemble(params, noise, u0a, cfg.ensemble_size, cfg.n_steps,
                         cfg.snapshot_steps(), **kw)
    ens_b = run_ensemble(params, noise, u0b, cfg.ensemble_size, cfg.n_steps,
                         cfg.snapshot_steps(), **kw)

    profiles = {t: bl_distance_profile(ens_a, ens_b, t) for t in ens_a.times}
    names = list(next(iter(profiles.values())).keys())
    csv_path = outdir / "distance.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("time,bl_max," + ",".join(names) + "\n")
        for t in ens_a.times:
            prof = profiles[t]
            top = max(prof.values())
            fh.write(",".join([_fmt(t), _fmt(top)]
                              + [_fmt(prof[n]) for n in names]) + "\n")

    pos = [(float(t), max(profiles[t].values())) for t in ens_a.times if t > 0]
    doc = {"backend": BACKEND, "count": cfg.ensemble_size,
           "distances": {str(t): max(p.values()) for t, p in profiles.items()}}
    ok = True
    if len(pos) >= 3 and max(d for _, d in pos) > 1e-12:
        try:
            fit = fit_exponential_decay(np.array([t for t, _ in pos]),
                                        np.array([d for _, d in pos]))
            doc["fit"] = {"rate": fit.rate, "goodness": fit.goodness,
                          "window": list(fit.window)}
            ok &= _say("distance decay slope", fit.rate > 0.0,
                       f"rate {fit.rate:.4f}, R^2 {fit.goodness:.3f}")
        except FitDomainError:
            doc["fit"] = None
            ok &= _say("distance decay slope", False,
                       "nonpositive distance inside the fit window")
    else:
        doc["fit"] = None
        print("distances degenerate or too few positive-time snapshots; "
              "no decay fit")
    json_path = outdir / "fit.json"
    _write_json(json_path, doc)
    _manifest(cfg, "ergodicity", outdir, ens_a.stream_ids,
              time.perf_counter() - t0, [csv_path, json_path])
    return ok


def cmd_kernels(cfg, outdir):
    t0 = time.perf_counter()
    report = kernel_inequality_battery(n_triples=1000, seed=cfg.seed)
    doc = {"worst": report.worst,
           "sup_errors": {str(d): e for d, e in report.sup_errors.items()},
           "bound_violation": report.bound_violation,
           "slack": report.slack, "passed": report.passed}
    out = outdir / "kernels.json"
    _write_json(out, doc)
    _manifest(cfg, "kernels", outdir, [], time.perf_counter() - t0, [out])
    worst = max(report.worst.values())
    return _say("kernel inequality battery", report.passed,
                f"worst excess {worst:.3e}, bound violation "
                f"{report.bound_violation:.3e}")


_DISPATCH = {
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "slave": cmd_slave,
    "couple": cmd_couple,
    "ergodicity": cmd_ergodicity,
    "kernels": cmd_kernels,
}


def _build_parser():
    p = argparse.ArgumentParser(
        prog="stosh",
        description="Spectral simulation and ergodicity checks for the "
                    "stochastically forced Swift-Hohenberg models.")
    p.add_argument("--version", action="version", version=f"stosh {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "certify": "compute energy certificates and mode-count thresholds",
        "simulate": "run an ensemble and check the energy bounds",
        "slave": "contract two high-mode states under a shared low path",
        "couple": "bound-couple trajectory pairs and tabulate coupling sets",
        "ergodicity": "two-ensemble distribution distance decay",
        "kernels": "kernel inequality battery",
    }
    for name, h in helps.items():
        q = sub.add_parser(name, help=h)
        q.add_argument("--config", required=True, help="path to the run config")
        q.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                       help="override the config seed")
        q.add_argument("--workers", type=int, default=None,
                       help="override the worker count")
        q.add_argument("--out", default=None, help="override the output directory")
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        overrides = {"experiment": args.command}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.workers is not None:
            overrides["workers"] = args.workers
        if args.out is not None:
            overrides["output_dir"] = args.out
        cfg = replace(cfg, **overrides)
        outdir = Path(cfg.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        ok = _DISPATCH[args.command](cfg, outdir)
        return 0 if ok else 2
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (TrajectoryDiverged, StepDiverged) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
