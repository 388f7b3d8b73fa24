"""Config-driven experiment runner.

Usage::

    dmdrate run <config> [--output DIR] [--depth-check]
    dmdrate compare <a.csv> <b.csv> [--output metrics.json]

``<config>`` is a path or the name of a bundled config (``fig1``, ``fig2``,
``fig3``, ``fig6``). Set ``DMDRATE_NUM_THREADS`` to propagate independent
kernel columns on several threads. Exit codes: 0 success, 2 config error,
3 numerical failure, 4 capacity. Failures print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend, config as cfgmod
from .bath import correlation_expansion
from .dmd import SnapshotSet, fit, predict_steps, reconstruction_error
from .errors import CapacityError, ConfigError, DmdRateError, GridError
from .gme import (solve_gme, solve_population, solve_population_floquet, tensor_from_dmd)
from .kernels import (POP_LABELS, POPULATION, SYSTEM, TENSOR_LABELS, FloquetKernelSet,
                      KernelSeries, ProjectorKind, dc_component, extract_floquet_kernels,
                      extract_kernel, kernel_fft, snap_dt, tensor_relations)
from .propagator import build_hierarchy, donor_population
from .series_io import compare as compare_files
from .series_io import read_series, series_metrics, write_json, write_series

log = logging.getLogger("dmdrate")

RHO_LABELS = ("rho_DD", "rho_DA", "rho_AD", "rho_AA")


@dataclass
class RunReport:
    data: dict
    out_dir: Path
    files: list = field(default_factory=list)

    @property
    def path(self):
        return self.out_dir / "report.json"


class _Timer:
    def __init__(self):
        self.t = {}

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        yield
        self.t[name] = self.t.get(name, 0.0) + time.perf_counter() - t0


def build_space(cfg, depth=None):
    b = cfg.values["bath"]
    exps = [correlation_expansion(J, b["beta"], b["n_matsubara"], coupling)
            for J, coupling in cfg.densities]
    L = cfg["hierarchy.depth"] if depth is None else depth
    return build_hierarchy(exps, L, cfg["hierarchy.max_state"]), exps


def fit_dmd(cfg, X, dt):
    """DMD on the first ``grids.m`` columns of ``X``."""
    m = cfg["grids.m"]
    if X.shape[1] < m:
        raise ConfigError(f"grids.m: {m} snapshots requested but only {X.shape[1]} samples exist")
    delay = min(cfg["dmd.delay"], m - 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fit(SnapshotSet(X[:, :m], dt), cfg.policy, cfg["dmd.amp_method"], delay)


def _backend_name(cfg):
    b = cfg.values["run"]["backend"]
    return None if b == "auto" else b


def _variant_metrics(variants, ref, labels, dt):
    out = {}
    for name, series in variants.items():
        out[name] = {lab: series_metrics(series[lab], ref[lab], dt) for lab in labels}
    return out


def _finite_or_none(x):
    return x if np.all(np.isfinite(x)) else None


def _header(cfg, space, exps):
    b = cfg.values["bath"]
    loud = {}
    for section, key in cfgmod.LOUD_DEFAULTS:
        path = f"{section}.{key}"
        if path == "system.vbar" and cfg["system.mode"] != "et_params":
            continue
        loud[path] = {"value": cfg[path], "defaulted": path in cfg.defaults_used}
        if path in cfg.defaults_used:
            log.warning("%s not set; using default %s", path, cfg[path])
    return {
        "experiment": cfg.experiment,
        "config": cfg.echo(),
        "loud_defaults": loud,
        "beta": b["beta"],
        "vbar": cfg["system.vbar"] if cfg["system.mode"] == "et_params" else None,
        "backend": _backend_name(cfg) or _backend.NAME,
        "hierarchy": {"depth": space.depth, "n_ado": space.n_ado, "n_terms": space.n_terms,
                      "n_matsubara": b["n_matsubara"],
                      "c0_residuals": [e.c0_residual for e in exps]},
    }


def _dmd_info(model, snaps=None):
    info = {"rank": model.rank, "delay": model.delay,
            "max_abs_eig": float(np.abs(model.disc_eigs).max()) if model.rank else 0.0}
    if snaps is not None:
        info["window_error"] = reconstruction_error(model, snaps)
    return info


def _population_kernels(cfg, space, timer, files, out):
    """Reference, snapshot (zero-padded) and DMD population kernels on ``[0, t_end]``."""
    H = cfg.hamiltonian
    t = cfg.t_grid
    dt = cfg["grids.dt"]
    with timer("extract_kernels"):
        ref = extract_kernel(space, H, ProjectorKind(POPULATION), t)
    X = ref.stack(list(POP_LABELS))
    with timer("dmd_fit"):
        model = fit_dmd(cfg, X, dt)
    pred = predict_steps(model, len(t))
    dmd = KernelSeries(t, {lab: pred[i] for i, lab in enumerate(POP_LABELS)},
                       {"source": "dmd"})
    snaps = ref.window(cfg["grids.m"]).zero_padded(t)
    variants = {"reference": ref, "snapshots": snaps, "dmd": dmd}
    for name, s in variants.items():
        files.append(write_series(out / f"kernels_{name}.csv", t, s.comp))
    model.save(out / "dmd_model.json")
    files.append(str(out / "dmd_model.json"))
    return ref, snaps, dmd, model


def run_kernels(cfg, out, timer, files):
    space, exps = build_space(cfg)
    report = _header(cfg, space, exps)
    ref, snaps, dmd, model = _population_kernels(cfg, space, timer, files, out)
    dt = cfg["grids.dt"]
    X = ref.stack(list(POP_LABELS))
    report["dmd"] = _dmd_info(model, SnapshotSet(X[:, :cfg["grids.m"]], dt))
    variants = {"snapshots": snaps, "dmd": dmd}
    report["metrics"] = _variant_metrics({k: v.comp for k, v in variants.items()}, ref.comp,
                                         POP_LABELS, dt)
    dc = {}
    for lab in POP_LABELS:
        r = dc_component(ref, lab)
        dc[lab] = {"reference": abs(r),
                   "snapshots_dev": abs(dc_component(snaps, lab) - r),
                   "dmd_dev": abs(dc_component(dmd, lab) - r)}
    report["dc"] = dc
    if cfg["output.spectra"]:
        for name, s in (("reference", ref), ("snapshots", snaps), ("dmd", dmd)):
            omega, spec = kernel_fft(s, list(POP_LABELS))
            files.append(write_series(out / f"spectra_{name}.csv", omega, spec, grid_name="omega"))
    with timer("direct_propagation"):
        _, rhos = donor_population(space, cfg.hamiltonian, cfg.t_grid)
    report["drift"] = _rho_drift(rhos)
    report["drift"]["kernel_imag_max"] = float(np.abs(X.imag).max())
    return report


def _rho_drift(rhos):
    tr = rhos[:, 0, 0] + rhos[:, 1, 1]
    return {"trace": float(np.abs(tr - 1).max()),
            "hermiticity": float(np.abs(rhos - rhos.conj().transpose(0, 2, 1)).max())}


def run_population(cfg, out, timer, files):
    space, exps = build_space(cfg)
    report = _header(cfg, space, exps)
    ref, snaps, dmd, model = _population_kernels(cfg, space, timer, files, out)
    report["dmd"] = _dmd_info(model)
    t = cfg.t_grid
    p0 = cfg["population.P_D0"]
    be = _backend_name(cfg)
    with timer("direct_propagation"):
        P_direct, rhos = donor_population(space, cfg.hamiltonian, t)
    with timer("rate_equation"):
        pops = {"direct": P_direct,
                "reference": solve_population(ref, p0, t, be).P_D,
                "snapshots": solve_population(snaps, p0, t, be).P_D,
                "dmd": solve_population(model, p0, t, be).P_D}
    if p0 != 1.0:
        log.warning("direct propagation always starts on the donor; P_D0=%g only affects "
                    "the rate-equation curves", p0)
    cols = {f"P_D_{k}": v for k, v in pops.items()}
    files.append(write_series(out / "population.csv", t, cols, real=tuple(cols)))
    dt = cfg["grids.dt"]
    report["metrics"] = {k: series_metrics(v, P_direct, dt)
                         for k, v in pops.items() if k != "direct"}
    report["drift"] = _rho_drift(rhos)
    return report


def run_gme(cfg, out, timer, files):
    space, exps = build_space(cfg)
    report = _header(cfg, space, exps)
    H = cfg.hamiltonian
    t = cfg.t_grid
    dt = cfg["grids.dt"]
    n = len(t)
    be = _backend_name(cfg)
    with timer("extract_tensor"):
        ref = extract_kernel(space, H, ProjectorKind(SYSTEM), t)
    X = ref.stack(list(TENSOR_LABELS))
    with timer("dmd_fit"):
        model = fit_dmd(cfg, X, dt)
    report["dmd"] = _dmd_info(model)
    model.save(out / "dmd_model_tensor.json")
    files.append(str(out / "dmd_model_tensor.json"))
    dmd_T = tensor_from_dmd(model, TENSOR_LABELS, n)
    files.append(write_series(out / "kernel_tensor_reference.csv", t, ref.comp))
    files.append(write_series(out / "kernel_tensor_dmd.csv", t,
                              {lab: dmd_T[:, i // 4, i % 4] for i, lab in enumerate(TENSOR_LABELS)}))
    pref, _, pdmd, pmodel = _population_kernels(cfg, space, timer, files, out)

    rho0 = np.array([[1, 0], [0, 0]], dtype=complex)
    flag_tol = cfg["gme.flag_tol"]
    with timer("gme"):
        g_ref = solve_gme(ref, H, rho0, t, be, flag_tol)
        g_dmd = solve_gme(dmd_T, H, rho0, t, be, flag_tol)
    with timer("direct_propagation"):
        P_direct, rhos = donor_population(space, H, t)
    with timer("rate_equation"):
        p_ref = solve_population(pref, 1.0, t, be).P_D
        p_dmd = solve_population(pmodel, 1.0, t, be).P_D
    traj = {"direct": rhos, "reference": g_ref.rho, "dmd": g_dmd.rho}
    for name, rho in traj.items():
        files.append(write_series(out / f"rho_{name}.csv", t,
                                  {lab: rho[:, i // 2, i % 2] for i, lab in enumerate(RHO_LABELS)}))
    pops = {"P_D_direct": P_direct, "P_D_rate_reference": p_ref, "P_D_rate_dmd": p_dmd,
            "rho_DD_gme_reference": g_ref.P_D, "rho_DD_gme_dmd": g_dmd.P_D}
    files.append(write_series(out / "population.csv", t, pops, real=tuple(pops)))
    drift = {"reference": g_ref.meta["drift"], "dmd": g_dmd.meta["drift"],
             "direct": _rho_drift(rhos)}
    flags = {"reference": g_ref.meta["flags"], "dmd": g_dmd.meta["flags"]}
    files.append(write_json(out / "gme_invariants.json", {"drift": drift, "flags": flags}))
    report["drift"] = drift
    report["flags"] = flags
    report["relations"] = tensor_relations(ref)
    report["metrics"] = {
        "gme_vs_rate_reference_max_abs": float(np.abs(g_ref.P_D - p_ref).max()),
        "gme_vs_rate_dmd_max_abs": float(np.abs(g_dmd.P_D - p_dmd).max()),
        "gme_reference_vs_direct_max_abs": float(np.abs(g_ref.P_D - P_direct).max()),
        "gme_dmd_vs_direct_max_abs": float(np.abs(g_dmd.P_D - P_direct).max()),
        "coherence_dmd_vs_reference_max_abs": float(np.abs(g_dmd.rho[:, 0, 1].imag
                                                           - g_ref.rho[:, 0, 1].imag).max()),
        "im_rho_DA_final": {k: float(abs(v[-1, 0, 1].imag)) for k, v in traj.items()},
        "tensor_dmd": {lab: series_metrics(dmd_T[:, i // 4, i % 4], ref.comp[lab], dt)
                       for i, lab in enumerate(TENSOR_LABELS)},
    }
    return report


def _limit_cycle(t, P, period, after):
    """max |P(t + T0) - P(t)| over ``t > after``."""
    dt = t[1] - t[0]
    step = int(round(period / dt))
    i0 = int(math.floor(after / dt)) + 1
    if i0 + step >= len(t):
        return None
    d = np.abs(P[i0 + step:] - P[i0:-step])
    return float(d.max()) if np.all(np.isfinite(d)) else None


def run_floquet(cfg, out, timer, files):
    space, exps = build_space(cfg)
    report = _header(cfg, space, exps)
    H = cfg.hamiltonian
    T0 = H.period
    dt = snap_dt(cfg["grids.dt"], T0)
    if dt != cfg["grids.dt"]:
        log.info("dt snapped from %g to %.10g (period / %d)", cfg["grids.dt"], dt, round(T0 / dt))
    tau = cfg.grid(cfg["floquet.tau_end"], dt)
    t = cfg.grid(cfg["grids.t_end"], dt)
    n_max = cfg["floquet.n_max"]
    be = _backend_name(cfg)
    with timer("extract_floquet"):
        fs = extract_floquet_kernels(space, H, tau, n_max, cfg["floquet.n_phase"],
                                     negative_check=cfg["floquet.negative_check"])
    report["grid"] = {"dt": dt, "period": T0, "steps_per_period": int(round(T0 / dt))}
    for h in range(n_max + 1):
        files.append(write_series(out / f"floquet_k{h}_reference.csv", tau,
                                  {lab: fs.comps[(h, lab)] for lab in POP_LABELS}))
    harm = {}
    for lab in POP_LABELS:
        harm[lab] = [float(np.abs(fs.comps[(h, lab)]).max()) for h in range(n_max + 1)]
    report["harmonics"] = {
        "max_abs": harm,
        "strictly_decreasing": {lab: bool(np.all(np.diff(v) < 0)) for lab, v in harm.items()},
    }
    if cfg["floquet.negative_check"] and n_max >= 1:
        files.append(write_series(out / "floquet_km1_reference.csv", tau,
                                  {lab: fs.comps[(-1, lab)] for lab in POP_LABELS}))
        report["harmonics"]["k_minus1_vs_conj_k1"] = max(
            float(np.abs(fs.comps[(-1, lab)] - fs.comps[(1, lab)].conj()).max())
            for lab in POP_LABELS)

    # per-harmonic DMD on the snapshot window, extended over the population grid
    n_t = len(t)
    dmd_comps, dmd_info, dmd_err = {}, {}, {}
    with timer("dmd_fit"):
        for h in range(n_max + 1):
            X = np.array([fs.comps[(h, lab)] for lab in POP_LABELS])
            model = fit_dmd(cfg, X, dt)
            model.save(out / f"dmd_model_k{h}.json")
            files.append(str(out / f"dmd_model_k{h}.json"))
            with np.errstate(over="ignore", invalid="ignore"):
                pred = predict_steps(model, max(n_t, len(tau)))
            for i, lab in enumerate(POP_LABELS):
                dmd_comps[(h, lab)] = pred[i]
            dmd_info[h] = _dmd_info(model)
            with np.errstate(over="ignore", invalid="ignore"):
                e = np.linalg.norm(pred[:, :len(tau)] - X) / np.linalg.norm(X)
            dmd_err[h] = float(e) if np.isfinite(e) else None
            cols = {lab: pred[i, :len(tau)] for i, lab in enumerate(POP_LABELS)}
            if all(np.all(np.isfinite(c)) for c in cols.values()):
                files.append(write_series(out / f"floquet_k{h}_dmd.csv", tau, cols))
    report["dmd"] = {"per_harmonic": dmd_info, "rel_l2_vs_reference": dmd_err}

    # populations: direct, reference harmonics (zero-padded past tau_end), DMD harmonics
    def padded(comps, n):
        out_c = {}
        for k, v in comps.items():
            z = np.zeros(n, dtype=complex)
            z[:min(n, len(v))] = v[:n]
            out_c[k] = z
        return out_c

    fs_ref = FloquetKernelSet(t, n_max, H.Omega,
                              padded({k: v for k, v in fs.comps.items() if k[0] >= 0}, n_t),
                              {"zero_padded_after": float(tau[-1])})
    fs_dmd = FloquetKernelSet(t, n_max, H.Omega, {k: v[:n_t] for k, v in dmd_comps.items()})
    with timer("direct_propagation"):
        P_direct, rhos = donor_population(space, H, t)
    with timer("rate_equation"):
        P_ref = solve_population_floquet(fs_ref, 1.0, t, backend=be).P_D
        with np.errstate(all="ignore"):
            P_dmd = solve_population_floquet(fs_dmd, 1.0, t, backend=be).P_D
        trunc = {}
        for nm in range(n_max):
            P_n = solve_population_floquet(fs_ref, 1.0, t, n_max=nm, backend=be).P_D
            trunc[nm] = float(np.abs(P_n - P_ref).max())
    pops = {"P_D_direct": P_direct, "P_D_reference": P_ref}
    dmd_ok = bool(np.all(np.isfinite(P_dmd)) and np.abs(P_dmd).max() < 1e6)
    if dmd_ok:
        pops["P_D_dmd"] = P_dmd
    files.append(write_series(out / "population.csv", t, pops, real=tuple(pops)))
    rel_n = float(np.abs(fs.comps[(n_max, "k_DD")]).max() / np.abs(fs.comps[(0, "k_DD")]).max())
    report["population"] = {
        "reference_kernel_zero_padded_after": float(tau[-1]),
        "reference_vs_direct_max_abs": float(np.abs(P_ref - P_direct).max()),
        "dmd_status": "ok" if dmd_ok else "diverged",
        "dmd_vs_direct_max_abs": float(np.abs(P_dmd - P_direct).max()) if dmd_ok else None,
        "limit_cycle_after": 10 * T0,
        "limit_cycle_dev": {"direct": _limit_cycle(t, P_direct, T0, 10 * T0),
                            "reference": _limit_cycle(t, P_ref, T0, 10 * T0),
                            "dmd": _limit_cycle(t, P_dmd, T0, 10 * T0) if dmd_ok else None},
        "truncation_change_vs_n_max": trunc,
        "top_harmonic_relative_magnitude": rel_n,
    }
    report["drift"] = _rho_drift(rhos)
    return report


def run_dmd_fit(cfg, out, timer, files):
    grid_name, g, comps = read_series(cfg["dmd_fit.input"])
    dt = cfg["dmd_fit.dt"] or float(g[1] - g[0])
    if not np.allclose(np.diff(g), dt, rtol=1e-9, atol=1e-12):
        raise GridError("dmd_fit.input must be sampled on a uniform grid")
    labels = list(comps)
    X = np.array([comps[k] for k in labels])
    with timer("dmd_fit"):
        model = fit_dmd(cfg, X, dt)
    pred = predict_steps(model, len(g))
    model.save(out / "dmd_model.json")
    files.append(str(out / "dmd_model.json"))
    files.append(write_series(out / "dmd_prediction.csv", g,
                              {k: pred[i] for i, k in enumerate(labels)}, grid_name=grid_name))
    m = cfg["grids.m"]
    return {
        "experiment": "dmd_fit",
        "config": cfg.echo(),
        "backend": _backend.NAME,
        "dmd": _dmd_info(model, SnapshotSet(X[:, :m], dt)),
        "metrics": {k: series_metrics(pred[i], X[i], dt) for i, k in enumerate(labels)},
    }


def run_compare(cfg, out, timer, files):
    metrics = compare_files(cfg["compare.a"], cfg["compare.b"])
    files.append(write_json(out / "compare.json", metrics))
    return {"experiment": "compare", "config": cfg.echo(), "metrics": metrics}


RUNNERS = {"kernels": run_kernels, "population": run_population, "gme": run_gme,
           "floquet_kernels": run_floquet, "dmd_fit": run_dmd_fit, "compare": run_compare}


def depth_convergence(cfg, horizon=None, n_phase=None):
    """Relative L2 change of the primary kernel between depth ``L`` and ``L + 2``."""
    L = cfg["hierarchy.depth"]
    H = cfg.hamiltonian
    horizon = cfg["grids.t_end"] if horizon is None else horizon
    series = []
    for depth in (L, L + 2):
        space, _ = build_space(cfg, depth)
        if H.driven:
            dt = snap_dt(cfg["grids.dt"], H.period)
            tau = cfg.grid(horizon, dt)
            fs = extract_floquet_kernels(space, H, tau, cfg["floquet.n_max"],
                                         n_phase or cfg["floquet.n_phase"])
            series.append(np.array([fs.comps[k] for k in sorted(fs.comps)]))
        else:
            proj = SYSTEM if cfg.experiment == "gme" else POPULATION
            ks = extract_kernel(space, H, ProjectorKind(proj), cfg.grid(horizon))
            series.append(ks.stack())
    a, b = series
    return {"depth": L, "depth_plus_2": L + 2, "horizon": horizon,
            "rel_l2": float(np.linalg.norm(a - b) / np.linalg.norm(b))}


def run(config_path, output=None, depth_check=False) -> RunReport:
    """Run one experiment; write CSVs, model JSON and ``report.json``."""
    cfg = cfgmod.load(config_path)
    out = Path(output or cfg.values["output"]["directory"] or Path("runs") / cfg.name)
    out.mkdir(parents=True, exist_ok=True)
    timer = _Timer()
    files = []
    with timer("total"):
        data = RUNNERS[cfg.experiment](cfg, out, timer, files)
        if depth_check and cfg.experiment not in ("compare", "dmd_fit"):
            with timer("depth_check"):
                data["depth_convergence"] = depth_convergence(cfg)
    data["files"] = [str(Path(f).name) for f in files]
    data["output_directory"] = str(out)
    data["timings"] = timer.t
    report = RunReport(data, out, files)
    write_json(report.path, data)
    return report


def _fail(exc, code):
    kind = {2: "config", 3: "numerical", 4: "capacity"}[code]
    rec = {"error": kind, "exit_code": code, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        rec["problems"] = exc.problems
    print(json.dumps(rec), file=sys.stderr)
    return code


def main(argv=None):
    parser = argparse.ArgumentParser(prog="dmdrate", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output", help="output directory (overrides output.directory)")
    p_run.add_argument("--depth-check", action="store_true",
                       help="also compare the primary kernel at depth L and L+2")
    p_cmp = sub.add_parser("compare", help="compare two series CSV files")
    p_cmp.add_argument("a")
    p_cmp.add_argument("b")
    p_cmp.add_argument("--output", help="write the metrics JSON here as well as to stdout")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "run":
            report = run(args.config, args.output, args.depth_check)
            print(report.path)
        else:
            metrics = compare_files(args.a, args.b)
            if args.output:
                write_json(args.output, metrics)
            print(json.dumps(metrics, indent=1))
    except ConfigError as exc:
        return _fail(exc, 2)
    except CapacityError as exc:
        return _fail(exc, 4)
    except (DmdRateError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(exc, 3)
    except (OSError, ValueError) as exc:
        # unreadable inputs and rejected parameters are configuration problems
        return _fail(ConfigError(str(exc)), 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
