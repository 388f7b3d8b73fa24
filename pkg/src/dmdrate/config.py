"""Experiment configuration: TOML files with typed key paths.

Grammar (every table and key is optional unless marked)::

    experiment = "kernels"        # required: kernels | floquet_kernels | population
                                  #           | gme | dmd_fit | compare
    [system]
    mode = "explicit"             # explicit | et_params
    H = [[1.0, 1.0], [1.0, -1.0]] # explicit: real part, basis (D, A)
    H_im = [[0.0, 0.0], [0.0, 0.0]]
    E0 = 1.5                      # et_params
    lambda = 0.2
    vbar = 1.0
    eps = 2.0
    Omega = 4.0

    [bath]
    beta = 1.0
    n_matsubara = 6
    [[bath.spectral]]             # one table per bath
    kind = "drude"                # drude: lambda, gamma; brownian: lambda, omega0, zeta
    lambda = 1.0
    gamma = 1.0
    coupling = "donor_gap"        # donor_gap | bridge

    [hierarchy]   depth, max_state
    [grids]       dt, t_end, t_snap, m
    [dmd]         policy (threshold | fixed), eps_rel, rank, delay, amp_method
    [floquet]     n_max, n_phase, tau_end, negative_check
    [population]  P_D0
    [gme]         flag_tol
    [compare]     a, b            # CSV paths for experiment = "compare"
    [dmd_fit]     input, dt       # CSV path for experiment = "dmd_fit"
    [output]      directory, spectra
    [run]         backend (auto | cython | python)

Validation reports every violation in one :class:`ConfigError`.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bath import BRIDGE, DONOR_GAP, SpectralDensity
from .errors import ConfigError
from .numerics import RankPolicy
from .propagator import DEFAULT_MAX_STATE, EtHamiltonian

EXPERIMENTS = ("kernels", "floquet_kernels", "population", "gme", "dmd_fit", "compare")

_REQ = object()
_NUM = (int, float)

# section -> key -> (accepted types, default)
SCHEMA = {
    "system": {
        "mode": (str, "explicit"), "H": (list, None), "H_im": (list, None),
        "E0": (_NUM, 0.0), "lambda": (_NUM, 0.0), "vbar": (_NUM, 1.0),
        "eps": (_NUM, 0.0), "Omega": (_NUM, 0.0),
    },
    "bath": {"beta": (_NUM, 1.0), "n_matsubara": (int, 6), "spectral": (list, None)},
    "hierarchy": {"depth": (int, 6), "max_state": (int, DEFAULT_MAX_STATE)},
    "grids": {"dt": (_NUM, 0.01), "t_end": (_NUM, None), "t_snap": (_NUM, None),
              "m": (int, 150)},
    "dmd": {"policy": (str, "threshold"), "eps_rel": (_NUM, 1e-10), "rank": (int, None),
            "delay": (int, 25), "amp_method": (str, "trajectory_lsq")},
    "floquet": {"n_max": (int, 3), "n_phase": (int, 32), "tau_end": (_NUM, None),
                "negative_check": (bool, True)},
    "population": {"P_D0": (_NUM, 1.0)},
    "gme": {"flag_tol": (_NUM, 1e-4)},
    "compare": {"a": (str, None), "b": (str, None)},
    "dmd_fit": {"input": (str, None), "dt": (_NUM, None)},
    "output": {"directory": (str, None), "spectra": (bool, True)},
    "run": {"backend": (str, "auto")},
}
_SPECTRAL = {"kind": (str, _REQ), "lambda": (_NUM, _REQ), "gamma": (_NUM, None),
             "omega0": (_NUM, None), "zeta": (_NUM, None), "coupling": (str, DONOR_GAP)}
# defaults the physics does not pin down; echoed loudly in every report
LOUD_DEFAULTS = (("bath", "beta"), ("system", "vbar"))


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict
    hamiltonian: EtHamiltonian | None = None
    densities: list = field(default_factory=list)
    policy: RankPolicy | None = None
    source: str = ""
    text: str = ""
    defaults_used: list = field(default_factory=list)

    def __getitem__(self, path):
        section, key = path.split(".")
        return self.values[section][key]

    @property
    def name(self):
        return Path(self.source).stem if self.source else "run"

    @property
    def t_grid(self):
        return self.grid(self["grids.t_end"])

    def grid(self, t_end, dt=None):
        dt = self["grids.dt"] if dt is None else dt
        n = int(round(t_end / dt)) + 1
        return np.arange(n) * dt

    def echo(self):
        """Resolved configuration plus the raw text it came from."""
        out = {"experiment": self.experiment, "source": self.source}
        out.update({k: dict(v) for k, v in self.values.items()})
        out["defaults_used"] = list(self.defaults_used)
        out["raw_text"] = self.text
        return out


def bundled_names():
    root = resources.files("dmdrate") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def resolve_path(name):
    """A filesystem path, or the name of a bundled config (``fig1`` / ``fig1.cfg``)."""
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[:-4] if p.name.endswith(".cfg") else p.name
    if p.parent == Path(".") and stem in bundled_names():
        return Path(str(resources.files("dmdrate") / "configs" / f"{stem}.cfg"))
    raise ConfigError(f"config file not found: {name}")


def load(path) -> ExperimentConfig:
    path = resolve_path(path)
    text = Path(path).read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML syntax error: {exc}") from None
    return parse(raw, source=str(path), text=text)


def _check(kind, v):
    if kind is _NUM:
        return isinstance(v, _NUM) and not isinstance(v, bool)
    if kind is int:
        return isinstance(v, int) and not isinstance(v, bool)
    return isinstance(v, kind)


def _fill(section, spec, given, problems, defaults_used):
    out = {}
    for key in given:
        if key not in spec:
            problems.append(f"{section}.{key}: unknown key")
    for key, (kind, default) in spec.items():
        if key in given:
            v = given[key]
            if not _check(kind, v):
                problems.append(f"{section}.{key}: expected {getattr(kind, '__name__', 'number')}, "
                                f"got {type(v).__name__}")
                v = None
            elif kind is _NUM:
                v = float(v)
            out[key] = v
        elif default is _REQ:
            problems.append(f"{section}.{key}: required")
            out[key] = None
        else:
            out[key] = default
            defaults_used.append(f"{section}.{key}")
    return out


def parse(raw: dict, source="", text="") -> ExperimentConfig:
    problems, defaults_used = [], []
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        problems.append(f"experiment: must be one of {', '.join(EXPERIMENTS)} (got {exp!r})")
    for key in raw:
        if key != "experiment" and key not in SCHEMA:
            problems.append(f"{key}: unknown section")
    values = {}
    for section, spec in SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            problems.append(f"{section}: expected a table")
            given = {}
        values[section] = _fill(section, spec, given, problems, defaults_used)
    cfg = ExperimentConfig(exp, values, source=source, text=text, defaults_used=defaults_used)
    if exp in ("compare", "dmd_fit"):
        _validate_files(cfg, problems)
    else:
        _validate_physics(cfg, raw, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def _validate_files(cfg, problems):
    v = cfg.values
    if cfg.experiment == "compare":
        for k in ("a", "b"):
            if not v["compare"][k]:
                problems.append(f"compare.{k}: required for experiment = \"compare\"")
    elif not v["dmd_fit"]["input"]:
        problems.append("dmd_fit.input: required for experiment = \"dmd_fit\"")
    _validate_dmd(cfg, problems)


def _validate_dmd(cfg, problems):
    d = cfg.values["dmd"]
    if d["policy"] == "fixed":
        if d["rank"] is None or d["rank"] < 1:
            problems.append("dmd.rank: a fixed rank policy needs rank >= 1")
        else:
            cfg.policy = RankPolicy.fixed(d["rank"])
    elif d["policy"] == "threshold":
        if d["eps_rel"] is not None and not 0 < d["eps_rel"] < 1:
            problems.append("dmd.eps_rel: must lie in (0, 1)")
        elif d["eps_rel"] is not None:
            cfg.policy = RankPolicy.threshold(d["eps_rel"])
    else:
        problems.append(f"dmd.policy: must be threshold or fixed (got {d['policy']!r})")
    if d["delay"] is not None and d["delay"] < 1:
        problems.append("dmd.delay: must be >= 1")
    if d["amp_method"] not in ("project", "trajectory_lsq"):
        problems.append("dmd.amp_method: must be project or trajectory_lsq")
    if cfg.values["run"]["backend"] not in ("auto", "cython", "python"):
        problems.append("run.backend: must be auto, cython or python")


def _validate_physics(cfg, raw, problems):
    v = cfg.values
    g = v["grids"]
    dt, t_end, m = g["dt"], g["t_end"], g["m"]
    if dt is not None and not dt > 0:
        problems.append("grids.dt: must be positive")
    if t_end is None:
        problems.append("grids.t_end: required")
    elif not t_end > 0:
        problems.append("grids.t_end: must be positive")
    if m is not None and m < 3:
        problems.append("grids.m: need at least 3 snapshots")
    if g["t_snap"] is None and dt and m:
        g["t_snap"] = m * dt
    t_snap = g["t_snap"]
    if None not in (t_snap, t_end) and t_snap > t_end:
        problems.append(f"grids.t_snap: snapshot window {t_snap:g} exceeds grids.t_end = {t_end:g}")
    if None not in (t_snap, dt, m) and dt > 0 and abs(m * dt - t_snap) > dt * (1 + 1e-9):
        problems.append(f"grids.m: m*dt = {m * dt:g} does not match grids.t_snap = {t_snap:g}")

    b = v["bath"]
    if b["beta"] is not None and not b["beta"] > 0:
        problems.append("bath.beta: must be positive")
    if b["n_matsubara"] is not None and b["n_matsubara"] < 0:
        problems.append("bath.n_matsubara: must be >= 0")
    specs = b["spectral"] or []
    if not specs:
        problems.append("bath.spectral: at least one spectral density is required")
    for i, s in enumerate(specs):
        where = f"bath.spectral[{i}]"
        if not isinstance(s, dict):
            problems.append(f"{where}: expected a table")
            continue
        sub = []
        s = _fill(where, _SPECTRAL, s, sub, [])
        problems.extend(sub)
        if sub:
            continue
        if s["coupling"] not in (DONOR_GAP, BRIDGE):
            problems.append(f"{where}.coupling: must be {DONOR_GAP} or {BRIDGE}")
        try:
            if s["kind"] == "drude":
                if s["gamma"] is None:
                    raise ValueError("drude needs gamma")
                J = SpectralDensity.drude(s["lambda"], s["gamma"])
            elif s["kind"] == "brownian":
                if s["omega0"] is None or s["zeta"] is None:
                    raise ValueError("brownian needs omega0 and zeta")
                J = SpectralDensity.brownian(s["lambda"], s["omega0"], s["zeta"])
            else:
                raise ValueError(f"kind must be drude or brownian (got {s['kind']!r})")
        except ValueError as exc:
            problems.append(f"{where}: {exc}")
            continue
        cfg.densities.append((J, s["coupling"]))
    b["spectral"] = [dict(J.to_dict(), coupling=c) for J, c in cfg.densities]

    h = v["hierarchy"]
    if h["depth"] is not None and h["depth"] < 1:
        problems.append("hierarchy.depth: must be >= 1")
    if h["max_state"] is not None and h["max_state"] < 4:
        problems.append("hierarchy.max_state: must be >= 4")

    s = v["system"]
    try:
        if s["mode"] == "explicit":
            if s["H"] is None:
                raise ValueError("system.H: required for mode = \"explicit\"")
            H = np.asarray(s["H"], dtype=float)
            if s["H_im"] is not None:
                H = H + 1j * np.asarray(s["H_im"], dtype=float)
            cfg.hamiltonian = EtHamiltonian.explicit(H)
        elif s["mode"] == "et_params":
            cfg.hamiltonian = EtHamiltonian.et_params(s["E0"], s["lambda"], s["vbar"],
                                                      s["eps"], s["Omega"])
        else:
            raise ValueError(f"system.mode: must be explicit or et_params (got {s['mode']!r})")
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        problems.append(msg if msg.startswith("system.") else f"system: {msg}")

    f = v["floquet"]
    if cfg.experiment == "floquet_kernels":
        if cfg.hamiltonian is not None and not cfg.hamiltonian.driven:
            problems.append("system.eps: floquet_kernels needs a driven system (eps != 0)")
        if f["n_max"] is not None and f["n_max"] < 0:
            problems.append("floquet.n_max: must be >= 0")
        if None not in (f["n_max"], f["n_phase"]) and f["n_phase"] < 2 * f["n_max"] + 1:
            problems.append(f"floquet.n_phase: {f['n_phase']} samples per period cannot resolve "
                            f"n_max = {f['n_max']} (need >= {2 * f['n_max'] + 1})")
        if f["tau_end"] is None:
            f["tau_end"] = t_end
        elif t_snap is not None and f["tau_end"] < t_snap:
            problems.append("floquet.tau_end: must cover the snapshot window")
    elif cfg.hamiltonian is not None and cfg.hamiltonian.driven:
        problems.append(f"system.eps: experiment {cfg.experiment!r} needs an undriven system")

    p0 = v["population"]["P_D0"]
    if p0 is not None and not 0.0 <= p0 <= 1.0:
        problems.append("population.P_D0: must lie in [0, 1]")
    if v["gme"]["flag_tol"] is not None and not v["gme"]["flag_tol"] > 0:
        problems.append("gme.flag_tol: must be positive")
    _validate_dmd(cfg, problems)
    for vals in (t_end, t_snap, dt):
        if vals is not None and not math.isfinite(vals):
            problems.append("grids: values must be finite")
            break
