"""JSON experiment configuration with dotted-path overrides.

A config is resolved in layers: built-in defaults, per-experiment defaults,
the user's JSON file, then ``--set key=value`` overrides.  The resolved tree is
hashed (SHA-256 of canonical JSON) and that hash is stamped on every output.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .dynamics import TimeGrid
from .errors import ConfigurationError
from .model import SystemParams

EXPERIMENTS = ("two-phonon", "cat", "robustness", "sweep")

DEFAULTS: dict[str, Any] = {
    "experiment": None,
    "params": {
        # design block: omega2 and mu follow from delta and the two-phonon offset
        "g0": 1.0e6,
        "delta": 5.0e6,
        "omega_m": 5.0e9,
        "offset_in_g": -1.0,
        "omega1": 193.4e12,
        # explicit optics; when both are set they replace the design block
        "omega2": None,
        "mu": None,
        "omega3": None,
        "allow_omega3_mismatch": False,
        "kappa": 0.0,
        "gamma": 0.0,
        "n_th": 0.0,
        "temperature": None,
        "alpha": 3.0,
        "n_photons": 1,
    },
    "grid": {"t_start": 0.0, "t_end": 10.0e-6, "n_samples": 400, "rtol": 1e-8},
    "hilbert": {"mech_dim": None, "optical_dim": None, "tail_tol": 1e-12},
    "measurement": {"record": "max"},
    "regime": {"delta_over_g0": 5.0, "omega_m_over_delta": 100.0, "enforce": True},
    "two_phonon": {"target_time": 7.07e-6, "substep": None},
    "cat": {
        "n_values": [1, 2, 3, 5],
        # snapshot times as multiples of g t = pi / (n + 1)
        "ladder": [0.5, 1.0],
        "fit_ladder": 1.0,
        "wigner_extent": 5.5,
        "wigner_points": 201,
        "dump_states": True,
    },
    "robustness": {
        "n_photons": 3,
        "n_th_values": [0, 1, 2, 3, 4, 5],
        "kappa_over_g": [0.0, 0.25, 0.5, 0.75, 1.0],
        "project_subspace": True,
        "max_liouvillian_dim": 1000,
        "loss_placement": "weighted",
    },
    "sweep": {"experiment": "two-phonon", "axes": [], "workers": None},
    "seed": 0,
}

EXPERIMENT_DEFAULTS: dict[str, dict] = {
    "two-phonon": {"params": {"alpha": 0.0, "n_photons": 1}},
    "cat": {},
    "robustness": {"params": {"omega_m": 10.0e9, "gamma": 10.0}, "grid": {"t_end": 5.0e-6, "n_samples": 11}},
    "sweep": {
        "params": {"alpha": 0.0, "n_photons": 1},
        # points outside the regime are recorded in sweep.csv rather than refused
        "regime": {"enforce": False},
        "sweep": {"axes": [{"name": "params.delta", "values": [2.5e6, 5.0e6, 10.0e6]}]},
    },
}

_FREE_FORM = {("sweep", "axes"), ("cat", "n_values"), ("cat", "ladder"), ("robustness", "n_th_values"),
              ("robustness", "kappa_over_g"), ("measurement", "record")}


def merge(base: dict, over: dict, path: tuple = (), strict: bool = True) -> dict:
    """Recursive dict merge; with ``strict`` unknown keys are rejected."""
    out = copy.deepcopy(base)
    for k, v in over.items():
        if strict and k not in out:
            raise ConfigurationError(f"unknown config key {'.'.join(path + (k,))!r}")
        if isinstance(v, dict) and isinstance(out.get(k), dict) and path + (k,) not in _FREE_FORM:
            out[k] = merge(out[k], v, path + (k,), strict)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(item: str) -> tuple[list[str], Any]:
    """``a.b.c=value`` -> (["a","b","c"], value); values are JSON when they parse."""
    if "=" not in item:
        raise ConfigurationError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigurationError(f"override {item!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_override(tree: dict, keys: list[str], value) -> None:
    node = tree
    for i, k in enumerate(keys[:-1]):
        if not isinstance(node, dict) or k not in node:
            raise ConfigurationError(f"unknown config key {'.'.join(keys[: i + 1])!r}")
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigurationError(f"unknown config key {'.'.join(keys)!r}")
    node[keys[-1]] = value


def canonical_json(tree) -> str:
    return json.dumps(tree, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(tree) -> str:
    return hashlib.sha256(canonical_json(tree).encode()).hexdigest()[:16]


def parse_alpha(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", ""))
        except ValueError:
            raise ConfigurationError(f"cannot parse alpha {v!r}") from None
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    raise ConfigurationError(f"alpha must be a number, [re, im] or a complex string, got {v!r}")


def _num(section: dict, key: str, where: str, allow_none=False, positive=False, integer=False):
    v = section[key]
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigurationError(f"{where}.{key} must be a finite number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigurationError(f"{where}.{key} must be an integer, got {v!r}")
    if positive and v <= 0:
        raise ConfigurationError(f"{where}.{key} must be positive, got {v!r}")
    return int(v) if integer else float(v)


def build_params(p: dict) -> SystemParams:
    """SystemParams from the ``params`` section (design block or explicit optics)."""
    for k in ("g0", "omega_m", "kappa", "gamma"):
        _num(p, k, "params")
    for k in ("omega2", "mu", "omega3", "temperature", "n_th"):
        _num(p, k, "params", allow_none=True)
    n = _num(p, "n_photons", "params", integer=True)
    common = dict(
        omega3=p["omega3"],
        allow_omega3_mismatch=bool(p["allow_omega3_mismatch"]),
        kappa=float(p["kappa"]),
        gamma=float(p["gamma"]),
        n_th=None if p["n_th"] is None else float(p["n_th"]),
        temperature=p["temperature"],
        alpha=parse_alpha(p["alpha"]),
        n_photons=n,
    )
    if (p["omega2"] is None) != (p["mu"] is None):
        raise ConfigurationError("params.omega2 and params.mu must be given together (or both null for the design block)")
    if p["omega2"] is not None:
        return SystemParams(omega1=float(p["omega1"]), omega2=float(p["omega2"]), mu=float(p["mu"]),
                            g0=float(p["g0"]), omega_m=float(p["omega_m"]), **common)
    delta = _num(p, "delta", "params")
    if delta == 0:
        raise ConfigurationError("params.delta must be nonzero")
    return SystemParams.at_two_phonon_resonance(
        float(p["g0"]), delta, float(p["omega_m"]), _num(p, "offset_in_g", "params"), _num(p, "omega1", "params"),
        **common,
    )


@dataclass(frozen=True)
class SweepAxis:
    path: tuple[str, ...]
    values: tuple[float, ...]

    @property
    def name(self) -> str:
        return ".".join(self.path)


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved, validated configuration; ``tree`` is the canonical JSON-able form."""

    experiment: str
    tree: dict
    params: SystemParams
    grid: TimeGrid
    hash: str

    @classmethod
    def from_tree(cls, tree: dict, overrides=(), experiment: str | None = None) -> "ExperimentConfig":
        """Layer defaults, ``tree`` and ``key=value`` overrides, then validate."""
        experiment = experiment or tree.get("experiment")
        if experiment not in EXPERIMENTS:
            raise ConfigurationError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
        if tree.get("experiment") not in (None, experiment):
            raise ConfigurationError(f"config is for experiment {tree['experiment']!r}, not {experiment!r}")
        resolved = merge(merge(DEFAULTS, EXPERIMENT_DEFAULTS[experiment]), tree)
        resolved["experiment"] = experiment
        for item in overrides:
            keys, value = parse_override(item)
            apply_override(resolved, keys, value)
        return cls._validated(resolved)

    @classmethod
    def _validated(cls, t: dict) -> "ExperimentConfig":
        try:
            canonical_json(t)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"config is not plain finite JSON: {exc}") from None
        params = build_params(t["params"])
        g = t["grid"]
        grid = TimeGrid(
            _num(g, "t_start", "grid"),
            _num(g, "t_end", "grid"),
            _num(g, "n_samples", "grid", integer=True),
            _num(g, "rtol", "grid", positive=True),
        )
        h = t["hilbert"]
        for k in ("mech_dim", "optical_dim"):
            v = _num(h, k, "hilbert", allow_none=True, integer=True)
            if v is not None and v < 2:
                raise ConfigurationError(f"hilbert.{k} must be at least 2")
        _num(h, "tail_tol", "hilbert", positive=True)
        rec = t["measurement"]["record"]
        if rec != "max" and not (
            isinstance(rec, list) and len(rec) == 2 and all(isinstance(x, int) and x >= 0 for x in rec)
        ):
            raise ConfigurationError(f'measurement.record must be "max" or [n_plus, n_minus], got {rec!r}')
        c = t["cat"]
        if not c["n_values"] or any(not isinstance(n, int) or isinstance(n, bool) or n < 1 for n in c["n_values"]):
            raise ConfigurationError("cat.n_values must be a nonempty list of positive integers")
        if not c["ladder"] or any(isinstance(x, bool) or not isinstance(x, (int, float)) or x <= 0 for x in c["ladder"]):
            raise ConfigurationError("cat.ladder must be a nonempty list of positive numbers")
        _num(c, "fit_ladder", "cat", positive=True)
        _num(c, "wigner_extent", "cat", positive=True)
        if _num(c, "wigner_points", "cat", integer=True) < 2:
            raise ConfigurationError("cat.wigner_points must be at least 2")
        r = t["robustness"]
        if _num(r, "n_photons", "robustness", integer=True) < 1:
            raise ConfigurationError("robustness.n_photons must be at least 1")
        for k in ("n_th_values", "kappa_over_g"):
            if not r[k] or any(isinstance(x, bool) or not isinstance(x, (int, float)) or x < 0 for x in r[k]):
                raise ConfigurationError(f"robustness.{k} must be a nonempty list of non-negative numbers")
        _num(r, "max_liouvillian_dim", "robustness", positive=True, integer=True)
        if r["loss_placement"] not in ("weighted", "symmetric"):
            raise ConfigurationError('robustness.loss_placement must be "weighted" or "symmetric"')
        tp = t["two_phonon"]
        _num(tp, "target_time", "two_phonon", positive=True)
        _num(tp, "substep", "two_phonon", allow_none=True, positive=True)
        s = t["sweep"]
        if s["experiment"] not in ("two-phonon", "cat", "robustness"):
            raise ConfigurationError("sweep.experiment must be two-phonon, cat or robustness")
        w = _num(s, "workers", "sweep", allow_none=True, integer=True)
        if w is not None and w < 1:
            raise ConfigurationError("sweep.workers must be at least 1")
        cfg = cls(t["experiment"], t, params, grid, config_hash(t))
        cfg.sweep_axes()  # validates axes
        return cfg

    @classmethod
    def load(cls, path: str | Path | None, overrides=(), experiment: str | None = None) -> "ExperimentConfig":
        tree: dict = {}
        if path is not None:
            try:
                tree = json.loads(Path(path).read_text())
            except OSError as exc:
                raise ConfigurationError(f"cannot read config {path}: {exc}") from None
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
            if not isinstance(tree, dict):
                raise ConfigurationError("config must be a JSON object")
        return cls.from_tree(tree, overrides, experiment)

    def section(self, name: str) -> dict:
        return self.tree[name]

    def with_values(self, changes: dict[tuple[str, ...], Any], experiment: str | None = None) -> "ExperimentConfig":
        t = copy.deepcopy(self.tree)
        for keys, v in changes.items():
            apply_override(t, list(keys), v)
        if experiment is not None:
            t["experiment"] = experiment
        return self._validated(t)

    def sweep_axes(self) -> list[SweepAxis]:
        axes = self.tree["sweep"]["axes"]
        if not isinstance(axes, list) or len(axes) > 2:
            raise ConfigurationError("sweep.axes must be a list of at most two axes")
        out = []
        for ax in axes:
            if not isinstance(ax, dict) or set(ax) != {"name", "values"}:
                raise ConfigurationError('each sweep axis needs exactly "name" and "values"')
            path = tuple(ax["name"].split("."))
            if len(path) == 1:
                path = ("params",) + path
            if path[0] != "params" or len(path) != 2 or path[1] not in DEFAULTS["params"]:
                raise ConfigurationError(f"sweep axis {ax['name']!r} is not a SystemParams field")
            if path[1] in ("allow_omega3_mismatch",):
                raise ConfigurationError(f"sweep axis {ax['name']!r} is non-numeric")
            vals = ax["values"]
            if not isinstance(vals, list) or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) for v in vals
            ):
                raise ConfigurationError(f"sweep axis {ax['name']!r} is non-numeric")
            out.append(SweepAxis(path, tuple(vals)))
        if len({a.path for a in out}) != len(out):
            raise ConfigurationError("sweep axes must be distinct")
        return out
