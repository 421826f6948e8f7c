"""The four CLI experiments.  Each returns a ``RunArtifact``; nothing here prints.

Tolerance violations that do not stop a run are collected in
``RunArtifact.tolerance_failures`` so the CLI can write outputs first and then
exit with the numerical-failure code.
"""
from __future__ import annotations

import itertools
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import (
    cat_component_fit,
    cat_layout,
    fidelity,
    fit_rabi,
    number_distribution,
    photon_number_measurement,
    rotation_rates,
    analytic_branches,
    sector_probability,
    wigner,
)
from .artifacts import RunArtifact
from .config import ExperimentConfig
from .dynamics import (
    TimeGrid,
    evolve_lindblad,
    evolve_time_dependent,
    evolve_unitary,
    optical_loss_channels,
    thermal_channels,
)
from .errors import ConditioningError, ConfigurationError, TruncationError
from .hilbert import PureState, coherent_amplitudes, number, product_state, required_dim, sector_indices
from .model import (
    TWO_PI,
    EffectiveModel,
    build_effective_hamiltonian,
    build_rwa_hamiltonian,
    build_two_phonon_hamiltonian,
    effective_coupling,
    supermode_layout,
    supermode_transform,
)

CONSERVATION_TOL = 1e-8


def _artifact(cfg: ExperimentConfig) -> RunArtifact:
    return RunArtifact(cfg.experiment, cfg.hash, cfg.tree)


def check_regime(cfg: ExperimentConfig) -> list[str]:
    """Regime inequalities that fail; raises when the config enforces them."""
    r = cfg.section("regime")
    bad = cfg.params.regime_violations(r["delta_over_g0"], r["omega_m_over_delta"])
    if bad and r["enforce"]:
        raise ConfigurationError("parameters outside the reduced-model regime: " + "; ".join(bad))
    return bad


def mechanical_dim(cfg: ExperimentConfig, alpha: complex, n: int) -> int:
    """Configured mechanical dimension, or the tail-tolerance size plus 2n headroom."""
    h = cfg.section("hilbert")
    if h["mech_dim"] is not None:
        return int(h["mech_dim"])
    return max(2, required_dim(alpha, h["tail_tol"]) + 2 * n)


def _initial(layout, occupations: dict, alpha: complex, tail_tol: float) -> PureState:
    d = layout.mode("b").dim
    return product_state(layout, {**occupations, "b": coherent_amplitudes(alpha, d, tail_tol)})


def _conservation(art, name: str, series: np.ndarray) -> None:
    drift = float(np.max(np.abs(series - series[0])))
    art.tolerances[f"conservation_{name}"] = drift
    if drift > CONSERVATION_TOL:
        art.tolerance_failures.append(f"{name} drifted by {drift:.3e} > {CONSERVATION_TOL:g}")


def _top_level_check(art, states, layout, tail_tol: float, what: str) -> None:
    """The highest mechanical Fock level must stay empty, or the truncation bites."""
    worst = max(float(number_distribution(s, "b")[-1]) for s in states)
    art.tolerances[f"{what}_mech_top_level"] = worst
    if worst > max(tail_tol, 1e-10):
        d = layout.mode("b").dim
        raise TruncationError(
            f"{what}: weight {worst:.2e} reaches the top mechanical level of dim {d}; raise hilbert.mech_dim",
            required_dim=d + 4,
        )


# --------------------------------------------------------------------------- two-phonon


def cmd_two_phonon(cfg: ExperimentConfig) -> RunArtifact:
    """Compare the RWA supermode model (rwa), the effective model with Kerr terms
    (eff) and the pure two-phonon model (tp) from |n,0,0>|alpha>."""
    art = _artifact(cfg)
    p = cfg.params
    violations = check_regime(cfg)
    art.notes.extend(f"regime: {v}" for v in violations)
    n = int(p.n_photons)
    if n < 1:
        raise ConfigurationError("two-phonon experiment needs params.n_photons >= 1")
    tail = cfg.section("hilbert")["tail_tol"]
    sec = cfg.section("two_phonon")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sm = supermode_transform(p)
    art.notes.extend(str(w.message) for w in caught)
    eff = EffectiveModel.from_params(p)
    D = mechanical_dim(cfg, p.alpha, n)
    od = cfg.section("hilbert")["optical_dim"]
    L_r = supermode_layout(n, D, od)
    L_e = supermode_layout(n, D, od, with_zero=False)
    H_r = build_rwa_hamiltonian(sm, L_r)
    H_e = build_effective_hamiltonian(eff, L_e)
    H_t = build_two_phonon_hamiltonian(eff.g, L_e)
    psi_r = _initial(L_r, {"a+": n}, p.alpha, tail)
    psi_e = _initial(L_e, {"a+": n}, p.alpha, tail)

    n_r = {m: number(L_r, m) for m in ("a+", "a0", "a-", "b")}
    n_e = {m: number(L_e, m) for m in ("a+", "a-", "b")}
    obs_r = {**n_r, "nopt": n_r["a+"] + n_r["a0"] + n_r["a-"], "exch": 2 * n_r["a+"] + n_r["a0"] + n_r["b"]}
    obs_e = {**n_e, "nopt": n_e["a+"] + n_e["a-"], "exch": 2 * n_e["a+"] + n_e["b"]}

    grid = cfg.grid
    substep = sec["substep"]
    tr_r = evolve_time_dependent(H_r, psi_r, grid, substep=substep, observables=obs_r, keep_states=False)
    tr_e = evolve_time_dependent(H_e, psi_e, grid, substep=substep, observables=obs_e, keep_states=False)
    tr_t = evolve_unitary(H_t, psi_e, grid, observables=obs_e, keep_states=False)
    for tag, tr in (("rwa", tr_r), ("eff", tr_e), ("tp", tr_t)):
        art.tolerances[f"{tag}_norm_drift"] = tr.max_drift
        art.notes.extend(f"{tag}: {w}" for w in tr.warnings)
    art.tolerances["rwa_richardson_infidelity"] = tr_r.info["richardson_infidelity"]
    art.tolerances["eff_richardson_infidelity"] = tr_e.info["richardson_infidelity"]
    _conservation(art, "rwa_photon_number", tr_r.observables["nopt"])
    _conservation(art, "rwa_exchange_number", tr_r.observables["exch"])
    _conservation(art, "eff_photon_number", tr_e.observables["nopt"])
    _conservation(art, "eff_exchange_number", tr_e.observables["exch"])
    _conservation(art, "tp_photon_number", tr_t.observables["nopt"])
    _conservation(art, "tp_exchange_number", tr_t.observables["exch"])

    times = grid.times
    o_r, o_e, o_t = tr_r.observables, tr_e.observables, tr_t.observables
    art.add_table(
        "timeseries.csv",
        ["t_s", "nb_rwa", "nplus_rwa", "nzero_rwa", "nminus_rwa", "nb_eff", "nplus_eff", "nminus_eff",
         "nb_tp", "nplus_tp", "nminus_tp"],
        [
            [times[k], o_r["b"][k], o_r["a+"][k], o_r["a0"][k], o_r["a-"][k], o_e["b"][k], o_e["a+"][k], o_e["a-"][k],
             o_t["b"][k], o_t["a+"][k], o_t["a-"][k]]
            for k in range(len(times))
        ],
    )

    target = float(sec["target_time"])
    if target <= grid.t_start:
        raise ConfigurationError("two_phonon.target_time must come after grid.t_start")
    tg = TimeGrid.at([grid.t_start, target])
    d_r = number_distribution(evolve_time_dependent(H_r, psi_r, tg, substep=substep).final_state, "b")
    d_e = number_distribution(evolve_time_dependent(H_e, psi_e, tg, substep=substep).final_state, "b")
    d_t = number_distribution(evolve_unitary(H_t, psi_e, tg).final_state, "b")
    art.add_table("distribution.csv", ["n_b", "p_rwa", "p_eff", "p_tp"], [[k, d_r[k], d_e[k], d_t[k]] for k in range(D)])

    diff_nb = float(np.max(np.abs(o_r["b"] - o_e["b"])))
    diff_np = float(np.max(np.abs(o_r["a+"] - o_e["a+"])))
    g_fits = {}
    if n == 1 and p.alpha == 0 and eff.g != 0:
        for tag, o in (("rwa", o_r), ("eff", o_e), ("tp", o_t)):
            try:
                om, _ = fit_rabi(times - times[0], o["a-"])
                g_fits[tag] = om / (TWO_PI * math.sqrt(2.0))
            except (RuntimeError, ValueError):
                g_fits[tag] = float("nan")
    g_pred = eff.g
    summary = {
        "g_pred_hz": g_pred,
        "g_fit_rwa_hz": g_fits.get("rwa", float("nan")),
        "g_fit_eff_hz": g_fits.get("eff", float("nan")),
        "g_fit_tp_hz": g_fits.get("tp", float("nan")),
        "g_fit_rwa_rel_err": (g_fits["rwa"] - abs(g_pred)) / abs(g_pred) if "rwa" in g_fits else float("nan"),
        "p2_rwa": float(d_r[2]) if D > 2 else float("nan"),
        "p2_eff": float(d_e[2]) if D > 2 else float("nan"),
        "p2_tp": float(d_t[2]) if D > 2 else float("nan"),
        "max_diff_nb_rwa_eff": diff_nb,
        "max_diff_nplus_rwa_eff": diff_np,
        "g1_hz": sm.g1,
        "g2_hz": sm.g2,
        "delta1_hz": sm.delta1,
        "delta2_hz": sm.delta2,
        "two_phonon_detuning_hz": sm.two_phonon_detuning,
        "regime_violations": len(violations),
    }
    art.summary.update(summary)
    art.checks.update(
        {
            "p2_tp_above_0.99": summary["p2_tp"] > 0.99,
            "p2_eff_above_0.95": summary["p2_eff"] > 0.95,
            "rwa_eff_occupations_within_0.05": max(diff_nb, diff_np) < 0.05,
            "g_fit_within_5pct": abs(summary["g_fit_rwa_rel_err"]) < 0.05,
        }
    )
    return art


# --------------------------------------------------------------------------- cat


def snapshot_time(ladder: float, n: int, g: float) -> float:
    """Time at which g t = ladder * pi / (n + 1), with g in Hz."""
    return ladder * math.pi / ((n + 1) * TWO_PI * abs(g))


def branch_angles(n: int, gt: float, alpha: complex) -> list[float]:
    """Angles of the n+1 rotated coherent components at angular g t."""
    return [lam * gt + float(np.angle(alpha)) for lam in rotation_rates(n)]


def component_residuals(state, n: int, gt: float, alpha: complex) -> tuple[float, float]:
    """(residual with all n+1 angles, smallest residual with any n of them)."""
    angles = branch_angles(n, gt, alpha)
    r = abs(alpha)
    try:
        full = cat_component_fit(state, angles, r).residual
    except ConditioningError:
        full = float("nan")
    best = math.inf
    for drop in range(len(angles)):
        sub = angles[:drop] + angles[drop + 1 :]
        try:
            best = min(best, cat_component_fit(state, sub, r).residual)
        except ConditioningError:
            best = min(best, float("nan")) if math.isinf(best) else best
    return full, best


def select_outcome(outcomes, record, n: int):
    """Highest-probability outcome, or the configured record when it carries n photons."""
    if record != "max" and sum(record) == n:
        for o in outcomes:
            if list(o.record) == list(record):
                return o
        raise ConfigurationError(f"record {record} has no probability above the floor")
    return outcomes[0]


def _tlabel(t: float) -> str:
    return f"{t * 1e6:.6f}us"


def cmd_cat(cfg: ExperimentConfig) -> RunArtifact:
    art = _artifact(cfg)
    p = cfg.params
    violations = check_regime(cfg)
    art.notes.extend(f"regime: {v}" for v in violations)
    c = cfg.section("cat")
    tail = cfg.section("hilbert")["tail_tol"]
    record = cfg.section("measurement")["record"]
    g = effective_coupling(p.g0, p.delta)
    alpha = p.alpha
    ext, npts = float(c["wigner_extent"]), int(c["wigner_points"])
    axis = np.linspace(-ext, ext, npts)
    rows = []
    for n in c["n_values"]:
        D = mechanical_dim(cfg, alpha, n)
        L = cat_layout(n, D, cfg.section("hilbert")["optical_dim"])
        H = build_two_phonon_hamiltonian(g, L)
        psi0 = _initial(L, {"a+": n}, alpha, tail)
        ladder = sorted(set(float(x) for x in c["ladder"]) | {float(c["fit_ladder"])})
        times = [snapshot_time(x, n, g) for x in ladder]
        nopt = number(L, "a+") + number(L, "a-")
        exch = 2 * number(L, "a+") + number(L, "b")
        tr = evolve_unitary(H, psi0, TimeGrid.at([0.0] + times), observables={"nopt": nopt, "exch": exch})
        art.tolerances[f"n{n}_norm_drift"] = tr.max_drift
        _conservation(art, f"n{n}_photon_number", tr.observables["nopt"])
        _conservation(art, f"n{n}_exchange_number", tr.observables["exch"])
        _top_level_check(art, tr.states, L, tail, f"n{n}")
        rates = rotation_rates(n)
        art.summary[f"n{n}_rotation_rates"] = len(set(rates))
        for x, t, state in zip(ladder, times, tr.states[1:]):
            gt = TWO_PI * g * t
            outcomes = photon_number_measurement(state)
            sel = select_outcome(outcomes, record, n)
            branches = analytic_branches(n, alpha, t, g, D, tail_tol=None)
            for o in outcomes:
                full, best = component_residuals(o.conditional_vector, n, gt, alpha)
                k = o.record[1]
                ref = branches[k] if sum(o.record) == n else None
                f_an = float("nan")
                if ref is not None and np.linalg.norm(ref) > 0:
                    f_an = fidelity(o.conditional_vector, PureState(o.conditional_vector.layout, ref))
                mean_b = float(np.dot(np.arange(D), np.abs(o.conditional_vector.amplitudes) ** 2))
                rows.append([n, x, gt, t, o.record[0], o.record[1], o.probability, o is sel, full, best, len(set(rates)),
                             f_an, mean_b])
                if o is sel and x == float(c["fit_ladder"]):
                    art.summary[f"n{n}_residual"] = full
                    art.summary[f"n{n}_best_subset_residual"] = best
                    art.checks[f"n{n}_fits_{n + 1}_components"] = bool(full < 1e-3)
                    art.checks[f"n{n}_rejects_{n}_components"] = bool(best > 0.1)
            wg = wigner(sel.conditional_state, axis, axis)
            name = f"wigner_{sel.record[0]}-{sel.record[1]}_{_tlabel(t)}"
            art.wigners[name] = (wg.x_axis, wg.p_axis, wg.values)
            art.tolerances[f"{name}_mass_error"] = abs(wg.mass - 1.0)
            if wg.mass_warning:
                art.notes.append(f"{name}: grid holds {wg.mass:.4f} of the Wigner mass")
            if c["dump_states"]:
                art.states[f"state_n{n}_{_tlabel(t)}"] = state
    art.add_table(
        "outcomes.csv",
        ["n", "ladder", "gt_rad", "t_s", "n_plus", "n_minus", "probability", "selected", "residual_all",
         "residual_best_subset", "rotation_rates", "fidelity_analytic", "mean_phonons"],
        rows,
    )
    return art


# --------------------------------------------------------------------------- robustness


def cmd_robustness(cfg: ExperimentConfig) -> RunArtifact:
    art = _artifact(cfg)
    p = cfg.params
    violations = check_regime(cfg)
    art.notes.extend(f"regime: {v}" for v in violations)
    r = cfg.section("robustness")
    tail = cfg.section("hilbert")["tail_tol"]
    record = cfg.section("measurement")["record"]
    n = int(r["n_photons"])
    g = effective_coupling(p.g0, p.delta)
    D = mechanical_dim(cfg, p.alpha, n)
    L = cat_layout(n, D, cfg.section("hilbert")["optical_dim"])
    H = build_two_phonon_hamiltonian(g, L)
    psi0 = _initial(L, {"a+": n}, p.alpha, tail)
    sub = sector_indices(L, ["a+", "a-"], max_total=n) if r["project_subspace"] else None
    m = L.total_dim if sub is None else sub.size
    cap = int(r["max_liouvillian_dim"])
    if m > cap:
        raise ConfigurationError(
            f"density matrix dimension {m} exceeds robustness.max_liouvillian_dim={cap}; "
            "set robustness.project_subspace=true to restrict to the photon-number sector"
        )
    grid = cfg.grid
    ref = evolve_unitary(H, psi0, grid)
    ref_out = [photon_number_measurement(s) for s in ref.states]
    sm = supermode_transform(p)
    if r["loss_placement"] == "weighted":
        wp, wm = sm.loss_weights()
    else:
        wp = wm = 0.5
    art.summary["loss_weight_plus"] = wp
    art.summary["loss_weight_minus"] = wm

    cache = {}

    def run(n_th: float, kappa: float):
        key = (float(n_th), float(kappa))
        if key not in cache:
            ch = thermal_channels(L, "b", p.gamma, n_th) if p.gamma > 0 else []
            if kappa > 0:
                ch += optical_loss_channels(L, kappa, {"a+": wp, "a-": wm})
            tr = evolve_lindblad(H, ch, psi0, grid, subspace=sub, max_dim=cap)
            cache[key] = tr
        return cache[key]

    rows = []
    finals = {}
    for series, points in (
        ("thermal", [(float(x), 0.0) for x in r["n_th_values"]]),
        ("loss", [(float(p.thermal_occupation()), float(k) * abs(g)) for k in r["kappa_over_g"]]),
    ):
        for n_th, kappa in points:
            tr = run(n_th, kappa)
            tag = f"{series}_nth{n_th:g}_kappa{kappa:g}"
            art.tolerances[f"{tag}_trace_drift"] = tr.max_drift
            art.tolerances[f"{tag}_eigen_floor"] = tr.info["eigen_floor"]
            for k, t in enumerate(tr.times):
                out = photon_number_measurement(tr.states[k])
                prob = sector_probability(out, n)
                by_rec = {o.record: o for o in out}
                sel = select_outcome(ref_out[k], record, n)
                fids = []
                f_sel = float("nan")
                for o in ref_out[k]:
                    if sum(o.record) != n:
                        continue
                    lossy = by_rec.get(o.record)
                    f = fidelity(o.conditional_vector, lossy.conditional_state) if lossy else 0.0
                    fids.append(f)
                    if o.record == sel.record:
                        f_sel = f
                rows.append([series, n_th, kappa, t, f"{sel.record[0]}-{sel.record[1]}", prob, f_sel, min(fids)])
            finals[(series, n_th, kappa)] = rows[-1]
    art.add_table(
        "timeseries.csv",
        ["series", "n_th", "kappa_hz", "t_s", "selected_record", "probability", "fidelity_selected", "fidelity_min"],
        rows,
    )
    thermal = [row for row in rows if row[0] == "thermal" and row[1] >= 1]
    loss = [row for row in rows if row[0] == "loss"]
    loss_final = sorted((row[2], row[5]) for row in finals.values() if row[0] == "loss")
    probs = [pr for _, pr in loss_final]
    art.summary.update(
        {
            "thermal_max_probability_error": max((abs(row[5] - 1.0) for row in thermal), default=float("nan")),
            "thermal_min_fidelity_selected": min((row[6] for row in thermal), default=float("nan")),
            "thermal_min_fidelity_any_record": min((row[7] for row in thermal), default=float("nan")),
            "loss_min_fidelity_selected": min((row[6] for row in loss), default=float("nan")),
            "loss_min_fidelity_any_record": min((row[7] for row in loss), default=float("nan")),
            "loss_final_probabilities": probs,
        }
    )
    art.checks.update(
        {
            "thermal_probability_is_one": art.summary["thermal_max_probability_error"] < 1e-6,
            "thermal_fidelity_above_0.97": art.summary["thermal_min_fidelity_selected"] > 0.97,
            "loss_fidelity_above_0.99": art.summary["loss_min_fidelity_any_record"] > 0.99,
            "loss_probability_strictly_decreasing": all(b < a for a, b in zip(probs, probs[1:])),
        }
    )
    return art


# --------------------------------------------------------------------------- sweep

COMMANDS = {"two-phonon": cmd_two_phonon, "cat": cmd_cat, "robustness": cmd_robustness}


def worker_count(requested: int | None, n_points: int) -> int:
    """Pool size: requested (or CPU count), capped by CATRES_THREADS and the point count."""
    w = requested or os.cpu_count() or 1
    env = os.environ.get("CATRES_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigurationError(f"CATRES_THREADS must be an integer, got {env!r}") from None
        if cap < 1:
            raise ConfigurationError("CATRES_THREADS must be at least 1")
        w = min(w, cap)
    return max(1, min(w, n_points))


def _run_point(tree: dict, experiment: str, out_dir: str | None):
    cfg = ExperimentConfig._validated({**tree, "experiment": experiment})
    art = COMMANDS[experiment](cfg)
    if out_dir is not None:
        art.write(out_dir)
    return cfg.hash, art.summary, art.tolerance_failures


def _point_dir(axes, values) -> str:
    if not axes:
        return "point_base"
    return "point_" + "_".join(f"{a.path[-1]}={v:.9g}" for a, v in zip(axes, values))


def cmd_sweep(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> RunArtifact:
    art = _artifact(cfg)
    s = cfg.section("sweep")
    sub = s["experiment"]
    axes = cfg.sweep_axes()
    grid_pts = sorted(itertools.product(*[sorted(set(a.values)) for a in axes])) if axes else [()]
    trees = []
    for values in grid_pts:
        # the pool size is an execution detail and must not reach the point hashes
        base = {**cfg.tree, "experiment": sub, "sweep": {**cfg.tree["sweep"], "workers": None}}
        t = ExperimentConfig._validated(base).with_values(
            {a.path: v for a, v in zip(axes, values)}
        ).tree
        trees.append(t)
    dirs = [None] * len(grid_pts)
    if out_dir is not None:
        dirs = [str(Path(out_dir) / _point_dir(axes, v)) for v in grid_pts]
    workers = worker_count(s["workers"], len(grid_pts))
    if workers == 1:
        results = [_run_point(t, sub, d) for t, d in zip(trees, dirs)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, trees, [sub] * len(trees), dirs))
    keys = []
    for _, summ, _ in results:
        for k, v in summ.items():
            if k not in keys and not isinstance(v, (list, tuple)):
                keys.append(k)
    rows = []
    for values, (h, summ, fails) in zip(grid_pts, results):
        rows.append([*values, h, *[summ.get(k, float("nan")) for k in keys]])
        art.tolerance_failures.extend(f"{_point_dir(axes, values)}: {f}" for f in fails)
    art.add_table("sweep.csv", [a.name for a in axes] + ["point_config_hash"] + keys, rows)
    art.summary["points"] = len(grid_pts)
    art.summary["workers"] = workers
    if sub == "two-phonon" and "g_fit_rwa_rel_err" in keys:
        errs = [summ["g_fit_rwa_rel_err"] for _, summ, _ in results]
        art.checks["g_fit_within_5pct_all_points"] = all(abs(e) < 0.05 for e in errs)
    return art


def run(cfg: ExperimentConfig, out_dir=None) -> RunArtifact:
    """Dispatch on ``cfg.experiment``; sweeps write their point directories under ``out_dir``."""
    if cfg.experiment == "sweep":
        return cmd_sweep(cfg, out_dir)
    return COMMANDS[cfg.experiment](cfg)
