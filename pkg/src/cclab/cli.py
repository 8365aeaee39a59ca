"""Command-line experiment driver.

``cclab <kind> [--config path] [--seed N] [--trials N] [--out dir] [--base bits|nats]``

Writes ``report.json`` (and ``trajectories.csv`` where an experiment has
one) into ``--out``. Exit status is 0 when every check passes, 2 when a
check fails and 1 on a configuration or model error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as _rng
from .dp import BeliefGrid, CostSpec, brute_force_optimal, evaluate_policy_exact, extract_structural_policy, value_recursion
from .errors import CclabError, ConfigError
from .infogain import hmm_mode, verify_infogain_optimality
from .inverse import (
    additive_irc_tables,
    check_iid_outputs,
    cost_by_input_output,
    derive_induced_kernels,
    detailed_balance_check,
    gaussian_inverse_report,
    induced_dist,
    induced_dist_invertible,
    induced_eta,
    irc_decomposition_check,
    queue_policy,
    trapdoor_policy,
    verify_chain,
    verify_variational,
)
from .joint import enumerate_joint_law
from .models import (
    MarkovSource,
    QueueModel,
    TrapdoorModel,
    bsc,
    channel_preset,
    gaussian_steady_state,
    queue_birth_death_chain,
    repetition_source,
    trapdoor_source_and_init,
)
from .posterior_matching import achievability_mass, achievability_trend, pm_invariance_checks, simulate_bsc_pm
from .probability import capacity_cost, mutual_information, to_base

SCHEMA_VERSION = "1"
KINDS = ("dp-solve", "info-gain", "hmm", "pm-sim", "inverse-queue", "inverse-trapdoor", "inverse-gauss", "capacity")
STOCHASTIC = {"pm-sim", "inverse-gauss"}

DEFAULTS = {
    "capacity": {"channel": "bsc", "epsilon": 0.1, "mu_delta": 0.5, "matrix": None, "eta": None, "budget": None},
    "dp-solve": {
        "kernel": [[0.9, 0.1], [0.2, 0.8]], "prior": [0.5, 0.5], "epsilon": 0.1, "n": 2, "resolution": 200,
        "projection": "interp",
    },
    "info-gain": {"prior": [0.5, 0.5], "epsilon": 0.2, "n": 2, "resolution": 200, "alpha": 0.0},
    "hmm": {"kernel": [[0.9, 0.1], [0.2, 0.8]], "prior": [0.5, 0.5], "epsilon": 0.1, "n": 3},
    "pm-sim": {
        "epsilon": 0.11, "n": 10, "trials": 100_000, "steps": [2, 5, 10], "rate": 0.4,
        "achievability_runs": 1000, "achievability_n": 100, "seed": None,
    },
    "inverse-queue": {"lam": 0.5, "mu": 1.0, "delta": 0.01, "K": 60, "n": 4},
    "inverse-trapdoor": {"p": 0.5, "n": 3},
    "inverse-gauss": {"rho": 0.5, "sigma_m2": 1.0, "sigma_v2": 1.0, "power": 1.0, "n": 10, "trials": 100_000, "seed": None},
}

TOLERANCES = {
    "capacity": {"gap": 1e-9},
    "dp-solve": {"grid": 0.02},
    "info-gain": {"argmin": 1e-6, "grid": 0.02},
    "hmm": {"identity": 1e-9},
    "pm-sim": {"p_value": 0.01, "trend_spearman": 0.95},
    "inverse-queue": {"iid": 1e-10, "kernels": 1e-12, "detailed_balance": 1e-12, "variational": 1e-9, "chain": 1e-8},
    "inverse-trapdoor": {"detailed_balance": 1e-12, "expected_dist": 1e-12, "variational": 1e-9, "chain": 1e-8},
    "inverse-gauss": {"closed_form": 1e-12, "variance_rel": 0.02, "corr": 0.01, "identity": 1e-9},
}


# --------------------------------------------------------------------------
# experiments: each returns (results, checks, trajectories or None)


def _info(base):
    suffix = "bits" if base == "bits" else "nats"
    return (lambda v: to_base(float(v), base)), suffix


def _capacity(cfg, base):
    conv, unit = _info(base)
    if cfg["matrix"] is not None:
        W = np.asarray(cfg["matrix"], dtype=float)
    elif cfg["channel"] == "bsc":
        W = bsc(cfg["epsilon"]).matrix
    elif cfg["channel"] == "zchannel":
        W = channel_preset("zchannel", mu_delta=cfg["mu_delta"]).matrix
    else:
        W = channel_preset(cfg["channel"]).matrix
    res = capacity_cost(W, cfg["eta"], cfg["budget"], tol=TOLERANCES["capacity"]["gap"])
    results = {
        f"capacity_{unit}": conv(res.capacity),
        f"gap_{unit}": conv(res.gap),
        "optimal_input": res.optimal_input.probs.tolist(),
        "expected_cost": res.expected_cost,
        "multiplier": res.multiplier,
    }
    return results, {"certified_gap": res.gap <= TOLERANCES["capacity"]["gap"]}, None


def _dp_solve(cfg, base):
    src = MarkovSource(cfg["prior"], cfg["kernel"])
    W = bsc(cfg["epsilon"]).matrix
    nw = src.size
    d = np.zeros((nw, 2, 2))
    for w in range(nw):
        d[w, :, :] = (np.arange(2)[None, :] != w).astype(float)
    spec = CostSpec(d, np.zeros(2), 1.0)
    n = cfg["n"]
    oracle = brute_force_optimal(spec, src, W, n, 2)
    sol = value_recursion(n, spec, src, W, BeliefGrid(nw, cfg["resolution"]), 2, projection=cfg["projection"])
    pol = evaluate_policy_exact(extract_structural_policy(sol), spec, src, W, n)
    tol = TOLERANCES["dp-solve"]["grid"]
    results = {"dp_value": sol.initial_value, "oracle_value": oracle.value, "policy_value": pol,
               "gap": abs(sol.initial_value - oracle.value), "policies_enumerated": oracle.n_policies}
    checks = {
        "dp_within_grid_tolerance": abs(sol.initial_value - oracle.value) <= tol,
        "policy_not_below_oracle": pol >= oracle.value - 1e-12,
        "policy_within_grid_tolerance": pol <= oracle.value + tol,
    }
    return results, checks, None


def _info_gain(cfg, base):
    conv, unit = _info(base)
    src = repetition_source(cfg["prior"])
    W = bsc(cfg["epsilon"]).matrix
    rep = verify_infogain_optimality(src, W, cfg["alpha"], None, cfg["n"], cfg["resolution"],
                          grid_tol=TOLERANCES["info-gain"]["grid"], tol=TOLERANCES["info-gain"]["argmin"])
    results = {
        f"dp_value_{unit}": conv(rep.dp_value), f"oracle_value_{unit}": conv(rep.oracle_value),
        f"value_gap_{unit}": conv(rep.value_gap), "reachable_states": rep.reachable_states,
        "decoder_equals_posterior_states": rep.decoder_equals_posterior,
        f"worst_decoder_excess_{unit}": conv(rep.worst_decoder_excess),
        f"identity_residual_{unit}": conv(rep.identity_residual),
    }
    checks = {
        "value_matches_oracle": abs(rep.value_gap) <= rep.tolerance,
        "posterior_decoder_attains_min": rep.decoder_attains_min,
        "encoder_independent_of_previous_output": rep.encoder_zprev_independent,
        "cost_information_identity": abs(rep.identity_residual) <= rep.tolerance,
    }
    return results, checks, None


def _hmm(cfg, base):
    conv, unit = _info(base)
    src = MarkovSource(cfg["prior"], cfg["kernel"])
    rep = hmm_mode(src, bsc(cfg["epsilon"]).matrix, cfg["n"], tol=TOLERANCES["hmm"]["identity"])
    results = {f"policy_cost_{unit}": conv(rep.policy_cost), f"minus_mi_{unit}": conv(rep.minus_mi),
               f"difference_{unit}": conv(rep.difference), "deviations_checked": rep.deviations_checked,
               f"best_deviation_gain_{unit}": conv(rep.best_deviation_gain)}
    checks = {"cost_equals_minus_mi": abs(rep.difference) <= TOLERANCES["hmm"]["identity"],
              "no_grid_decoder_beats_filter": rep.best_deviation_gain <= TOLERANCES["hmm"]["identity"]}
    return results, checks, None


def _pm_sim(cfg, base):
    tol = TOLERANCES["pm-sim"]
    inv = pm_invariance_checks(cfg["epsilon"], cfg["n"], cfg["trials"], cfg["seed"], steps=cfg["steps"],
                               threshold=tol["p_value"])
    n_ach = cfg["achievability_n"]
    run = simulate_bsc_pm(cfg["epsilon"], n_ach, cfg["achievability_runs"], cfg["seed"] + 1)
    masses = achievability_mass(run, cfg["rate"])
    trend = achievability_trend(masses, first=min(20, n_ach - 1), min_spearman=tol["trend_spearman"])
    results = {
        "ks_p": {str(k): v for k, v in inv.ks_p.items()},
        "input_p": {str(k): v for k, v in inv.input_p.items()},
        "pair_p": {str(k): v for k, v in inv.pair_p.items()},
        "median_cell_mass": np.median(masses, axis=0).tolist(),
        "trend_checkpoints": trend.checkpoints,
        "trend_spearman": trend.spearman,
    }
    checks = {"invariances": inv.passed, "checkpoint_medians_increase": trend.checkpoints_increase,
              "trend_rank_correlation": trend.spearman >= tol["trend_spearman"]}
    rows = []
    for t in range(run.trials):
        for i in range(run.n):
            rows.append([t, i + 1, int(run.x[t, i]), int(run.y[t, i]), float(run.median[t, i]), float(masses[t, i])])
    return results, checks, (["trial", "i", "x", "y", "median", "cell_mass"], rows)


def _cells(cells, conv):
    return {f"x={x},y={y}": conv(v) if math.isfinite(v) else v for (x, y), v in cells.items()}


def _inverse_queue(cfg, base):
    conv, unit = _info(base)
    tol = TOLERANCES["inverse-queue"]
    q = QueueModel(cfg["lam"], cfg["mu"], cfg["delta"], cfg["K"])
    n = cfg["n"]
    m = queue_policy(q, n)
    law = enumerate_joint_law(m.source, m.channel, m.policy, n)
    iid = check_iid_outputs(m.policy, m.source, m.channel, n, tol=tol["iid"], law=law)
    k = derive_induced_kernels(m.policy, m.source, m.channel, n, tol=tol["kernels"], law=law)
    D = induced_dist(k)
    Dc = induced_dist_invertible(m.policy, m.channel, k.y_marginal, sign="plus")
    eta = induced_eta(m.channel, k.y_marginal)
    var = verify_variational(m.policy, m.source, m.channel, D, 1.0, n, tol=tol["variational"], law=law)
    chain = verify_chain(m.policy, m.source, m.channel, D, eta, n, tol=tol["chain"], law=law)
    pi, P = queue_birth_death_chain(q, "slotted")
    db = detailed_balance_check(pi.probs, P.matrix, tol=tol["detailed_balance"])
    f, g = additive_irc_tables(m.source.size, 2, m.source.size, 2)
    irc = irc_decomposition_check(f, g, law, m.post_state, m.innovation)
    results = {
        f"max_output_dependence_{unit}": conv(iid.max_dependence),
        "y_marginal": k.y_marginal.probs.tolist(),
        f"dist_cells_{unit}": _cells(cost_by_input_output(m.policy, D, law), conv),
        f"dist_cells_display_sign_{unit}": _cells(cost_by_input_output(m.policy, Dc, law), conv),
        f"log_mu_over_lambda_{unit}": conv(math.log(q.mu / q.lam)),
        f"chain_{unit}": [conv(v) for v in (chain.i_wz, chain.i_wy, chain.i_xy, chain.capacity)],
        "variational_spread": var.max_spread,
        "detailed_balance_asymmetry": db.max_flux_asymmetry,
    }
    checks = {"iid_outputs": iid.iid, "detailed_balance": db.passed, "variational": var.passed,
              "chain_inequalities": chain.inequalities_hold, "chain_equalities": chain.equalities_hold,
              "irc": irc.passed}
    return results, checks, None


def _inverse_trapdoor(cfg, base):
    conv, unit = _info(base)
    tol = TOLERANCES["inverse-trapdoor"]
    t = TrapdoorModel(cfg["p"])
    n = cfg["n"]
    m = trapdoor_policy(t, n)
    law = enumerate_joint_law(m.source, m.channel, m.policy, n)
    k = derive_induced_kernels(m.policy, m.source, m.channel, n, law=law)
    D = induced_dist(k)
    cells = cost_by_input_output(m.policy, D, law)
    laws = trapdoor_source_and_init(t)
    pi = laws.initial_state.probs
    exp_d = sum(pi[x] * m.channel[x, y] * v for (x, y), v in cells.items())
    eta = induced_eta(m.channel, k.y_marginal)
    chain = verify_chain(m.policy, m.source, m.channel, D, eta, n, tol=tol["chain"], law=law)
    var = verify_variational(m.policy, m.source, m.channel, D, 1.0, n, tol=tol["variational"], law=law)
    db = detailed_balance_check(pi, laws.transition.matrix, tol=tol["detailed_balance"])
    p = t.p
    anchors = {(0, 0): math.log(p), (1, 0): math.log(2 * p), (1, 1): math.log(2 * (1 - p)), (2, 1): math.log(1 - p)}
    mi = mutual_information(m.channel, pi)
    results = {
        f"dist_cells_{unit}": _cells(cells, conv),
        f"expected_dist_{unit}": conv(exp_d),
        f"chain_{unit}": [conv(v) for v in (chain.i_wz, chain.i_wy, chain.i_xy, chain.capacity)],
        "detailed_balance": "pass" if db.passed else "fail",
    }
    checks = {
        "cells_match_closed_form": set(cells) == set(anchors)
        and all(abs(cells[c] - anchors[c]) <= 1e-12 for c in anchors),
        "expected_dist_is_minus_mi": abs(exp_d + mi) <= tol["expected_dist"],
        "detailed_balance": db.passed,
        "variational": var.passed,
        "chain_equalities": chain.equalities_hold,
    }
    return results, checks, None


def _inverse_gauss(cfg, base):
    tol = TOLERANCES["inverse-gauss"]
    g = gaussian_steady_state(cfg["rho"], cfg["sigma_m2"], cfg["sigma_v2"], cfg["power"], tol=tol["closed_form"])
    rep = gaussian_inverse_report(g, cfg["n"], cfg["trials"], cfg["seed"], var_tol=tol["variance_rel"],
                                  corr_tol=tol["corr"], identity_tol=tol["identity"])
    results = {"C": rep.C, "beta": rep.beta, "gamma": rep.gamma, "var_x": rep.var_x,
               "corr_x_yprev": rep.corr_x_yprev, "identity": rep.identity,
               "identity_perturbed_gains": rep.identity_perturbed}
    checks = {"simulation_and_identity": bool(rep.passed)}
    return results, checks, None


RUNNERS = {
    "capacity": _capacity, "dp-solve": _dp_solve, "info-gain": _info_gain, "hmm": _hmm, "pm-sim": _pm_sim,
    "inverse-queue": _inverse_queue, "inverse-trapdoor": _inverse_trapdoor, "inverse-gauss": _inverse_gauss,
}


# --------------------------------------------------------------------------
# config, serialisation, entry point


def resolve_config(kind, file_cfg=None, seed=None, trials=None):
    """Defaults, then the config file, then command-line overrides."""
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; choose from {', '.join(KINDS)}")
    cfg = dict(DEFAULTS[kind])
    for key, val in (file_cfg or {}).items():
        if key == "kind":
            if val != kind:
                raise ConfigError(f"config is for {val!r}, command line asks for {kind!r}")
            continue
        if key not in cfg:
            raise ConfigError(f"unknown config field {key!r} for {kind}")
        cfg[key] = val
    if seed is not None:
        cfg["seed"] = seed
    if trials is not None:
        if "trials" not in cfg:
            raise ConfigError(f"{kind} has no trials parameter")
        cfg["trials"] = trials
    if kind in STOCHASTIC:
        if cfg.get("seed") is None:
            raise ConfigError(f"{kind} is stochastic and needs a seed")
        _rng._check_seed(cfg["seed"])
    return cfg


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return v


def run(kind, cfg, base="nats", out=None):
    """Run one experiment; returns ``(exit status, report)`` and writes the artifacts when ``out`` is set."""
    results, checks, traj = RUNNERS[kind](cfg, base)
    report = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "kind": kind,
        "base": base,
        "config": cfg,
        "tolerances": TOLERANCES[kind],
        "results": results,
        "checks": checks,
        "passed": all(checks.values()),
    }
    if kind in STOCHASTIC:
        report["generator"] = _rng.GENERATOR
    report = _jsonable(report)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        if traj is not None:
            header, rows = traj
            lines = [",".join(header)] + [",".join(repr(v) if isinstance(v, float) else str(v) for v in r) for r in rows]
            (out / "trajectories.csv").write_text("\n".join(lines) + "\n")
    return (0 if report["passed"] else 2), report


def build_parser():
    p = argparse.ArgumentParser(prog="cclab", description="Causal coding and inverse control experiments.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", type=Path, help="JSON document of experiment parameters")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--base", choices=("bits", "nats"), default="nats")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        file_cfg = json.loads(args.config.read_text()) if args.config else {}
        if not isinstance(file_cfg, dict):
            raise ConfigError("config must be a JSON object")
        cfg = resolve_config(args.kind, file_cfg, args.seed, args.trials)
        status, report = run(args.kind, cfg, args.base, args.out)
    except (CclabError, ValueError, OSError) as exc:
        print(f"cclab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    failed = [k for k, v in report["checks"].items() if not v]
    if failed:
        print(f"cclab: {args.kind}: failed checks: {', '.join(failed)}", file=sys.stderr)
    else:
        print(f"cclab: {args.kind}: all {len(report['checks'])} checks passed")
    return status


if __name__ == "__main__":
    sys.exit(main())
