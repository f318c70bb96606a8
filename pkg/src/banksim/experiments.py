"""End-to-end numerical studies emitted as CSV plus a JSON manifest.

Each experiment takes a plain config dictionary (usually parsed from a
TOML file), returns all output file contents as strings keyed by file
name, and a manifest that is sufficient to regenerate those outputs
byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Optional

import numpy as np

from . import __version__
from .empirical import fraction_below
from .generator import stability_report
from .meanfield import (
    MeanFieldLimit,
    mean_field_from_dict,
    solve_setting1,
    solve_setting2,
)
from .model import DistFamily, DomainError, ModelSpec, _dist_from_dict, model_spec_from_dict
from .particles import run_particles, run_particles_setting2, run_tagged_bank
from .rng import RngStream, _splitmix64
from .simulator import InitSampler, run_ensemble, run_path


def _fmt(v: float) -> str:
    return "" if (isinstance(v, float) and math.isnan(v)) else f"{v:.17g}"


def _per_cell_seed(seed: int, n: int) -> int:
    """Derived seed for the ensemble of one population size."""
    return _splitmix64((seed ^ n) & ((1 << 64) - 1))


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()).hexdigest()


def build_spec(config: dict) -> ModelSpec:
    return model_spec_from_dict(config["model"])


def build_limit(config: dict, spec: ModelSpec) -> MeanFieldLimit:
    if "limit" in config:
        return mean_field_from_dict(config["limit"], spec.r, spec.sigma)
    return MeanFieldLimit.from_model_spec(spec)


def build_init_dist(config: dict) -> DistFamily:
    return _dist_from_dict(config["init"]["dist"])


def _collect_means(paths) -> np.ndarray:
    return np.vstack([p.m for p in paths])


def _fan_rows(t: np.ndarray, n: int, values: np.ndarray,
              limit: np.ndarray) -> list[str]:
    """Per-time mean and 5/95 percent quantiles across runs, nulls excluded."""
    rows = []
    for k, tk in enumerate(t):
        col = values[:, k]
        ok = col[~np.isnan(col)]
        nulls = col.size - ok.size
        if ok.size:
            mean = float(ok.mean())
            q05 = float(np.quantile(ok, 0.05))
            q95 = float(np.quantile(ok, 0.95))
        else:
            mean = q05 = q95 = math.nan
        rows.append(f"{tk:.17g},{n},{_fmt(mean)},{_fmt(q05)},{_fmt(q95)},"
                    f"{limit[k]:.17g},{nulls}")
    return rows


def convergence_experiment(config: dict, seed: int, threads: int = 1) -> dict[str, str]:
    """Quantile fans of the empirical mean reserve against the limit curve.

    Emits ``fan.csv`` with columns t,N,mean,q05,q95,limit,null_count; for
    the initial-count scaling also ``size_fan.csv`` with the same layout
    for the relative system size N(t)/N(0).
    """
    spec = build_spec(config)
    mf = build_limit(config, spec)
    init_dist = build_init_dist(config)
    exp_cfg = config["experiment"]
    N_list = [int(n) for n in exp_cfg["N_list"]]
    R = int(exp_cfg.get("R", 100))
    horizon = float(exp_cfg["horizon"])
    grid_dt = float(exp_cfg["grid_dt"])
    if not N_list or R < 2:
        raise DomainError("need a nonempty N list and R >= 2")
    setting = spec.scaling.setting
    m0 = init_dist.mean()
    if setting == 2:
        sol = solve_setting2(mf, m0, horizon)
    else:
        sol = solve_setting1(mf, m0, horizon)

    fan_lines = ["t,N,mean,q05,q95,limit,null_count"]
    size_lines = ["t,N,mean,q05,q95,limit,null_count"]
    for n in N_list:
        spec_n = spec.with_n0(n) if setting == 2 else spec
        paths = run_ensemble(spec_n, InitSampler(init_dist, n), R, horizon,
                             grid_dt, _per_cell_seed(seed, n), threads=threads)
        t = paths[0].t
        limit_m = np.interp(t, sol.t, sol.m)
        fan_lines += _fan_rows(t, n, _collect_means(paths), limit_m)
        if setting == 2:
            ratios = np.vstack([p.N / n for p in paths]).astype(float)
            limit_n = np.interp(t, sol.t, sol.n_inf)
            size_lines += _fan_rows(t, n, ratios, limit_n)
    out = {"fan.csv": "\n".join(fan_lines) + "\n"}
    if setting == 2:
        out["size_fan.csv"] = "\n".join(size_lines) + "\n"
    return out


def capital_distribution_experiment(config: dict, seed: int,
                                    threads: int = 1) -> dict[str, str]:
    """Distribution across runs of the fraction of banks at or below D.

    Emits ``histogram.csv`` with columns N,run,d_N; runs that end with an
    empty system leave d_N blank.
    """
    spec = build_spec(config)
    init_dist = build_init_dist(config)
    exp_cfg = config["experiment"]
    N_list = [int(n) for n in exp_cfg["N_list"]]
    R = int(exp_cfg.get("R", 100))
    D = float(exp_cfg["D"])
    T = float(exp_cfg["T"])
    grid_dt = float(exp_cfg.get("grid_dt", 0.1))
    setting = spec.scaling.setting
    lines = ["N,run,d_N"]
    for n in N_list:
        spec_n = spec.with_n0(n) if setting == 2 else spec
        paths = run_ensemble(spec_n, InitSampler(init_dist, n), R, T, grid_dt,
                             _per_cell_seed(seed, n), snapshot_times=[T],
                             threads=threads)
        for run, p in enumerate(paths):
            meas = p.snapshots[-1][1]
            d = "" if meas.empty else f"{fraction_below(meas, D):.17g}"
            lines.append(f"{n},{run},{d}")
    return {"histogram.csv": "\n".join(lines) + "\n"}


def chaos_experiment(config: dict, seed: int, threads: int = 1) -> dict[str, str]:
    """First-bank survival versus the killed-diffusion oracle, and the
    cross-bank dependence decay.

    Emits one ``chaos_N{n}.csv`` per population size with columns
    t,surv_finite,surv_oracle,corr,n_eff.  ``corr`` is the empirical
    correlation of the log-reserves of the first two initial banks among
    runs where both survive; cells with fewer than 30 joint survivors are
    low-power and left blank.
    """
    spec = build_spec(config)
    mf = build_limit(config, spec)
    init_dist = build_init_dist(config)
    exp_cfg = config["experiment"]
    N_list = [int(n) for n in exp_cfg["N_list"]]
    R = int(exp_cfg.get("R", 400))
    horizon = float(exp_cfg["horizon"])
    grid_dt = float(exp_cfg.get("grid_dt", 0.25))
    oracle_R = int(exp_cfg.get("oracle_R", 20000))
    oracle_dt = float(exp_cfg.get("oracle_dt", 1e-3))
    if min(N_list) < 2:
        raise DomainError("chaos comparison needs N >= 2")

    sol = solve_setting1(mf, init_dist.mean(), horizon)
    oracle_rng = RngStream(_per_cell_seed(seed, 0), 999)
    x1_draws = np.atleast_1d(init_dist.sample(oracle_rng, size=oracle_R))
    oracle = run_tagged_bank(mf, x1_draws, (sol.t, sol.m), horizon, oracle_dt,
                             oracle_R, _per_cell_seed(seed, 0), stream_id=1000)

    out = {}
    for n in N_list:
        paths = run_ensemble(spec, InitSampler(init_dist, n), R, horizon,
                             grid_dt, _per_cell_seed(seed, n),
                             threads=threads, track_ids=(1, 2))
        t = paths[0].t
        x1 = np.vstack([p.tracked[1] for p in paths])
        x2 = np.vstack([p.tracked[2] for p in paths])
        surv = (~np.isnan(x1)).mean(axis=0)
        surv_oracle = np.interp(t, oracle.t, oracle.survival)
        lines = ["t,surv_finite,surv_oracle,corr,n_eff"]
        for k, tk in enumerate(t):
            joint = ~np.isnan(x1[:, k]) & ~np.isnan(x2[:, k])
            n_eff = int(joint.sum())
            if n_eff >= 30:
                a = np.log(x1[joint, k])
                b = np.log(x2[joint, k])
                if a.std() > 0 and b.std() > 0:
                    corr = f"{float(np.corrcoef(a, b)[0, 1]):.17g}"
                else:
                    corr = ""
            else:
                corr = ""
            lines.append(f"{tk:.17g},{surv[k]:.17g},{surv_oracle[k]:.17g},"
                         f"{corr},{n_eff}")
        out[f"chaos_N{n}.csv"] = "\n".join(lines) + "\n"
    return out


def simulate_experiment(config: dict, seed: int, threads: int = 1) -> dict[str, str]:
    """One full trajectory: grid CSV, event log CSV, and a JSON dump."""
    spec = build_spec(config)
    init_dist = build_init_dist(config)
    exp_cfg = config["experiment"]
    n0 = int(exp_cfg["N0"])
    horizon = float(exp_cfg["horizon"])
    grid_dt = float(exp_cfg["grid_dt"])
    root = RngStream(seed)
    init = InitSampler(init_dist, n0)(root.spawn(0, 0))
    path = run_path(spec, init, horizon, grid_dt, root.spawn(0, 1))
    return {"grid.csv": path.grid_csv(), "events.csv": path.events_csv(),
            "path.json": path.to_json()}


def meanfield_experiment(config: dict, seed: int, threads: int = 1) -> dict[str, str]:
    """Deterministic limit trajectory CSV for the configured scaling."""
    spec = build_spec(config)
    mf = build_limit(config, spec)
    exp_cfg = config["experiment"]
    m0 = float(exp_cfg.get("m0", build_init_dist(config).mean()))
    horizon = float(exp_cfg["horizon"])
    dt = float(exp_cfg.get("dt", 1e-3))
    if spec.scaling.setting == 2:
        sol = solve_setting2(mf, m0, horizon, dt)
    else:
        sol = solve_setting1(mf, m0, horizon, dt)
    return {"ode.csv": sol.to_csv()}


def particles_experiment(config: dict, seed: int, threads: int = 1) -> dict[str, str]:
    """Particle approximation: mean trajectory and density snapshots."""
    spec = build_spec(config)
    mf = build_limit(config, spec)
    init_dist = build_init_dist(config)
    exp_cfg = config["experiment"]
    n_prime = int(exp_cfg["N_prime"])
    horizon = float(exp_cfg["horizon"])
    dt = float(exp_cfg.get("dt", 1e-3))
    snaps = [float(s) for s in exp_cfg.get("snapshot_times", [])]
    if spec.scaling.setting == 2:
        res, _, _ = run_particles_setting2(mf, n_prime, init_dist, horizon,
                                           dt, seed, snapshot_times=snaps)
    else:
        res = run_particles(mf, n_prime, init_dist, horizon, dt, seed,
                            snapshot_times=snaps)
    mean_lines = ["t,m"] + [f"{t:.17g},{m:.17g}" for t, m in zip(res.t, res.mean)]
    return {"particle_mean.csv": "\n".join(mean_lines) + "\n",
            "snapshot.csv": res.snapshot_csv()}


def stability_experiment(config: dict, seed: int, threads: int = 1) -> dict[str, str]:
    """Lyapunov drift probes serialized as JSON."""
    spec = build_spec(config)
    return {"stability.json": stability_report(spec).to_json() + "\n"}


_KINDS = {
    "converge": convergence_experiment,
    "capital": capital_distribution_experiment,
    "chaos": chaos_experiment,
    "simulate": simulate_experiment,
    "meanfield": meanfield_experiment,
    "particles": particles_experiment,
    "stability": stability_experiment,
}


def run_experiment(config: dict, seed_override: Optional[int] = None,
                   threads: int = 1) -> tuple[dict[str, str], dict]:
    """Dispatch a config to its experiment and assemble the manifest.

    The manifest embeds the full config and effective seed, so rerunning
    from the manifest alone reproduces every output byte-for-byte.
    """
    kind = config["experiment"]["kind"]
    if kind not in _KINDS:
        raise DomainError(f"unknown experiment kind {kind!r}")
    seed = int(seed_override if seed_override is not None
               else config["experiment"].get("seed", 0))
    outputs = _KINDS[kind](config, seed, threads)
    manifest = {
        "kind": kind,
        "seed": seed,
        "config": config,
        "outputs": sorted(outputs),
        "config_sha256": config_hash(config),
        "version": __version__,
    }
    return outputs, manifest


def rerun_from_manifest(manifest: dict, threads: int = 1) -> dict[str, str]:
    """Regenerate all outputs of a previous run from its manifest."""
    outputs, _ = run_experiment(manifest["config"], manifest["seed"], threads)
    return outputs
