"""End-to-end acceptance checks.

Each test covers one headline guarantee of the package at its stated
tolerance and prints a single PASS line with the measured numbers; a
failing guarantee fails its test.  These are slower than the unit suites
by design: they run the shipped presets at full size.
"""

import concurrent.futures
import itertools
import json
import pathlib
import time
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np

from banksim import (
    DistFamily,
    EmpiricalMeasure,
    wasserstein_p,
)
from banksim.experiments import rerun_from_manifest, run_experiment
from banksim.generator import (
    bounded_rational,
    gen_empirical,
    limit_operator_A,
    verify_rate_bound,
)
from banksim.meanfield import (
    MeanFieldLimit,
    solve_setting1,
    solve_setting2,
    stationary_mean,
)
from banksim.model import model_spec_from_dict
from banksim.particles import run_particles
from banksim.simulator import (
    SystemState,
    exp_reserves_sampler,
    run_ensemble,
)

PRESETS = pathlib.Path(__file__).resolve().parents[1] / "presets"
THREADS = 4


def load_preset(name, **overrides):
    with open(PRESETS / name, "rb") as fh:
        cfg = tomllib.load(fh)
    cfg["experiment"].update(overrides)
    return cfg


def parse_csv(text):
    lines = text.strip().split("\n")
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def report(name, detail):
    print(f"PASS {name}: {detail}")


def fig2_limit():
    return MeanFieldLimit.from_constants(
        r=0.05, sigma=0.2, lam=0.2, kap=0.1,
        birth=DistFamily("exponential", rate=1.0), dbar=0.5)


@dataclass(frozen=True)
class FixedState:
    """Picklable initial condition returning the same state every run."""

    reserves: tuple

    def __call__(self, rng):
        return SystemState.from_reserves(np.asarray(self.reserves))


def test_setting1_convergence_fig2():
    # Ave(m_N(t)) over R=100 runs at N=100 tracks 1 + e^{-0.2 t}
    cfg = load_preset("fig2.toml")
    spec = model_spec_from_dict(cfg["model"])
    start = time.perf_counter()
    paths = run_ensemble(spec, exp_reserves_sampler(0.5, 100), R=100,
                         horizon=10.0, grid_dt=5.0,
                         seed=cfg["experiment"]["seed"], threads=THREADS)
    elapsed = time.perf_counter() - start
    means = np.vstack([p.m for p in paths])
    assert not np.isnan(means).any()
    ave = means.mean(axis=0)
    ts = np.array([0.0, 5.0, 10.0])
    target = 1.0 + np.exp(-0.2 * ts)
    gaps = np.abs(ave - target)
    assert elapsed < 300.0
    assert np.all(gaps < 0.05)
    report("setting1-convergence",
           f"max |Ave(m_100) - (1+e^(-0.2t))| = {gaps.max():.4f} < 0.05 "
           f"at t in (0, 5, 10); runtime {elapsed:.1f}s")


def test_stationary_mean_is_one():
    m_star = stationary_mean(fig2_limit(), bracket=(0.1, 5.0))
    assert abs(m_star - 1.0) < 1e-10
    report("stationary-mean", f"|m* - 1| = {abs(m_star - 1.0):.2e} < 1e-10")


def test_setting2_limits_fig4():
    cfg = load_preset("fig4.toml")
    spec = model_spec_from_dict(cfg["model"])
    mf = MeanFieldLimit.from_model_spec(spec)
    sol = solve_setting2(mf, m0=0.5, horizon=200.0)
    gap_n = abs(sol.n_inf[-1] - 2.0)
    gap_m = abs(sol.m[-1] - 2.0 / 3.0)
    assert gap_n < 1e-6 and gap_m < 1e-6

    paths = run_ensemble(spec, exp_reserves_sampler(2.0, 100), R=100,
                         horizon=25.0, grid_dt=25.0,
                         seed=cfg["experiment"]["seed"], threads=THREADS)
    m25 = np.array([p.m[-1] for p in paths])
    n25 = np.array([p.N[-1] / 100.0 for p in paths])
    assert not np.isnan(m25).any()
    se_m = m25.std(ddof=1) / np.sqrt(len(m25))
    se_n = n25.std(ddof=1) / np.sqrt(len(n25))
    gap_fm = abs(m25.mean() - sol.at(25.0))
    gap_fn = abs(n25.mean() - sol.n_at(25.0))
    assert gap_fm < 3 * se_m
    assert gap_fn < 3 * se_n
    report("setting2-limits",
           f"terminal gaps ({gap_n:.1e}, {gap_m:.1e}) < 1e-6; finite t=25 "
           f"mean gap {gap_fm:.4f} < {3 * se_m:.4f}, "
           f"size gap {gap_fn:.4f} < {3 * se_n:.4f}")


def test_generator_consistency_on_quantile_vectors():
    # empirical generator at Exp(1) quantile vectors approaches the limit
    # operator as the vector refines
    cfg = load_preset("fig2.toml")
    spec = model_spec_from_dict(cfg["model"])
    mf = MeanFieldLimit.from_model_spec(spec)
    tf = bounded_rational()
    gaps = []
    for k in (50, 100, 200, 400):
        q = -np.log(1.0 - (np.arange(1, k + 1) - 0.5) / k)
        gap = abs(gen_empirical(SystemState.from_reserves(q), spec, tf)
                  - limit_operator_A(EmpiricalMeasure(q), mf, tf))
        gaps.append(gap)
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < gaps[0] / 4
    report("generator-consistency",
           f"gaps {[f'{g:.2e}' for g in gaps]} decrease; "
           f"{gaps[-1]:.2e} < {gaps[0] / 4:.2e}")


def test_short_time_generator_monte_carlo():
    cfg = load_preset("fig1.toml")
    spec = model_spec_from_dict(cfg["model"])
    tf = bounded_rational()
    x0 = np.array([0.4, 0.9, 1.3, 2.1, 3.6])
    h = 0.005
    R = 100_000
    exact = gen_empirical(SystemState.from_reserves(x0), spec, tf)
    paths = run_ensemble(spec, FixedState(tuple(x0)), R=R, horizon=h,
                         grid_dt=h, seed=414243, snapshot_times=[h],
                         threads=THREADS)
    f0 = float(np.mean(tf.f(x0)))
    increments = np.empty(R)
    for i, p in enumerate(paths):
        _, meas = p.snapshots[0]
        increments[i] = (float(np.mean(tf.f(meas.samples))) - f0) / h
    est = increments.mean()
    se = increments.std(ddof=1) / np.sqrt(R)
    tol = 3 * se + 10 * h
    assert abs(est - exact) < tol
    report("short-time-generator",
           f"|MC {est:.4f} - exact {exact:.4f}| = {abs(est - exact):.4f} "
           f"< {tol:.4f}")


def test_gbm_exactness_without_events():
    cfg = load_preset("fig1.toml")
    cfg["model"]["birth_rate"] = {"form": "constant", "c": 0.0}
    cfg["model"]["default_rate"] = {"form": "constant", "c": 0.0}
    spec = model_spec_from_dict(cfg["model"])
    R = 100_000
    paths = run_ensemble(spec, FixedState((1.0,)), R=R, horizon=1.0,
                         grid_dt=1.0, seed=515253, threads=THREADS)
    s1 = np.array([p.S[-1] for p in paths])
    est = s1.mean()
    se = s1.std(ddof=1) / np.sqrt(R)
    gap = abs(est - np.exp(0.05))
    assert gap < 3 * se
    report("gbm-exactness",
           f"|E[S(1)] {est:.5f} - e^0.05| = {gap:.2e} < {3 * se:.2e}")


def _brute_force_wp(xa, xb, p):
    n = len(xa)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        cost = np.mean(np.abs(xa - xb[list(perm)]) ** p)
        best = min(best, cost)
    return best ** (1.0 / p)


def test_wasserstein_matches_brute_force():
    rng = np.random.default_rng(616263)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        xa = rng.exponential(size=n)
        xb = rng.exponential(size=n)
        for p in (1.0, 2.0):
            got = wasserstein_p(EmpiricalMeasure(xa), EmpiricalMeasure(xb), p)
            want = _brute_force_wp(np.sort(xa), np.sort(xb), p)
            worst = max(worst, abs(got - want))
    assert worst < 1e-12
    report("wasserstein-oracle",
           f"max |quantile - brute force| = {worst:.2e} < 1e-12 "
           f"over 1000 pairs, p in (1, 2)")


def test_rate_bound_certificate():
    lam, kap = 0.1, 0.3
    ok = verify_rate_bound(lam, kap, lambda n: n + 1.0,
                           (kap - lam) / 2, n_max=10_000)
    bad = verify_rate_bound(lam, kap, lambda n: n + 1.0,
                            kap - lam, n_max=10_000)
    assert ok and not bad
    report("rate-bound", "alpha = 0.1 certified up to n = 10000; "
                         "alpha = 0.2 correctly rejected")


def test_capital_distribution_fig2():
    cfg = load_preset("fig2.toml", kind="capital", N_list=[5, 100])
    outputs, _ = run_experiment(cfg, threads=THREADS)
    rows = parse_csv(outputs["histogram.csv"])
    d = {n: np.array([float(r["d_N"]) for r in rows
                      if r["N"] == str(n) and r["d_N"]])
         for n in (5, 100)}
    mean100 = d[100].mean()
    s5, s100 = d[5].std(ddof=1), d[100].std(ddof=1)
    assert 0.5 <= mean100 <= 0.7
    assert s100 < s5
    report("capital-distribution",
           f"mean d_100 = {mean100:.3f} in [0.5, 0.7]; "
           f"std {s100:.3f} (N=100) < {s5:.3f} (N=5)")


def _one_particle_rep(i):
    mf = fig2_limit()
    res = run_particles(mf, N_prime=2000,
                        init_dist=DistFamily("exponential", rate=0.5),
                        horizon=10.0, dt=1e-3, seed=717273, stream_id=i)
    return float(res.mean[-1])


def test_particles_track_mean_ode():
    sol = solve_setting1(fig2_limit(), m0=2.0, horizon=10.0)
    with concurrent.futures.ProcessPoolExecutor(max_workers=THREADS) as ex:
        finals = np.array(list(ex.map(_one_particle_rep, range(50))))
    se = finals.std(ddof=1) / np.sqrt(len(finals))
    gap = abs(finals.mean() - sol.at(10.0))
    assert gap < 3 * se
    report("particles-vs-ode",
           f"|mean m'(10) - m(10)| = {gap:.4f} < {3 * se:.4f} "
           f"(50 reps, N' = 2000)")


def test_propagation_of_chaos():
    cfg = load_preset("chaos.toml")
    cfg["experiment"]["kind"] = "chaos"
    outputs, _ = run_experiment(cfg, threads=THREADS)
    rows = {n: parse_csv(outputs[f"chaos_N{n}.csv"]) for n in (5, 200)}
    final = {n: [r for r in rows[n] if float(r["t"]) == 5.0][0]
             for n in (5, 200)}
    surv_gap = abs(float(final[200]["surv_finite"])
                   - float(final[200]["surv_oracle"]))
    assert surv_gap < 0.05
    c5 = abs(float(final[5]["corr"]))
    c200 = abs(float(final[200]["corr"]))
    assert c200 < c5
    report("propagation-of-chaos",
           f"survival gap at t=5, N=200: {surv_gap:.4f} < 0.05; "
           f"|corr| {c200:.3f} (N=200) < {c5:.3f} (N=5)")


def test_manifest_determinism_all_kinds():
    cases = [
        load_preset("fig1.toml", kind="simulate", horizon=1.0),
        load_preset("fig2.toml", kind="meanfield", horizon=2.0),
        load_preset("fig3.toml", kind="particles", N_prime=30,
                    horizon=0.3, dt=1e-2, snapshot_times=[0.3]),
        load_preset("fig2.toml", kind="converge", N_list=[5], R=5,
                    horizon=1.0, grid_dt=0.5),
        load_preset("fig2.toml", kind="capital", N_list=[5], R=5,
                    T=1.0, D=1.0),
        load_preset("chaos.toml", kind="chaos", N_list=[3], R=30,
                    horizon=1.0, grid_dt=0.5, oracle_R=200),
        load_preset("example34.toml", kind="stability"),
    ]
    for cfg in cases:
        outputs, manifest = run_experiment(cfg)
        again = rerun_from_manifest(manifest)
        assert outputs == again, manifest["kind"]
        roundtrip = json.loads(json.dumps(manifest))
        assert rerun_from_manifest(roundtrip) == outputs, manifest["kind"]
    report("determinism",
           "all 7 experiment kinds byte-identical on manifest re-run")
