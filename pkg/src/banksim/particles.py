"""Interacting-particle approximation of the limiting jump-diffusion.

A fixed population of N' particles evolves by: an exact-exponential GBM
update with the contagion-adjusted drift, a regeneration clock that
redraws the particle from the birth-size law, and a mutation clock that
copies the position of a uniformly chosen other particle.  All rates are
evaluated at the pre-step ensemble mean (explicit scheme).  The module
also provides the killed tagged-bank diffusion used as the propagation
of chaos oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .empirical import EmpiricalMeasure
from .meanfield import MeanFieldLimit, OdeSolution, n_infinity_general, solve_setting2
from .model import DistFamily, DomainError
from .rng import RngStream

_EPS_RESERVE = 1e-12


@dataclass
class ParticleEnsemble:
    """Fixed-cardinality particle population at one instant.

    For the initial-count scaling (``setting`` 2) the relative system
    size enters the drift and the regeneration rate; it is supplied as a
    grid interpolated in time.
    """

    reserves: np.ndarray
    time: float
    rng: RngStream
    setting: int = 1
    n_inf_grid: Optional[tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        self.reserves = np.asarray(self.reserves, dtype=float)
        if self.reserves.size < 2:
            raise DomainError("particle system needs N' >= 2 (mutation partner)")
        if np.any(self.reserves <= 0):
            raise DomainError("particle reserves must be positive")
        if self.setting == 2 and self.n_inf_grid is None:
            raise DomainError("setting 2 requires an N_inf grid")

    @property
    def n_particles(self) -> int:
        return self.reserves.size

    def mean(self) -> float:
        return float(self.reserves.mean())

    def n_inf_at(self, t: float) -> float:
        tg, ng = self.n_inf_grid
        return float(np.interp(t, tg, ng))

    def measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.reserves.copy())


def step_particles(ens: ParticleEnsemble, mf: MeanFieldLimit, dt: float) -> ParticleEnsemble:
    """One explicit step: diffusion, then regeneration, then mutation.

    The diffusion uses the exact-exponential GBM update, which preserves
    positivity structurally; the clamp below is an unreachable guard.
    Mutation copies a pre-step value, so a step changes each particle at
    most once and introduces no new values beyond fresh births.
    """
    if dt <= 0:
        raise DomainError("dt must be > 0")
    pre = ens.reserves
    m = ens.mean()
    rng = ens.rng
    if ens.setting == 2:
        n_now = ens.n_inf_at(ens.time)
        drift = np.asarray(mf.psi_tilde(n_now, m, pre), dtype=float)
        lam = mf.lambda_inf(m) / n_now
    else:
        drift = np.asarray(mf.psi(pre, m), dtype=float)
        lam = mf.lambda_inf(m)
    kap = np.atleast_1d(mf.kappa_inf(m, pre))
    if kap.size == 1:
        kap = np.full(pre.size, float(kap[0]))
    if lam * dt >= 0.1 or float(kap.max()) * dt >= 0.1:
        raise DomainError("dt too large for the configured jump intensities")

    z = rng.normal(pre.size)
    new = pre * np.exp((drift - mf.sigma**2 / 2) * dt + mf.sigma * math.sqrt(dt) * z)
    np.maximum(new, _EPS_RESERVE, out=new)

    p_reg = -math.expm1(-lam * dt)
    fired_reg = np.flatnonzero(rng.random(pre.size) < p_reg)
    if fired_reg.size:
        new[fired_reg] = np.atleast_1d(
            mf.birth_dist(m).sample(rng, size=fired_reg.size))
    p_mut = -np.expm1(-kap * dt)
    fired_mut = np.flatnonzero(rng.random(pre.size) < p_mut)
    if fired_mut.size:
        partner = np.asarray(rng.integers(0, pre.size - 1, size=fired_mut.size))
        partner = np.where(partner >= fired_mut, partner + 1, partner)
        new[fired_mut] = pre[partner]

    return ParticleEnsemble(new, ens.time + dt, rng, ens.setting, ens.n_inf_grid)


@dataclass
class ParticleResult:
    """Mean trajectory and snapshots of a particle run."""

    t: np.ndarray
    mean: np.ndarray
    snapshots: list[tuple[float, EmpiricalMeasure]]
    kappa_moment: np.ndarray
    lam_grid: np.ndarray
    seed: int

    def snapshot_csv(self) -> str:
        lines = ["t,particle_index,reserve"]
        for t, meas in self.snapshots:
            for i, x in enumerate(meas.samples):
                lines.append(f"{t:.17g},{i},{x:.17g}")
        return "\n".join(lines) + "\n"


def run_particles(mf: MeanFieldLimit, N_prime: int, init_dist: DistFamily,
                  horizon: float, dt: float, seed: int,
                  snapshot_times: Sequence[float] = (),
                  setting: int = 1,
                  n_inf_grid: Optional[tuple[np.ndarray, np.ndarray]] = None,
                  stream_id: int = 0) -> ParticleResult:
    """Run one particle ensemble and record its mean trajectory.

    Deterministic given (seed, stream_id).  Also records the per-step
    population-averaged default intensity and birth intensity, which the
    self-consistent setting-2 iteration feeds back into the size ODE.
    """
    if N_prime < 2:
        raise DomainError("N_prime must be >= 2")
    rng = RngStream(seed, stream_id)
    init = np.atleast_1d(init_dist.sample(rng, size=N_prime))
    ens = ParticleEnsemble(init, 0.0, rng, setting, n_inf_grid)
    n_steps = int(round(horizon / dt))
    t = np.linspace(0.0, horizon, n_steps + 1)
    means = np.empty(n_steps + 1)
    kmom = np.empty(n_steps + 1)
    lams = np.empty(n_steps + 1)
    snap_wanted = sorted(float(s) for s in snapshot_times)
    snapshots: list[tuple[float, EmpiricalMeasure]] = []

    def record(k: int):
        m = ens.mean()
        means[k] = m
        kmom[k] = float(np.mean(mf.kappa_inf(m, ens.reserves)))
        lams[k] = mf.lambda_inf(m)
        if any(abs(t[k] - s) <= 1e-9 for s in snap_wanted):
            snapshots.append((float(t[k]), ens.measure()))

    record(0)
    for k in range(1, n_steps + 1):
        ens = step_particles(ens, mf, horizon / n_steps)
        record(k)
    return ParticleResult(t, means, snapshots, kmom, lams, seed)


def run_particles_setting2(mf: MeanFieldLimit, N_prime: int, init_dist: DistFamily,
                           horizon: float, dt: float, seed: int,
                           snapshot_times: Sequence[float] = (),
                           tol: float = 1e-3, max_iter: int = 10,
                           ) -> tuple[ParticleResult, np.ndarray, np.ndarray]:
    """Particle run under the initial-count scaling.

    When the default rate is reserve-independent the size factor comes
    straight from the coupled limit ODEs.  Otherwise the factor is
    iterated to self-consistency: run the particles with a provisional
    grid, re-estimate the averaged default intensity, recompute the size
    by the integrating-factor formula, and repeat until the sup gap
    drops below ``tol``.  Returns (result, t grid, N_inf grid).
    """
    n_steps = int(round(horizon / dt))
    tg = np.linspace(0.0, horizon, n_steps + 1)
    if not mf.kappa_x_dependent:
        sol = solve_setting2(mf, max(init_dist.mean(), 1e-6), horizon, dt)
        ng = np.interp(tg, sol.t, sol.n_inf)
        res = run_particles(mf, N_prime, init_dist, horizon, dt, seed,
                            snapshot_times, setting=2, n_inf_grid=(tg, ng))
        return res, tg, ng
    ng = np.ones(n_steps + 1)
    res = None
    for it in range(max_iter):
        res = run_particles(mf, N_prime, init_dist, horizon, dt, seed,
                            snapshot_times, setting=2, n_inf_grid=(tg, ng),
                            stream_id=it)
        _, ng_new = n_infinity_general(res.kappa_moment, res.lam_grid,
                                       horizon, dt)
        gap = float(np.max(np.abs(ng_new - ng)))
        ng = ng_new
        if gap < tol:
            break
    return res, tg, ng


@dataclass
class TaggedBankResult:
    """Survival curve and surviving-marginal snapshots of the tagged bank."""

    t: np.ndarray
    survival: np.ndarray
    se: np.ndarray
    snapshots: list[tuple[float, EmpiricalMeasure]]

    def survival_csv(self) -> str:
        lines = ["t,survival_prob,se"]
        for t, s, e in zip(self.t, self.survival, self.se):
            lines.append(f"{t:.17g},{s:.17g},{e:.17g}")
        return "\n".join(lines) + "\n"

    def survival_at(self, t: float) -> float:
        return float(np.interp(t, self.t, self.survival))


def run_tagged_bank(mf: MeanFieldLimit, x1, m_grid: tuple[np.ndarray, np.ndarray],
                    horizon: float, dt: float, R: int, seed: int,
                    setting2_N_grid: Optional[tuple[np.ndarray, np.ndarray]] = None,
                    snapshot_times: Sequence[float] = (),
                    stream_id: int = 0) -> TaggedBankResult:
    """Killed diffusion of a single tagged bank against a mean trajectory.

    R independent paths start at x1 (scalar, or one value per path),
    drift with the contagion-adjusted coefficient evaluated along the
    supplied deterministic mean, and are killed at the limiting default
    intensity.  Killing is applied per step with the exact exponential
    probability.
    """
    tm, mm = m_grid
    if tm[0] > 0.0 or tm[-1] < horizon - 1e-12:
        raise DomainError("mean trajectory grid must cover [0, horizon]")
    if R < 1:
        raise DomainError("R must be >= 1")
    rng = RngStream(seed, stream_id)
    x = np.full(R, float(x1)) if np.isscalar(x1) else np.asarray(x1, dtype=float)
    if x.size != R:
        raise DomainError("x1 must be scalar or length R")
    if np.any(x <= 0):
        raise DomainError("x1 must be positive")
    alive = np.ones(R, dtype=bool)
    n_steps = int(round(horizon / dt))
    h = horizon / n_steps
    t = np.linspace(0.0, horizon, n_steps + 1)
    surv = np.empty(n_steps + 1)
    surv[0] = 1.0
    snap_wanted = sorted(float(s) for s in snapshot_times)
    snapshots: list[tuple[float, EmpiricalMeasure]] = []
    if any(abs(0.0 - s) <= 1e-9 for s in snap_wanted):
        snapshots.append((0.0, EmpiricalMeasure(x.copy())))
    for k in range(1, n_steps + 1):
        tk = t[k - 1]
        m_t = float(np.interp(tk, tm, mm))
        if setting2_N_grid is not None:
            tg, ng = setting2_N_grid
            n_now = float(np.interp(tk, tg, ng))
            drift = np.asarray(mf.psi_tilde(n_now, m_t, x), dtype=float)
        else:
            drift = np.asarray(mf.psi(x, m_t), dtype=float)
        z = rng.normal(R)
        kap = np.atleast_1d(mf.kappa_inf(m_t, x))
        if kap.size == 1:
            kap = np.full(R, float(kap[0]))
        u = rng.random(R)
        # advance only living paths, but always consume R draws per step
        # so the stream layout is independent of the survival pattern
        step = np.exp((drift - mf.sigma**2 / 2) * h + mf.sigma * math.sqrt(h) * z)
        killed = u < -np.expm1(-kap * h)
        x = np.where(alive, x * step, x)
        alive &= ~killed
        surv[k] = alive.mean()
        if any(abs(t[k] - s) <= 1e-9 for s in snap_wanted):
            survivors = x[alive]
            snapshots.append((float(t[k]), EmpiricalMeasure(survivors.copy())))
    se = np.sqrt(np.maximum(surv * (1 - surv), 0.0) / R)
    return TaggedBankResult(t, surv, se, snapshots)
