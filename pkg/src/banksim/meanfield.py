"""Mean-field limit coefficients and deterministic limit solvers.

Two scaling regimes are supported.  In the first, rates and contagion
scale with the current number of banks and the limiting mean reserve
solves a closed scalar ODE.  In the second, scaling is by the initial
count, and the limit is a coupled system for the relative system size
N_inf(t) and the mean reserve of the representative particle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import bisect

from .model import (
    DEFAULT_KAPPA_CAP,
    ContagionFamily,
    DistFamily,
    DomainError,
    ModelSpec,
)

DEFAULT_ODE_DT = 1e-3


class NumericalBlowup(RuntimeError):
    """ODE trajectory left the admissible region (m <= 0 or N_inf <= 0)."""


class BracketError(ValueError):
    """Root bracket does not straddle a sign change."""


@dataclass(frozen=True)
class ConstFn:
    """Constant function of the mean reserve, y -> v."""

    v: float

    def __call__(self, y):
        return self.v


@dataclass(frozen=True)
class ConstFn2:
    """Constant function of (mean reserve, reserve), (y, x) -> v."""

    v: float

    def __call__(self, y, x):
        if np.isscalar(x):
            return self.v
        return np.full_like(np.asarray(x, float), self.v)


@dataclass(frozen=True)
class HyperbolicFn2:
    """(y, x) -> min(a / (b + x), cap); reserve-dependent default rate."""

    a: float
    b: float
    cap: float = DEFAULT_KAPPA_CAP

    def __call__(self, y, x):
        return np.minimum(self.a / (self.b + np.asarray(x, dtype=float)), self.cap)


@dataclass(frozen=True)
class ConstBirth:
    """Birth-size law independent of the mean reserve."""

    dist: DistFamily

    def __call__(self, y) -> DistFamily:
        return self.dist


@dataclass(frozen=True)
class MeanFieldLimit:
    """Limiting coefficients of the mean-field system.

    ``lambda_inf`` maps the mean reserve y to the birth intensity;
    ``kappa_inf`` maps (y, x) to the default intensity of a bank with
    reserve x; ``birth_dist`` maps y to the birth-size law; ``dbar_inf``
    maps (y, x) to the mean scaled contagion impact.  ``constants`` marks
    configurations where all four are constant, which unlocks closed-form
    solutions; ``kappa_x_dependent`` marks reserve-dependent default
    rates, for which the setting-1 mean equation does not close.
    """

    r: float
    sigma: float
    lambda_inf: Callable[[float], float]
    kappa_inf: Callable[[float, float], float]
    birth_dist: Callable[[float], DistFamily]
    dbar_inf: Callable[[float, float], float]
    c_kappa: float = DEFAULT_KAPPA_CAP
    constants: bool = False
    kappa_x_dependent: bool = False

    def bbar_inf(self, y: float) -> float:
        return self.birth_dist(y).mean()

    def psi(self, x, y):
        """Limiting per-reserve drift r - Dbar_inf(y, x) kappa_inf(y, x)."""
        return self.r - self.dbar_inf(y, x) * self.kappa_inf(y, x)

    def psi_tilde(self, n, y, x):
        """Setting-2 drift r - n kappa_inf(y, x) Dbar_inf(y, x)."""
        return self.r - n * self.kappa_inf(y, x) * self.dbar_inf(y, x)

    @classmethod
    def from_constants(cls, r: float, sigma: float, lam: float, kap: float,
                       birth: DistFamily, dbar: float,
                       c_kappa: float = DEFAULT_KAPPA_CAP) -> "MeanFieldLimit":
        return cls(r, sigma, ConstFn(lam), ConstFn2(kap), ConstBirth(birth),
                   ConstFn2(dbar), c_kappa, constants=True,
                   kappa_x_dependent=False)

    @classmethod
    def from_model_spec(cls, spec: ModelSpec) -> "MeanFieldLimit":
        """Derive the limit coefficients of a finite-system parameterization.

        Supported forms: birth rate linear in the (initial) count, which
        has the constant per-bank limit c; constant default rate; uniform
        contagion scaled by the (initial) count, with scaled mean d/2;
        birth-size family as given.  Other forms have no closed limit
        here and are rejected.
        """
        br = spec.birth_rate
        if br.form not in ("linear_in_n", "linear_in_n0"):
            raise DomainError(f"no closed limit for birth-rate form {br.form!r}")
        if spec.default_rate.form != "constant":
            raise DomainError("only constant default rates have a closed limit here")
        if spec.contagion.form not in ("uniform_over_count", "uniform_over_n0"):
            raise DomainError("contagion must scale with the bank count")
        kap = min(spec.default_rate.c, spec.default_rate.cap)
        return cls.from_constants(spec.r, spec.sigma, br.c, kap,
                                  spec.birth_size, spec.contagion.mean_scaled(),
                                  spec.default_rate.cap)


def mean_field_from_dict(cfg: dict, r: float, sigma: float) -> MeanFieldLimit:
    """Build limit coefficients from the ``[limit]`` table of a config.

    Expected keys: lambda_inf (constant c), kappa_inf (constant c or
    hyperbolic a, b), birth_size (distribution table), dbar_inf (constant
    c), optional cap.
    """
    cap = float(cfg.get("cap", DEFAULT_KAPPA_CAP))
    lam_tab = cfg["lambda_inf"]
    if lam_tab.get("form", "constant") != "constant":
        raise DomainError("only constant limiting birth intensities are supported")
    lam = ConstFn(float(lam_tab["c"]))
    kap_tab = cfg["kappa_inf"]
    if kap_tab["form"] == "constant":
        kap = ConstFn2(min(float(kap_tab["c"]), cap))
        x_dep = False
    elif kap_tab["form"] == "hyperbolic":
        kap = HyperbolicFn2(float(kap_tab["a"]), float(kap_tab["b"]), cap)
        x_dep = True
    else:
        raise DomainError(f"unknown limiting default-rate form {kap_tab['form']!r}")
    from .model import _dist_from_dict
    birth = ConstBirth(_dist_from_dict(cfg["birth_size"]))
    dbar = ConstFn2(float(cfg["dbar_inf"]["c"]))
    constants = not x_dep
    return MeanFieldLimit(r, sigma, lam, kap, birth, dbar, cap,
                          constants=constants, kappa_x_dependent=x_dep)


@dataclass
class OdeSolution:
    """Fixed-step solution grid of a limit ODE system.

    ``m`` is the limiting mean reserve; ``n_inf`` is present for the
    second scaling regime.  ``closed_form`` carries exact trajectories
    when the coefficients are constant, and ``terminal`` any closed-form
    limits.
    """

    t: np.ndarray
    m: np.ndarray
    n_inf: Optional[np.ndarray] = None
    dt: float = DEFAULT_ODE_DT
    scheme: str = "rk4"
    setting: int = 1
    closed_form: dict = field(default_factory=dict)
    terminal: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        if self.n_inf is None:
            lines = ["t,m"]
            lines += [f"{t:.17g},{m:.17g}" for t, m in zip(self.t, self.m)]
        else:
            lines = ["t,m_tilde,N_inf"]
            lines += [f"{t:.17g},{m:.17g},{n:.17g}"
                      for t, m, n in zip(self.t, self.m, self.n_inf)]
        return "\n".join(lines) + "\n"

    def at(self, t: float) -> float:
        """Linear interpolation of m at time t."""
        return float(np.interp(t, self.t, self.m))

    def n_at(self, t: float) -> float:
        if self.n_inf is None:
            raise DomainError("no N_inf component in a first-regime solution")
        return float(np.interp(t, self.t, self.n_inf))


def _rk4(f, y0: np.ndarray, horizon: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Classical fixed-step RK4 on [0, horizon]; returns (t grid, states)."""
    if dt <= 0 or horizon <= 0:
        raise DomainError("horizon and dt must be > 0")
    n_steps = int(round(horizon / dt))
    t = np.linspace(0.0, horizon, n_steps + 1)
    h = horizon / n_steps
    ys = np.empty((n_steps + 1, y0.size))
    y = np.asarray(y0, dtype=float)
    ys[0] = y
    for k in range(n_steps):
        k1 = f(y)
        k2 = f(y + h / 2 * k1)
        k3 = f(y + h / 2 * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NumericalBlowup(f"non-finite state at t={t[k + 1]:.6g}")
        ys[k + 1] = y
    return t, ys


def _mean_rhs(mf: MeanFieldLimit, m: float) -> float:
    lam = mf.lambda_inf(m)
    return float(mf.psi(m, m)) * m + lam * (mf.bbar_inf(m) - m)


def solve_setting1(mf: MeanFieldLimit, m0: float, horizon: float,
                   dt: float = DEFAULT_ODE_DT) -> OdeSolution:
    """Solve the closed mean ODE m' = psi(m) m + lambda(m)(Bbar(m) - m).

    Requires reserve-independent default and contagion coefficients (the
    mean equation does not close otherwise).  With fully constant
    coefficients the exact solution m(t) = (m0 - M) e^{gamma t} + M is
    attached, where gamma = r - Dbar kappa - lambda and M is the
    stationary mean.
    """
    if m0 <= 0:
        raise DomainError("m0 must be > 0")
    if mf.kappa_x_dependent:
        raise DomainError(
            "reserve-dependent default rates leave the mean equation unclosed; "
            "use the particle approximation instead")
    t, ys = _rk4(lambda y: np.array([_mean_rhs(mf, y[0])]),
                 np.array([m0]), horizon, dt)
    m = ys[:, 0]
    if np.any(m <= 0):
        raise NumericalBlowup("mean trajectory left (0, inf)")
    sol = OdeSolution(t, m, None, dt, "rk4", 1)
    if mf.constants:
        lam = mf.lambda_inf(0.0)
        kap = float(mf.kappa_inf(0.0, 1.0))
        dbar = float(mf.dbar_inf(0.0, 1.0))
        bbar = mf.bbar_inf(0.0)
        gamma = mf.r - dbar * kap - lam
        if gamma != 0.0:
            M = -lam * bbar / gamma
            sol.closed_form["m"] = (m0 - M) * np.exp(gamma * t) + M
            sol.terminal["gamma"] = gamma
            sol.terminal["M"] = M
        else:
            sol.closed_form["m"] = m0 + lam * bbar * t
            sol.terminal["gamma"] = 0.0
    return sol


def stationary_mean(mf: MeanFieldLimit, bracket: tuple[float, float]) -> float:
    """Root of the stationary mean equation by bisection (xtol 1e-12).

    The stationary mean is independent of sigma.  Raises BracketError if
    the right-hand side does not change sign on the bracket.
    """
    lo, hi = bracket
    if not (0 < lo < hi):
        raise DomainError("bracket must satisfy 0 < lo < hi")
    if mf.kappa_x_dependent:
        raise DomainError("stationary mean needs reserve-independent coefficients")
    flo, fhi = _mean_rhs(mf, lo), _mean_rhs(mf, hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]")
    return float(bisect(lambda m: _mean_rhs(mf, m), lo, hi, xtol=1e-12))


def solve_setting2(mf: MeanFieldLimit, m0: float, horizon: float,
                   dt: float = DEFAULT_ODE_DT) -> OdeSolution:
    """Solve the coupled (N_inf, m) system of the initial-count scaling.

        N_inf' = lambda(m) - N_inf kappa(m)
        m'     = [r - Dbar(m) kappa(m) N_inf] m + (lambda(m)/N_inf)(Bbar(m) - m)

    with N_inf(0) = 1.  With constant coefficients the exact N_inf(t)
    and the long-run limits of both components are attached.
    """
    if m0 <= 0:
        raise DomainError("m0 must be > 0")
    if mf.kappa_x_dependent:
        raise DomainError("coupled mean system needs reserve-independent kappa")

    def rhs(y):
        n_inf, m = y
        if n_inf <= 0:
            raise NumericalBlowup("N_inf reached 0")
        lam = mf.lambda_inf(m)
        kap = float(mf.kappa_inf(m, m))
        dbar = float(mf.dbar_inf(m, m))
        bbar = mf.bbar_inf(m)
        return np.array([
            lam - n_inf * kap,
            (mf.r - dbar * kap * n_inf) * m + lam / n_inf * (bbar - m),
        ])

    t, ys = _rk4(rhs, np.array([1.0, m0]), horizon, dt)
    n_inf, m = ys[:, 0], ys[:, 1]
    if np.any(n_inf <= 0):
        raise NumericalBlowup("N_inf trajectory left (0, inf)")
    if np.any(m <= 0):
        raise NumericalBlowup("mean trajectory left (0, inf)")
    sol = OdeSolution(t, m, n_inf, dt, "rk4", 2)
    if mf.constants:
        lam = mf.lambda_inf(0.0)
        kap = float(mf.kappa_inf(0.0, 1.0))
        dbar = float(mf.dbar_inf(0.0, 1.0))
        bbar = mf.bbar_inf(0.0)
        if kap > 0:
            ratio = lam / kap
            sol.closed_form["n_inf"] = ratio - (ratio - 1.0) * np.exp(-kap * t)
            sol.terminal["n_inf_limit"] = ratio
            denom = dbar * lam + kap - mf.r
            if denom > 0:
                sol.terminal["m_limit"] = kap * bbar / denom
    return sol


def n_infinity_general(kappa_moment, lambda_grid, horizon: float,
                       dt: float = DEFAULT_ODE_DT) -> tuple[np.ndarray, np.ndarray]:
    """Relative system size from time-varying inputs by integrating factor.

    Solves N' = lambda(t) - N kappa(t), N(0) = 1 as
    N(t) = (1 + int_0^t lambda K du) / K(t) with K(t) = exp int_0^t kappa du,
    using cumulative trapezoid quadrature.  ``kappa_moment`` is the
    population-averaged default intensity at time t (e.g. estimated from
    particles); both inputs may be callables of t or arrays on the grid.
    """
    n_steps = int(round(horizon / dt))
    t = np.linspace(0.0, horizon, n_steps + 1)

    def as_grid(u):
        if callable(u):
            return np.array([float(u(tt)) for tt in t])
        arr = np.asarray(u, dtype=float)
        if arr.shape != t.shape:
            raise DomainError("grid input length does not match the time grid")
        return arr

    kap = as_grid(kappa_moment)
    lam = as_grid(lambda_grid)
    h = horizon / n_steps
    int_kappa = np.concatenate(([0.0], np.cumsum((kap[1:] + kap[:-1]) / 2 * h)))
    # keep the integrating factor well-scaled over long horizons
    log_K = int_kappa
    integrand = lam * np.exp(log_K - log_K.max())
    cum = np.concatenate(([0.0], np.cumsum((integrand[1:] + integrand[:-1]) / 2 * h)))
    n_inf = (np.exp(-log_K.max()) + cum) * np.exp(log_K.max() - log_K)
    return t, n_inf
