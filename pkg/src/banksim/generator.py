"""Closed-form generator evaluation and stability diagnostics.

Evaluates the system generator on empirical-mean test functions, the
tagged-bank generator, the Lyapunov drift of the total-reserves-plus-count
functional, the limiting measure-valued operator, and the birth-death
rate-bound certificate used for exponential-ergodicity checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .empirical import EmpiricalMeasure, EmptyMeasureError
from .meanfield import MeanFieldLimit
from .model import ContagionFamily, DistFamily, DomainError, ModelSpec
from .simulator import SystemState

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_LAG_NODES, _LAG_WEIGHTS = np.polynomial.laguerre.laggauss(64)
_HERM_NODES, _HERM_WEIGHTS = np.polynomial.hermite.hermgauss(64)


class EmptyStateError(ValueError):
    """Generator evaluation requested on the empty state."""


@dataclass(frozen=True)
class TestFunction:
    """A test function together with analytic D1 f = x f' and D2 f = x^2 f''.

    Carrying the derivative combinations analytically keeps generator
    evaluations free of finite-difference noise; finite differences are
    used only in the test suite to validate these fields.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]


def monomial(p: float) -> TestFunction:
    return TestFunction(
        f"x^{p}",
        lambda x: x**p,
        lambda x: p * x**p,
        lambda x: p * (p - 1) * x**p,
    )


def bounded_rational() -> TestFunction:
    # f = x/(1+x); f' = 1/(1+x)^2; f'' = -2/(1+x)^3
    return TestFunction(
        "x/(1+x)",
        lambda x: x / (1 + x),
        lambda x: x / (1 + x) ** 2,
        lambda x: -2 * x**2 / (1 + x) ** 3,
    )


def exp_neg(a: float) -> TestFunction:
    if a <= 0:
        raise ValueError("decay rate must be > 0")
    return TestFunction(
        f"exp(-{a}x)",
        lambda x: np.exp(-a * x),
        lambda x: -a * x * np.exp(-a * x),
        lambda x: a**2 * x**2 * np.exp(-a * x),
    )


def smoothed_indicator(D: float, width: float) -> TestFunction:
    """Smooth surrogate of 1_{x <= D}: 0.5 (1 - tanh((x - D)/width))."""
    if D <= 0 or width <= 0:
        raise ValueError("D and width must be > 0")

    def sech2(u):
        # overflow-safe 1/cosh(u)^2
        e = np.exp(-2.0 * np.abs(u))
        return 4.0 * e / (1.0 + e) ** 2

    def f(x):
        return 0.5 * (1 - np.tanh((x - D) / width))

    def d1(x):
        return -x / (2 * width) * sech2((x - D) / width)

    def d2(x):
        u = (x - D) / width
        return x**2 * np.tanh(u) * sech2(u) / width**2

    return TestFunction(f"step(<= {D})", f, d1, d2)


def gbm_generator(tf: TestFunction, spec_or_r, sigma: Optional[float] = None):
    """The diffusion generator G f = r D1 f + (sigma^2/2) D2 f as a callable."""
    if sigma is None:
        r, sigma = spec_or_r.r, spec_or_r.sigma
    else:
        r = spec_or_r
    return lambda x: r * tf.d1(x) + sigma**2 / 2 * tf.d2(x)


def dist_expectation(dist: DistFamily, g: Callable[[np.ndarray], np.ndarray]) -> float:
    """E[g(X)] for X from an enumerated positive distribution family.

    Exponential uses Gauss-Laguerre, lognormal Gauss-Hermite, uniform
    Gauss-Legendre; all with 64 nodes, giving ~1e-10 accuracy or better
    for smooth bounded integrands.
    """
    if dist.form == "dirac":
        return float(g(np.asarray(dist.v)))
    if dist.form == "exponential":
        x = _LAG_NODES / dist.rate
        return float(np.sum(_LAG_WEIGHTS * g(x)))
    if dist.form == "lognormal":
        x = np.exp(dist.mu + math.sqrt(2.0) * dist.s * _HERM_NODES)
        return float(np.sum(_HERM_WEIGHTS * g(x)) / math.sqrt(math.pi))
    # uniform
    half = (dist.hi - dist.lo) / 2
    mid = (dist.hi + dist.lo) / 2
    x = mid + half * _GL_NODES
    return float(np.sum(_GL_WEIGHTS * g(x)) / 2)


def contagion_expectation(fam: ContagionFamily, n: int,
                          g: Callable[[np.ndarray], np.ndarray],
                          n0: Optional[int] = None) -> float:
    """E[g(xi)] for one contagion draw in a state with n banks."""
    if fam.form == "constant":
        return float(g(np.asarray(fam.v)))
    upper = fam._upper(n, n0)
    x = upper / 2 * (1 + _GL_NODES)
    return float(np.sum(_GL_WEIGHTS * g(x)) / 2)


def _contagion_f_shrunk(fam: ContagionFamily, n: int, tf: TestFunction,
                        xs: np.ndarray, n0: Optional[int]) -> np.ndarray:
    """Vector of E[f(x_j (1 - xi))] over the atoms x_j."""
    xs = np.atleast_1d(xs)
    return np.array([
        contagion_expectation(fam, n, lambda z: tf.f(x * (1 - z)), n0)
        for x in xs
    ])


def gen_empirical(state: SystemState, spec: ModelSpec, tf: TestFunction) -> float:
    """Generator of the empirical mean functional E_f at the given state.

    Sum of three closed-form pieces: the diffusion average, the birth
    difference term, and the default/contagion terms.  After a default
    from a single-bank state the system is empty, where the functional is
    defined to vanish, so at n = 1 the jump piece is -kappa f(x1).
    """
    if state.empty:
        raise EmptyStateError("generator of the empirical functional at the empty state")
    n, s, xs = state.n, state.s, state.reserves
    G = gbm_generator(tf, spec)
    I1 = float(np.mean(G(xs)))

    lam = spec.birth_rate.rate(n, s, spec.n0)
    birth_mean = dist_expectation(spec.birth_size, tf.f)
    mu_f = float(np.mean(tf.f(xs)))
    I2 = lam / (n + 1) * (birth_mean - mu_f)

    kappas = np.atleast_1d(spec.default_rate.rate(n, s, xs, spec.n0))
    if n == 1:
        # the post-default state is empty and the functional vanishes there
        I3 = -float(kappas[0]) * float(tf.f(xs[0]))
        return I1 + I2 + I3
    shrunk = _contagion_f_shrunk(spec.contagion, n, tf, xs, spec.n0)
    fx = tf.f(xs)
    ksum = float(kappas.sum())
    # the contagion law is the same for every defaulting bank i within the
    # enumerated families (it depends on i only through x_i, which none of
    # the forms use), so the i-sums reduce to ksum times a single integral
    I31 = ksum / n * float(np.sum(shrunk - fx))
    I32 = ksum / (n * (n - 1)) * float(np.sum(shrunk))
    I33 = -1.0 / (n - 1) * float(np.sum(kappas * shrunk))
    return I1 + I2 + I31 + I32 + I33


def gen_tagged(state: SystemState, spec: ModelSpec, tf: TestFunction) -> float:
    """Generator of f(first bank's reserve) at the given state.

    G f(x1) minus the own-default killing term, plus the contagion kicks
    that other banks' defaults inflict on bank 1.
    """
    if state.empty:
        raise EmptyStateError("tagged-bank generator at the empty state")
    n, s, xs = state.n, state.s, state.reserves
    x1 = float(xs[0])
    G = gbm_generator(tf, spec)
    kappas = np.atleast_1d(spec.default_rate.rate(n, s, xs, spec.n0))
    out = float(G(np.asarray(x1))) - float(kappas[0]) * float(tf.f(x1))
    if n >= 2:
        kick = contagion_expectation(
            spec.contagion, n, lambda z: tf.f(x1 * (1 - z)) - tf.f(x1), spec.n0)
        out += float(kappas[1:].sum()) * kick
    return out


def lyapunov_phi(state: SystemState, spec: ModelSpec) -> float:
    """Drift of total reserves plus bank count under the generator.

    phi(x) = r s + lambda [Bbar + 1] - sum_j kappa_j [Dbar s + 1]
             - sum_j x_j kappa_j (1 - Dbar),
    with Bbar and Dbar the analytic means of the birth-size and contagion
    laws.  On the empty state only the birth term survives.
    """
    n = state.n
    s = state.s
    lam = spec.birth_rate.rate(n, s, spec.n0)
    bbar = spec.birth_size.mean()
    out = spec.r * s + lam * (bbar + 1.0)
    if n == 0:
        return out
    dbar = spec.contagion.mean(n, spec.n0)
    kappas = np.atleast_1d(spec.default_rate.rate(n, s, state.reserves, spec.n0))
    out -= float(kappas.sum()) * (dbar * s + 1.0)
    out -= float(np.sum(state.reserves * kappas)) * (1.0 - dbar)
    return out


@dataclass
class LyapunovReport:
    """Summary of Lyapunov-drift probes for the CLI stability subcommand."""

    phi_origin: float
    conservative_bound_ok: bool
    c1: float
    c2: float
    c3: float
    stable_margin: float
    exp_rate_condition_ok: bool

    def to_json(self) -> str:
        return json.dumps({
            "phi_origin": self.phi_origin,
            "conservative_bound_ok": self.conservative_bound_ok,
            "linear_bound": {"c1": self.c1, "c2": self.c2, "c3": self.c3},
            "stable_margin": self.stable_margin,
            "exp_rate_condition_ok": self.exp_rate_condition_ok,
        }, indent=1)


def stability_report(spec: ModelSpec, probe_sizes: Sequence[int] = (1, 2, 5, 10, 20),
                     probe_reserves: Sequence[float] = (0.1, 1.0, 10.0, 100.0, 1000.0),
                     n_max: int = 1000) -> LyapunovReport:
    """Evaluate the Lyapunov drift on a probe grid of homogeneous states.

    Conservativeness asks phi <= c1 s + c2 n + c3 on the probes (c's
    fitted as the observed maxima of the positive part per unit);
    stability asks phi < 0 outside a compact window (reported as the
    maximal phi over the large probes).  The exponential-rate condition
    is checked with the count-only bound when the rate families depend
    only on n.
    """
    phis = []
    for n in probe_sizes:
        for x in probe_reserves:
            st = SystemState.from_reserves(np.full(n, x))
            phis.append((n, n * x, lyapunov_phi(st, spec)))
    phi_origin = lyapunov_phi(SystemState([], np.array([]), 0), spec)
    # fit the affine bound: minimal c3 with c1 = r, c2 = 0 often fails for
    # birth terms, so take the elementwise worst ratios
    c1 = spec.r
    c2 = max(0.0, max((phi - c1 * s) / n for n, s, phi in phis))
    c3 = max(0.0, phi_origin)
    bound_ok = all(phi <= c1 * s + c2 * n + c3 + 1e-9 for n, s, phi in phis)
    big = [phi for n, s, phi in phis if s >= 100.0 or n >= 10]
    stable_margin = max(big) if big else math.inf

    exp_ok = False
    if (not spec.birth_rate.depends_on_s
            and spec.default_rate.form == "constant"):
        lam_star = max(spec.birth_rate.rate(n, 0.0, spec.n0) / max(n, 1)
                       for n in range(1, 51))
        kap_star = spec.default_rate.sup(1, spec.n0)
        if kap_star > lam_star:
            alpha = (kap_star - lam_star) / 2
            exp_ok = verify_rate_bound(lam_star, kap_star,
                                       lambda n: n + 1.0, alpha, n_max)
    return LyapunovReport(phi_origin, bound_ok, c1, c2, c3, stable_margin, exp_ok)


RateInput = Union[float, Callable[[int], float]]


def verify_rate_bound(lambda_star: RateInput, kappa_star: RateInput,
                      Vhat: Callable[[int], float], alpha: float,
                      n_max: int) -> bool:
    """Check the birth-death drift inequality for a dominating count chain.

    Returns True iff for all 1 <= n <= n_max:
        lam*_n V(n+1) + n kap*_n V(n-1) - (lam*_n + n kap*_n) V(n) <= -alpha V(n)
    where lam*_n is the per-bank birth bound and kap*_n the per-bank
    default floor.  Scalar inputs are treated as constants.
    """
    if Vhat(0) != 1.0:
        raise DomainError("Vhat(0) must equal 1")
    vals = [Vhat(n) for n in range(n_max + 2)]
    if any(b < a for a, b in zip(vals, vals[1:])):
        raise DomainError("Vhat must be nondecreasing")

    def as_fn(u: RateInput) -> Callable[[int], float]:
        return u if callable(u) else (lambda n, v=float(u): v)

    lam = as_fn(lambda_star)
    kap = as_fn(kappa_star)
    for n in range(1, n_max + 1):
        drift = (lam(n) * vals[n + 1] + n * kap(n) * vals[n - 1]
                 - (lam(n) + n * kap(n)) * vals[n])
        if drift > -alpha * vals[n] + 1e-15:
            return False
    return True


def limit_operator_A(nu: EmpiricalMeasure, mf: MeanFieldLimit, tf: TestFunction,
                     setting2_scale: Optional[float] = None) -> float:
    """The limiting operator applied to (measure, test function).

    Diffusion with the contagion-adjusted drift, birth-minus-current
    difference term, and the mutation (kill-and-resample) term; the
    mutation term vanishes identically for reserve-independent default
    rates.  With ``setting2_scale`` = n_inf the drift uses the scaled
    coefficient and the birth term is divided by n_inf.
    """
    if nu.empty:
        raise EmptyMeasureError("limit operator on the empty measure")
    xs = nu.samples
    ybar = float(xs.mean())
    kap = np.atleast_1d(mf.kappa_inf(ybar, xs))
    dbar = np.atleast_1d(mf.dbar_inf(ybar, xs))
    if setting2_scale is None:
        drift = mf.r - dbar * kap
        birth_scale = 1.0
    else:
        if setting2_scale <= 0:
            raise DomainError("setting2_scale must be > 0")
        drift = mf.r - setting2_scale * dbar * kap
        birth_scale = 1.0 / setting2_scale
    diffusion = float(np.mean(drift * tf.d1(xs) + mf.sigma**2 / 2 * tf.d2(xs)))
    lam = mf.lambda_inf(ybar)
    birth_mean = dist_expectation(mf.birth_dist(ybar), tf.f)
    nu_f = float(np.mean(tf.f(xs)))
    birth = birth_scale * lam * (birth_mean - nu_f)
    mutation = nu_f * float(np.mean(kap)) - float(np.mean(kap * tf.f(xs)))
    return diffusion + birth + mutation
