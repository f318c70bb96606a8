"""Model parameterization: rate families, distribution families, ModelSpec.

The enumerated families below cover every concrete configuration used in
the numerical experiments (constant / linear birth rates, constant or
hyperbolic-in-reserves default rates, exponential / lognormal / uniform /
Dirac birth-size laws, and uniform or point-mass contagion impacts).
Arbitrary user-supplied functions are deliberately excluded so that
configurations stay serializable and runs reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .rng import RngStream


class DomainError(ValueError):
    """Raised when an operation is called with out-of-domain inputs."""


# default cap on the per-bank default intensity; the hyperbolic family is
# unbounded as reserves -> 0, so intensities are clamped at this value
DEFAULT_KAPPA_CAP = 10.0


@dataclass(frozen=True)
class Scaling:
    """Mean-field scaling regime.

    ``setting`` 1 scales rates/contagion by the current number of banks;
    setting 2 scales by the initial number ``n0``.
    """

    setting: int = 1
    n0: Optional[int] = None

    def __post_init__(self):
        if self.setting not in (1, 2):
            raise ValueError("scaling setting must be 1 or 2")
        if self.setting == 2 and (self.n0 is None or self.n0 < 1):
            raise ValueError("setting 2 requires a positive initial count n0")

    def with_n0(self, n0: int) -> "Scaling":
        return Scaling(self.setting, int(n0))


@dataclass(frozen=True)
class RateFamily:
    """Birth-intensity family lambda_n(s).

    Forms: ``constant`` (c), ``linear_in_n`` (c*n), ``linear_in_s`` (c*s),
    ``linear_in_n0`` (c*n0, setting-2 only).
    """

    form: str
    c: float

    _FORMS = ("constant", "linear_in_n", "linear_in_s", "linear_in_n0")

    def __post_init__(self):
        if self.form not in self._FORMS:
            raise ValueError(f"unknown rate form {self.form!r}")
        if self.c < 0:
            raise ValueError("rate coefficient must be >= 0")

    def rate(self, n: int, s: float, n0: Optional[int] = None) -> float:
        if n < 0 or s < 0:
            raise DomainError("n and s must be nonnegative")
        if self.form == "constant":
            return self.c
        if self.form == "linear_in_n":
            return self.c * n
        if self.form == "linear_in_s":
            return self.c * s
        if n0 is None:
            raise DomainError("linear_in_n0 rate requires n0 (setting-2 scaling)")
        return self.c * n0

    @property
    def depends_on_s(self) -> bool:
        return self.form == "linear_in_s"


@dataclass(frozen=True)
class DefaultRateFamily:
    """Per-bank default intensity kappa_n(s, x), clamped to [0, cap].

    Forms: ``constant`` (c) and ``hyperbolic`` a*n/(b+x) (or a/(b+x) when
    ``scale_by_n`` is false; with setting-2 scaling, n is replaced by n0).
    """

    form: str
    c: float = 0.0
    a: float = 0.0
    b: float = 1.0
    scale_by_n: bool = True
    cap: float = DEFAULT_KAPPA_CAP

    def __post_init__(self):
        if self.form not in ("constant", "hyperbolic"):
            raise ValueError(f"unknown default-rate form {self.form!r}")
        if self.cap <= 0:
            raise ValueError("kappa cap must be > 0")
        if self.form == "constant" and self.c < 0:
            raise ValueError("constant kappa must be >= 0")
        if self.form == "hyperbolic" and (self.a <= 0 or self.b <= 0):
            raise ValueError("hyperbolic kappa requires a, b > 0")

    def rate(self, n: int, s: float, x, n0: Optional[int] = None):
        """Evaluate kappa; accepts scalar or array ``x``."""
        if n < 0 or s < 0:
            raise DomainError("n and s must be nonnegative")
        if self.form == "constant":
            val = np.minimum(self.c, self.cap)
            return val if np.isscalar(x) else np.full_like(np.asarray(x, float), val)
        scale = 1.0
        if self.scale_by_n:
            if self.form == "hyperbolic" and n0 is not None:
                scale = n0
            else:
                scale = n
        raw = self.a * scale / (self.b + np.asarray(x, dtype=float))
        clamped = np.minimum(raw, self.cap)
        return float(clamped) if np.isscalar(x) else clamped

    def sup(self, n: int, n0: Optional[int] = None) -> float:
        """Upper bound on kappa over all x > 0 in the current state."""
        if self.form == "constant":
            return min(self.c, self.cap)
        return self.cap


@dataclass(frozen=True)
class DistFamily:
    """Birth-size (or generic positive) distribution family.

    Forms: ``exponential`` (rate), ``lognormal`` (mu, s of the underlying
    normal), ``uniform`` (lo, hi), ``dirac`` (v).  Support is (0, inf).
    """

    form: str
    rate: float = 1.0
    mu: float = 0.0
    s: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    v: float = 1.0

    def __post_init__(self):
        if self.form not in ("exponential", "lognormal", "uniform", "dirac"):
            raise ValueError(f"unknown distribution form {self.form!r}")
        if self.form == "exponential" and self.rate <= 0:
            raise ValueError("exponential rate must be > 0")
        if self.form == "lognormal" and self.s <= 0:
            raise ValueError("lognormal s must be > 0")
        if self.form == "uniform" and not (0 <= self.lo < self.hi):
            raise ValueError("uniform requires 0 <= lo < hi")
        if self.form == "dirac" and self.v <= 0:
            raise ValueError("dirac point mass must be > 0")

    def mean(self) -> float:
        if self.form == "exponential":
            return 1.0 / self.rate
        if self.form == "lognormal":
            return math.exp(self.mu + self.s**2 / 2)
        if self.form == "uniform":
            return (self.lo + self.hi) / 2
        return self.v

    def moment(self, p: float) -> float:
        """p-th raw moment E[X^p]."""
        if self.form == "exponential":
            return math.gamma(p + 1) / self.rate**p
        if self.form == "lognormal":
            return math.exp(p * self.mu + (p * self.s) ** 2 / 2)
        if self.form == "uniform":
            if self.lo == 0.0:
                return self.hi**p / (p + 1)
            return (self.hi ** (p + 1) - self.lo ** (p + 1)) / ((p + 1) * (self.hi - self.lo))
        return self.v**p

    def sample(self, rng: RngStream, size=None):
        if self.form == "exponential":
            return rng.exponential(1.0 / self.rate, size)
        if self.form == "lognormal":
            return rng.lognormal(self.mu, self.s, size)
        if self.form == "uniform":
            return rng.uniform(self.lo, self.hi, size)
        if size is None:
            return self.v
        return np.full(size, self.v)


@dataclass(frozen=True)
class ContagionFamily:
    """Default-impact distribution on (0, 1).

    Forms: ``uniform_over_count`` Uniform(0, d/n), ``uniform_over_n0``
    Uniform(0, d/n0), ``constant`` point mass at v in (0, 1).
    """

    form: str
    d: float = 1.0
    v: float = 0.5

    def __post_init__(self):
        if self.form not in ("uniform_over_count", "uniform_over_n0", "constant"):
            raise ValueError(f"unknown contagion form {self.form!r}")
        if self.form in ("uniform_over_count", "uniform_over_n0") and not (0 < self.d <= 1):
            raise ValueError("contagion d must lie in (0, 1]")
        if self.form == "constant" and not (0 < self.v < 1):
            raise ValueError("constant contagion must lie in (0, 1)")

    def _upper(self, n: int, n0: Optional[int]) -> float:
        if self.form == "uniform_over_count":
            if n < 1:
                raise DomainError("count-scaled contagion requires n >= 1")
            return self.d / n
        if self.form == "uniform_over_n0":
            if n0 is None or n0 < 1:
                raise DomainError("uniform_over_n0 contagion requires n0 >= 1")
            return self.d / n0
        raise AssertionError

    def mean(self, n: int, n0: Optional[int] = None) -> float:
        """Mean impact of one draw (the unscaled Dbar(n, s, x))."""
        if self.form == "constant":
            return self.v
        return self._upper(n, n0) / 2

    def mean_scaled(self, n0: Optional[int] = None) -> float:
        """Mean of the scaled impact n*xi (or n0*xi): the limit Dbar_inf."""
        if self.form == "constant":
            raise DomainError("constant contagion has no finite scaled limit")
        return self.d / 2

    def sample(self, n: int, rng: RngStream, size=None, n0: Optional[int] = None):
        if self.form == "constant":
            return self.v if size is None else np.full(size, self.v)
        return rng.uniform(0.0, self._upper(n, n0), size)


@dataclass(frozen=True)
class ModelSpec:
    """Full parameterization of a finite-N banking system."""

    r: float
    sigma: float
    birth_rate: RateFamily
    default_rate: DefaultRateFamily
    birth_size: DistFamily
    contagion: ContagionFamily
    scaling: Scaling = field(default_factory=Scaling)

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.r < 0:
            raise ValueError("r must be >= 0")

    @property
    def n0(self) -> Optional[int]:
        return self.scaling.n0

    def with_n0(self, n0: int) -> "ModelSpec":
        return ModelSpec(
            self.r, self.sigma, self.birth_rate, self.default_rate,
            self.birth_size, self.contagion, self.scaling.with_n0(n0),
        )


def eval_rates(spec: ModelSpec, n: int, s: float, x: Optional[float] = None):
    """Return (birth intensity, per-bank default intensity) at state (n, s, x).

    kappa is clamped to [0, cap].  ``x`` may be omitted when only the birth
    intensity is needed; with n >= 1 it must be positive.
    """
    if n < 0 or s < 0:
        raise DomainError("n and s must be nonnegative")
    lam = spec.birth_rate.rate(n, s, spec.n0)
    if x is None:
        return lam, 0.0
    if n >= 1 and np.any(np.asarray(x) <= 0):
        raise DomainError("reserve x must be positive")
    kap = spec.default_rate.rate(n, s, x, spec.n0)
    return lam, kap


def sample_dist(family, rng: RngStream, n: int = 1, n0: Optional[int] = None):
    """Draw once from a DistFamily or ContagionFamily (deterministic in rng)."""
    if isinstance(family, ContagionFamily):
        return float(family.sample(n, rng, n0=n0))
    if isinstance(family, DistFamily):
        return float(family.sample(rng))
    raise TypeError(f"cannot sample from {type(family).__name__}")


# ---------------------------------------------------------------------------
# config (de)serialization


def _rate_from_dict(d: dict) -> RateFamily:
    return RateFamily(form=d["form"], c=float(d["c"]))


def _default_rate_from_dict(d: dict) -> DefaultRateFamily:
    kw = dict(form=d["form"], cap=float(d.get("cap", DEFAULT_KAPPA_CAP)))
    if d["form"] == "constant":
        kw["c"] = float(d["c"])
    else:
        kw.update(a=float(d["a"]), b=float(d["b"]), scale_by_n=bool(d.get("scale_by_n", True)))
    return DefaultRateFamily(**kw)


def _dist_from_dict(d: dict) -> DistFamily:
    form = d["form"]
    if form == "exponential":
        return DistFamily(form, rate=float(d["rate"]))
    if form == "lognormal":
        return DistFamily(form, mu=float(d.get("mu", 0.0)), s=float(d.get("s", 1.0)))
    if form == "uniform":
        return DistFamily(form, lo=float(d["lo"]), hi=float(d["hi"]))
    return DistFamily(form, v=float(d["v"]))


def _contagion_from_dict(d: dict) -> ContagionFamily:
    if d["form"] == "constant":
        return ContagionFamily(d["form"], v=float(d["v"]))
    return ContagionFamily(d["form"], d=float(d["d"]))


def model_spec_from_dict(cfg: dict) -> ModelSpec:
    """Build a ModelSpec from the ``[model]`` table of a config file."""
    sc = cfg.get("scaling", {"setting": 1})
    scaling = Scaling(int(sc.get("setting", 1)), sc.get("n0"))
    return ModelSpec(
        r=float(cfg["r"]),
        sigma=float(cfg["sigma"]),
        birth_rate=_rate_from_dict(cfg["birth_rate"]),
        default_rate=_default_rate_from_dict(cfg["default_rate"]),
        birth_size=_dist_from_dict(cfg["birth_size"]),
        contagion=_contagion_from_dict(cfg["contagion"]),
        scaling=scaling,
    )


def model_spec_to_dict(spec: ModelSpec) -> dict:
    """Inverse of :func:`model_spec_from_dict` (for manifests)."""
    br = {"form": spec.birth_rate.form, "c": spec.birth_rate.c}
    dr: dict = {"form": spec.default_rate.form, "cap": spec.default_rate.cap}
    if spec.default_rate.form == "constant":
        dr["c"] = spec.default_rate.c
    else:
        dr.update(a=spec.default_rate.a, b=spec.default_rate.b,
                  scale_by_n=spec.default_rate.scale_by_n)
    bs = {"form": spec.birth_size.form}
    if spec.birth_size.form == "exponential":
        bs["rate"] = spec.birth_size.rate
    elif spec.birth_size.form == "lognormal":
        bs.update(mu=spec.birth_size.mu, s=spec.birth_size.s)
    elif spec.birth_size.form == "uniform":
        bs.update(lo=spec.birth_size.lo, hi=spec.birth_size.hi)
    else:
        bs["v"] = spec.birth_size.v
    cg: dict = {"form": spec.contagion.form}
    if spec.contagion.form == "constant":
        cg["v"] = spec.contagion.v
    else:
        cg["d"] = spec.contagion.d
    out = {
        "r": spec.r, "sigma": spec.sigma,
        "birth_rate": br, "default_rate": dr,
        "birth_size": bs, "contagion": cg,
        "scaling": {"setting": spec.scaling.setting},
    }
    if spec.scaling.n0 is not None:
        out["scaling"]["n0"] = spec.scaling.n0
    return out
