"""System parameters, heavy-traffic scaling and the convex holding-cost family.

A :class:`SystemConfig` bundles the limit rates of a critically loaded
``d``-class single-server queue together with the level-``n`` integer rates
that a simulator at scaling ``n`` uses.  A :class:`CostSpec` holds the
per-class convex costs ``C_i(x) = (a_i + b_i x^p_i)^(1/p_i) - a_i^(1/p_i)``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np

from .errors import (
    ConfigError,
    CriticalLoadViolation,
    NegativeArgument,
    NonpositiveRate,
    OutOfRange,
    ScalingViolation,
)

CRITICAL_LOAD_TOL = 1e-12

DISTRIBUTION_KINDS = ("exponential", "erlang", "hyperexponential", "deterministic")


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# unit-mean interarrival / service distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Distribution:
    """Unit-mean positive law with a finite exponential moment.

    ``hyperexponential`` mixes Exp(r1) with probability ``p`` and Exp(r2)
    otherwise, then rescales so the mean is one.
    """

    kind: str = "exponential"
    k: int = 1
    p: float = 0.5
    r1: float = 1.0
    r2: float = 1.0

    def __post_init__(self):
        if self.kind not in DISTRIBUTION_KINDS:
            raise ConfigError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "erlang" and self.k < 1:
            raise ConfigError("erlang shape k must be >= 1")
        if self.kind == "hyperexponential":
            if not 0.0 < self.p < 1.0 or self.r1 <= 0 or self.r2 <= 0:
                raise ConfigError("hyperexponential needs 0<p<1 and positive rates")

    @classmethod
    def parse(cls, obj: Any) -> "Distribution":
        if isinstance(obj, Distribution):
            return obj
        if isinstance(obj, str):
            kind, _, arg = obj.partition(":")
            if kind == "erlang":
                return cls("erlang", k=int(arg or 1))
            if kind == "hyperexponential" and arg:
                p, r1, r2 = (float(v) for v in arg.split(","))
                return cls("hyperexponential", p=p, r1=r1, r2=r2)
            return cls(kind)
        if isinstance(obj, Mapping):
            return cls(**dict(obj))
        raise ConfigError(f"cannot parse distribution descriptor {obj!r}")

    @property
    def _raw_mean(self) -> float:
        return self.p / self.r1 + (1.0 - self.p) / self.r2

    @property
    def variance(self) -> float:
        if self.kind == "exponential":
            return 1.0
        if self.kind == "erlang":
            return 1.0 / self.k
        if self.kind == "deterministic":
            return 0.0
        m = self._raw_mean
        second = 2.0 * self.p / self.r1**2 + 2.0 * (1.0 - self.p) / self.r2**2
        return second / m**2 - 1.0

    @property
    def is_degenerate(self) -> bool:
        return self.kind == "deterministic"

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "exponential":
            return rng.standard_exponential(size)
        if self.kind == "erlang":
            return rng.standard_gamma(self.k, size) / self.k
        if self.kind == "deterministic":
            return np.ones(size)
        pick = rng.random(size) < self.p
        rates = np.where(pick, self.r1, self.r2)
        return rng.standard_exponential(size) / rates / self._raw_mean

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "erlang":
            out["k"] = self.k
        if self.kind == "hyperexponential":
            out.update(p=self.p, r1=self.r1, r2=self.r2)
        return out


# ---------------------------------------------------------------------------
# system configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemConfig:
    """Limit parameters plus level-``n`` rates of the multiclass queue.

    Arrays are read-only.  ``lam``/``mu`` are the limits of ``lam_n/n`` and
    ``mu_n/n``; ``lam_tilde``/``mu_tilde`` are the second-order limits.
    """

    n: int
    b_n: float
    T: float
    lam: np.ndarray
    mu: np.ndarray
    lam_tilde: np.ndarray
    mu_tilde: np.ndarray
    lam_n: np.ndarray
    mu_n: np.ndarray
    ia_dist: tuple[Distribution, ...]
    st_dist: tuple[Distribution, ...]
    b_exponent: float | None = None
    strict: bool = True

    @property
    def d(self) -> int:
        return int(self.lam.shape[0])

    @property
    def rho(self) -> np.ndarray:
        return self.lam / self.mu

    @property
    def theta(self) -> np.ndarray:
        return 1.0 / self.mu

    @property
    def y(self) -> np.ndarray:
        return self.lam_tilde - self.rho * self.mu_tilde

    @property
    def scale(self) -> float:
        """``b_n * sqrt(n)``, the moderate-deviation space scale."""
        return self.b_n * math.sqrt(self.n)

    @property
    def lam_tilde_n(self) -> np.ndarray:
        return (self.lam_n - self.n * self.lam) / self.scale

    @property
    def mu_tilde_n(self) -> np.ndarray:
        return (self.mu_n - self.n * self.mu) / self.scale

    @property
    def y_n(self) -> np.ndarray:
        return self.lam_tilde_n - self.rho * self.mu_tilde_n

    @property
    def theta_n(self) -> np.ndarray:
        return self.n / self.mu_n

    @property
    def sigma2_ia(self) -> np.ndarray:
        return np.array([dist.variance for dist in self.ia_dist])

    @property
    def sigma2_st(self) -> np.ndarray:
        return np.array([dist.variance for dist in self.st_dist])

    @property
    def sigma1_hat2(self) -> np.ndarray:
        return self.lam * self.sigma2_ia

    @property
    def sigma2_hat2(self) -> np.ndarray:
        return self.mu * self.sigma2_st

    @property
    def workload_variance(self) -> float:
        """Variance rate of the projected primitive ``theta . (psi1 - rho[psi2])``."""
        th2 = self.theta**2
        return float(np.sum(th2 * (self.sigma1_hat2 + self.rho * self.sigma2_hat2)))

    @property
    def degenerate_streams(self) -> bool:
        return any(d.is_degenerate for d in self.ia_dist + self.st_dist)

    def with_n(self, n: int, b_n: float | None = None) -> "SystemConfig":
        """Same limit model at a different scaling level."""
        if b_n is None:
            if self.b_exponent is None:
                raise ConfigError("config has no b_n rule; pass b_n explicitly")
            b_n = float(n) ** self.b_exponent
        return build_config(
            self.lam,
            self.mu,
            n=n,
            b_n=b_n,
            T=self.T,
            lam_tilde=self.lam_tilde,
            mu_tilde=self.mu_tilde,
            ia_dist=self.ia_dist,
            st_dist=self.st_dist,
            b_exponent=self.b_exponent,
            strict=self.strict,
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "b_n": self.b_n,
            "b_exponent": self.b_exponent,
            "horizon": self.T,
            "strict": self.strict,
            "classes": [
                {
                    "lambda": float(self.lam[i]),
                    "mu": float(self.mu[i]),
                    "lambda_tilde": float(self.lam_tilde[i]),
                    "mu_tilde": float(self.mu_tilde[i]),
                    "lambda_n": float(self.lam_n[i]),
                    "mu_n": float(self.mu_n[i]),
                    "ia_dist": self.ia_dist[i].to_dict(),
                    "st_dist": self.st_dist[i].to_dict(),
                }
                for i in range(self.d)
            ],
        }


def _per_class(value, d: int, name: str) -> list:
    if isinstance(value, (list, tuple, np.ndarray)):
        if len(value) != d:
            raise ConfigError(f"{name}: expected {d} entries, got {len(value)}")
        return list(value)
    return [value] * d


def build_config(
    lam: Sequence[float],
    mu: Sequence[float],
    *,
    n: int,
    b_n: float | None = None,
    b_exponent: float | None = None,
    T: float = 1.0,
    lam_tilde: Sequence[float] | None = None,
    mu_tilde: Sequence[float] | None = None,
    ia_dist: Any = "exponential",
    st_dist: Any = "exponential",
    lam_n: Sequence[float] | None = None,
    mu_n: Sequence[float] | None = None,
    strict: bool = True,
) -> SystemConfig:
    """Validate raw parameters and synthesize the level-``n`` rates.

    Unless given explicitly, ``lam_n[i] = round(n*lam[i] + b_n*sqrt(n)*lam_tilde[i])``
    and likewise for ``mu_n``.  ``strict=False`` skips the critical-load and
    moderate-deviation checks; it exists for hand-checkable unit scenarios.
    """
    lam_arr = np.asarray(lam, dtype=float).ravel()
    mu_arr = np.asarray(mu, dtype=float).ravel()
    d = lam_arr.shape[0]
    if d < 1 or mu_arr.shape[0] != d:
        raise ConfigError("lam and mu must be nonempty and of equal length")
    if n < 1:
        raise ConfigError("n must be a positive integer")
    if T <= 0:
        raise ConfigError("horizon T must be positive")
    if b_n is None:
        if b_exponent is None:
            raise ConfigError("one of b_n or b_exponent is required")
        b_n = float(n) ** b_exponent
    b_n = float(b_n)
    lt = np.zeros(d) if lam_tilde is None else np.asarray(lam_tilde, dtype=float)
    mt = np.zeros(d) if mu_tilde is None else np.asarray(mu_tilde, dtype=float)

    if np.any(lam_arr <= 0) or np.any(mu_arr <= 0):
        raise NonpositiveRate("limit rates must be strictly positive")
    if b_n <= 0:
        raise ScalingViolation("b_n must be positive")
    if strict:
        load = float(np.sum(lam_arr / mu_arr))
        if abs(load - 1.0) > CRITICAL_LOAD_TOL:
            raise CriticalLoadViolation(f"sum of rho_i is {load!r}, not 1")
        if b_n >= math.sqrt(n):
            raise ScalingViolation(f"b_n={b_n} is not below sqrt(n)={math.sqrt(n)}")

    scale = b_n * math.sqrt(n)
    if lam_n is None:
        lam_n_arr = np.round(n * lam_arr + scale * lt)
    else:
        lam_n_arr = np.asarray(lam_n, dtype=float)
    if mu_n is None:
        mu_n_arr = np.round(n * mu_arr + scale * mt)
    else:
        mu_n_arr = np.asarray(mu_n, dtype=float)
    if np.any(lam_n_arr <= 0) or np.any(mu_n_arr <= 0):
        raise NonpositiveRate("synthesized level-n rates must be positive")

    ia = tuple(Distribution.parse(v) for v in _per_class(ia_dist, d, "ia_dist"))
    st = tuple(Distribution.parse(v) for v in _per_class(st_dist, d, "st_dist"))

    return SystemConfig(
        n=int(n),
        b_n=b_n,
        T=float(T),
        lam=_frozen(lam_arr),
        mu=_frozen(mu_arr),
        lam_tilde=_frozen(lt),
        mu_tilde=_frozen(mt),
        lam_n=_frozen(lam_n_arr),
        mu_n=_frozen(mu_n_arr),
        ia_dist=ia,
        st_dist=st,
        b_exponent=b_exponent,
        strict=strict,
    )


# ---------------------------------------------------------------------------
# convex costs
# ---------------------------------------------------------------------------


class ConvexCost(Protocol):
    """What the rest of the package needs from a holding-cost family.

    Every method is vectorized over a trailing class axis of length ``d``.
    """

    d: int

    def components(self, x: np.ndarray) -> np.ndarray: ...

    def derivatives(self, x: np.ndarray) -> np.ndarray: ...

    def derivative_inverses(self, u: np.ndarray) -> np.ndarray: ...

    @property
    def cprime_sup(self) -> np.ndarray: ...


def bisect_increasing(
    fn: Callable[[float], float],
    target: float,
    lo: float = 0.0,
    hi: float = 1.0,
    *,
    xtol: float = 0.0,
    max_iter: int = 2000,
) -> float:
    """Root of ``fn(x) = target`` for increasing ``fn``, growing ``hi`` as needed."""
    while fn(hi) < target:
        lo, hi = hi, 2.0 * hi
        if not math.isfinite(hi):
            raise OutOfRange("bracket expansion overflowed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= xtol:
            break
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo if abs(fn(lo) - target) <= abs(fn(hi) - target) else hi


@dataclass(frozen=True)
class CostSpec:
    """Per-class costs ``C_i(x) = (a_i + b_i x^p_i)^(1/p_i) - a_i^(1/p_i)``.

    Each ``C_i`` is strictly increasing and convex with ``C_i(0) = C_i'(0) = 0``;
    ``C_i'`` increases to ``b_i^(1/p_i)``, which is also the linear-growth
    constant.
    """

    a: np.ndarray
    b: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        for name in ("a", "b", "p"):
            object.__setattr__(self, name, _frozen(np.atleast_1d(getattr(self, name))))
        if not (self.a.shape == self.b.shape == self.p.shape):
            raise ConfigError("cost parameters a, b, p must have equal length")
        if np.any(self.a <= 0) or np.any(self.b <= 0) or np.any(self.p <= 1):
            raise ConfigError("cost parameters need a > 0, b > 0, p > 1")

    @classmethod
    def uniform(cls, d: int, a: float = 1.0, b: float = 1.0, p: float = 2.0) -> "CostSpec":
        return cls(np.full(d, a), np.full(d, b), np.full(d, p))

    @property
    def d(self) -> int:
        return int(self.a.shape[0])

    @property
    def cprime_sup(self) -> np.ndarray:
        return self.b ** (1.0 / self.p)

    @property
    def u1(self) -> float:
        return float(np.max(self.cprime_sup))

    def level_sup(self, mu: np.ndarray) -> np.ndarray:
        """``M_i = mu_i * sup C_i'``."""
        return np.asarray(mu) * self.cprime_sup

    # vectorized over a trailing class axis -------------------------------

    def components(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise NegativeArgument("cost evaluated at a negative queue length")
        a, b, p = self.a, self.b, self.p
        return a ** (1.0 / p) * np.expm1(np.log1p(b * x**p / a) / p)

    def derivatives(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise NegativeArgument("cost derivative at a negative argument")
        bxp = self.b * x**self.p
        r = bxp / (self.a + bxp)
        return self.cprime_sup * r ** ((self.p - 1.0) / self.p)

    def derivative_inverses(self, u) -> np.ndarray:
        # C'(x) = b^{1/p} r^{(p-1)/p}, r = b x^p / (a + b x^p): invert in r
        u = np.asarray(u, dtype=float)
        sup = self.cprime_sup
        if np.any(u < 0) or np.any(u >= sup):
            raise OutOfRange("derivative level outside [0, sup C_i')")
        r = (u / sup) ** (self.p / (self.p - 1.0))
        return (self.a * r / (self.b * (1.0 - r))) ** (1.0 / self.p)

    def total(self, q) -> np.ndarray:
        """``C(q) = sum_i C_i(q_i)`` over the last axis."""
        return np.sum(self.components(q), axis=-1)

    def to_dict(self) -> dict:
        return {"a": self.a.tolist(), "b": self.b.tolist(), "p": self.p.tolist()}


def cost_eval(cost: CostSpec, q) -> float:
    q = np.asarray(q, dtype=float)
    if q.shape != (cost.d,):
        raise ConfigError(f"expected a {cost.d}-vector")
    return float(cost.total(q))


def cost_derivative(cost: CostSpec, i: int, x: float) -> float:
    if x < 0:
        raise NegativeArgument(f"x={x} < 0")
    bxp = cost.b[i] * x ** cost.p[i]
    r = bxp / (cost.a[i] + bxp)
    return float(cost.cprime_sup[i] * r ** ((cost.p[i] - 1.0) / cost.p[i]))


def cost_derivative_inverse(cost: CostSpec, i: int, u: float) -> float:
    sup = float(cost.cprime_sup[i])
    if u < 0 or u >= sup:
        raise OutOfRange(f"u={u} outside [0, {sup})")
    r = (u / sup) ** (cost.p[i] / (cost.p[i] - 1.0))
    return float((cost.a[i] * r / (cost.b[i] * (1.0 - r))) ** (1.0 / cost.p[i]))


# ---------------------------------------------------------------------------
# JSON-compatible config documents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Problem:
    """A system config together with its holding cost."""

    config: SystemConfig
    cost: CostSpec
    source: dict = field(default_factory=dict, compare=False)

    def with_n(self, n: int) -> "Problem":
        return Problem(self.config.with_n(n), self.cost, self.source)

    def fingerprint(self) -> str:
        doc = {"config": self.config.to_dict(), "cost": self.cost.to_dict()}
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def load_problem(doc: Mapping[str, Any] | str) -> Problem:
    """Build a :class:`Problem` from a mapping or a path to a JSON file.

    Recognised keys: ``classes`` (list of ``{lambda, mu, lambda_tilde,
    mu_tilde}`` with optional per-class ``ia_dist``/``st_dist``/``cost``),
    ``n``, ``b_n`` or ``b_exponent``, ``horizon``, ``cost`` (``a``, ``b``,
    ``p`` as scalars or lists), ``ia_dist``, ``st_dist``, ``strict``.
    """
    if isinstance(doc, str):
        with open(doc) as fh:
            doc = json.load(fh)
    doc = dict(doc)
    try:
        classes = list(doc["classes"])
    except KeyError as exc:
        raise ConfigError("config document has no 'classes'") from exc
    d = len(classes)
    cost_doc = dict(doc.get("cost", {}))
    params = {k: _per_class(cost_doc.get(k, v), d, f"cost.{k}")
              for k, v in (("a", 1.0), ("b", 1.0), ("p", 2.0))}
    ia, st = [], []
    for i, cls in enumerate(classes):
        ia.append(cls.get("ia_dist", _per_class(doc.get("ia_dist", "exponential"), d, "ia_dist")[i]))
        st.append(cls.get("st_dist", _per_class(doc.get("st_dist", "exponential"), d, "st_dist")[i]))
        for k in ("a", "b", "p"):
            if k in cls.get("cost", {}):
                params[k][i] = cls["cost"][k]
    explicit_n = all("lambda_n" in c for c in classes)
    config = build_config(
        [c["lambda"] for c in classes],
        [c["mu"] for c in classes],
        n=int(doc.get("n", 1)),
        b_n=doc.get("b_n"),
        b_exponent=doc.get("b_exponent"),
        T=float(doc.get("horizon", 1.0)),
        lam_tilde=[c.get("lambda_tilde", 0.0) for c in classes],
        mu_tilde=[c.get("mu_tilde", 0.0) for c in classes],
        ia_dist=ia,
        st_dist=st,
        lam_n=[c["lambda_n"] for c in classes] if explicit_n else None,
        mu_n=[c["mu_n"] for c in classes] if explicit_n else None,
        strict=bool(doc.get("strict", True)),
    )
    cost = CostSpec(np.array(params["a"], float), np.array(params["b"], float),
                    np.array(params["p"], float))
    return Problem(config, cost, doc)


def desk_problem(n: int = 1024, beta: float = 0.2, T: float = 1.0) -> Problem:
    """Default experiment: d=2, lam=(0.5, 1), mu=(1, 2), exponential, a=b=1, p=2."""
    config = build_config([0.5, 1.0], [1.0, 2.0], n=n, b_exponent=beta, T=T)
    return Problem(config, CostSpec.uniform(2))
