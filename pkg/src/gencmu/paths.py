"""Piecewise paths on ``[0, T]`` and the path functionals used by the game.

Paths are either piecewise linear (values at nodes, linear in between) or
piecewise constant and right-continuous (value ``values[j]`` on
``[times[j], times[j+1])``, and ``values[-1]`` at ``T``).
"""
from __future__ import annotations

import csv
import io
import math
from typing import Iterable

import numpy as np

from .errors import BadDelta, DomainMismatch, NegativePathValue

LINEAR = "linear"
CONSTANT = "constant"

SIMPSON_PANELS = 64
_TIME_TOL = 1e-12


class PiecewisePath:
    """Vector-valued piecewise-linear or piecewise-constant path on ``[0, T]``."""

    __slots__ = ("times", "values", "kind")

    def __init__(self, times, values, kind: str = LINEAR):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if kind not in (LINEAR, CONSTANT):
            raise ValueError(f"unknown path kind {kind!r}")
        if times.ndim != 1 or times.shape[0] < 2:
            raise DomainMismatch("a path needs at least two breakpoints")
        if times[0] != 0.0:
            raise DomainMismatch("breakpoints must start at 0")
        if np.any(np.diff(times) <= 0):
            raise DomainMismatch("breakpoints must be strictly increasing")
        if values.shape[0] != times.shape[0]:
            raise DomainMismatch("one value row per breakpoint is required")
        times.setflags(write=False)
        values.setflags(write=False)
        self.times = times
        self.values = values
        self.kind = kind

    # construction -------------------------------------------------------

    @classmethod
    def linear(cls, times, values) -> "PiecewisePath":
        return cls(times, values, LINEAR)

    @classmethod
    def constant(cls, times, values) -> "PiecewisePath":
        return cls(times, values, CONSTANT)

    @classmethod
    def zeros(cls, T: float, dim: int = 1) -> "PiecewisePath":
        return cls([0.0, T], np.zeros((2, dim)))

    @classmethod
    def identity(cls, T: float) -> "PiecewisePath":
        return cls([0.0, T], [[0.0], [T]])

    @classmethod
    def from_function(cls, fn, T: float, m: int, dim: int | None = None) -> "PiecewisePath":
        """Piecewise-linear interpolant of ``fn`` on a uniform ``m``-segment grid."""
        t = np.linspace(0.0, T, m + 1)
        vals = np.array([np.atleast_1d(fn(s)) for s in t], dtype=float)
        if dim is not None and vals.shape[1] != dim:
            raise DomainMismatch("function dimension mismatch")
        return cls(t, vals)

    # basic properties -----------------------------------------------------

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def __repr__(self) -> str:
        return f"PiecewisePath(kind={self.kind}, dim={self.dim}, nodes={len(self.times)}, T={self.T})"

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        t_arr = np.atleast_1d(t_arr)
        if np.any(t_arr < -_TIME_TOL) or np.any(t_arr > self.T + _TIME_TOL):
            raise DomainMismatch("evaluation time outside [0, T]")
        if self.kind == LINEAR:
            out = np.column_stack([np.interp(t_arr, self.times, self.values[:, k])
                                   for k in range(self.dim)])
        else:
            idx = np.searchsorted(self.times, t_arr, side="right") - 1
            out = self.values[np.clip(idx, 0, len(self.times) - 1)]
        return out[0] if scalar else out

    def component(self, i: int) -> "PiecewisePath":
        return PiecewisePath(self.times, self.values[:, i:i + 1], self.kind)

    def components(self, idx) -> "PiecewisePath":
        return PiecewisePath(self.times, self.values[:, list(idx)], self.kind)

    def scalar_values(self) -> np.ndarray:
        if self.dim != 1:
            raise DomainMismatch("path is not scalar")
        return self.values[:, 0]

    # algebra ------------------------------------------------------------

    def refine(self, times) -> "PiecewisePath":
        """Same path on the union of its breakpoints and ``times``."""
        merged = _merge_times(self.times, np.asarray(times, dtype=float), self.T)
        return PiecewisePath(merged, self(merged), self.kind)

    def _binary(self, other, op) -> "PiecewisePath":
        if isinstance(other, PiecewisePath):
            if abs(other.T - self.T) > _TIME_TOL or other.kind != self.kind:
                raise DomainMismatch("paths must share kind and horizon")
            merged = _merge_times(self.times, other.times, self.T)
            return PiecewisePath(merged, op(self(merged), other(merged)), self.kind)
        return PiecewisePath(self.times, op(self.values, np.asarray(other, dtype=float)), self.kind)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, c):
        return PiecewisePath(self.times, self.values * c, self.kind)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def dot(self, vec) -> "PiecewisePath":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.dim,):
            raise DomainMismatch("dot vector has the wrong length")
        return PiecewisePath(self.times, self.values @ vec, self.kind)

    def hstack(self, other: "PiecewisePath") -> "PiecewisePath":
        if other.kind != self.kind or abs(other.T - self.T) > _TIME_TOL:
            raise DomainMismatch("paths must share kind and horizon")
        merged = _merge_times(self.times, other.times, self.T)
        return PiecewisePath(merged, np.hstack([self(merged), other(merged)]), self.kind)

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    # serialization ------------------------------------------------------

    def to_csv(self, target=None, names: Iterable[str] | None = None) -> str | None:
        names = list(names) if names is not None else [f"v{k + 1}" for k in range(self.dim)]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", *names])
        for t, row in zip(self.times, self.values):
            writer.writerow([repr(float(t)), *(repr(float(v)) for v in row)])
        text = buf.getvalue()
        if target is None:
            return text
        with open(target, "w") as fh:
            fh.write(text)
        return None

    @classmethod
    def from_csv(cls, source, kind: str = LINEAR) -> "PiecewisePath":
        text = source if "\n" in str(source) else open(source).read()
        rows = list(csv.reader(io.StringIO(text)))[1:]
        data = np.array([[float(v) for v in r] for r in rows if r])
        return cls(data[:, 0], data[:, 1:], kind)


def _merge_times(a: np.ndarray, b: np.ndarray, T: float) -> np.ndarray:
    merged = np.union1d(a, b[(b >= 0.0) & (b <= T)])
    # drop near-duplicates produced by floating-point remapping
    keep = np.concatenate([[True], np.diff(merged) > _TIME_TOL * max(1.0, T)])
    merged = merged[keep]
    merged[-1] = T
    return merged


def uniform_grid(T: float, m: int) -> np.ndarray:
    return np.linspace(0.0, T, m + 1)


# ---------------------------------------------------------------------------
# Skorohod map, time change, oscillation
# ---------------------------------------------------------------------------


def skorohod_map(z: PiecewisePath) -> PiecewisePath:
    """One-dimensional reflection ``z(t) - inf_{s<=t} min(z(s), 0)``.

    For piecewise-linear input the output is exact everywhere; a breakpoint
    is inserted inside any segment where the running minimum detaches.
    """
    if z.dim != 1:
        raise DomainMismatch("skorohod_map expects a scalar path")
    t, v = z.times, z.values[:, 0]
    if z.kind == CONSTANT:
        floor = np.minimum(np.minimum.accumulate(v), 0.0)
        return PiecewisePath(t, v - floor, CONSTANT)

    out_t = [t[0]]
    floor = min(v[0], 0.0)
    out_v = [v[0] - floor]
    for j in range(1, len(t)):
        t0, t1, z0, z1 = t[j - 1], t[j], v[j - 1], v[j]
        if z1 < floor:
            if z0 > floor:
                cross = t0 + (z0 - floor) / (z0 - z1) * (t1 - t0)
                if t0 < cross < t1:
                    out_t.append(cross)
                    out_v.append(0.0)
            floor = z1
            out_t.append(t1)
            out_v.append(0.0)
        else:
            out_t.append(t1)
            out_v.append(z1 - floor)
    return PiecewisePath(np.array(out_t), np.array(out_v), LINEAR)


def skorohod_regulator(z: PiecewisePath) -> PiecewisePath:
    """The pushing term ``Gamma[z] - z``."""
    return skorohod_map(z) - z


def time_change_rho(psi2: PiecewisePath, rho) -> PiecewisePath:
    """Componentwise ``psi2_i(rho_i t)`` for ``0 < rho_i <= 1``."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (psi2.dim,):
        raise DomainMismatch("rho must have one entry per component")
    if np.any(rho <= 0) or np.any(rho > 1.0 + 1e-12):
        raise DomainMismatch("time change factors must lie in (0, 1]")
    T = psi2.T
    extra = [psi2.times / r for r in rho]
    merged = _merge_times(psi2.times, np.concatenate(extra), T)
    cols = [psi2.component(i)(np.minimum(rho[i] * merged, T))[:, 0] for i in range(psi2.dim)]
    return PiecewisePath(merged, np.column_stack(cols), psi2.kind)


def oscillation(f: PiecewisePath, delta: float) -> float:
    """``sup{ |f(s) - f(t)| : |s - t| <= delta }`` (Euclidean norm).

    Exact: on each pair of linear pieces the distance is convex, so the
    supremum sits at a breakpoint pair or on the lines ``t = s +- delta``.
    """
    T = f.T
    if not 0 < delta <= T:
        raise BadDelta(f"delta={delta} not in (0, T]")
    t = f.times
    if f.kind == CONSTANT:
        return _oscillation_constant(f, delta)
    shifted = np.concatenate([t + delta, t - delta])
    shifted = shifted[(shifted >= 0) & (shifted <= T)]
    cand = np.union1d(t, shifted)
    vals = f(cand)
    best = 0.0
    for j in range(len(cand)):
        hi = np.searchsorted(cand, cand[j] + delta * (1 + 1e-12), side="right")
        if hi > j + 1:
            diff = np.linalg.norm(vals[j + 1:hi] - vals[j], axis=1)
            best = max(best, float(diff.max()))
    return best


def _oscillation_constant(f: PiecewisePath, delta: float) -> float:
    t, v = f.times, f.values
    n_pieces = len(t) - 1
    # piece j occupies [t_j, t_{j+1}); the final value at T is its own point
    starts = np.append(t[:-1], t[-1])
    ends = np.append(t[1:], t[-1])
    vals = np.vstack([v[:-1], v[-1:]])
    best = 0.0
    for j in range(n_pieces + 1):
        for k in range(j + 1, n_pieces + 1):
            # the pieces can be brought within delta iff start_k - end_j < delta
            if starts[k] - ends[j] >= delta:
                break
            best = max(best, float(np.linalg.norm(vals[k] - vals[j])))
    return best


# ---------------------------------------------------------------------------
# cost integrals and rate functions
# ---------------------------------------------------------------------------


def simpson_nodes(times: np.ndarray, panels: int = SIMPSON_PANELS):
    """Nodes and weights of composite Simpson on every segment of ``times``."""
    if panels % 2:
        raise ValueError("Simpson needs an even panel count")
    seg = np.diff(times)
    frac = np.linspace(0.0, 1.0, panels + 1)
    nodes = (times[:-1, None] + seg[:, None] * frac[None, :-1]).ravel()
    nodes = np.append(nodes, times[-1])
    base = np.ones(panels + 1)
    base[1:-1:2] = 4.0
    base[2:-1:2] = 2.0
    weights = np.zeros(nodes.shape[0])
    for j, h in enumerate(seg):
        lo = j * panels
        weights[lo:lo + panels + 1] += base * (h / panels / 3.0)
    return nodes, weights


def integrate_cost(phi, cost, panels: int = SIMPSON_PANELS) -> float:
    """``integral_0^T C(phi(t)) dt`` for a nonnegative path.

    Exact segment sums for piecewise-constant paths; composite Simpson with
    ``panels`` panels per segment otherwise.  Any object with ``times``,
    ``kind`` and a vectorized ``__call__`` is accepted, which lets curved
    paths such as ``f(w(t))`` be integrated on the breakpoints of ``w``.
    """
    if getattr(phi, "kind", None) == CONSTANT:
        vals = phi.values
        _check_nonneg(vals)
        seg = np.diff(phi.times)
        return float(np.sum(cost.total(np.maximum(vals[:-1], 0.0)) * seg))
    nodes, weights = simpson_nodes(np.asarray(phi.times), panels)
    vals = np.asarray(phi(nodes))
    _check_nonneg(vals)
    return float(weights @ cost.total(np.maximum(vals, 0.0)))


def _check_nonneg(vals: np.ndarray, tol: float = 1e-12) -> None:
    if vals.size and vals.min() < -tol:
        raise NegativePathValue(f"path takes the negative value {vals.min():.3e}")


def quadratic_action(path: PiecewisePath, var) -> float:
    """``sum_i 1/(2 var_i) int (d path_i)^2`` for one block of components."""
    var = np.asarray(var, dtype=float)
    if path.kind != LINEAR:
        return 0.0 if not np.any(path.values) else math.inf
    if np.any(path.values[0] != 0.0):
        return math.inf
    dt = np.diff(path.times)
    dv = np.diff(path.values, axis=0)
    energy = np.sum(dv**2 / dt[:, None], axis=0)
    total = 0.0
    for e, s2 in zip(energy, var):
        if s2 > 0:
            total += e / (2.0 * s2)
        elif e > 0:
            return math.inf
    return float(total)


def rate_function(psi: PiecewisePath, config) -> float:
    """Quadratic action of ``psi = (psi1, psi2)`` against the primitive variances.

    Returns ``inf`` when ``psi(0) != 0``, when ``psi`` is not piecewise
    linear (and nonzero), or when a zero-variance component moves.
    """
    d = config.d
    if psi.dim != 2 * d:
        raise DomainMismatch(f"expected a {2 * d}-dimensional path")
    return (quadratic_action(psi.components(range(d)), config.sigma1_hat2)
            + quadratic_action(psi.components(range(d, 2 * d)), config.sigma2_hat2))
