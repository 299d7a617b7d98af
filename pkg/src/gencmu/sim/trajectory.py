"""Simulation records, moderate-deviation scaling and the built-in checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import SystemConfig
from ..paths import CONSTANT, LINEAR, PiecewisePath


@dataclass
class Trajectory:
    """Event-time record of one run; row ``k`` is the state just after event ``k``.

    Row 0 is the empty initial state and the last row is the state at ``T``.
    Simultaneous events produce rows with equal times.
    """

    times: np.ndarray
    queue: np.ndarray
    serving: np.ndarray
    alloc: np.ndarray
    arrivals: np.ndarray
    departures: np.ndarray
    kinds: np.ndarray
    cost_integral: float
    policy: str = ""
    seed: int = 0
    replication: int = 0
    requirements: list = field(default_factory=list, repr=False)

    @property
    def d(self) -> int:
        return int(self.queue.shape[1])

    @property
    def n_events(self) -> int:
        return int(self.times.shape[0]) - 2

    def busy(self) -> np.ndarray:
        """``B(t)`` as 0/1 rows."""
        b = np.zeros(self.queue.shape, dtype=np.int64)
        rows = np.nonzero(self.serving >= 0)[0]
        b[rows, self.serving[rows]] = 1
        return b

    def _last_per_time(self) -> np.ndarray:
        keep = np.ones(self.times.shape[0], dtype=bool)
        keep[:-1] = self.times[1:] > self.times[:-1]
        return keep

    def queue_path(self) -> PiecewisePath:
        """Right-continuous step path of ``Q``."""
        keep = self._last_per_time()
        t, v = self.times[keep], self.queue[keep].astype(float)
        if t.shape[0] == 1:
            t = np.array([0.0, t[0]])
            v = np.vstack([v, v])
        return PiecewisePath(t, v, CONSTANT)

    def allocation_path(self) -> PiecewisePath:
        keep = self._last_per_time()
        return PiecewisePath(self.times[keep], self.alloc[keep], LINEAR)

    def event_table(self) -> list[tuple]:
        return [(float(t), *map(int, q), int(s)) for t, q, s in zip(self.times, self.queue, self.serving)]

    def to_csv(self, target) -> None:
        names = [f"Q{i + 1}" for i in range(self.d)]
        with open(target, "w") as fh:
            fh.write(",".join(["t", *names, "serving"]) + "\n")
            for row in self.event_table():
                fh.write(",".join([repr(row[0]), *map(str, row[1:])]) + "\n")

    def invariant_residuals(self) -> dict[str, float]:
        """Deviations of the structural invariants; all should be zero."""
        out = {}
        out["flow_balance"] = float(np.max(np.abs(self.queue - (self.arrivals - self.departures))))
        out["negative_queue"] = float(max(0, -int(self.queue.min())))
        busy = self.busy()
        out["serve_empty"] = float(np.sum(busy * (self.queue == 0)))
        dt = np.diff(self.times)
        da = np.diff(self.alloc, axis=0)
        out["alloc_decrease"] = float(max(0.0, -da.min())) if da.size else 0.0
        out["alloc_rate"] = float(max(0.0, np.max(da.sum(axis=1) - dt))) if da.size else 0.0
        out["multi_serve"] = float(max(0, int(busy.sum(axis=1).max()) - 1))
        if self.requirements:
            # D_i(t) = S_i(T_i(t)), allowing for rounding at departure instants
            dev = 0
            for i, req in enumerate(self.requirements):
                cum = np.cumsum(req)
                lo = np.searchsorted(cum, self.alloc[:, i] - 1e-9, side="right")
                hi = np.searchsorted(cum, self.alloc[:, i] + 1e-9, side="right")
                dep = self.departures[:, i]
                dev = max(dev, int(np.max(np.maximum(lo - dep, dep - hi))))
            out["service_identity"] = float(max(dev, 0))
        return out


@dataclass
class ScaledTrajectory:
    """Centered and scaled processes at the event times of a run.

    ``y_left`` holds the left limits of ``Y`` at each event time, which is
    where its running minimum can sit between jumps.
    """

    times: np.ndarray
    q_tilde: np.ndarray
    a_tilde: np.ndarray
    s_tilde: np.ndarray
    z: np.ndarray
    y: np.ndarray
    y_left: np.ndarray

    def q_path(self) -> PiecewisePath:
        keep = np.ones(self.times.shape[0], dtype=bool)
        keep[:-1] = self.times[1:] > self.times[:-1]
        return PiecewisePath(self.times[keep], self.q_tilde[keep], CONSTANT)


def scale_trajectory(traj: Trajectory, config: SystemConfig) -> ScaledTrajectory:
    s = config.scale
    t = traj.times[:, None]
    lam_n, mu_n = config.lam_n, config.mu_n
    q_tilde = traj.queue / s
    a_tilde = (traj.arrivals - lam_n * t) / s
    # S(T(t)) is the departure count
    s_tilde = (traj.departures - mu_n * traj.alloc) / s
    z = (mu_n / config.n) * (np.sqrt(config.n) / config.b_n) * (config.rho * t - traj.alloc)
    y = config.y_n * t + a_tilde - s_tilde
    prev_a = np.vstack([traj.arrivals[:1], traj.arrivals[:-1]])
    prev_d = np.vstack([traj.departures[:1], traj.departures[:-1]])
    y_left = config.y_n * t + (prev_a - lam_n * t) / s - (prev_d - mu_n * traj.alloc) / s
    return ScaledTrajectory(traj.times, q_tilde, a_tilde, s_tilde, z, y, y_left)


def systeq_residual(scaled: ScaledTrajectory) -> float:
    """Max relative violation of ``Q~ = y t + A~ - S~(T) + Z``."""
    rhs = scaled.y + scaled.z
    err = np.abs(scaled.q_tilde - rhs)
    return float(np.max(err / (1.0 + np.abs(scaled.q_tilde))))


def workload_check(traj: Trajectory, config: SystemConfig) -> tuple[float, float]:
    """``max_t |theta^n . Q~(t) - Gamma[theta^n . Y](t)|`` over event times.

    Returns ``(deviation, sup_t |theta^n . Y(t)|)``.
    """
    sc = scale_trajectory(traj, config)
    th = config.theta_n
    wl = sc.q_tilde @ th
    yy = sc.y @ th
    yl = sc.y_left @ th
    floor = np.minimum(np.minimum.accumulate(np.minimum(yy, yl)), 0.0)
    reflected = yy - floor
    norm = float(max(np.max(np.abs(yy)), np.max(np.abs(yl))))
    return float(np.max(np.abs(wl - reflected))), norm


def collapse_gap(traj: Trajectory, config: SystemConfig, curve) -> float:
    """``sup_t || Q~(t) - f(theta^n . Q~(t)) ||`` over event times."""
    q = traj.queue / config.scale
    w = q @ config.theta_n
    return float(np.max(np.linalg.norm(q - curve.min_curve(w), axis=1)))
