"""Closed-loop vehicle-guidance benchmark.

A kinematic bicycle drives one lap of a rounded-rectangle road under a
receding-horizon linear-quadratic tracking controller whose cost weights
are set from five decision exponents.  The closed loop produces velocity,
lateral-error and acceleration traces from which the three objectives
and the crash flag are computed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numba
import numpy as np

from ..core import BoxBounds, Evaluation
from .problem import BenchmarkProblem

log = logging.getLogger(__name__)

LATERAL_LIMIT = 1.5


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VehicleConfig:
    straight_length: float = 200.0
    curve_radius: float = 30.0
    sample_spacing: float = 1.0
    v_lim_straight: float = 15.0
    v_lim_curve: float = 8.0
    wheelbase: float = 2.7
    accel_bounds: tuple = (-4.0, 3.0)
    steer_rate_limit: float = 0.5
    steer_limit: float = 0.5
    sample_time: float = 0.05
    t_max: float = 120.0
    horizon_steps: int = 40
    substeps: int = 2
    heading_weight: float = 1.0
    # Nominal magnitudes that make unit weights a balanced tuning.
    scale_position: float = 0.1
    scale_heading: float = 0.05
    scale_lat_accel: float = 1.0
    scale_accel: float = 1.0
    scale_steer_rate: float = 0.1
    scale_speed: float = 1.0
    min_linearization_speed: float = 1.0
    lateral_limit: float = LATERAL_LIMIT
    # Worst successful objectives of pilot_reference_point() with its defaults.
    reference_point: tuple = (9.51502484201118, 0.6718939951211851, 2.4845882451694616)
    mean_steps_per_eval: int = 1200

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for key in ("accel_bounds", "reference_point"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# track
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Track:
    """Closed centerline polyline sampled by arc length."""

    points: np.ndarray      # (K, 2)
    s: np.ndarray           # arc length at each sample
    heading: np.ndarray
    curvature: np.ndarray
    speed_limit: np.ndarray
    lap_length: float

    @classmethod
    def rounded_rectangle(cls, straight: float = 200.0, radius: float = 30.0,
                          spacing: float = 1.0, v_straight: float = 15.0,
                          v_curve: float = 8.0) -> "Track":
        arc = np.pi * radius
        lap = 2.0 * straight + 2.0 * arc
        n = int(round(lap / spacing))
        s = np.linspace(0.0, lap, n, endpoint=False)
        pts = np.empty((n, 2))
        hdg = np.empty(n)
        kap = np.zeros(n)
        vlim = np.full(n, v_straight)
        for i, si in enumerate(s):
            if si < straight:
                pts[i] = (si, 0.0)
                hdg[i] = 0.0
            elif si < straight + arc:
                a = (si - straight) / radius
                pts[i] = (straight + radius * np.sin(a), radius - radius * np.cos(a))
                hdg[i] = a
                kap[i] = 1.0 / radius
                vlim[i] = v_curve
            elif si < 2 * straight + arc:
                d = si - straight - arc
                pts[i] = (straight - d, 2 * radius)
                hdg[i] = np.pi
            else:
                a = (si - 2 * straight - arc) / radius
                pts[i] = (-radius * np.sin(a), radius + radius * np.cos(a))
                hdg[i] = np.pi + a
                kap[i] = 1.0 / radius
                vlim[i] = v_curve
        return cls(pts, s, hdg, kap, vlim, lap)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def sample_index(self, s: float) -> int:
        return int(np.floor((s % self.lap_length) / self.lap_length * self.n)) % self.n

    def speed_limit_at(self, s: float) -> float:
        return float(self.speed_limit[self.sample_index(s)])

    def curvature_at(self, s) -> np.ndarray:
        idx = (np.floor((np.asarray(s) % self.lap_length) / self.lap_length * self.n)
               .astype(int) % self.n)
        return self.curvature[idx]

    def speed_limit_ahead(self, s) -> np.ndarray:
        idx = (np.floor((np.asarray(s) % self.lap_length) / self.lap_length * self.n)
               .astype(int) % self.n)
        return self.speed_limit[idx]

    def project(self, x: float, y: float, hint: int, window: int = 6):
        """Closest point on the polyline near sample ``hint``.

        Returns (segment index, arc length, signed lateral error, path heading);
        the lateral error is positive to the left of the driving direction.
        """
        idx = (hint + np.arange(-window, window + 1)) % self.n
        nxt = (idx + 1) % self.n
        p0 = self.points[idx]
        d = self.points[nxt] - p0
        seg_len2 = np.sum(d * d, axis=1)
        rel = np.array([x, y]) - p0
        t = np.clip(np.sum(rel * d, axis=1) / seg_len2, 0.0, 1.0)
        q = p0 + t[:, None] * d
        dist2 = np.sum((np.array([x, y]) - q) ** 2, axis=1)
        j = int(np.argmin(dist2))
        seg = int(idx[j])
        seg_len = np.sqrt(seg_len2[j])
        s = (self.s[seg] + t[j] * seg_len) % self.lap_length
        tx, ty = d[j] / seg_len
        rx, ry = x - q[j, 0], y - q[j, 1]
        e_lat = tx * ry - ty * rx
        return seg, float(s), float(e_lat), float(np.arctan2(ty, tx))


# ---------------------------------------------------------------------------
# vehicle and controller
# ---------------------------------------------------------------------------

@dataclass
class VehicleState:
    x: float
    y: float
    psi: float
    v: float
    delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v, self.delta])


@dataclass(frozen=True)
class WeightMapping:
    """Controller weights from the five decision exponents (powers of ten)."""

    w_pos: float
    w_alat: float
    r_a: float
    r_omega: float
    r_v: float
    q_psi: float = 1.0

    @classmethod
    def from_theta(cls, theta, q_psi: float = 1.0) -> "WeightMapping":
        t = np.asarray(theta, dtype=float)
        if t.shape != (5,):
            raise ValueError("expected five exponents")
        w = 10.0 ** t
        return cls(float(w[0]), float(w[1]), float(w[2]), float(w[3]), float(w[4]), q_psi)


def _wrap(angle: float) -> float:
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def riccati_first_gain(A_seq, B, Q_seq, R: float) -> np.ndarray:
    """First-step feedback gain of a finite-horizon LTV LQ problem (scalar input).

    ``A_seq`` holds one matrix per stage and ``Q_seq`` one weight per stage
    followed by the terminal weight.  Reference implementation; the closed
    loop uses the compiled twin below.
    """
    P = Q_seq[-1]
    K = None
    for t in range(len(A_seq) - 1, -1, -1):
        A = A_seq[t]
        PB = P @ B
        denom = R + B @ PB
        K = (PB @ A) / denom
        P = Q_seq[t] + A.T @ P @ A - np.outer(A.T @ PB, K)
        P = 0.5 * (P + P.T)
    return K


@numba.njit(cache=True, nogil=True)
def _riccati_first_gain_jit(A_seq, B, Q_seq, R):
    N, n, _ = A_seq.shape
    P = Q_seq[N].copy()
    K = np.zeros(n)
    PB = np.zeros(n)
    AtPB = np.zeros(n)
    PA = np.zeros((n, n))
    for t in range(N - 1, -1, -1):
        A = A_seq[t]
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += P[i, j] * B[j]
            PB[i] = acc
        denom = R
        for i in range(n):
            denom += B[i] * PB[i]
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += PB[i] * A[i, j]
            K[j] = acc / denom
            AtPB[j] = acc
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for k in range(n):
                    acc += P[i, k] * A[k, j]
                PA[i, j] = acc
        Pn = Q_seq[t].copy()
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for k in range(n):
                    acc += A[k, i] * PA[k, j]
                Pn[i, j] += acc - AtPB[i] * K[j]
        for i in range(n):
            for j in range(n):
                P[i, j] = 0.5 * (Pn[i, j] + Pn[j, i])
    return K


class LQTrackingController:
    """Receding-horizon LQ path tracking, recomputed at every sample.

    Lateral and longitudinal motion are decoupled after linearizing the
    bicycle about the current speed.  Lateral states are (lateral error,
    heading error, steering angle, 1) with steering rate as input and the
    lateral-acceleration proxy ``v^2 delta / L`` in the stage cost.
    The position error of a path-following controller is purely lateral,
    since the reference point travels with the vehicle's projection.
    Longitudinal states are (speed, 1) with acceleration as input; the
    desired speed enters as a previewed affine reference.  The terminal
    weight equals the stage weight.
    """

    def __init__(self, weights: WeightMapping, track: Track, config: VehicleConfig = VehicleConfig()):
        self.weights = weights
        self.track = track
        self.config = config
        c = config
        self.q_pos = weights.w_pos / c.scale_position ** 2
        self.q_psi = weights.q_psi / c.scale_heading ** 2
        self.q_alat = weights.w_alat / c.scale_lat_accel ** 2
        self.r_a = weights.r_a / c.scale_accel ** 2
        self.r_omega = weights.r_omega / c.scale_steer_rate ** 2
        self.r_v = weights.r_v / c.scale_speed ** 2
        self.failed = False

    def _lateral_gain(self, v0: float, kappa: np.ndarray) -> np.ndarray:
        c = self.config
        T, L = c.sample_time, c.wheelbase
        N = len(kappa)
        base = np.eye(4)
        base[0, 1] = T * v0
        base[1, 2] = T * v0 / L
        A_seq = np.repeat(base[None], N, axis=0)
        A_seq[:, 1, 3] = -T * v0 * kappa
        B = np.array([0.0, 0.0, T, 0.0])
        lat = v0 * v0 / L
        Q = np.diag([self.q_pos, self.q_psi, self.q_alat * lat * lat, 0.0])
        Q_seq = np.repeat(Q[None] * T, N + 1, axis=0)
        Q_seq[-1] = Q
        return _riccati_first_gain_jit(A_seq, B, Q_seq, self.r_omega * T)

    def _longitudinal_gain(self, v_ref: np.ndarray) -> np.ndarray:
        T = self.config.sample_time
        N = len(v_ref)
        A_seq = np.repeat(np.eye(2)[None], N, axis=0)
        B = np.array([T, 0.0])
        vr = np.append(v_ref, v_ref[-1])
        Q_seq = np.empty((N + 1, 2, 2))
        Q_seq[:, 0, 0] = 1.0
        Q_seq[:, 0, 1] = Q_seq[:, 1, 0] = -vr
        Q_seq[:, 1, 1] = vr * vr
        Q_seq *= self.r_v * T
        Q_seq[-1] /= T
        return _riccati_first_gain_jit(A_seq, B, Q_seq, self.r_a * T)

    def step(self, state: VehicleState, s: float, e_lat: float, path_heading: float):
        """Commands (acceleration, steering rate) for the current sample."""
        c = self.config
        v0 = max(state.v, c.min_linearization_speed)
        t_ahead = np.arange(c.horizon_steps) * c.sample_time
        s_ahead = s + v0 * t_ahead
        kappa = self.track.curvature_at(s_ahead)
        v_ref = self.track.speed_limit_ahead(s_ahead)
        e_psi = _wrap(state.psi - path_heading)
        k_lat = self._lateral_gain(v0, kappa)
        k_lon = self._longitudinal_gain(v_ref)
        omega = -float(k_lat @ np.array([e_lat, e_psi, state.delta, 1.0]))
        accel = -float(k_lon @ np.array([state.v, 1.0]))
        if not (np.isfinite(omega) and np.isfinite(accel)):
            self.failed = True
            return 0.0, 0.0
        accel = float(np.clip(accel, *c.accel_bounds))
        omega = float(np.clip(omega, -c.steer_rate_limit, c.steer_rate_limit))
        return accel, omega


def controller_step(state: VehicleState, track: Track, weights: WeightMapping,
                    config: VehicleConfig = VehicleConfig(), hint: int = 0):
    """One controller evaluation from scratch; returns (a_cmd, omega_cmd)."""
    ctrl = LQTrackingController(weights, track, config)
    _, s, e_lat, hdg = track.project(state.x, state.y, hint, window=track.n // 2)
    return ctrl.step(state, s, e_lat, hdg)


def integrate(state: VehicleState, accel: float, omega: float, config: VehicleConfig):
    """Advance one sample with zero-order-hold inputs.

    Speed and steering follow their (saturated) ramps exactly; position
    and heading use RK4 on ``substeps`` sub-intervals.  Returns the new
    state and the realized longitudinal acceleration.
    """
    c = config
    T = c.sample_time
    v0, d0 = state.v, state.delta

    def v_of(t):
        return max(v0 + accel * t, 0.0)

    def d_of(t):
        return min(max(d0 + omega * t, -c.steer_limit), c.steer_limit)

    L = c.wheelbase

    def f(t, px, py, pp):
        v = v_of(t)
        return v * math.cos(pp), v * math.sin(pp), v * math.tan(d_of(t)) / L

    x, y, psi = state.x, state.y, state.psi
    h = T / c.substeps
    t = 0.0
    for _ in range(c.substeps):
        a1 = f(t, x, y, psi)
        a2 = f(t + h / 2, x + h / 2 * a1[0], y + h / 2 * a1[1], psi + h / 2 * a1[2])
        a3 = f(t + h / 2, x + h / 2 * a2[0], y + h / 2 * a2[1], psi + h / 2 * a2[2])
        a4 = f(t + h, x + h * a3[0], y + h * a3[1], psi + h * a3[2])
        x += h / 6 * (a1[0] + 2 * a2[0] + 2 * a3[0] + a4[0])
        y += h / 6 * (a1[1] + 2 * a2[1] + 2 * a3[1] + a4[1])
        psi += h / 6 * (a1[2] + 2 * a2[2] + 2 * a3[2] + a4[2])
        t += h
    v1 = v_of(T)
    new = VehicleState(x, y, psi, v1, d_of(T))
    return new, (v1 - v0) / T


# ---------------------------------------------------------------------------
# trajectory log, objectives and crash predicate
# ---------------------------------------------------------------------------

LOG_COLUMNS = ("t", "x", "y", "psi", "v", "delta", "v_des", "e_lat", "a_lat", "a_long")


@dataclass
class TrajectoryLog:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    v: np.ndarray
    delta: np.ndarray
    v_des: np.ndarray
    e_lat: np.ndarray
    a_lat: np.ndarray
    a_long: np.ndarray
    n_laps: int = 0
    crash_reason: str = ""

    @classmethod
    def from_series(cls, v_des, v, e_lat, a_lat, a_long, n_laps=1, sample_time=0.05):
        """Minimal log from the objective-relevant series (other columns zero)."""
        v_des = np.asarray(v_des, float)
        n = v_des.size
        z = np.zeros(n)
        return cls(np.arange(1, n + 1) * sample_time, z, z, z, np.asarray(v, float), z,
                   v_des, np.asarray(e_lat, float), np.asarray(a_lat, float),
                   np.asarray(a_long, float), n_laps)

    @property
    def n_k(self) -> int:
        return int(self.t.size)

    def columns(self) -> dict:
        return {c: getattr(self, c) for c in LOG_COLUMNS}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            cols = [getattr(self, c) for c in LOG_COLUMNS]
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path, n_laps: int = 0) -> "TrajectoryLog":
        data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
        return cls(*(np.asarray(data[c], float) for c in LOG_COLUMNS), n_laps=n_laps)


def _rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x * x)))


def objective_j1(log: TrajectoryLog) -> float:
    """RMS of desired minus actual speed."""
    return _rms(log.v_des - log.v)


def objective_j2(log: TrajectoryLog) -> float:
    """RMS lateral deviation."""
    return _rms(log.e_lat)


def objective_j3(log: TrajectoryLog) -> float:
    """RMS of the total acceleration magnitude."""
    a = np.sqrt(log.a_lat ** 2 + log.a_long ** 2)
    return _rms(a)


def crash_predicate(log: TrajectoryLog, limit: float = LATERAL_LIMIT) -> bool:
    """Success iff one lap is completed and the lateral error stays within the limit."""
    if log.n_k == 0:
        return False
    return bool(np.max(np.abs(log.e_lat)) <= limit and log.n_laps == 1)


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------

@dataclass
class SimulationResult:
    evaluation: Evaluation
    log: TrajectoryLog


def simulate_vehicle(theta, config: VehicleConfig = VehicleConfig(),
                     track: Optional[Track] = None) -> SimulationResult:
    """Run one closed-loop lap for the weights encoded by ``theta``."""
    t_start = time.perf_counter()
    c = config
    track = track or track_from_config(c)
    weights = WeightMapping.from_theta(theta, c.heading_weight)
    ctrl = LQTrackingController(weights, track, c)
    state = VehicleState(float(track.points[0, 0]), float(track.points[0, 1]),
                         float(track.heading[0]), 0.0, 0.0)
    hint = 0
    max_steps = int(round(c.t_max / c.sample_time))
    hint, s_prev, e_lat, hdg = track.project(state.x, state.y, hint)
    progress = 0.0
    rows = []
    reason = "time_limit"
    n_laps = 0
    for k in range(1, max_steps + 1):
        accel, omega = ctrl.step(state, s_prev, e_lat, hdg)
        if ctrl.failed:
            reason = "riccati_divergence"
            break
        state, a_long = integrate(state, accel, omega, c)
        if not np.all(np.isfinite(state.as_array())):
            reason = "numerical"
            break
        hint, s, e_lat, hdg = track.project(state.x, state.y, hint)
        ds = (s - s_prev + track.lap_length / 2) % track.lap_length - track.lap_length / 2
        progress += ds
        s_prev = s
        a_lat = state.v * state.v * np.tan(state.delta) / c.wheelbase
        rows.append((k * c.sample_time, state.x, state.y, state.psi, state.v, state.delta,
                     track.speed_limit_at(s), e_lat, a_lat, a_long))
        if abs(e_lat) > c.lateral_limit:
            reason = "lateral_bound"
            break
        if progress >= track.lap_length:
            n_laps = 1
            reason = ""
            break
    arr = np.array(rows) if rows else np.empty((0, len(LOG_COLUMNS)))
    log_ = TrajectoryLog(*(arr[:, i].copy() for i in range(len(LOG_COLUMNS))),
                         n_laps=n_laps, crash_reason=reason)
    ok = crash_predicate(log_, c.lateral_limit) and reason == ""
    objs = (np.array([objective_j1(log_), objective_j2(log_), objective_j3(log_)])
            if ok else None)
    if reason in ("numerical", "riccati_divergence"):
        log.info("vehicle simulation aborted (%s) for theta=%s", reason, np.round(theta, 3))
    info = {} if ok else {"crash_reason": reason}
    ev = Evaluation(np.asarray(theta, float), ok, objs, log_.n_k,
                    time.perf_counter() - t_start, info)
    return SimulationResult(ev, log_)


def track_from_config(c: VehicleConfig) -> Track:
    return Track.rounded_rectangle(c.straight_length, c.curve_radius, c.sample_spacing,
                                   c.v_lim_straight, c.v_lim_curve)


VEHICLE_BOUNDS = BoxBounds.uniform(-3.0, 4.0, 5)


DEFAULT_CONFIG_PATH = Path(__file__).with_name("vehicle_default.json")


def load_vehicle_config(path=DEFAULT_CONFIG_PATH) -> VehicleConfig:
    with open(path) as fh:
        return VehicleConfig.from_dict(json.load(fh))


def pilot_reference_point(config: Optional[VehicleConfig] = None, n_evals: int = 200,
                          seed: int = 12345) -> np.ndarray:
    """Componentwise worst successful objectives over a uniform random pilot run.

    This is how the frozen reference point in the default config was made.
    """
    config = config or load_vehicle_config()
    track = track_from_config(config)
    thetas = VEHICLE_BOUNDS.sample(np.random.default_rng(seed), n_evals)
    objs = [e.objectives for e in (simulate_vehicle(t, config, track).evaluation for t in thetas)
            if e.crash_ok]
    if not objs:
        raise RuntimeError("pilot run produced no successful evaluation")
    return np.max(np.vstack(objs), axis=0)


def vehicle_problem(config: Optional[VehicleConfig] = None, name: str = "vehicle") -> BenchmarkProblem:
    config = config or load_vehicle_config()
    track = track_from_config(config)

    def func(theta):
        return simulate_vehicle(theta, config, track).evaluation

    return BenchmarkProblem(name=name, bounds=VEHICLE_BOUNDS, n_obj=3,
                            reference_point=np.asarray(config.reference_point, float),
                            func=func, mean_steps_per_eval=config.mean_steps_per_eval,
                            nominal_eval_seconds=None,
                            params={"vehicle": config})
