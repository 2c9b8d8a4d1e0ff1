"""Constant-acceleration Kalman filter for noisy 2D position tracks.

Each axis is filtered independently with state ``[position, velocity,
acceleration]``. The position-component Kalman gain (``gamma``) is tracked as
the convergence diagnostic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import IO, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .model import FieldSpec, Vec2


class DegenerateInnovation(ArithmeticError):
    pass


class NoObservations(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class FilterConfig:
    dt: float = 1.0
    sigma_a: float = 0.05
    sigma_z: float = 0.3
    initial_P_scale: float = 100.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.sigma_a >= 0:
            raise ValueError("sigma_a must be non-negative")
        if not self.sigma_z > 0:
            raise ValueError("sigma_z must be positive")
        if not self.initial_P_scale > 0:
            raise ValueError("initial_P_scale must be positive")


@lru_cache(maxsize=64)
def _model(c: FilterConfig) -> tuple[np.ndarray, np.ndarray]:
    dt = c.dt
    F = np.array([[1.0, dt, dt * dt / 2], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    G = np.array([dt * dt / 2, dt, 1.0])
    Q = c.sigma_a ** 2 * np.outer(G, G)
    F.flags.writeable = False
    Q.flags.writeable = False
    return F, Q


def transition_matrix(c: FilterConfig) -> np.ndarray:
    return _model(c)[0]


def process_noise(c: FilterConfig) -> np.ndarray:
    return _model(c)[1]


@dataclass(frozen=True)
class AxisState:
    mean: np.ndarray  # (3,) position, velocity, acceleration
    cov: np.ndarray   # (3, 3)

    @classmethod
    def initial(cls, position: float, c: FilterConfig) -> AxisState:
        return cls(np.array([position, 0.0, 0.0]), c.initial_P_scale * np.eye(3))

    @property
    def position(self) -> float:
        return float(self.mean[0])


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def _predict(mean, cov, F, Q):
    mean = mean @ F.T
    cov = _symmetrize(F @ cov @ F.T + Q)
    return mean, cov


def _update(mean, cov, z, r):
    # batched over a leading axis; H = [1, 0, 0]
    S = cov[..., 0, 0] + r
    if np.any(S <= 0) or not np.all(np.isfinite(S)):
        raise DegenerateInnovation(f"innovation variance {S} is not positive")
    K = cov[..., :, 0] / S[..., None]
    y = z - mean[..., 0]
    mean = mean + K * y[..., None]
    # Joseph form: (I - K H) P (I - K H)^T + K r K^T
    A = np.broadcast_to(np.eye(3), cov.shape).copy()
    A[..., :, 0] -= K
    cov = A @ cov @ np.swapaxes(A, -1, -2) + r * (K[..., :, None] * K[..., None, :])
    return mean, _symmetrize(cov), K[..., 0]


def predict(s: AxisState, c: FilterConfig) -> AxisState:
    F, Q = _model(c)
    mean, cov = _predict(s.mean, s.cov, F, Q)
    return AxisState(mean, cov)


def update(s: AxisState, z: float, c: FilterConfig) -> tuple[AxisState, float]:
    """Fuse one position measurement; returns the posterior and the position gain."""
    if not math.isfinite(z):
        raise ValueError("measurement must be finite")
    mean, cov, k0 = _update(s.mean, s.cov, z, c.sigma_z ** 2)
    return AxisState(mean, cov), float(k0)


@dataclass(frozen=True)
class FilterState:
    x_axis: AxisState
    y_axis: AxisState
    last_gain_pos: tuple[float, float] = (0.0, 0.0)
    time: int = 0

    @classmethod
    def initial(cls, position, c: FilterConfig, time: int = 0) -> FilterState:
        return cls(AxisState.initial(position[0], c), AxisState.initial(position[1], c), (0.0, 0.0), time)

    @property
    def position(self) -> Vec2:
        return Vec2(self.x_axis.position, self.y_axis.position)

    @property
    def gamma(self) -> float:
        return 0.5 * (self.last_gain_pos[0] + self.last_gain_pos[1])

    @property
    def cov_trace(self) -> float:
        return float(np.trace(self.x_axis.cov) + np.trace(self.y_axis.cov))


def _stack(fs: FilterState):
    return (np.stack([fs.x_axis.mean, fs.y_axis.mean]),
            np.stack([fs.x_axis.cov, fs.y_axis.cov]))


def _unstack(mean, cov, gains, time) -> FilterState:
    return FilterState(AxisState(mean[0], cov[0]), AxisState(mean[1], cov[1]), gains, time)


def step(fs: FilterState, obs, c: FilterConfig) -> FilterState:
    """Predict both axes one cycle, then fuse ``obs`` if present."""
    F, Q = _model(c)
    mean, cov = _stack(fs)
    mean, cov = _predict(mean, cov, F, Q)
    gains = fs.last_gain_pos
    if obs is not None:
        mean, cov, k0 = _update(mean, cov, np.asarray(obs, dtype=float), c.sigma_z ** 2)
        gains = (float(k0[0]), float(k0[1]))
    return _unstack(mean, cov, gains, fs.time + 1)


def iter_filter(observations: Sequence, c: FilterConfig) -> Iterator[FilterState]:
    """Yield the filter state after each cycle of ``observations``.

    The track starts at cycle 0 from the first available observation with zero
    velocity and acceleration; cycle 0 itself fuses its observation if present.
    """
    first = next((o for o in observations if o is not None), None)
    if first is None:
        raise NoObservations("observation series contains no measurement")
    F, Q = _model(c)
    r = c.sigma_z ** 2
    mean = np.array([[first[0], 0.0, 0.0], [first[1], 0.0, 0.0]])
    cov = np.stack([c.initial_P_scale * np.eye(3)] * 2)
    gains = (0.0, 0.0)
    for t, obs in enumerate(observations):
        if t:
            mean, cov = _predict(mean, cov, F, Q)
        if obs is not None:
            mean, cov, k0 = _update(mean, cov, np.asarray(obs, dtype=float), r)
            gains = (float(k0[0]), float(k0[1]))
        yield _unstack(mean, cov, gains, t)


class FilterRun(NamedTuple):
    estimates: list[Vec2]
    gamma: list[float]


def run_filter(observations: Sequence, c: FilterConfig = FilterConfig()) -> FilterRun:
    """Filter a series of optional 2D observations.

    Same recursion as :func:`iter_filter`, without materialising a state per
    cycle. Both axes share F, Q, r and update together, so one covariance
    serves both.
    """
    if len(observations) == 0:
        raise NoObservations("empty observation series")
    first = next((o for o in observations if o is not None), None)
    if first is None:
        raise NoObservations("observation series contains no measurement")
    a = c.dt
    h = a * a / 2
    Q = _model(c)[1]
    q00, q01, q02, q11, q12, q22 = (float(Q[i, j]) for i, j in _UPPER)
    r = c.sigma_z ** 2
    # the two axes share F, Q, r and always update together, so one
    # covariance (six unique entries, symmetric by construction) serves both
    p00 = p11 = p22 = float(c.initial_P_scale)
    p01 = p02 = p12 = 0.0
    x0, x1, x2 = float(first[0]), 0.0, 0.0
    y0, y1, y2 = float(first[1]), 0.0, 0.0
    gamma = 0.0
    est = []
    gam = []
    for t, obs in enumerate(observations):
        if t:
            x0, x1 = x0 + a * x1 + h * x2, x1 + a * x2
            y0, y1 = y0 + a * y1 + h * y2, y1 + a * y2
            # rows of F P
            r00 = p00 + a * p01 + h * p02
            r01 = p01 + a * p11 + h * p12
            r02 = p02 + a * p12 + h * p22
            r11 = p11 + a * p12
            r12 = p12 + a * p22
            p00 = r00 + a * r01 + h * r02 + q00
            p01 = r01 + a * r02 + q01
            p02 = r02 + q02
            p11 = r11 + a * r12 + q11
            p12 = r12 + q12
            p22 = p22 + q22
        if obs is not None:
            S = p00 + r
            if not S > 0:
                raise DegenerateInnovation(f"innovation variance {S} is not positive")
            k0, k1, k2 = p00 / S, p01 / S, p02 / S
            ex = obs[0] - x0
            ey = obs[1] - y0
            x0, x1, x2 = x0 + k0 * ex, x1 + k1 * ex, x2 + k2 * ex
            y0, y1, y2 = y0 + k0 * ey, y1 + k1 * ey, y2 + k2 * ey
            # Joseph form, entrywise: P - K P0. - P.0 K + K K (p00 + r)
            p11, p12, p22 = (p11 - 2 * k1 * p01 + k1 * k1 * S,
                             p12 - k1 * p02 - p01 * k2 + k1 * k2 * S,
                             p22 - 2 * k2 * p02 + k2 * k2 * S)
            p00, p01, p02 = (p00 - 2 * k0 * p00 + k0 * k0 * S,
                             p01 - k0 * p01 - p00 * k1 + k0 * k1 * S,
                             p02 - k0 * p02 - p00 * k2 + k0 * k2 * S)
            gamma = k0
        est.append(Vec2(x0, y0))
        gam.append(gamma)
    return FilterRun(est, gam)


_UPPER = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def steady_state_gain(c: FilterConfig = FilterConfig(), tol: float = 1e-12,
                      max_iter: int = 1_000_000) -> float:
    """Limit of the position gain under the predict/update covariance recursion."""
    if c.sigma_a == 0:
        # no process noise: the prior keeps tightening and the gain decays to 0
        return 0.0
    F, Q = _model(c)
    r = c.sigma_z ** 2
    P = c.initial_P_scale * np.eye(3)
    prev = None
    for i in range(max_iter):
        if i:
            P = _symmetrize(F @ P @ F.T + Q)
        S = P[0, 0] + r
        K = P[:, 0] / S
        A = np.eye(3)
        A[:, 0] -= K
        P = _symmetrize(A @ P @ A.T + r * np.outer(K, K))
        k0 = float(K[0])
        if prev is not None and abs(k0 - prev) < tol:
            return k0
        prev = k0
    raise NonConvergence(f"gain did not settle within {max_iter} iterations")


# ------------------------------------------------------------- simulation

@dataclass(frozen=True)
class TrajectorySample:
    time: int
    truth: Vec2
    observed: Vec2 | None = None
    estimated: Vec2 | None = None


MAX_PLAYER_SPEED = 1.05


def simulate(c: FilterConfig = FilterConfig(), cycles: int = 1000, seed: int = 0,
             segment_len: int = 50, accel_mag: float = 0.01, dropout: float = 0.0,
             spec: FieldSpec = FieldSpec()) -> list[TrajectorySample]:
    """Piecewise-constant-acceleration truth plus Gaussian position noise."""
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    if not 0 <= dropout < 1:
        raise ValueError("dropout must be in [0, 1)")
    if segment_len < 1:
        raise ValueError("segment_len must be >= 1")
    rng = np.random.default_rng(seed)
    hx, hy = spec.half_length, spec.half_width
    bounds = (hx, hy)
    pos = [float(rng.uniform(-hx / 2, hx / 2)), float(rng.uniform(-hy / 2, hy / 2))]
    vel = [0.0, 0.0]
    n_seg = (cycles + segment_len - 1) // segment_len
    accels = rng.uniform(-accel_mag, accel_mag, size=(n_seg, 2)).tolist()
    noise = rng.normal(0.0, c.sigma_z, size=(cycles, 2)).tolist()
    keep = (rng.random(cycles) >= dropout).tolist()
    dt = c.dt
    out = []
    for t in range(cycles):
        acc = accels[t // segment_len]
        if t:
            for k in range(2):
                p = pos[k] + vel[k] * dt + 0.5 * acc[k] * dt * dt
                v = min(max(vel[k] + acc[k] * dt, -MAX_PLAYER_SPEED), MAX_PLAYER_SPEED)
                b = bounds[k]
                if p > b:
                    p, v = 2 * b - p, -v
                elif p < -b:
                    p, v = -2 * b - p, -v
                pos[k], vel[k] = p, v
        truth = Vec2(pos[0], pos[1])
        obs = Vec2(pos[0] + noise[t][0], pos[1] + noise[t][1]) if keep[t] else None
        out.append(TrajectorySample(t, truth, obs))
    return out


def rmse(a: Sequence, b: Sequence) -> float:
    if len(a) != len(b):
        raise LengthMismatch(f"series lengths differ: {len(a)} vs {len(b)}")
    if not len(a):
        raise LengthMismatch("empty series")
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def filter_samples(samples: Sequence[TrajectorySample], c: FilterConfig) -> tuple[list[TrajectorySample], list[float]]:
    run = run_filter([s.observed for s in samples], c)
    filled = [replace(s, estimated=e) for s, e in zip(samples, run.estimates)]
    return filled, run.gamma


# -------------------------------------------------------------------- CSV

CSV_COLUMNS = ("time", "truth_x", "truth_y", "obs_x", "obs_y", "est_x", "est_y", "gamma")


def _cell(v) -> str:
    return "" if v is None else repr(float(v))


def write_series_csv(samples: Sequence[TrajectorySample], gamma: Sequence[float] | None, out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for i, s in enumerate(samples):
        o = s.observed
        e = s.estimated
        g = gamma[i] if gamma is not None else None
        w.writerow([
            s.time, _cell(s.truth.x), _cell(s.truth.y),
            _cell(o.x if o else None), _cell(o.y if o else None),
            _cell(e.x if e else None), _cell(e.y if e else None), _cell(g),
        ])


def read_series_csv(stream: Iterable[str]) -> tuple[list[TrajectorySample], list[float | None]]:
    """Read a series CSV; truth columns may be empty when unknown (stored as NaN)."""
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or "time" not in reader.fieldnames:
        raise ValueError("series CSV needs a header row with a 'time' column")

    def num(row, key):
        v = (row.get(key) or "").strip()
        return float(v) if v else None

    def vec(row, kx, ky):
        x, y = num(row, kx), num(row, ky)
        if x is None or y is None:
            return None
        return Vec2(x, y)

    samples = []
    gamma = []
    for row in reader:
        truth = vec(row, "truth_x", "truth_y") or Vec2(math.nan, math.nan)
        samples.append(TrajectorySample(int(row["time"]), truth, vec(row, "obs_x", "obs_y"),
                                        vec(row, "est_x", "est_y")))
        gamma.append(num(row, "gamma"))
    return samples, gamma
