"""Gyroscope integration and orientation interpolation.

Angular-rate samples are integrated into a trajectory of unit quaternions,
one knot per sample, anchored at the identity for the first sample.  The
quaternion at knot time t maps sensor-frame vectors at time t into the
sensor frame of the trajectory start.  Only relative rotations between two
query times are consumed downstream, so the arbitrary reference is harmless.

Quaternions are stored as float64 arrays ``[w, x, y, z]``.  Timestamps are
integer nanoseconds throughout; the inter-sample spacing of a consumer-grade
gyro (~10 ms) against per-row exposure offsets (~tens of microseconds)
requires sub-millisecond time resolution without float drift.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GyroSample",
    "OrientationTrajectory",
    "integrate_gyro",
    "orientation_at",
    "slerp",
    "load_gyro_csv",
    "save_gyro_csv",
    "quat_multiply",
    "quat_conjugate",
    "quat_from_rotvec",
    "quat_to_matrix",
    "quat_rotation_angle",
]

_UNIT_TOL = 1e-6


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a ⊗ b."""
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_rotvec(rv: np.ndarray) -> np.ndarray:
    """Quaternion for a rotation of |rv| radians about rv."""
    angle = math.sqrt(rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2])
    if angle < 1e-12:
        # second-order small-angle expansion keeps the norm accurate
        q = np.array([1.0 - angle * angle / 8.0, 0.5 * rv[0], 0.5 * rv[1], 0.5 * rv[2]])
        return q / np.linalg.norm(q)
    half = 0.5 * angle
    s = math.sin(half) / angle
    return np.array([math.cos(half), rv[0] * s, rv[1] * s, rv[2] * s])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix of a unit quaternion."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_rotation_angle(q: np.ndarray) -> float:
    """Rotation angle in radians, in [0, pi]."""
    w = min(1.0, max(-1.0, abs(float(q[0]))))
    return 2.0 * math.acos(w)


def slerp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    """Spherical linear interpolation between unit quaternions.

    Interpolates at constant angular velocity along the shorter arc
    (q1 is negated when dot(q0, q1) < 0).  The result is renormalized.

    Raises:
        ValueError: if either input deviates from unit norm by more than
            1e-6, or u is outside [0, 1].
    """
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    if abs(np.linalg.norm(q0) - 1.0) > _UNIT_TOL or abs(np.linalg.norm(q1) - 1.0) > _UNIT_TOL:
        raise ValueError("slerp requires unit quaternions")
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"interpolation fraction {u} outside [0, 1]")
    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-12:
        out = q0 + u * (q1 - q0)
        return out / np.linalg.norm(out)
    theta = math.acos(min(1.0, d))
    s = math.sin(theta)
    out = (math.sin((1.0 - u) * theta) * q0 + math.sin(u * theta) * q1) / s
    return out / np.linalg.norm(out)


@dataclass
class GyroSample:
    """One gyroscope reading: timestamp in ns and angular rate in rad/s."""

    t_ns: int
    omega: np.ndarray

    def __post_init__(self) -> None:
        self.t_ns = int(self.t_ns)
        self.omega = np.asarray(self.omega, dtype=np.float64).reshape(3)


@dataclass
class OrientationTrajectory:
    """Integrated orientation knots, one unit quaternion per sample time.

    Treated as immutable after construction; safe to share across threads.
    Evaluation outside [times[0], times[-1]] is an error.
    """

    times: np.ndarray
    quats: np.ndarray

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=np.int64)
        self.quats = np.asarray(self.quats, dtype=np.float64)
        if self.times.ndim != 1 or self.quats.shape != (self.times.size, 4):
            raise ValueError("trajectory needs matching times (n,) and quats (n, 4)")
        if self.times.size < 1:
            raise ValueError("trajectory needs at least one knot")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("knot timestamps must be strictly increasing")
        norms = np.linalg.norm(self.quats, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("trajectory quaternions must be unit norm")

    @property
    def t_start(self) -> int:
        return int(self.times[0])

    @property
    def t_end(self) -> int:
        return int(self.times[-1])

    def covers(self, t_a: int, t_b: int) -> bool:
        return self.t_start <= t_a and t_b <= self.t_end

    def orientation_at(self, t_ns: int) -> np.ndarray:
        """Quaternion at time t_ns, SLERPed between the bounding knots."""
        t = int(t_ns)
        if t < self.t_start or t > self.t_end:
            raise ValueError(
                f"time {t} ns outside trajectory span [{self.t_start}, {self.t_end}]"
            )
        idx = int(np.searchsorted(self.times, t))
        if idx < self.times.size and self.times[idx] == t:
            return self.quats[idx].copy()
        lo, hi = idx - 1, idx
        u = (t - self.times[lo]) / float(self.times[hi] - self.times[lo])
        return slerp(self.quats[lo], self.quats[hi], u)

    def rotation_at(self, t_ns: int) -> np.ndarray:
        """Rotation matrix at time t_ns."""
        return quat_to_matrix(self.orientation_at(t_ns))


def integrate_gyro(samples: list[GyroSample]) -> OrientationTrajectory:
    """Integrate angular rates into an orientation trajectory.

    Each step applies the incremental rotation over the inter-sample
    interval using the midpoint rule: the two bounding rates are averaged,
    scaled by dt, and exponentiated to a quaternion.  Knot 0 is the
    identity; every knot is renormalized.

    Raises:
        ValueError: fewer than two samples, non-monotonic timestamps, or
            non-finite rates.
    """
    if len(samples) < 2:
        raise ValueError("need at least two gyro samples to integrate")
    times = np.array([s.t_ns for s in samples], dtype=np.int64)
    rates = np.stack([s.omega for s in samples])
    if np.any(np.diff(times) <= 0):
        raise ValueError("gyro timestamps must be strictly increasing")
    if not np.all(np.isfinite(rates)):
        raise ValueError("gyro rates must be finite")

    quats = np.empty((times.size, 4))
    q = np.array([1.0, 0.0, 0.0, 0.0])
    quats[0] = q
    for i in range(times.size - 1):
        dt = (times[i + 1] - times[i]) * 1e-9
        rv = 0.5 * (rates[i] + rates[i + 1]) * dt
        q = quat_multiply(q, quat_from_rotvec(rv))
        q = q / np.linalg.norm(q)
        quats[i + 1] = q
    return OrientationTrajectory(times=times, quats=quats)


def orientation_at(traj: OrientationTrajectory, t_ns: int) -> np.ndarray:
    """Functional alias for OrientationTrajectory.orientation_at."""
    return traj.orientation_at(t_ns)


_TRACE_HEADER = ["t_ns", "wx", "wy", "wz"]


def load_gyro_csv(path) -> list[GyroSample]:
    """Read a gyro trace CSV with header t_ns,wx,wy,wz.

    Rejects files whose rows are not sorted by strictly increasing t_ns.
    """
    samples: list[GyroSample] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != _TRACE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(_TRACE_HEADER)}")
        prev_t = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            t = int(row[0])
            if prev_t is not None and t <= prev_t:
                raise ValueError(f"{path}:{lineno}: timestamps not strictly increasing")
            prev_t = t
            samples.append(GyroSample(t, np.array([float(v) for v in row[1:]])))
    return samples


def save_gyro_csv(path, samples: list[GyroSample]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TRACE_HEADER)
        for s in samples:
            writer.writerow([s.t_ns] + [repr(float(v)) for v in s.omega])
