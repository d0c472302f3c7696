"""Sensing chain on stitched CSI: MUSIC angle-of-arrival over a uniform
linear array, amplitude-based ranging, 2-D localization with the receiver at
the origin, and constant-velocity Kalman filtering with RTS smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from carts.stitcher import StitchedChannel

AOA_GRID_DEG = np.arange(-89.75, 90.0, 0.5)


@dataclass(frozen=True)
class PositionEstimate:
    t: float
    xy: tuple[float, float]
    aoa_rad: float
    range_m: float

    def __post_init__(self):
        if self.range_m <= 0:
            raise ValueError("range must be positive")


@dataclass(frozen=True)
class KalmanConfig:
    process_noise_accel: float = 0.5  # m/s^2 white acceleration std-dev
    measurement_noise_pos: float = 0.5  # meters std-dev

    def __post_init__(self):
        if self.process_noise_accel <= 0 or self.measurement_noise_pos <= 0:
            raise ValueError("noise parameters must be positive")


def steering_vector(theta_rad: float, m_antennas: int, spacing_wl: float) -> np.ndarray:
    m = np.arange(m_antennas)
    return np.exp(-2j * np.pi * spacing_wl * m * np.sin(theta_rad))


def estimate_aoa(
    stitched: StitchedChannel, spacing_wavelengths: float = 0.5
) -> float:
    """Angle of arrival in radians via a MUSIC pseudo-spectrum with a single
    signal eigenvector, searched on a 0.5-degree grid. The spatial covariance
    is averaged over all subcarriers. With only two antennas this degenerates
    to the mean inter-antenna phase difference."""
    m_ant = stitched.n_antennas
    if m_ant < 2:
        raise ValueError("need >= 2 antennas")
    h = stitched.csi
    if m_ant == 2:
        dphi = np.angle(np.sum(h[1] * h[0].conj()))
        s = np.clip(-dphi / (2.0 * np.pi * spacing_wavelengths), -1.0, 1.0)
        return float(np.arcsin(s))
    cov = (h @ h.conj().T) / h.shape[1]
    _, vecs = np.linalg.eigh(cov)
    noise_space = vecs[:, : m_ant - 1]  # signal-subspace dimension = 1
    en = noise_space @ noise_space.conj().T
    a = np.exp(
        -2j
        * np.pi
        * spacing_wavelengths
        * np.outer(np.sin(np.deg2rad(AOA_GRID_DEG)), np.arange(m_ant))
    )
    denom = np.einsum("gm,mn,gn->g", a.conj(), en, a).real + 1e-18
    return float(np.deg2rad(AOA_GRID_DEG[int(np.argmax(1.0 / denom))]))


@dataclass(frozen=True)
class PathlossConfig:
    reference_amplitude: float = 1.0  # mean |CSI| at the reference distance
    reference_distance_m: float = 1.0
    exponent: float = 2.0


def estimate_range(stitched: StitchedChannel, cfg: PathlossConfig) -> float:
    """Distance from the mean CSI amplitude through the calibrated inverse
    path-loss law."""
    mean_amp = float(np.mean(np.abs(stitched.csi)))
    if mean_amp <= 0:
        raise ValueError("no signal")
    return cfg.reference_distance_m * (cfg.reference_amplitude / mean_amp) ** (
        2.0 / cfg.exponent
    )


def localize(aoa_rad: float, range_m: float) -> tuple[float, float]:
    """2-D position with the receiver at the origin and broadside along +y."""
    return (range_m * np.sin(aoa_rad), range_m * np.cos(aoa_rad))


def _transition(dt: float, accel_std: float) -> tuple[np.ndarray, np.ndarray]:
    f = np.eye(4)
    f[0, 2] = dt
    f[1, 3] = dt
    q2 = accel_std**2
    qb = np.array([[dt**4 / 4.0, dt**3 / 2.0], [dt**3 / 2.0, dt**2]]) * q2
    q = np.zeros((4, 4))
    q[np.ix_([0, 2], [0, 2])] = qb
    q[np.ix_([1, 3], [1, 3])] = qb
    return f, q


def kalman_smooth(
    estimates: list[PositionEstimate], cfg: KalmanConfig | None = None
) -> np.ndarray:
    """Forward constant-velocity Kalman filter over (x, y, vx, vy) followed by
    an RTS backward pass. Returns smoothed positions, one row per input."""
    cfg = cfg or KalmanConfig()
    if len(estimates) < 2:
        raise ValueError("need at least 2 estimates")
    t = np.array([e.t for e in estimates])
    if np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    z = np.array([e.xy for e in estimates])

    hmat = np.zeros((2, 4))
    hmat[0, 0] = 1.0
    hmat[1, 1] = 1.0
    r = np.eye(2) * cfg.measurement_noise_pos**2

    dt0 = t[1] - t[0]
    v0 = (z[1] - z[0]) / dt0
    x = np.array([z[0, 0], z[0, 1], v0[0], v0[1]])
    sp = cfg.measurement_noise_pos**2
    p = np.diag([sp, sp, 4.0 * sp / dt0**2, 4.0 * sp / dt0**2])

    n = len(estimates)
    xs_f = np.zeros((n, 4))
    ps_f = np.zeros((n, 4, 4))
    xs_pred = np.zeros((n, 4))
    ps_pred = np.zeros((n, 4, 4))
    fs = np.zeros((n, 4, 4))

    for i in range(n):
        if i == 0:
            x_pred, p_pred = x, p
            fs[i] = np.eye(4)
        else:
            f, q = _transition(t[i] - t[i - 1], cfg.process_noise_accel)
            fs[i] = f
            x_pred = f @ x
            p_pred = f @ p @ f.T + q
        xs_pred[i], ps_pred[i] = x_pred, p_pred
        innov = z[i] - hmat @ x_pred
        s = hmat @ p_pred @ hmat.T + r
        k = p_pred @ hmat.T @ np.linalg.inv(s)
        x = x_pred + k @ innov
        p = (np.eye(4) - k @ hmat) @ p_pred
        xs_f[i], ps_f[i] = x, p

    xs_s = xs_f.copy()
    ps_s = ps_f.copy()
    for i in range(n - 2, -1, -1):
        g = ps_f[i] @ fs[i + 1].T @ np.linalg.inv(ps_pred[i + 1])
        xs_s[i] = xs_f[i] + g @ (xs_s[i + 1] - xs_pred[i + 1])
        ps_s[i] = ps_f[i] + g @ (ps_s[i + 1] - ps_pred[i + 1]) @ g.T
    return xs_s[:, :2]
