"""Synthetic multipath ground truth: per-antenna, per-subcarrier complex CSI
for a moving transmitter, with the DMRS/SRS power-level offset and
deterministic per-measurement noise.

Geometry: uniform linear receive array at the origin, elements along the
x-axis, broadside pointing along +y. Angles are measured from broadside, so
a transmitter at (x, y) sits at atan2(x, y).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import yaml

from carts.core import FrequencyGrid, Origin, SubBandEstimate

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class MultipathRay:
    """One propagation path, parameterized relative to the line-of-sight ray."""

    relative_gain: complex = 1.0 + 0.0j
    excess_delay_s: float = 0.0
    aoa_offset_rad: float = 0.0
    doppler_policy: str = "geometric"  # or "fixed": frozen at trajectory start

    def __post_init__(self):
        if self.excess_delay_s < 0:
            raise ValueError("excess delay must be >= 0")
        if self.doppler_policy not in ("geometric", "fixed"):
            raise ValueError("doppler_policy must be 'geometric' or 'fixed'")


@dataclass(frozen=True)
class ChannelScenario:
    """Ground-truth description: array, rays, trajectory, noise, power offset.

    ``waypoints`` rows are (t_seconds, x_m, y_m); positions interpolate
    linearly between them. A single waypoint means a stationary transmitter.
    ``snr_db=None`` disables measurement noise entirely.
    """

    n_antennas: int = 4
    spacing_wavelengths: float = 0.5
    carrier_hz: float = 4.0e9
    scs_khz: float = 30.0
    rays: tuple[MultipathRay, ...] = (MultipathRay(),)
    waypoints: tuple[tuple[float, float, float], ...] = ((0.0, 0.0, 5.0),)
    snr_db: float | None = None
    dmrs_power_offset_db: float = 3.0
    pathloss_exponent: float = 2.0
    reference_distance_m: float = 1.0
    los_suppression_db: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_antennas < 1:
            raise ValueError("need at least one antenna")
        if not self.rays:
            raise ValueError("need at least one ray (the line-of-sight ray)")
        los = self.rays[0]
        if los.excess_delay_s != 0.0 or los.aoa_offset_rad != 0.0:
            raise ValueError("first ray must be the line-of-sight ray")
        # normalize so the LOS ray has unit nominal gain
        g0 = abs(los.relative_gain)
        if g0 <= 0:
            raise ValueError("LOS ray gain must be nonzero")
        if abs(g0 - 1.0) > 1e-12:
            rays = tuple(
                replace(r, relative_gain=r.relative_gain / g0) for r in self.rays
            )
            object.__setattr__(self, "rays", rays)
        if any(abs(r.relative_gain) > 1.0 + 1e-9 for r in self.rays):
            raise ValueError("ray gains must not exceed the LOS gain")
        wp = tuple(tuple(float(v) for v in row) for row in self.waypoints)
        if not wp:
            raise ValueError("trajectory needs at least one waypoint")
        times = [row[0] for row in wp]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be strictly increasing")
        object.__setattr__(self, "waypoints", wp)

    @property
    def time_span(self) -> tuple[float, float]:
        return self.waypoints[0][0], self.waypoints[-1][0]

    def position(self, t: float) -> np.ndarray:
        """Transmitter position at time t (piecewise-linear waypoints)."""
        if len(self.waypoints) == 1:
            return np.array(self.waypoints[0][1:])
        t0, t1 = self.time_span
        if not t0 <= t <= t1:
            raise ValueError(f"time out of range: {t} not in [{t0}, {t1}]")
        times = np.array([w[0] for w in self.waypoints])
        xs = np.array([w[1] for w in self.waypoints])
        ys = np.array([w[2] for w in self.waypoints])
        return np.array([np.interp(t, times, xs), np.interp(t, times, ys)])

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz


def _scatterer_position(start_pos: np.ndarray, ray: MultipathRay) -> np.ndarray:
    """Fixed scatterer realizing the configured excess delay and angle offset
    at the trajectory start: total path length |UE-S| + |S| stays on the
    ellipse defined by the excess delay, with S along the offset direction."""
    d_u = float(np.hypot(start_pos[0], start_pos[1]))
    theta = float(np.arctan2(start_pos[0], start_pos[1])) + ray.aoa_offset_rad
    total = d_u + ray.excess_delay_s * SPEED_OF_LIGHT
    direction = np.array([np.sin(theta), np.cos(theta)])
    along = float(start_pos @ direction)
    rho = (total**2 - d_u**2) / (2.0 * (total - along))
    return rho * direction


def _ray_parameters(scenario: ChannelScenario, t: float):
    """Per-ray (complex gain, delay, angle) at time t.

    Geometric rays with a nonzero excess delay reflect off a fixed scatterer,
    so their delay and angle evolve with the trajectory; zero-excess geometric
    rays are purely angular (they track the LOS delay). Fixed rays keep the
    delay/angle they had at the trajectory start.
    """
    pos = scenario.position(t)
    start_pos = scenario.position(scenario.time_span[0])
    gains, delays, angles = [], [], []
    los_d = max(float(np.hypot(pos[0], pos[1])), 1e-6)
    los_theta = float(np.arctan2(pos[0], pos[1]))
    amp = (scenario.reference_distance_m / los_d) ** (scenario.pathloss_exponent / 2.0)
    for i, ray in enumerate(scenario.rays):
        g = ray.relative_gain * amp
        if i == 0:
            if scenario.los_suppression_db != 0.0:
                g *= 10.0 ** (-scenario.los_suppression_db / 20.0)
            gains.append(g)
            delays.append(los_d / SPEED_OF_LIGHT)
            angles.append(los_theta)
            continue
        if ray.doppler_policy == "geometric" and ray.excess_delay_s > 0.0:
            s = _scatterer_position(start_pos, ray)
            path = float(np.hypot(*(pos - s))) + float(np.hypot(*s))
            delays.append(path / SPEED_OF_LIGHT)
            angles.append(float(np.arctan2(s[0], s[1])))
        elif ray.doppler_policy == "geometric":
            delays.append(los_d / SPEED_OF_LIGHT)
            angles.append(los_theta + ray.aoa_offset_rad)
        else:  # frozen at the trajectory start
            d0 = max(float(np.hypot(start_pos[0], start_pos[1])), 1e-6)
            delays.append(d0 / SPEED_OF_LIGHT + ray.excess_delay_s)
            angles.append(
                float(np.arctan2(start_pos[0], start_pos[1])) + ray.aoa_offset_rad
            )
        gains.append(g)
    return np.array(gains), np.array(delays), np.array(angles)


def subcarrier_frequencies(scenario: ChannelScenario, grid: FrequencyGrid) -> np.ndarray:
    """Absolute frequency of every subcarrier, grid centered on the carrier."""
    n = np.arange(grid.n_subcarriers)
    scs = scenario.scs_khz * 1e3
    return scenario.carrier_hz + (n - grid.n_subcarriers / 2.0) * scs


def _csi(scenario: ChannelScenario, t: float, freqs: np.ndarray) -> np.ndarray:
    gains, delays, angles = _ray_parameters(scenario, t)
    m = np.arange(scenario.n_antennas)
    # steering[m, ray] and dispersion[ray, n]
    steering = np.exp(
        -2j * np.pi * scenario.spacing_wavelengths * np.outer(m, np.sin(angles))
    )
    dispersion = np.exp(-2j * np.pi * np.outer(delays, freqs))
    return (steering * gains) @ dispersion


def ground_truth_csi(
    scenario: ChannelScenario, t: float, grid: FrequencyGrid
) -> np.ndarray:
    """Noiseless full-band CSI matrix (antennas x subcarriers) at time t."""
    return _csi(scenario, t, subcarrier_frequencies(scenario, grid))


def _noise_rng(
    scenario: ChannelScenario, t: float, subcarriers: np.ndarray, origin: Origin
) -> np.random.Generator:
    # counter-based keying so parallel / replayed measurements are deterministic
    t_key = int(round(t * 1e6))
    origin_code = 1 if origin is Origin.SRS else 0
    seq = np.random.SeedSequence(
        entropy=scenario.seed,
        spawn_key=(t_key, int(subcarriers[0]), len(subcarriers), origin_code),
    )
    return np.random.default_rng(seq)


def measure(
    scenario: ChannelScenario,
    t: float,
    subcarriers: np.ndarray,
    origin: Origin,
    grid: FrequencyGrid,
    ue_id: int = 0,
) -> SubBandEstimate:
    """Measure CSI over a contiguous subcarrier range at time t.

    DMRS-origin measurements are scaled by the scenario's power offset; noise
    is i.i.d. complex Gaussian at ``snr_db`` relative to the scaled signal.
    """
    subcarriers = np.asarray(subcarriers, dtype=int)
    if len(subcarriers) == 0:
        raise ValueError("empty subcarrier set")
    if subcarriers[0] < 0 or subcarriers[-1] >= grid.n_subcarriers:
        raise ValueError("subcarriers outside grid")
    freqs = subcarrier_frequencies(scenario, grid)[subcarriers]
    csi = _csi(scenario, t, freqs)
    if origin is Origin.DMRS:
        csi = csi * 10.0 ** (scenario.dmrs_power_offset_db / 20.0)
    if scenario.snr_db is not None and np.isfinite(scenario.snr_db):
        rng = _noise_rng(scenario, t, subcarriers, origin)
        sig_power = float(np.mean(np.abs(csi) ** 2))
        sigma = np.sqrt(sig_power / 10.0 ** (scenario.snr_db / 10.0) / 2.0)
        noise = sigma * (
            rng.standard_normal(csi.shape) + 1j * rng.standard_normal(csi.shape)
        )
        csi = csi + noise
    return SubBandEstimate(
        csi=csi, subcarriers=subcarriers, timestamp=t, origin=origin, ue_id=ue_id
    )


def scenario_from_dict(cfg: dict) -> ChannelScenario:
    """Build a scenario from the documented key-value schema."""
    rays = []
    for r in cfg.get("rays", [{"gain": 1.0}]):
        gain = complex(r.get("gain", 1.0))
        phase = float(r.get("gain_phase_rad", 0.0))
        rays.append(
            MultipathRay(
                relative_gain=gain * np.exp(1j * phase),
                excess_delay_s=float(r.get("excess_delay_ns", 0.0)) * 1e-9,
                aoa_offset_rad=np.deg2rad(float(r.get("aoa_offset_deg", 0.0))),
                doppler_policy=r.get("doppler", "geometric"),
            )
        )
    array = cfg.get("array", {})
    pathloss = cfg.get("pathloss", {})
    snr = cfg.get("snr_db", None)
    return ChannelScenario(
        n_antennas=int(array.get("n_antennas", 4)),
        spacing_wavelengths=float(array.get("spacing_wavelengths", 0.5)),
        carrier_hz=float(cfg.get("carrier_hz", 4.0e9)),
        scs_khz=float(cfg.get("scs_khz", 30.0)),
        rays=tuple(rays),
        waypoints=tuple(tuple(w) for w in cfg.get("waypoints", [[0.0, 0.0, 5.0]])),
        snr_db=None if snr is None else float(snr),
        dmrs_power_offset_db=float(cfg.get("dmrs_power_offset_db", 3.0)),
        pathloss_exponent=float(pathloss.get("exponent", 2.0)),
        reference_distance_m=float(pathloss.get("reference_m", 1.0)),
        los_suppression_db=float(cfg.get("los_suppression_db", 0.0)),
        seed=int(cfg.get("seed", 0)),
    )


def load_scenario(path) -> ChannelScenario:
    with open(path) as f:
        return scenario_from_dict(yaml.safe_load(f))
