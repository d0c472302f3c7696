"""Asynchronous sub-band CSI stitching: spatial-domain smoothing, slope-based
time alignment (plus the peak-shift baseline it replaces), frequency-domain
amplitude/phase compensation, iterative outward merging, and uniform-rate
resampling of stitched snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from carts.core import (
    EstimateBuffer,
    FrequencyGrid,
    Origin,
    SubBandEstimate,
    coverage_complete,
    select_reference,
)


@dataclass(frozen=True)
class SmoothingConfig:
    """Exponential down-weighting of older sub-bands in the spatial covariance."""

    alpha: float = 20.0  # 1/seconds

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class PhaseLine:
    """Least-squares line through a sub-band's unwrapped phase:
    phase(n) ~ intercept + slope * (n - n0)."""

    slope: float  # radians per subcarrier
    intercept: float  # radians, in (-pi, pi]
    n0: int  # first subcarrier index of the fitted sub-band


@dataclass(frozen=True)
class CompensationFactor:
    """Complex scaling aligning one sub-band to the reference."""

    beta: float
    phi: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("amplitude ratio must be positive")

    @property
    def gamma(self) -> complex:
        return self.beta * np.exp(1j * self.phi)


@dataclass
class StitchedChannel:
    """Composite CSI over a contiguous subcarrier range, with per-subcarrier
    provenance timestamps and the triggering reference time."""

    csi: np.ndarray
    subcarriers: np.ndarray
    per_subcarrier_timestamp: np.ndarray
    reference_time: float

    def __post_init__(self):
        self.csi = np.asarray(self.csi, dtype=complex)
        self.subcarriers = np.asarray(self.subcarriers, dtype=int)
        self.per_subcarrier_timestamp = np.asarray(
            self.per_subcarrier_timestamp, dtype=float
        )
        n = len(self.subcarriers)
        if self.csi.shape[1] != n or len(self.per_subcarrier_timestamp) != n:
            raise ValueError("column counts disagree")
        if n > 1 and not np.all(np.diff(self.subcarriers) == 1):
            raise ValueError("stitched range must be contiguous")

    @property
    def n_antennas(self) -> int:
        return self.csi.shape[0]

    @property
    def start(self) -> int:
        return int(self.subcarriers[0])

    @property
    def stop(self) -> int:
        return int(self.subcarriers[-1])


@dataclass(frozen=True)
class StitcherConfig:
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    enable_smoothing: bool = True
    boundary_width: int = 1  # subcarrier pairs used on disjoint-band boundaries


def weighted_principal_mode(buffer: EstimateBuffer, cfg: SmoothingConfig) -> np.ndarray:
    """Principal eigenvector of the time-weighted spatial covariance across
    all buffered sub-bands (weight decays exponentially with age)."""
    if not buffer.entries:
        raise ValueError("empty buffer")
    m_ant = buffer.entries[0].n_antennas
    t_ref = max(e.timestamp for e in buffer.entries)
    cov = np.zeros((m_ant, m_ant), dtype=complex)
    weight_sum = 0.0
    for e in buffer.entries:
        w = np.exp(-cfg.alpha * (t_ref - e.timestamp))
        cov += w * (e.csi @ e.csi.conj().T)
        weight_sum += w * e.n_subcarriers
    cov /= weight_sum
    if np.trace(cov).real < 1e-300:
        raise ValueError("degenerate covariance")
    _, vecs = np.linalg.eigh(cov)
    u1 = vecs[:, -1]
    return u1 * np.exp(-1j * np.angle(u1[int(np.argmax(np.abs(u1)))]))


def spatial_smooth(buffer: EstimateBuffer, cfg: SmoothingConfig) -> EstimateBuffer:
    """Rotate every sub-band onto a common spatial reference: the principal
    eigenvector of the time-weighted covariance of all CSI vectors. One
    unit-modulus rotation per sub-band; magnitudes are untouched."""
    if not buffer.entries:
        raise ValueError("empty buffer")
    m_ant = buffer.entries[0].n_antennas
    if m_ant == 1:
        return buffer  # no spatial dimension to align
    u1 = weighted_principal_mode(buffer, cfg)

    out = EstimateBuffer(max_age_s=buffer.max_age_s)
    for e in buffer.entries:
        proj = u1.conj() @ e.csi
        rot = np.exp(-1j * np.angle(proj.sum()))
        out.entries.append(
            SubBandEstimate(
                csi=rot * e.csi,
                subcarriers=e.subcarriers,
                timestamp=e.timestamp,
                origin=e.origin,
                ue_id=e.ue_id,
            )
        )
    return out


def fit_phase_line(estimate: SubBandEstimate, antenna: int = 0) -> PhaseLine:
    """Unwrap one antenna's phase across the sub-band and fit a line to it."""
    if estimate.n_subcarriers < 2:
        raise ValueError("insufficient points")
    phases = np.unwrap(np.angle(estimate.csi[antenna]))
    x = estimate.subcarriers - estimate.start
    xm = x - x.mean()
    slope = float(np.dot(xm, phases - phases.mean()) / np.dot(xm, xm))
    intercept = float(phases.mean() - slope * x.mean())
    intercept = float(np.angle(np.exp(1j * intercept)))
    return PhaseLine(slope=slope, intercept=intercept, n0=estimate.start)


def remove_slope(estimate: SubBandEstimate, line: PhaseLine) -> SubBandEstimate:
    """Strip the fitted linear phase ramp, keeping the intercept and any
    residual curvature (the multipath signature)."""
    if line.n0 != estimate.start:
        raise ValueError("phase line was fitted on a different sub-band")
    ramp = np.exp(-1j * line.slope * (estimate.subcarriers - line.n0))
    return SubBandEstimate(
        csi=estimate.csi * ramp,
        subcarriers=estimate.subcarriers,
        timestamp=estimate.timestamp,
        origin=estimate.origin,
        ue_id=estimate.ue_id,
    )


def cir(estimate: SubBandEstimate, antenna: int = 0) -> np.ndarray:
    """Channel impulse response: inverse DFT of one antenna's sub-band."""
    return np.fft.ifft(estimate.csi[antenna])


def _signed_taps(n: int) -> np.ndarray:
    taps = np.arange(n)
    taps[taps > (n - 1) // 2] -= n
    return taps


def peak_delay(cir_sequence: np.ndarray) -> int:
    """Tap index of the strongest CIR magnitude, on the signed tap axis
    [-N/2, N/2); ties resolve to the smallest tap."""
    h = np.asarray(cir_sequence)
    if h.size == 0:
        raise ValueError("empty CIR")
    taps = _signed_taps(len(h))
    order = np.argsort(taps, kind="stable")
    mags = np.abs(h)[order]
    return int(taps[order][int(np.argmax(mags))])


def _matrix_peak_tap(csi: np.ndarray) -> int:
    """Peak tap of the antenna-aggregated CIR magnitude."""
    h = np.fft.ifft(csi, axis=1)
    mags = np.abs(h).sum(axis=0)
    taps = _signed_taps(csi.shape[1])
    order = np.argsort(taps, kind="stable")
    return int(taps[order][int(np.argmax(mags[order]))])


def tonetrack_align(
    estimate: SubBandEstimate, reference: SubBandEstimate
) -> SubBandEstimate:
    """Peak-shift baseline: circularly shift the sub-band's CIR so its peak
    lands on the reference band's peak delay (each band's taps scaled onto
    the common delay axis), then transform back to frequency."""
    if estimate.n_antennas != reference.n_antennas:
        raise ValueError("antenna counts differ")
    tap_b = _matrix_peak_tap(estimate.csi)
    tap_ref = _matrix_peak_tap(reference.csi)
    n_b = estimate.n_subcarriers
    shift = int(round(tap_ref * n_b / reference.n_subcarriers)) - tap_b
    phase = np.exp(-2j * np.pi * shift * np.arange(n_b) / n_b)
    return SubBandEstimate(
        csi=estimate.csi * phase,
        subcarriers=estimate.subcarriers,
        timestamp=estimate.timestamp,
        origin=estimate.origin,
        ue_id=estimate.ue_id,
    )


def _as_fragment(ref) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """(csi, subcarriers, per-subcarrier timestamps, reference_time) for either
    a raw sub-band estimate or an already-stitched composite."""
    if isinstance(ref, StitchedChannel):
        return ref.csi, ref.subcarriers, ref.per_subcarrier_timestamp, ref.reference_time
    times = np.full(ref.n_subcarriers, ref.timestamp)
    return ref.csi, ref.subcarriers, times, ref.timestamp


def estimate_compensation(
    band: SubBandEstimate, reference, boundary_width: int = 1
) -> CompensationFactor:
    """Amplitude/phase offset of a (slope-removed) sub-band relative to the
    reference: power ratio and summed conjugate product over overlapping
    subcarriers, or the adjacent boundary subcarrier pair when disjoint."""
    ref_csi, ref_subs, _, _ = _as_fragment(reference)
    common, band_idx, ref_idx = np.intersect1d(
        band.subcarriers, ref_subs, return_indices=True
    )
    if len(common) > 0:
        hb = band.csi[:, band_idx]
        hr = ref_csi[:, ref_idx]
        denom = float(np.sum(np.abs(hb) ** 2))
        if denom <= 0:
            raise ValueError("degenerate boundary")
        beta = float(np.sqrt(np.sum(np.abs(hr) ** 2) / denom))
        phi = float(np.angle(np.sum(hr * hb.conj())))
        return CompensationFactor(beta=beta, phi=phi)

    w = max(1, boundary_width)
    if int(ref_subs[0]) < band.start:  # reference sits below the band
        if int(ref_subs[-1]) + 1 != band.start:
            raise ValueError("no adjacency")
        hr = ref_csi[:, -w:]
        hb = band.csi[:, :w]
    else:
        if band.stop + 1 != int(ref_subs[0]):
            raise ValueError("no adjacency")
        hr = ref_csi[:, :w]
        hb = band.csi[:, -w:]
    if np.any(np.abs(hb) == 0) or np.any(np.abs(hr) == 0):
        raise ValueError("degenerate boundary")
    beta = float(np.mean(np.abs(hr) / np.abs(hb)))
    phi = float(np.angle(np.sum(hr * hb.conj())))
    return CompensationFactor(beta=beta, phi=phi)


def stitch_pair(
    band: SubBandEstimate, reference, factor: CompensationFactor
) -> StitchedChannel:
    """Scale the sub-band by the compensation factor and merge it with the
    reference over the union range, keeping the most recent measurement on
    every overlapping subcarrier."""
    ref_csi, ref_subs, ref_times, ref_time = _as_fragment(reference)
    lo = min(band.start, int(ref_subs[0]))
    hi = max(band.stop, int(ref_subs[-1]))
    if band.start > int(ref_subs[-1]) + 1 or int(ref_subs[0]) > band.stop + 1:
        raise ValueError("bands leave a gap; nothing defines the union there")
    n = hi - lo + 1
    m_ant = band.n_antennas
    csi = np.zeros((m_ant, n), dtype=complex)
    times = np.full(n, -np.inf)

    ro = int(ref_subs[0]) - lo
    csi[:, ro : ro + len(ref_subs)] = ref_csi
    times[ro : ro + len(ref_subs)] = ref_times

    scaled = factor.gamma * band.csi
    bo = band.start - lo
    band_cols = np.arange(bo, bo + band.n_subcarriers)
    in_ref = (band.subcarriers >= int(ref_subs[0])) & (
        band.subcarriers <= int(ref_subs[-1])
    )
    wins = ~in_ref | (band.timestamp > times[band_cols])
    csi[:, band_cols[wins]] = scaled[:, wins]
    times[band_cols[wins]] = band.timestamp
    return StitchedChannel(
        csi=csi,
        subcarriers=np.arange(lo, hi + 1),
        per_subcarrier_timestamp=times,
        reference_time=ref_time,
    )


def _overlaps_or_adjacent(band: SubBandEstimate, composite: StitchedChannel) -> bool:
    return band.start <= composite.stop + 1 and composite.start <= band.stop + 1


def stitch_full(
    buffer: EstimateBuffer, grid: FrequencyGrid, cfg: StitcherConfig | None = None
) -> StitchedChannel:
    """Full-band stitch: smooth spatially, flatten each sub-band's phase
    slope, then grow a composite outward from the newest SRS sub-band,
    compensating and merging one band at a time. The reference band's own
    phase line is re-applied across the final composite so its absolute
    delay is preserved."""
    cfg = cfg or StitcherConfig()
    if not coverage_complete(buffer, grid):
        raise ValueError("incomplete coverage")
    newest = buffer.newest()
    if newest is None or newest.origin is not Origin.SRS:
        raise ValueError("stitching triggers only on a fresh SRS measurement")

    buf = buffer
    if cfg.enable_smoothing and buffer.entries[0].n_antennas >= 2:
        buf = spatial_smooth(buffer, cfg.smoothing)

    ref = select_reference(buf)
    ref_line = fit_phase_line(ref)
    prepared = []
    for e in buf.entries:
        flat = remove_slope(e, fit_phase_line(e))
        prepared.append(flat)
        if e is ref:
            ref_flat = flat

    composite = StitchedChannel(
        csi=ref_flat.csi.copy(),
        subcarriers=ref_flat.subcarriers.copy(),
        per_subcarrier_timestamp=np.full(ref_flat.n_subcarriers, ref_flat.timestamp),
        reference_time=ref_flat.timestamp,
    )
    ref_center = 0.5 * (ref.start + ref.stop)
    remaining = [e for e in prepared if e is not ref_flat]
    while remaining:
        candidates = [e for e in remaining if _overlaps_or_adjacent(e, composite)]
        if not candidates:
            raise ValueError("incomplete coverage")  # unreachable given the precondition
        candidates.sort(key=lambda e: (abs(0.5 * (e.start + e.stop) - ref_center), e.start))
        band = candidates[0]
        factor = estimate_compensation(band, composite, cfg.boundary_width)
        composite = stitch_pair(band, composite, factor)
        remaining = [e for e in remaining if e is not band]

    line = np.exp(
        1j * (ref_line.intercept + ref_line.slope * (composite.subcarriers - ref_line.n0))
    )
    composite.csi = composite.csi * line
    if composite.start != 0 or composite.stop != grid.n_subcarriers - 1:
        raise ValueError("stitched range does not span the grid")
    return composite


def resample_uniform(
    history: list[StitchedChannel], rate_hz: float
) -> tuple[np.ndarray, np.ndarray]:
    """Cubic-spline resampling of stitched snapshots onto a uniform time
    grid t0 + k/rate (no extrapolation). Real and imaginary parts are
    splined independently per antenna and subcarrier."""
    if len(history) < 4:
        raise ValueError("insufficient history")
    if rate_hz <= 0:
        raise ValueError("rate must be positive")
    t = np.array([s.reference_time for s in history])
    if np.any(np.diff(t) <= 0):
        raise ValueError("snapshots must be strictly increasing in time")
    values = np.stack([s.csi for s in history])
    sp_re = CubicSpline(t, values.real, axis=0)
    sp_im = CubicSpline(t, values.imag, axis=0)
    k_max = int(np.floor((t[-1] - t[0]) * rate_hz))
    query = t[0] + np.arange(k_max + 1) / rate_hz
    return query, sp_re(query) + 1j * sp_im(query)


def dump_stitched(stitched: StitchedChannel, path) -> None:
    """Debug dump: one row per (subcarrier, antenna) with re/im and provenance."""
    with open(path, "w") as f:
        f.write("subcarrier,antenna,re,im,provenance_t\n")
        for j, n in enumerate(stitched.subcarriers):
            for m in range(stitched.n_antennas):
                v = stitched.csi[m, j]
                f.write(
                    f"{n},{m},{v.real!r},{v.imag!r},"
                    f"{stitched.per_subcarrier_timestamp[j]!r}\n"
                )
