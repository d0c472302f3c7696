"""Shared domain vocabulary: slot clock, frequency grid, and the per-sub-band
CSI measurement record every other module consumes.

Timestamps are kept in seconds at slot resolution; sub-slot symbol offsets
between DMRS and SRS inside one slot are ignored.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

SUBCARRIERS_PER_RB = 12
SLOTS_PER_TDD_PERIOD = 5  # "DDDSU": one uplink slot per five
UPLINK_SLOT_OFFSET = 4  # index of the U slot within the DDDSU period

DEFAULT_MAX_AGE_S = 0.5


class Origin(enum.Enum):
    DMRS = "dmrs"
    SRS = "srs"


@dataclass(frozen=True)
class SlotClock:
    """Simulation clock: 10 ms frames, slot duration set by subcarrier spacing."""

    scs_khz: float = 30.0
    slot_index: int = 0
    frame_index: int = 0

    def __post_init__(self):
        if self.scs_khz <= 0:
            raise ValueError("scs_khz must be positive")
        if self.slot_index < 0 or self.frame_index < 0:
            raise ValueError("slot/frame indices must be non-negative")
        if not 0 <= self.slot_index < self.slots_per_frame:
            raise ValueError("slot_index outside the current frame")

    @property
    def slot_duration_s(self) -> float:
        return 0.001 / (self.scs_khz / 15.0)

    @property
    def slots_per_subframe(self) -> int:
        return int(round(self.scs_khz / 15.0))

    @property
    def slots_per_frame(self) -> int:
        return self.slots_per_subframe * 10

    def time_s(self) -> float:
        absolute = self.frame_index * self.slots_per_frame + self.slot_index
        return absolute * self.slot_duration_s


def is_uplink_slot(slot_index: int) -> bool:
    """True for the U slot of the DDDSU pattern."""
    return slot_index % SLOTS_PER_TDD_PERIOD == UPLINK_SLOT_OFFSET


@dataclass(frozen=True)
class FrequencyGrid:
    """Emulation bandwidth in resource blocks (12 subcarriers each)."""

    n_rbs: int = 272

    def __post_init__(self):
        if self.n_rbs <= 0 or self.n_rbs % 4 != 0:
            raise ValueError("n_rbs must be a positive multiple of 4")

    @property
    def subcarriers_per_rb(self) -> int:
        return SUBCARRIERS_PER_RB

    @property
    def n_subcarriers(self) -> int:
        return self.n_rbs * SUBCARRIERS_PER_RB

    def rb_to_subcarriers(self, start_rb: int, num_rb: int) -> np.ndarray:
        """Absolute subcarrier indices of a contiguous RB allocation."""
        if start_rb < 0 or num_rb < 1 or start_rb + num_rb > self.n_rbs:
            raise ValueError("RB range outside grid")
        lo = start_rb * SUBCARRIERS_PER_RB
        hi = (start_rb + num_rb) * SUBCARRIERS_PER_RB
        return np.arange(lo, hi)


@dataclass(frozen=True, eq=False)
class SubBandEstimate:
    """One CSI measurement: complex antennas x subcarriers matrix plus the
    subcarrier set, timestamp, and originating reference signal."""

    csi: np.ndarray
    subcarriers: np.ndarray
    timestamp: float
    origin: Origin
    ue_id: int = 0

    def __post_init__(self):
        csi = np.asarray(self.csi, dtype=complex)
        subs = np.asarray(self.subcarriers, dtype=int)
        object.__setattr__(self, "csi", csi)
        object.__setattr__(self, "subcarriers", subs)
        if csi.ndim != 2:
            raise ValueError("csi must be 2-D (antennas x subcarriers)")
        if csi.shape[0] < 1:
            raise ValueError("need at least one antenna")
        if subs.ndim != 1 or len(subs) != csi.shape[1]:
            raise ValueError("subcarrier set must match csi columns")
        if len(subs) > 1 and not np.all(np.diff(subs) == 1):
            raise ValueError("subcarriers must be contiguous and ascending")

    @property
    def n_antennas(self) -> int:
        return self.csi.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.csi.shape[1]

    @property
    def start(self) -> int:
        return int(self.subcarriers[0])

    @property
    def stop(self) -> int:
        """Last covered subcarrier index (inclusive)."""
        return int(self.subcarriers[-1])


class EstimateBuffer:
    """Per-UE collection of sub-band estimates, sorted by timestamp.

    Retention: entries older than ``max_age_s`` relative to the newest entry
    are dropped, as are entries whose subcarrier range is fully covered by a
    newer entry (they can never win the keep-most-recent merge).
    """

    def __init__(self, max_age_s: float = DEFAULT_MAX_AGE_S):
        self.max_age_s = max_age_s
        self.entries: list[SubBandEstimate] = []

    def add(self, estimate: SubBandEstimate) -> None:
        # stable insert keeps later arrivals after equal timestamps
        pos = len(self.entries)
        while pos > 0 and self.entries[pos - 1].timestamp > estimate.timestamp:
            pos -= 1
        self.entries.insert(pos, estimate)
        self._evict()

    def _evict(self) -> None:
        if not self.entries:
            return
        newest_t = self.entries[-1].timestamp
        kept: list[SubBandEstimate] = []
        for i, e in enumerate(self.entries):
            if newest_t - e.timestamp > self.max_age_s:
                continue
            dominated = any(
                later.start <= e.start and later.stop >= e.stop
                for later in self.entries[i + 1 :]
            )
            if not dominated:
                kept.append(e)
        self.entries = kept

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def newest(self) -> SubBandEstimate | None:
        return self.entries[-1] if self.entries else None

    def covered_subcarriers(self) -> np.ndarray:
        if not self.entries:
            return np.empty(0, dtype=int)
        return np.unique(np.concatenate([e.subcarriers for e in self.entries]))


def coverage_complete(buffer: EstimateBuffer, grid: FrequencyGrid) -> bool:
    """True iff the union of buffered subcarrier sets equals the full grid."""
    covered = buffer.covered_subcarriers()
    return len(covered) == grid.n_subcarriers and (
        len(covered) == 0 or (covered[0] == 0 and covered[-1] == grid.n_subcarriers - 1)
    )


def select_reference(buffer: EstimateBuffer) -> SubBandEstimate | None:
    """Newest SRS-origin entry, or None. Stitching should only be triggered
    when the newest entry overall is SRS-origin; that check is the caller's."""
    for e in reversed(buffer.entries):
        if e.origin is Origin.SRS:
            return e
    return None
