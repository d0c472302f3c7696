"""Aperiodic SRS triggering: the pre-configured 3-set x 2-resource bandwidth
partition, the DMRS-aware greedy allocator, and the periodic round-robin
full-band baseline.

Hard constraints enforced on every emitted allocation: no resource is
assigned twice in a slot, and each UE's resources lie in a single set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from carts.core import FrequencyGrid

N_SETS = 3
RESOURCES_PER_SET = 2
N_RESOURCES = N_SETS * RESOURCES_PER_SET


@dataclass(frozen=True)
class SrsResourceGrid:
    """Six contiguous, disjoint RB ranges (two adjacent resources per set)."""

    rb_ranges: tuple[tuple[int, int], ...]  # (start_rb, num_rb) per resource
    n_rbs: int

    def __post_init__(self):
        if len(self.rb_ranges) != N_RESOURCES:
            raise ValueError(f"need exactly {N_RESOURCES} resources")
        cursor = 0
        for start, num in self.rb_ranges:
            if start != cursor or num < 1:
                raise ValueError("resources must tile the grid in order")
            cursor = start + num
        if cursor != self.n_rbs:
            raise ValueError("resources must cover the full grid")

    @staticmethod
    def set_of(k: int) -> int:
        return k // RESOURCES_PER_SET

    def membership(self) -> np.ndarray:
        """srs_bw_configs: binary |R| x 6 matrix, RB r in resource k."""
        m = np.zeros((self.n_rbs, N_RESOURCES))
        for k, (start, num) in enumerate(self.rb_ranges):
            m[start : start + num, k] = 1.0
        return m

    def rbs_of(self, k: int) -> np.ndarray:
        start, num = self.rb_ranges[k]
        return np.arange(start, start + num)


def build_grid(grid: FrequencyGrid) -> SrsResourceGrid:
    """Partition the bandwidth into six contiguous ranges as equal as
    possible, larger ranges first (272 RBs -> [46,46,45,45,45,45])."""
    if grid.n_rbs < N_RESOURCES:
        raise ValueError("grid too small for six resources")
    base, rem = divmod(grid.n_rbs, N_RESOURCES)
    sizes = [base + 1] * rem + [base] * (N_RESOURCES - rem)
    ranges = []
    cursor = 0
    for size in sizes:
        ranges.append((cursor, size))
        cursor += size
    return SrsResourceGrid(tuple(ranges), grid.n_rbs)


@dataclass(frozen=True)
class SrsAllocation:
    """(ue, resource) pairs for one uplink slot. The periodic baseline is the
    degenerate case: a single UE sounding the full band outside the
    six-resource structure, flagged via full_band_ue."""

    pairs: tuple[tuple[int, int], ...] = ()
    full_band_ue: int | None = None

    def __post_init__(self):
        ks = [k for _, k in self.pairs]
        if len(ks) != len(set(ks)):
            raise ValueError("resource assigned twice")
        per_ue: dict[int, set[int]] = {}
        for u, k in self.pairs:
            per_ue.setdefault(u, set()).add(SrsResourceGrid.set_of(k))
        for u, sets in per_ue.items():
            if len(sets) > 1:
                raise ValueError(f"UE {u} assigned resources from multiple sets")
        counts: dict[int, int] = {}
        for u, _ in self.pairs:
            counts[u] = counts.get(u, 0) + 1
            if counts[u] > RESOURCES_PER_SET:
                raise ValueError(f"UE {u} assigned more than 2 resources")

    def resources_of(self, ue: int) -> list[int]:
        return sorted(k for u, k in self.pairs if u == ue)


@dataclass
class SchedulerState:
    """Per-(UE, RB) last-estimation-time matrix plus target rates."""

    last_est_time: np.ndarray  # |U| x |R|, seconds
    tgt_rate: np.ndarray  # |U|, estimates/second
    now: float = 0.0

    def __post_init__(self):
        self.last_est_time = np.asarray(self.last_est_time, dtype=float)
        self.tgt_rate = np.asarray(self.tgt_rate, dtype=float)
        if np.any(self.tgt_rate <= 0):
            raise ValueError("target rates must be positive")
        if self.last_est_time.shape[0] != len(self.tgt_rate):
            raise ValueError("state dimensions disagree")

    @property
    def n_ues(self) -> int:
        return self.last_est_time.shape[0]

    @property
    def n_rbs(self) -> int:
        return self.last_est_time.shape[1]

    @staticmethod
    def initial(tgt_rate, n_rbs: int, t0: float = 0.0) -> "SchedulerState":
        """Every UE starts exactly due: last estimation 1/tgt_rate ago."""
        tgt = np.asarray(tgt_rate, dtype=float)
        last = np.tile((t0 - 1.0 / tgt)[:, None], (1, n_rbs))
        return SchedulerState(last, tgt, now=t0)


def _densify_pusch(state: SchedulerState, pusch_alloc) -> np.ndarray:
    if isinstance(pusch_alloc, dict):
        m = np.zeros((state.n_ues, state.n_rbs))
        for ue, (start, num) in pusch_alloc.items():
            if not 0 <= ue < state.n_ues:
                raise ValueError(f"unregistered UE {ue}")
            m[ue, start : start + num] = 1.0
        return m
    m = np.asarray(pusch_alloc, dtype=float)
    if m.shape != (state.n_ues, state.n_rbs):
        raise ValueError("pusch_alloc shape does not match scheduler state")
    return m


def generate_srs_alloc(
    state: SchedulerState,
    pusch_alloc,
    srs_grid: SrsResourceGrid,
    t: float,
    urgency_floor: float = -np.inf,
) -> tuple[SrsAllocation, SchedulerState]:
    """One triggering decision: refresh last_est_time from PUSCH, score
    per-RB estimation deficit against each UE's target rate, aggregate per
    resource, then greedily hand out resources until urgency is exhausted.

    Pure state transition: the input state is left untouched.
    """
    if t < state.now:
        raise ValueError("time must not move backwards")
    pusch = _densify_pusch(state, pusch_alloc)
    last = state.last_est_time.copy()
    last[pusch > 0] = t

    ch_est_pri = t - last - 1.0 / state.tgt_rate[:, None]
    urgency = ch_est_pri @ srs_grid.membership()

    pairs: list[tuple[int, int]] = []
    while urgency.max() > urgency_floor:
        flat = int(np.argmax(urgency))  # row-major: lowest UE, then lowest k
        u, k = divmod(flat, N_RESOURCES)
        pairs.append((u, k))
        urgency[:, k] = -np.inf
        my_set = SrsResourceGrid.set_of(k)
        for other in range(N_RESOURCES):
            if SrsResourceGrid.set_of(other) != my_set:
                urgency[u, other] = -np.inf

    for u, k in pairs:
        last[u, srs_grid.rbs_of(k)] = t

    alloc = SrsAllocation(pairs=tuple(pairs))
    new_state = SchedulerState(last, state.tgt_rate.copy(), now=t)
    return alloc, new_state


def periodic_baseline(n_ues: int, uplink_slot_index: int) -> SrsAllocation:
    """Round-robin full-band SRS: one UE sounds the whole band per uplink
    slot, cycling through the UEs."""
    if n_ues < 1:
        raise ValueError("n_ues must be >= 1")
    return SrsAllocation(full_band_ue=uplink_slot_index % n_ues)


def ue_rb_ranges(alloc: SrsAllocation, srs_grid: SrsResourceGrid) -> dict[int, tuple[int, int]]:
    """Contiguous (start_rb, num_rb) per UE; a UE's two same-set resources are
    adjacent in frequency so they always merge into one range."""
    out: dict[int, tuple[int, int]] = {}
    per_ue: dict[int, list[int]] = {}
    for u, k in alloc.pairs:
        per_ue.setdefault(u, []).append(k)
    for u, ks in per_ue.items():
        ks.sort()
        start = srs_grid.rb_ranges[ks[0]][0]
        num = sum(srs_grid.rb_ranges[k][1] for k in ks)
        out[u] = (start, num)
    return out
