"""PUSCH allocation traffic: CSV trace ingest (frame,slot,rnti,start_rb,num_rb),
rescaling from the 100-RB source grid to the emulation grid, top-N UE
selection, and synthetic traffic (0%/100% extremes plus bursty on/off).

All schedules place allocations only on uplink slots of the DDDSU pattern.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from carts.core import FrequencyGrid, SLOTS_PER_TDD_PERIOD, UPLINK_SLOT_OFFSET

SOURCE_GRID_RBS = 100  # 4G uplink
SOURCE_SLOTS_PER_FRAME = 10
DEFAULT_RESCALE_FACTOR = 2.72


@dataclass(frozen=True)
class PuschRecord:
    frame: int
    slot: int
    rnti: int
    start_rb: int
    num_rb: int


@dataclass
class TraceParseResult:
    records: list[PuschRecord]
    issues: list[str] = field(default_factory=list)


@dataclass
class TrafficSchedule:
    """Per-slot map: slot index -> {ue -> (start_rb, num_rb)} on the emulation
    grid. Only uplink slots carry entries."""

    slots: dict[int, dict[int, tuple[int, int]]]
    horizon_slots: int
    n_ues: int
    stats: dict = field(default_factory=dict)

    def allocations_at(self, slot: int) -> dict[int, tuple[int, int]]:
        return self.slots.get(slot, {})

    def validate(self, grid: FrequencyGrid) -> None:
        for slot, allocs in self.slots.items():
            if slot % SLOTS_PER_TDD_PERIOD != UPLINK_SLOT_OFFSET:
                raise ValueError(f"allocation on non-uplink slot {slot}")
            used = np.zeros(grid.n_rbs, dtype=bool)
            for ue, (start, num) in allocs.items():
                if start < 0 or num < 1 or start + num > grid.n_rbs:
                    raise ValueError(f"slot {slot} ue {ue}: RB range outside grid")
                if used[start : start + num].any():
                    raise ValueError(f"slot {slot}: overlapping allocations")
                used[start : start + num] = True

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("slot,ue,start_rb,num_rb\n")
            for slot in sorted(self.slots):
                for ue in sorted(self.slots[slot]):
                    start, num = self.slots[slot][ue]
                    f.write(f"{slot},{ue},{start},{num}\n")


def parse_trace(data, source_rbs: int = SOURCE_GRID_RBS) -> TraceParseResult:
    """Parse a PUSCH trace CSV. Well-formed rows become records; malformed
    rows are reported with their line numbers. An empty input is an error."""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    lines = [ln.strip() for ln in io.StringIO(data).readlines()]
    if not any(lines):
        raise ValueError("empty trace file")
    records: list[PuschRecord] = []
    issues: list[str] = []
    for lineno, line in enumerate(lines, start=1):
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if lineno == 1 and parts and not parts[0].lstrip("-").isdigit():
            continue  # header
        if len(parts) != 5:
            issues.append(f"line {lineno}: expected 5 fields, got {len(parts)}")
            continue
        try:
            frame = int(parts[0])
            slot = int(parts[1])
            rnti = int(parts[2], 0)  # accepts 0x-prefixed RNTIs
            start_rb = int(parts[3])
            num_rb = int(parts[4])
        except ValueError:
            issues.append(f"line {lineno}: unparseable field")
            continue
        if num_rb <= 0:
            issues.append(f"line {lineno}: num_rb must be >= 1")
            continue
        if start_rb < 0 or start_rb + num_rb > source_rbs:
            issues.append(
                f"line {lineno}: RB range {start_rb}+{num_rb} exceeds "
                f"{source_rbs}-RB source grid"
            )
            continue
        records.append(PuschRecord(frame, slot, rnti, start_rb, num_rb))
    if not records:
        issues.append("no valid records parsed")
    return TraceParseResult(records, issues)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def rescale(
    record: PuschRecord,
    factor: float = DEFAULT_RESCALE_FACTOR,
    target_rbs: int = 272,
) -> PuschRecord:
    """Scale an allocation to the emulation grid: num_rb to the nearest
    multiple of 4 (minimum 4), start_rb clamped so the range stays in-grid."""
    if factor <= 0:
        raise ValueError("factor must be positive")
    if target_rbs % 4 != 0:
        raise ValueError("target_rbs must be a multiple of 4")
    num = 4 * _round_half_up(record.num_rb * factor / 4.0)
    num = max(4, min(num, target_rbs))
    start = _round_half_up(record.start_rb * factor)
    start = max(0, min(start, target_rbs - num))
    return PuschRecord(record.frame, record.slot, record.rnti, start, num)


def select_top_n(
    records: list[PuschRecord],
    n: int,
    grid: FrequencyGrid,
    slots_per_source_frame: int = SOURCE_SLOTS_PER_FRAME,
) -> TrafficSchedule:
    """Keep the n RNTIs with the largest total allocated RB-slots and build a
    schedule on the emulation clock: the i-th distinct source slot maps to the
    i-th uplink slot of the DDDSU pattern.

    Allocations that collide after rescaling are shifted up to the next free
    RB; records that no longer fit are dropped (both counted in stats).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    totals: dict[int, int] = {}
    for r in records:
        totals[r.rnti] = totals.get(r.rnti, 0) + r.num_rb
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    stats: dict = {"clamped": 0, "shifted": 0, "dropped": 0}
    if len(ranked) < n:
        stats["warning"] = f"only {len(ranked)} distinct RNTIs for n={n}"
    keep = [rnti for rnti, _ in ranked[:n]]
    ue_of = {rnti: i for i, rnti in enumerate(keep)}

    selected = [r for r in records if r.rnti in ue_of]
    source_slots = sorted({r.frame * slots_per_source_frame + r.slot for r in selected})
    slot_of = {
        src: SLOTS_PER_TDD_PERIOD * i + UPLINK_SLOT_OFFSET
        for i, src in enumerate(source_slots)
    }

    slots: dict[int, dict[int, tuple[int, int]]] = {}
    occupancy: dict[int, np.ndarray] = {}
    for r in selected:
        slot = slot_of[r.frame * slots_per_source_frame + r.slot]
        allocs = slots.setdefault(slot, {})
        used = occupancy.setdefault(slot, np.zeros(grid.n_rbs, dtype=bool))
        ue = ue_of[r.rnti]
        if ue in allocs:
            continue  # one allocation per UE per slot; keep first
        start, num = r.start_rb, r.num_rb
        if used[start : start + num].any():
            placed = False
            for cand in range(start + 1, grid.n_rbs - num + 1):
                if not used[cand : cand + num].any():
                    start = cand
                    placed = True
                    break
            if not placed:
                stats["dropped"] += 1
                continue
            stats["shifted"] += 1
        allocs[ue] = (start, num)
        used[start : start + num] = True

    horizon = (max(slots) + 1) if slots else 0
    sched = TrafficSchedule(slots, horizon, n_ues=len(keep), stats=stats)
    sched.stats["rnti_to_ue"] = ue_of
    sched.validate(grid)
    return sched


def _floor4(x: int) -> int:
    return (x // 4) * 4


def synth_traffic(
    level: str, n_ues: int, horizon_slots: int, grid: FrequencyGrid
) -> TrafficSchedule:
    """The two extremes: 'zero' (no PUSCH) and 'full' (all RBs split evenly
    each uplink slot, per-UE counts floored to a multiple of 4; the leftover
    tail stays idle)."""
    if n_ues < 1:
        raise ValueError("n_ues must be >= 1")
    if level not in ("zero", "full"):
        raise ValueError("level must be 'zero' or 'full'")
    slots: dict[int, dict[int, tuple[int, int]]] = {}
    if level == "full":
        share = grid.n_rbs // n_ues
        sizes = [_floor4(grid.n_rbs - (n_ues - 1) * share)] + [
            _floor4(share)
        ] * (n_ues - 1)
        uplink_counter = 0
        for slot in range(UPLINK_SLOT_OFFSET, horizon_slots, SLOTS_PER_TDD_PERIOD):
            allocs: dict[int, tuple[int, int]] = {}
            if sizes[-1] > 0:
                # stripe-to-UE assignment rotates so every UE sweeps the band
                cursor = 0
                for j, size in enumerate(sizes):
                    allocs[(j + uplink_counter) % n_ues] = (cursor, size)
                    cursor += size
            else:
                # more UEs than 4-RB chunks: rotate 4-RB grants across slots
                n_chunks = grid.n_rbs // 4
                first = (uplink_counter * n_chunks) % n_ues
                for j in range(min(n_chunks, n_ues)):
                    allocs[(first + j) % n_ues] = (4 * j, 4)
            slots[slot] = allocs
            uplink_counter += 1
    sched = TrafficSchedule(slots, horizon_slots, n_ues)
    sched.validate(grid)
    return sched


BURSTY_LOAD = {"low": 0.10, "medium": 0.40, "high": 0.75}
_BURSTY_CHUNKS = np.arange(8, 68, 4)  # candidate per-burst allocation sizes
_BURSTY_MEMORY = 0.7  # slot-to-slot persistence of the on/off state


def synth_bursty(
    level: str, n_ues: int, horizon_slots: int, grid: FrequencyGrid, seed: int = 0
) -> TrafficSchedule:
    """Bursty on/off traffic with the statistical shape of sniffed PUSCH
    traces: per-UE Markov bursts sized in multiples of 4 RBs, with the
    offered load set by the level (low/medium/high)."""
    if level not in BURSTY_LOAD:
        raise ValueError(f"level must be one of {sorted(BURSTY_LOAD)}")
    rho = BURSTY_LOAD[level]
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(ord(level[0]), n_ues))
    )
    mean_chunk = float(np.mean(_BURSTY_CHUNKS))
    p_on = min(1.0, rho * grid.n_rbs / (n_ues * mean_chunk))
    stay = _BURSTY_MEMORY + (1 - _BURSTY_MEMORY) * p_on
    start_p = (1 - _BURSTY_MEMORY) * p_on

    on = rng.random(n_ues) < p_on
    chunk = rng.choice(_BURSTY_CHUNKS, size=n_ues)
    slots: dict[int, dict[int, tuple[int, int]]] = {}
    dropped = 0
    for slot in range(UPLINK_SLOT_OFFSET, horizon_slots, SLOTS_PER_TDD_PERIOD):
        draws = rng.random(n_ues)
        fresh = rng.choice(_BURSTY_CHUNKS, size=n_ues)
        for u in range(n_ues):
            was_on = on[u]
            on[u] = draws[u] < (stay if was_on else start_p)
            if on[u] and not was_on:
                chunk[u] = fresh[u]
        allocs: dict[int, tuple[int, int]] = {}
        cursor = 0
        for u in range(n_ues):
            if not on[u]:
                continue
            size = int(chunk[u])
            if cursor + size > grid.n_rbs:
                dropped += 1
                continue
            allocs[u] = (cursor, size)
            cursor += size
        if allocs:
            slots[slot] = allocs
    sched = TrafficSchedule(
        slots, horizon_slots, n_ues, stats={"dropped": dropped, "p_on": p_on}
    )
    sched.validate(grid)
    return sched
