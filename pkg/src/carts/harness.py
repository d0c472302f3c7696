"""Emulation loop: drive the slot clock, replay traffic, trigger SRS (adaptive
or periodic round-robin), synthesize masked CSI measurements for the target
UE, stitch on every qualifying SRS event, and score communication and sensing
metrics against the synthetic ground truth. Targets rotate across rounds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
import yaml

from carts import channel as chan
from carts import scheduler as sched
from carts import sensing
from carts import trace as traffic_mod
from carts.core import (
    EstimateBuffer,
    FrequencyGrid,
    Origin,
    SlotClock,
    coverage_complete,
    is_uplink_slot,
)
from carts.metrics import (
    MeasurementEvent,
    MeasurementKind,
    cir_peak_error,
    estimation_rate,
    nmse,
    tracking_error,
)
from carts.stitcher import (
    SmoothingConfig,
    StitchedChannel,
    StitcherConfig,
    resample_uniform,
    stitch_full,
)

EVAL_GRID_HZ = 50.0  # uniform grid for cross-method trajectory comparison


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: chan.ChannelScenario
    traffic_kind: str = "full"  # zero | full | bursty | trace
    traffic_level: str = "high"  # bursty only
    trace_path: str | None = None
    n_ues: int = 10
    moving_fraction: float = 0.5
    tgt_rate_moving: float = 200.0
    tgt_rate_static: float = 50.0
    scheduler: str = "carts"  # carts | periodic
    n_rbs: int = 272
    horizon_slots: int = 2000
    seed: int = 0
    smoothing: bool = True
    smoothing_alpha: float = 20.0
    boundary_width: int = 1
    max_age_s: float = 0.5
    enable_resample: bool = True
    resample_rate_hz: float | None = None  # None: the target UE's target rate
    n_rounds: int | None = None  # default: one round per UE

    def __post_init__(self):
        if self.n_ues < 1:
            raise ValueError("n_ues must be >= 1")
        if self.scheduler not in ("carts", "periodic"):
            raise ValueError("scheduler must be 'carts' or 'periodic'")
        if self.tgt_rate_moving <= 0 or self.tgt_rate_static <= 0:
            raise ValueError("target rates must be positive")


@dataclass
class RoundResult:
    target_ue: int
    snapshot_times: list[float]
    nmse_samples: list[float]
    cir_peak_errors: list[int]
    est_positions: np.ndarray  # raw per-snapshot (x, y)
    smoothed_positions: np.ndarray
    true_positions: np.ndarray
    est_rate_hz: float
    events: list[MeasurementEvent]
    pushed: list[tuple[int, str, int, int]]  # (slot, kind, start_sc, n_sc)
    resampled_count: int = 0

    def tracking(self, smoothed: bool = True):
        est = self.smoothed_positions if smoothed else self.est_positions
        return tracking_error(est, self.true_positions)

    def eval_grid_errors(self, rate_hz: float = EVAL_GRID_HZ) -> np.ndarray:
        """Smoothed trajectory vs truth on a uniform grid spanning the
        snapshots (linear interpolation between smoothed samples)."""
        t = np.array(self.snapshot_times)
        if len(t) < 2:
            return np.empty(0)
        query = np.arange(t[0], t[-1], 1.0 / rate_hz)
        ex = np.interp(query, t, self.smoothed_positions[:, 0])
        ey = np.interp(query, t, self.smoothed_positions[:, 1])
        tx = np.interp(query, t, self.true_positions[:, 0])
        ty = np.interp(query, t, self.true_positions[:, 1])
        return np.hypot(ex - tx, ey - ty)


def moving_ues(cfg: ExperimentConfig) -> set[int]:
    """Lowest ceil(N * moving_fraction) indices are the moving UEs."""
    return set(range(math.ceil(cfg.n_ues * cfg.moving_fraction)))


def build_traffic(cfg: ExperimentConfig, grid: FrequencyGrid) -> traffic_mod.TrafficSchedule:
    if cfg.traffic_kind in ("zero", "full"):
        return traffic_mod.synth_traffic(cfg.traffic_kind, cfg.n_ues, cfg.horizon_slots, grid)
    if cfg.traffic_kind == "bursty":
        return traffic_mod.synth_bursty(
            cfg.traffic_level, cfg.n_ues, cfg.horizon_slots, grid, seed=cfg.seed
        )
    if cfg.traffic_kind == "trace":
        if not cfg.trace_path:
            raise ValueError("trace traffic needs trace_path")
        with open(cfg.trace_path, "rb") as f:
            parsed = traffic_mod.parse_trace(f.read())
        rescaled = [traffic_mod.rescale(r, target_rbs=grid.n_rbs) for r in parsed.records]
        schedule = traffic_mod.select_top_n(rescaled, cfg.n_ues, grid)
        if schedule.horizon_slots < cfg.horizon_slots:
            raise ValueError("trace shorter than the requested horizon")
        return schedule
    raise ValueError(f"unknown traffic kind {cfg.traffic_kind!r}")


def _round_seed(seed: int, round_index: int) -> int:
    return int(np.random.SeedSequence((seed, round_index)).generate_state(1)[0])


def _target_scenario(
    cfg: ExperimentConfig, target_ue: int, round_index: int
) -> chan.ChannelScenario:
    base = replace(cfg.scenario, seed=_round_seed(cfg.seed, round_index))
    if target_ue in moving_ues(cfg):
        return base
    t0, t1 = base.time_span
    frac = (target_ue + 1) / (cfg.n_ues + 1)
    pos = base.position(t0 + frac * (t1 - t0))
    return replace(base, waypoints=((0.0, float(pos[0]), float(pos[1])),))


def run_round(
    cfg: ExperimentConfig,
    target_ue: int,
    round_index: int | None = None,
    schedule: traffic_mod.TrafficSchedule | None = None,
) -> RoundResult:
    if not 0 <= target_ue < cfg.n_ues:
        raise ValueError("target UE out of range")
    round_index = target_ue if round_index is None else round_index
    grid = FrequencyGrid(cfg.n_rbs)
    srs_grid = sched.build_grid(grid)
    clock = SlotClock(scs_khz=cfg.scenario.scs_khz)
    slot_dur = clock.slot_duration_s

    scenario = _target_scenario(cfg, target_ue, round_index)
    t0, t1 = scenario.time_span
    horizon_s = cfg.horizon_slots * slot_dur
    if len(scenario.waypoints) > 1 and (t0 > 0.0 or horizon_s > t1):
        raise ValueError("scenario trajectory does not cover the traffic horizon")

    schedule = schedule if schedule is not None else build_traffic(cfg, grid)
    movers = moving_ues(cfg)
    tgt = np.array(
        [
            cfg.tgt_rate_moving if u in movers else cfg.tgt_rate_static
            for u in range(cfg.n_ues)
        ]
    )
    state = sched.SchedulerState.initial(tgt, grid.n_rbs, t0=0.0)
    stitch_cfg = StitcherConfig(
        smoothing=SmoothingConfig(alpha=cfg.smoothing_alpha),
        enable_smoothing=cfg.smoothing,
        boundary_width=cfg.boundary_width,
    )
    # oracle calibration from the scenario: wide-band mean power is the
    # incoherent sum of ray powers (the ripple averages out across the band)
    gains = np.array([abs(r.relative_gain) for r in scenario.rays])
    gains[0] *= 10.0 ** (-scenario.los_suppression_db / 20.0)
    pathloss = sensing.PathlossConfig(
        reference_amplitude=float(np.sqrt(np.sum(gains**2))),
        reference_distance_m=scenario.reference_distance_m,
        exponent=scenario.pathloss_exponent,
    )

    buffer = EstimateBuffer(max_age_s=cfg.max_age_s)
    events: list[MeasurementEvent] = []
    pushed: list[tuple[int, str, int, int]] = []
    snapshots: list[StitchedChannel] = []
    nmse_samples: list[float] = []
    cir_errors: list[int] = []
    estimates: list[sensing.PositionEstimate] = []
    true_positions: list[tuple[float, float]] = []
    uplink_counter = 0

    for slot in range(cfg.horizon_slots):
        if not is_uplink_slot(slot):
            continue
        t = slot * slot_dur
        allocs = schedule.allocations_at(slot)

        if cfg.scheduler == "carts":
            for ue, (start_rb, num_rb) in allocs.items():
                events.append(
                    MeasurementEvent(slot, t, ue, MeasurementKind.DMRS, start_rb, num_rb)
                )
            if target_ue in allocs:
                start_rb, num_rb = allocs[target_ue]
                est = chan.measure(
                    scenario,
                    t,
                    grid.rb_to_subcarriers(start_rb, num_rb),
                    Origin.DMRS,
                    grid,
                    ue_id=target_ue,
                )
                buffer.add(est)
                pushed.append((slot, "dmrs", est.start, est.n_subcarriers))

            srs_alloc, state = sched.generate_srs_alloc(state, allocs, srs_grid, t)
            for ue, k in srs_alloc.pairs:
                start_rb, num_rb = srs_grid.rb_ranges[k]
                events.append(
                    MeasurementEvent(
                        slot, t, ue, MeasurementKind.SRS, start_rb, num_rb, resource=k
                    )
                )
            ranges = sched.ue_rb_ranges(srs_alloc, srs_grid)
            if target_ue in ranges:
                start_rb, num_rb = ranges[target_ue]
                est = chan.measure(
                    scenario,
                    t,
                    grid.rb_to_subcarriers(start_rb, num_rb),
                    Origin.SRS,
                    grid,
                    ue_id=target_ue,
                )
                buffer.add(est)
                pushed.append((slot, "srs", est.start, est.n_subcarriers))
        else:  # periodic full-band SRS baseline: no DMRS fusion
            alloc = sched.periodic_baseline(cfg.n_ues, uplink_counter)
            ue = alloc.full_band_ue
            events.append(
                MeasurementEvent(slot, t, ue, MeasurementKind.SRS, 0, grid.n_rbs)
            )
            if ue == target_ue:
                est = chan.measure(
                    scenario,
                    t,
                    grid.rb_to_subcarriers(0, grid.n_rbs),
                    Origin.SRS,
                    grid,
                    ue_id=target_ue,
                )
                buffer.add(est)
                pushed.append((slot, "srs", est.start, est.n_subcarriers))
        uplink_counter += 1

        newest = buffer.newest()
        if (
            newest is not None
            and newest.origin is Origin.SRS
            and newest.timestamp == t
            and coverage_complete(buffer, grid)
        ):
            stitched = stitch_full(buffer, grid, stitch_cfg)
            snapshots.append(stitched)
            truth = chan.ground_truth_csi(scenario, stitched.reference_time, grid)
            nmse_samples.append(nmse(truth, stitched.csi))
            cir_errors.append(cir_peak_error(truth, stitched.csi))
            aoa = sensing.estimate_aoa(stitched, scenario.spacing_wavelengths)
            rng_m = sensing.estimate_range(stitched, pathloss)
            estimates.append(
                sensing.PositionEstimate(
                    t=stitched.reference_time,
                    xy=sensing.localize(aoa, rng_m),
                    aoa_rad=aoa,
                    range_m=rng_m,
                )
            )
            pos = scenario.position(stitched.reference_time)
            true_positions.append((float(pos[0]), float(pos[1])))

    est_xy = np.array([e.xy for e in estimates]).reshape(-1, 2)
    true_xy = np.array(true_positions).reshape(-1, 2)
    if len(estimates) >= 2:
        smoothed = sensing.kalman_smooth(estimates)
    else:
        smoothed = est_xy.copy()

    resampled = 0
    if cfg.enable_resample and len(snapshots) >= 4:
        rate = cfg.resample_rate_hz
        if rate is None:
            rate = cfg.tgt_rate_moving if target_ue in movers else cfg.tgt_rate_static
        times, _ = resample_uniform(snapshots, rate)
        resampled = len(times)

    return RoundResult(
        target_ue=target_ue,
        snapshot_times=[s.reference_time for s in snapshots],
        nmse_samples=nmse_samples,
        cir_peak_errors=cir_errors,
        est_positions=est_xy,
        smoothed_positions=smoothed,
        true_positions=true_xy,
        est_rate_hz=estimation_rate(events, target_ue, cfg.horizon_slots * slot_dur),
        events=events,
        pushed=pushed,
        resampled_count=resampled,
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rounds: list[RoundResult]

    @property
    def nmse_samples(self) -> np.ndarray:
        return np.array([v for r in self.rounds for v in r.nmse_samples])

    @property
    def cir_peak_errors(self) -> np.ndarray:
        return np.array([v for r in self.rounds for v in r.cir_peak_errors])

    @property
    def mean_est_rate_hz(self) -> float:
        return float(np.mean([r.est_rate_hz for r in self.rounds]))

    def tracking_errors(self, smoothed: bool = True) -> np.ndarray:
        chunks = [
            r.tracking(smoothed).errors_m for r in self.rounds if len(r.true_positions)
        ]
        return np.concatenate(chunks) if chunks else np.empty(0)

    def eval_grid_errors(self) -> np.ndarray:
        chunks = [r.eval_grid_errors() for r in self.rounds]
        chunks = [c for c in chunks if len(c)]
        return np.concatenate(chunks) if chunks else np.empty(0)

    def summary(self) -> dict:
        nm = self.nmse_samples
        ce = self.cir_peak_errors
        raw = self.tracking_errors(smoothed=False)
        smooth = self.tracking_errors(smoothed=True)
        grid_err = self.eval_grid_errors()

        def stats(x):
            if len(x) == 0:
                return {"count": 0}
            return {
                "count": int(len(x)),
                "mean": float(np.mean(x)),
                "median": float(np.median(x)),
                "p90": float(np.percentile(x, 90)),
            }

        return {
            "scheduler": self.config.scheduler,
            "traffic": {
                "kind": self.config.traffic_kind,
                "level": self.config.traffic_level,
            },
            "n_ues": self.config.n_ues,
            "seed": self.config.seed,
            "rounds": len(self.rounds),
            "nmse": stats(nm),
            "cir_peak_error_taps": stats(ce),
            "est_rate_hz": {"mean": self.mean_est_rate_hz},
            "tracking_m": {
                "raw": stats(raw),
                "smoothed": stats(smooth),
                "eval_grid": stats(grid_err),
            },
        }


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Rotate the target UE across rounds (one per UE by default) over shared
    traffic, and aggregate the per-round records."""
    grid = FrequencyGrid(cfg.n_rbs)
    schedule = build_traffic(cfg, grid)
    n_rounds = cfg.n_rounds if cfg.n_rounds is not None else cfg.n_ues
    rounds = [
        run_round(cfg, target_ue=i % cfg.n_ues, round_index=i, schedule=schedule)
        for i in range(n_rounds)
    ]
    return ExperimentResult(config=cfg, rounds=rounds)


# --- config and result serialization -------------------------------------


def config_from_dict(raw: dict) -> ExperimentConfig:
    scenario_raw = raw.get("scenario", {})
    if isinstance(scenario_raw, str):
        scenario = chan.load_scenario(scenario_raw)
    else:
        scenario = chan.scenario_from_dict(scenario_raw)
    traffic = raw.get("traffic", {})
    return ExperimentConfig(
        scenario=scenario,
        traffic_kind=traffic.get("kind", "full"),
        traffic_level=traffic.get("level", "high"),
        trace_path=traffic.get("path"),
        n_ues=int(raw.get("n_ues", 10)),
        moving_fraction=float(raw.get("moving_fraction", 0.5)),
        tgt_rate_moving=float(raw.get("tgt_rate_moving", 200.0)),
        tgt_rate_static=float(raw.get("tgt_rate_static", 50.0)),
        scheduler=raw.get("scheduler", "carts"),
        n_rbs=int(raw.get("n_rbs", 272)),
        horizon_slots=int(raw.get("horizon_slots", 2000)),
        seed=int(raw.get("seed", 0)),
        smoothing=bool(raw.get("smoothing", True)),
        smoothing_alpha=float(raw.get("smoothing_alpha", 20.0)),
        boundary_width=int(raw.get("boundary_width", 1)),
        max_age_s=float(raw.get("max_age_s", 0.5)),
        enable_resample=bool(raw.get("enable_resample", True)),
        resample_rate_hz=raw.get("resample_rate_hz"),
        n_rounds=raw.get("n_rounds"),
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return config_from_dict(yaml.safe_load(f))


def write_outputs(result: ExperimentResult, out_dir) -> None:
    """metrics.csv, trajectory.csv, allocations.csv, summary.json (schemas
    documented in the README)."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.csv"), "w") as f:
        f.write("round,t,nmse,cir_peak_error_taps\n")
        for i, r in enumerate(result.rounds):
            for t, nm, ce in zip(r.snapshot_times, r.nmse_samples, r.cir_peak_errors):
                f.write(f"{i},{t!r},{nm!r},{ce}\n")
    with open(os.path.join(out_dir, "trajectory.csv"), "w") as f:
        f.write("round,t,x_est,y_est,x_true,y_true\n")
        for i, r in enumerate(result.rounds):
            for t, e, g in zip(r.snapshot_times, r.smoothed_positions, r.true_positions):
                f.write(
                    f"{i},{t!r},{float(e[0])!r},{float(e[1])!r},"
                    f"{float(g[0])!r},{float(g[1])!r}\n"
                )
    with open(os.path.join(out_dir, "allocations.csv"), "w") as f:
        f.write("round,slot,ue,kind,resource,start_rb,num_rb\n")
        for i, r in enumerate(result.rounds):
            for e in r.events:
                f.write(
                    f"{i},{e.slot},{e.ue},{e.kind.value},{e.resource},"
                    f"{e.start_rb},{e.num_rb}\n"
                )
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(result.summary(), f, indent=2, sort_keys=True)
        f.write("\n")
