import numpy as np
import pytest

from carts.core import (
    EstimateBuffer,
    FrequencyGrid,
    Origin,
    SlotClock,
    SubBandEstimate,
    coverage_complete,
    is_uplink_slot,
    select_reference,
)


def make_estimate(start, n, t, origin=Origin.SRS, m=2):
    return SubBandEstimate(
        csi=np.ones((m, n), dtype=complex),
        subcarriers=np.arange(start, start + n),
        timestamp=t,
        origin=origin,
    )


class TestSlotClock:
    def test_slot_duration_30khz(self):
        assert SlotClock(scs_khz=30).slot_duration_s == pytest.approx(0.0005)

    def test_slot_duration_follows_scs(self):
        for scs in (15, 30, 60, 120):
            clk = SlotClock(scs_khz=scs)
            assert clk.slot_duration_s == pytest.approx(0.001 / (scs / 15))

    def test_slot_index_bounded_by_frame(self):
        SlotClock(scs_khz=30, slot_index=19)
        with pytest.raises(ValueError):
            SlotClock(scs_khz=30, slot_index=20)

    def test_uplink_pattern_dddsu(self):
        flags = [is_uplink_slot(s) for s in range(10)]
        assert flags == [False] * 4 + [True] + [False] * 4 + [True]


class TestFrequencyGrid:
    def test_default_emulation_grid(self):
        grid = FrequencyGrid()
        assert grid.n_rbs == 272
        assert grid.n_subcarriers == 3264

    def test_rejects_non_multiple_of_4(self):
        with pytest.raises(ValueError):
            FrequencyGrid(n_rbs=270)

    def test_rb_to_subcarriers(self):
        grid = FrequencyGrid(n_rbs=8)
        subs = grid.rb_to_subcarriers(2, 3)
        assert subs[0] == 24 and subs[-1] == 59 and len(subs) == 36
        with pytest.raises(ValueError):
            grid.rb_to_subcarriers(6, 3)


class TestSubBandEstimate:
    def test_rejects_non_contiguous(self):
        with pytest.raises(ValueError):
            SubBandEstimate(
                csi=np.ones((1, 3)),
                subcarriers=np.array([0, 2, 3]),
                timestamp=0.0,
                origin=Origin.SRS,
            )

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            SubBandEstimate(
                csi=np.ones((1, 3)),
                subcarriers=np.arange(4),
                timestamp=0.0,
                origin=Origin.SRS,
            )


class TestCoverage:
    def test_empty_buffer_is_incomplete(self):
        assert not coverage_complete(EstimateBuffer(), FrequencyGrid())

    def test_single_full_band_estimate(self):
        grid = FrequencyGrid()
        buf = EstimateBuffer()
        buf.add(make_estimate(0, grid.n_subcarriers, 0.0))
        assert coverage_complete(buf, grid)

    def test_two_halves_cover(self):
        # set-union oracle over the index sets
        grid = FrequencyGrid()
        half = grid.n_subcarriers // 2
        buf = EstimateBuffer()
        buf.add(make_estimate(0, half, 0.0))
        assert not coverage_complete(buf, grid)
        buf.add(make_estimate(half, half, 0.001))
        union = set(range(half)) | set(range(half, grid.n_subcarriers))
        assert union == set(range(grid.n_subcarriers))
        assert coverage_complete(buf, grid)

    def test_monotone_under_additions(self):
        grid = FrequencyGrid(n_rbs=8)
        rng = np.random.default_rng(5)
        buf = EstimateBuffer(max_age_s=1e9)
        was_complete = False
        for i in range(50):
            start = int(rng.integers(0, grid.n_subcarriers - 12))
            n = int(rng.integers(12, grid.n_subcarriers - start))
            buf.add(make_estimate(start, n, 0.001 * i))
            now_complete = coverage_complete(buf, grid)
            assert not (was_complete and not now_complete)
            was_complete = now_complete


class TestBuffer:
    def test_age_eviction(self):
        buf = EstimateBuffer(max_age_s=0.5)
        buf.add(make_estimate(0, 12, 0.0))
        buf.add(make_estimate(12, 12, 0.6))
        assert len(buf) == 1
        assert buf.entries[0].timestamp == 0.6

    def test_dominated_entry_evicted(self):
        buf = EstimateBuffer()
        buf.add(make_estimate(12, 12, 0.0))
        buf.add(make_estimate(0, 48, 0.001))  # covers the older entry
        assert len(buf) == 1
        assert buf.entries[0].n_subcarriers == 48

    def test_partial_overlap_keeps_both(self):
        buf = EstimateBuffer()
        buf.add(make_estimate(0, 24, 0.0))
        buf.add(make_estimate(12, 24, 0.001))
        assert len(buf) == 2

    def test_entries_sorted_by_timestamp(self):
        buf = EstimateBuffer()
        buf.add(make_estimate(0, 12, 0.002))
        buf.add(make_estimate(24, 12, 0.001))
        buf.add(make_estimate(48, 12, 0.003))
        times = [e.timestamp for e in buf.entries]
        assert times == sorted(times)


class TestSelectReference:
    def test_newest_srs_wins(self):
        buf = EstimateBuffer()
        buf.add(make_estimate(0, 12, 1.0, Origin.DMRS))
        buf.add(make_estimate(24, 12, 2.0, Origin.SRS))
        ref = select_reference(buf)
        assert ref.origin is Origin.SRS and ref.timestamp == 2.0
        assert buf.newest().origin is Origin.SRS  # caller's trigger check

    def test_newer_dmrs_does_not_become_reference(self):
        buf = EstimateBuffer(max_age_s=10.0)
        buf.add(make_estimate(0, 12, 2.0, Origin.SRS))
        buf.add(make_estimate(24, 12, 3.0, Origin.DMRS))
        ref = select_reference(buf)
        assert ref.origin is Origin.SRS and ref.timestamp == 2.0
        assert buf.newest().origin is Origin.DMRS  # so the caller must not stitch

    def test_no_srs_returns_none(self):
        buf = EstimateBuffer()
        buf.add(make_estimate(0, 12, 1.0, Origin.DMRS))
        assert select_reference(buf) is None

    def test_equal_timestamps_later_insertion_wins(self):
        buf = EstimateBuffer()
        a = make_estimate(0, 12, 1.0, Origin.SRS)
        b = make_estimate(24, 12, 1.0, Origin.SRS)
        buf.add(a)
        buf.add(b)
        assert select_reference(buf) is b
