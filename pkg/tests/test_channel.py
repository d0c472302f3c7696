import numpy as np
import pytest

from carts.channel import (
    ChannelScenario,
    MultipathRay,
    SPEED_OF_LIGHT,
    ground_truth_csi,
    load_scenario,
    measure,
    scenario_from_dict,
)
from carts.core import FrequencyGrid, Origin

GRID = FrequencyGrid(272)


def static_scenario(x=0.0, y=5.0, rays=None, snr_db=None, seed=0):
    return ChannelScenario(
        waypoints=((0.0, x, y),),
        rays=rays or (MultipathRay(),),
        snr_db=snr_db,
        seed=seed,
    )


class TestGroundTruth:
    def test_broadside_antennas_identical(self):
        sc = static_scenario(x=0.0, y=5.0)  # angle 0
        h = ground_truth_csi(sc, 0.0, GRID)
        for m in range(1, sc.n_antennas):
            np.testing.assert_allclose(h[m], h[0], rtol=1e-12)

    def test_single_ray_linear_phase_slope(self):
        sc = static_scenario(x=0.0, y=5.0)
        h = ground_truth_csi(sc, 0.0, GRID)
        phases = np.unwrap(np.angle(h[0]))
        slopes = np.diff(phases)
        tau = 5.0 / SPEED_OF_LIGHT
        expected = -2 * np.pi * 30e3 * tau
        np.testing.assert_allclose(slopes, expected, atol=1e-9)

    def test_two_ray_ripple_period(self):
        # equal-gain rays 100 ns apart: magnitude minima every 10 MHz.
        # oracle: evaluate the two-ray sum and locate the minima numerically.
        rays = (
            MultipathRay(),
            MultipathRay(relative_gain=1.0, excess_delay_s=100e-9,
                         doppler_policy="fixed"),
        )
        sc = static_scenario(x=0.0, y=5.0, rays=rays)
        h = ground_truth_csi(sc, 0.0, GRID)
        mag = np.abs(h[0])
        minima = [
            i
            for i in range(1, GRID.n_subcarriers - 1)
            if mag[i] < mag[i - 1] and mag[i] < mag[i + 1]
        ]
        spacings = np.diff(minima) * 30e3
        np.testing.assert_allclose(spacings, 10e6, rtol=0.02)

    def test_stationary_single_ray_time_invariant(self):
        sc = static_scenario(x=1.0, y=3.0)
        h0 = ground_truth_csi(sc, 0.0, GRID)
        h1 = ground_truth_csi(sc, 12.5, GRID)
        np.testing.assert_allclose(h0, h1, rtol=1e-12)

    def test_time_out_of_range(self):
        sc = ChannelScenario(waypoints=((0.0, 0.0, 5.0), (2.0, 1.0, 5.0)))
        with pytest.raises(ValueError, match="time out of range"):
            ground_truth_csi(sc, 3.0, GRID)

    def test_pathloss_amplitude(self):
        near = static_scenario(x=0.0, y=2.0)
        far = static_scenario(x=0.0, y=4.0)
        a_near = np.abs(ground_truth_csi(near, 0.0, GRID)).mean()
        a_far = np.abs(ground_truth_csi(far, 0.0, GRID)).mean()
        assert a_near / a_far == pytest.approx(2.0, rel=1e-6)


class TestMeasure:
    def test_noiseless_srs_equals_truth(self):
        sc = static_scenario()
        subs = np.arange(120, 360)
        est = measure(sc, 0.0, subs, Origin.SRS, GRID)
        truth = ground_truth_csi(sc, 0.0, GRID)[:, subs]
        np.testing.assert_allclose(est.csi, truth, rtol=1e-12)

    def test_dmrs_offset_602db_doubles(self):
        sc = ChannelScenario(
            waypoints=((0.0, 0.0, 5.0),), snr_db=None,
            dmrs_power_offset_db=20 * np.log10(2.0),
        )
        subs = np.arange(0, 120)
        srs = measure(sc, 0.0, subs, Origin.SRS, GRID)
        dmrs = measure(sc, 0.0, subs, Origin.DMRS, GRID)
        np.testing.assert_allclose(dmrs.csi, 2.0 * srs.csi, rtol=1e-12)

    def test_fixed_seed_repeatable(self):
        sc = static_scenario(snr_db=10.0, seed=99)
        subs = np.arange(36, 96)
        a = measure(sc, 0.0125, subs, Origin.SRS, GRID)
        b = measure(sc, 0.0125, subs, Origin.SRS, GRID)
        np.testing.assert_array_equal(a.csi, b.csi)

    def test_noise_keyed_by_time_and_range(self):
        sc = static_scenario(snr_db=10.0, seed=99)
        subs = np.arange(36, 96)
        a = measure(sc, 0.0125, subs, Origin.SRS, GRID)
        b = measure(sc, 0.0150, subs, Origin.SRS, GRID)
        c = measure(sc, 0.0125, np.arange(48, 108), Origin.SRS, GRID)
        assert not np.allclose(a.csi, b.csi)
        assert not np.allclose(a.csi[:, 12:], c.csi[:, :48])

    def test_restriction_matches_full_band(self):
        sc = static_scenario()
        subs = np.arange(600, 900)
        est = measure(sc, 0.0, subs, Origin.SRS, GRID)
        full = measure(sc, 0.0, np.arange(GRID.n_subcarriers), Origin.SRS, GRID)
        np.testing.assert_allclose(est.csi, full.csi[:, 600:900], rtol=1e-12)

    def test_measured_snr_close_to_configured(self):
        sc = static_scenario(snr_db=20.0, seed=1)
        subs = np.arange(0, 1200)
        noisy = measure(sc, 0.0, subs, Origin.SRS, GRID).csi
        clean = ground_truth_csi(sc, 0.0, GRID)[:, subs]
        snr = np.sum(np.abs(clean) ** 2) / np.sum(np.abs(noisy - clean) ** 2)
        assert 10 * np.log10(snr) == pytest.approx(20.0, abs=0.5)


class TestScenarioValidation:
    def test_needs_los_first(self):
        with pytest.raises(ValueError):
            ChannelScenario(rays=(MultipathRay(excess_delay_s=1e-9),))

    def test_gain_normalized_to_los(self):
        sc = ChannelScenario(
            rays=(
                MultipathRay(relative_gain=2.0),
                MultipathRay(relative_gain=1.0, excess_delay_s=1e-9),
            )
        )
        assert abs(sc.rays[0].relative_gain) == pytest.approx(1.0)
        assert abs(sc.rays[1].relative_gain) == pytest.approx(0.5)

    def test_waypoint_times_increase(self):
        with pytest.raises(ValueError):
            ChannelScenario(waypoints=((0.0, 0, 1), (0.0, 1, 1)))


class TestConfigLoading:
    def test_yaml_round_trip(self, tmp_path):
        cfg = """
array: {n_antennas: 2, spacing_wavelengths: 0.5}
carrier_hz: 3.5e9
rays:
  - {gain: 1.0}
  - {gain: 0.4, excess_delay_ns: 150, aoa_offset_deg: 30, doppler: fixed}
waypoints: [[0.0, 1.0, 4.0], [10.0, 2.0, 4.0]]
snr_db: 15
seed: 42
"""
        p = tmp_path / "scenario.yaml"
        p.write_text(cfg)
        sc = load_scenario(p)
        assert sc.n_antennas == 2
        assert sc.carrier_hz == 3.5e9
        assert len(sc.rays) == 2
        assert sc.rays[1].excess_delay_s == pytest.approx(150e-9)
        assert sc.rays[1].doppler_policy == "fixed"
        assert sc.snr_db == 15
        assert sc.position(5.0)[0] == pytest.approx(1.5)

    def test_defaults(self):
        sc = scenario_from_dict({})
        assert sc.n_antennas == 4
        assert sc.snr_db is None
        assert sc.dmrs_power_offset_db == 3.0
