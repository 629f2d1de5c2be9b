import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamtrack.beam_grid import ArrayGeometry, table_grid
from beamtrack.channel_sim import (
    RSRP_FLOOR_DB,
    SPEED_RATES_DEG,
    ChannelScenario,
    EffectiveChannel,
    PathComponent,
    ScenarioParams,
    _reflect,
    channel_at,
    measure,
    random_scenario,
    rsrp_all_db,
    true_rsrp_db,
)

GRID = table_grid()


def aligned_scenario(h, v, noise=0.0, tx_power=1.0):
    az, el = GRID.angles.azimuths[h], GRID.angles.elevations[v]
    return ChannelScenario((PathComponent(1.0, az, el),), GRID.geometry, tx_power, noise)


class TestChannel:
    def test_aligned_path_argmax_every_slot(self):
        sc = aligned_scenario(5, 2)
        for t in (0, 7, 100):
            assert int(np.argmax(rsrp_all_db(channel_at(sc, t), GRID))) == GRID.index_of(5, 2)

    def test_aligned_rsrp_equals_rho_times_m(self):
        rho = 2.5
        sc = aligned_scenario(9, 1, tx_power=rho)
        m = GRID.geometry.n_antennas
        got = true_rsrp_db(channel_at(sc, 0), GRID, GRID.index_of(9, 1))
        assert got == pytest.approx(10 * np.log10(rho * m), abs=1e-10)

    def test_alignment_optimal_on_random_grid_points(self, rng):
        for _ in range(50):
            h, v = int(rng.integers(16)), int(rng.integers(4))
            db = rsrp_all_db(channel_at(aligned_scenario(h, v), 0), GRID)
            assert int(np.argmax(db)) == GRID.index_of(h, v)

    def test_smooth_in_time(self):
        sc = random_scenario(ScenarioParams(n_paths=1, phase_rate_max=0.0),
                             np.random.default_rng(3))
        prev = rsrp_all_db(channel_at(sc, 0), GRID)
        worst = 0.0
        for t in range(1, 100):
            cur = rsrp_all_db(channel_at(sc, t), GRID)
            strong = (prev > prev.max() - 20) & (cur > cur.max() - 20)
            worst = max(worst, np.max(np.abs(cur - prev)[strong]))
            prev = cur
        assert worst < 3.0

    def test_deterministic(self):
        sc = random_scenario(ScenarioParams(), np.random.default_rng(1))
        np.testing.assert_array_equal(channel_at(sc, 17).h_bar, channel_at(sc, 17).h_bar)

    def test_negative_slot(self):
        with pytest.raises(ValueError):
            channel_at(aligned_scenario(0, 0), -1)

    def test_reflection_stays_in_sector(self):
        for x in np.linspace(-10, 10, 101):
            y = _reflect(x, (-1.0, 2.0))
            assert -1.0 <= y <= 2.0
        assert _reflect(2.5, (-1.0, 2.0)) == pytest.approx(1.5)
        assert _reflect(0.3, None) == 0.3


class TestTrueRsrp:
    def test_conjugate_beam_is_zero_db(self):
        b = GRID.beams[10]
        ch = EffectiveChannel(0, np.conj(b), 1.0)
        assert true_rsrp_db(ch, GRID, 10) == pytest.approx(0.0, abs=1e-12)

    def test_power_scaling_adds_10_db(self):
        ch1 = channel_at(aligned_scenario(3, 3), 0)
        ch10 = EffectiveChannel(0, ch1.h_bar, 10.0)
        for b in (0, 20, 51):
            assert true_rsrp_db(ch10, GRID, b) - true_rsrp_db(ch1, GRID, b) == pytest.approx(10.0)

    def test_zero_inner_product_gives_floor(self):
        g = table_grid(ArrayGeometry(2, 1))
        ch = EffectiveChannel(0, np.zeros(2, complex), 1.0)
        assert true_rsrp_db(ch, g, 0) == RSRP_FLOOR_DB

    def test_nearly_orthogonal_is_far_below_aligned(self):
        g = table_grid(ArrayGeometry(2, 1))
        b = g.beams[0]
        ortho = np.array([b[1], -b[0]])  # h . b = b1 b0 - b0 b1, zero up to rounding
        assert true_rsrp_db(EffectiveChannel(0, ortho, 1.0), g, 0) < -250

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            true_rsrp_db(EffectiveChannel(0, np.ones(3, complex), 1.0), GRID, 0)
        with pytest.raises(ValueError):
            rsrp_all_db(EffectiveChannel(0, np.ones(3, complex), 1.0), GRID)


class TestMeasure:
    def test_noiseless_equals_truth(self):
        sc = aligned_scenario(2, 1, noise=0.0)
        ch = channel_at(sc, 4)
        obs = measure(sc, ch, GRID, [0, 5, 9])
        for o in obs:
            assert o.rsrp_db == true_rsrp_db(ch, GRID, o.beam_index)
            assert o.slot == 4

    def test_full_sweep_64_reports(self):
        sc = aligned_scenario(2, 1, noise=0.5)
        obs = measure(sc, channel_at(sc, 0), GRID, range(64), np.random.default_rng(0))
        assert len(obs) == 64

    def test_seeded_reproducible(self):
        sc = aligned_scenario(2, 1, noise=1.0)
        ch = channel_at(sc, 0)
        a = measure(sc, ch, GRID, [1, 2, 3], np.random.default_rng(7))
        b = measure(sc, ch, GRID, [1, 2, 3], np.random.default_rng(7))
        assert a == b
        assert measure(sc, ch, GRID, [1, 2]) == measure(sc, ch, GRID, [1, 2])

    def test_noise_statistics(self):
        sc = aligned_scenario(2, 1, noise=2.0)
        ch = channel_at(sc, 0)
        truth = true_rsrp_db(ch, GRID, 7)
        obs = measure(sc, ch, GRID, [7] * 20000, np.random.default_rng(1))
        err = np.array([o.rsrp_db for o in obs]) - truth
        assert abs(err.mean()) < 0.05 and err.std() == pytest.approx(2.0, rel=0.03)

    def test_grid_noise_indexed_by_beam(self):
        sc = aligned_scenario(2, 1, noise=1.0)
        ch = channel_at(sc, 0)
        noise = np.arange(64) / 10.0
        obs = measure(sc, ch, GRID, [3, 40], grid_noise=noise)
        assert obs[1].rsrp_db == pytest.approx(true_rsrp_db(ch, GRID, 40) + 4.0)

    def test_empty_beamset(self):
        sc = aligned_scenario(2, 1)
        with pytest.raises(ValueError):
            measure(sc, channel_at(sc, 0), GRID, [])


class TestScenario:
    def test_single_path(self):
        sc = random_scenario(ScenarioParams(n_paths=1), np.random.default_rng(0))
        assert len(sc.paths) == 1 and abs(sc.paths[0].gain) == pytest.approx(1.0)

    def test_gain_decay(self):
        sc = random_scenario(ScenarioParams(n_paths=3, gain_decay=0.3), np.random.default_rng(0))
        np.testing.assert_allclose([abs(p.gain) for p in sc.paths], [1.0, 0.3, 0.09])

    def test_speed_bounds_increase(self):
        assert SPEED_RATES_DEG["fast"] > SPEED_RATES_DEG["medium"] > SPEED_RATES_DEG["slow"]
        for speed, bound in SPEED_RATES_DEG.items():
            for seed in range(30):
                sc = random_scenario(ScenarioParams(azimuth_rate_max=bound),
                                     np.random.default_rng(seed))
                assert abs(sc.paths[0].azimuth_rate) <= np.deg2rad(bound) + 1e-15

    def test_dominant_first_over_1000_draws(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            sc = random_scenario(ScenarioParams(n_paths=4, gain_decay=0.7), rng)
            g = [abs(p.gain) for p in sc.paths]
            assert all(g[0] >= x for x in g[1:])

    def test_speed_classes_share_geometry(self):
        slow = random_scenario(ScenarioParams(azimuth_rate_max=0.25), np.random.default_rng(9))
        fast = random_scenario(ScenarioParams(azimuth_rate_max=0.75), np.random.default_rng(9))
        for ps, pf in zip(slow.paths, fast.paths):
            assert ps.azimuth_0 == pf.azimuth_0 and ps.gain == pf.gain
            assert pf.azimuth_rate == pytest.approx(3 * ps.azimuth_rate)

    def test_rejects_bad_ordering(self):
        with pytest.raises(ValueError):
            ChannelScenario((PathComponent(0.5, 0, 0), PathComponent(1.0, 0, 0)))

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            random_scenario(ScenarioParams(n_paths=0), np.random.default_rng(0))
        with pytest.raises(ValueError):
            random_scenario(ScenarioParams(noise_std_db=-1), np.random.default_rng(0))

    def test_doubling_rates_does_not_reduce_displacement(self):
        """Mean per-slot best-beam index displacement grows with the drift bound."""
        def displacement(rate, seed):
            params = ScenarioParams(azimuth_rate_max=rate, noise_std_db=0.0)
            sc = random_scenario(params, np.random.default_rng(seed))
            best = [GRID.hv_of(int(np.argmax(rsrp_all_db(channel_at(sc, t), GRID))))
                    for t in range(0, 60)]
            return np.mean([abs(a[0] - b[0]) + abs(a[1] - b[1]) for a, b in zip(best, best[1:])])

        base = [displacement(0.5, s) for s in range(100)]
        doubled = [displacement(1.0, s) for s in range(100)]
        assert np.mean(doubled) >= np.mean(base)

    @given(st.integers(0, 10_000))
    def test_angles_stay_in_sector(self, seed):
        params = ScenarioParams(azimuth_rate_max=3.0)
        sc = random_scenario(params, np.random.default_rng(seed))
        from beamtrack.channel_sim import path_angles
        for t in (0, 50, 500):
            for p in sc.paths:
                az, el = path_angles(sc, p, t)
                assert sc.azimuth_sector[0] - 1e-12 <= az <= sc.azimuth_sector[1] + 1e-12
                assert sc.elevation_sector[0] - 1e-12 <= el <= sc.elevation_sector[1] + 1e-12
