import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamtrack.beam_grid import (
    AngleGrid,
    ArrayGeometry,
    BeamGrid,
    BeamIndexMetric,
    beam_distance,
    build_grid,
    default_metric,
    make_dft_beam,
    steering_vector,
    table_grid,
)


class TestMakeDftBeam:
    def test_single_antenna_is_one(self):
        b = make_dft_beam(ArrayGeometry(1, 1), 0.3, 1.1)
        np.testing.assert_allclose(b, [1.0])

    def test_two_element_horizontal_half_wavelength(self):
        # phase -2*pi*0.5*1*sin(pi/2)*cos(0) = -pi
        b = make_dft_beam(ArrayGeometry(2, 1, 0.5, 0.5), 0.0, np.pi / 2)
        np.testing.assert_allclose(b, np.array([1, -1]) / np.sqrt(2), atol=1e-15)

    def test_entries_have_equal_modulus(self):
        b = make_dft_beam(ArrayGeometry(4, 4), np.deg2rad(80.0), np.deg2rad(100.0))
        assert abs(np.linalg.norm(b) - 1) < 1e-12
        np.testing.assert_allclose(np.abs(b), 1 / np.sqrt(16), rtol=1e-12)

    def test_kronecker_order_is_horizontal_major(self):
        g = ArrayGeometry(3, 2, 0.5, 0.5)
        az, el = 0.4, 1.2
        b = make_dft_beam(g, az, el)
        k_h, k_v = 2, 1
        expected = np.exp(-2j * np.pi * 0.5 * (k_h * np.sin(el) * np.cos(az) + k_v * np.cos(el)))
        assert b[k_h * g.m_v + k_v] == pytest.approx(expected / np.sqrt(6))

    def test_steering_vector_scaling(self):
        g = ArrayGeometry(4, 2)
        a = steering_vector(g, 0.1, 0.2)
        assert np.linalg.norm(a) == pytest.approx(np.sqrt(8))


class TestGrid:
    def test_table_grid_has_64_beams_at_documented_angles(self):
        g = table_grid()
        assert len(g) == 64 and g.shape == (16, 4)
        np.testing.assert_allclose(np.rad2deg(g.angles.azimuths), -56.25 + 7.5 * np.arange(16))
        np.testing.assert_allclose(np.rad2deg(g.angles.elevations), [0, 7.5, 15, 22.5])

    def test_beams_match_make_dft_beam_under_convention(self):
        g = table_grid(ArrayGeometry(4, 4))
        for h, v in [(0, 0), (7, 2), (15, 3)]:
            az, el = g.angles.azimuths[h], g.angles.elevations[v]
            expected = make_dft_beam(g.geometry, np.pi / 2 - az, np.pi / 2 - el)
            np.testing.assert_allclose(g.beams[g.index_of(h, v)], expected)

    def test_formula_convention_passes_angles_through(self):
        angles = AngleGrid((0.5, 0.7), (1.0,))
        g = build_grid(ArrayGeometry(4, 2), angles, convention="formula")
        np.testing.assert_allclose(g.beams[1], make_dft_beam(g.geometry, 0.7, 1.0))

    def test_boresight_distinguishes_mirror_azimuths(self):
        g = table_grid()
        left, right = g.beams[g.index_of(0, 1)], g.beams[g.index_of(15, 1)]
        assert abs(np.vdot(left, right)) < 0.5

    def test_single_beam_grid(self):
        g = build_grid(ArrayGeometry(2, 2), AngleGrid((0.0,), (0.0,)))
        assert len(g) == 1 and g.index_of(0, 0) == 0

    def test_index_bijective_3x2(self):
        g = build_grid(ArrayGeometry(2, 2), AngleGrid.from_degrees(-10, 10, 3, [0, 5]))
        idx = [g.index_of(h, v) for h in range(3) for v in range(2)]
        assert sorted(idx) == list(range(6))
        for i in range(6):
            assert g.index_of(*g.hv_of(i)) == i

    def test_row_major_over_v_then_h(self):
        g = table_grid()
        assert g.index_of(3, 2) == 2 * 16 + 3

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            table_grid().index_of(16, 0)

    def test_unit_norm_all_beams(self):
        g = table_grid()
        assert np.max(np.abs(np.linalg.norm(g.beams, axis=1) - 1)) < 1e-12

    def test_inner_product_modulus_symmetric(self, rng):
        g = table_grid()
        for _ in range(50):
            a, b = rng.integers(0, 64, 2)
            assert abs(np.vdot(g.beams[a], g.beams[b])) == abs(np.vdot(g.beams[b], g.beams[a]))

    def test_immutable(self):
        g = table_grid()
        with pytest.raises(ValueError):
            g.beams[0, 0] = 0

    def test_rejects_uneven_angles(self):
        with pytest.raises(ValueError):
            AngleGrid((0.0, 0.1, 0.3), (0.0,))

    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            ArrayGeometry(0, 4)
        with pytest.raises(ValueError):
            ArrayGeometry(4, 4, -0.5, 0.5)

    def test_unknown_convention(self):
        with pytest.raises(ValueError):
            BeamGrid(ArrayGeometry(2, 2), AngleGrid((0.0,), (0.0,)), convention="xyz")

    def test_distance_matrix_matches_pairwise(self):
        g = table_grid()
        m = BeamIndexMetric(2.0, 0.5)
        dm = g.distance_matrix(m)
        for a, b in [(0, 63), (5, 17), (40, 40)]:
            assert dm[a, b] == pytest.approx(beam_distance(m, g.hv_of(a), g.hv_of(b)))


class TestBeamDistance:
    def test_examples(self):
        assert beam_distance(BeamIndexMetric(1, 1), (2, 3), (2, 3)) == 0
        assert beam_distance(BeamIndexMetric(1, 1), (0, 0), (3, 4)) == pytest.approx(5)
        assert beam_distance(BeamIndexMetric(4, 1), (2, 0), (0, 0)) == pytest.approx(1)

    def test_default_metric_from_spacing(self):
        m = default_metric(AngleGrid.from_degrees(0, 10, 4, [0, 5, 10]))
        assert (m.ell_h, m.ell_v) == (pytest.approx(4.0), 1.0)

    def test_rejects_nonpositive_weights(self):
        with pytest.raises(ValueError):
            BeamIndexMetric(0.0, 1.0)

    @given(st.lists(st.tuples(st.integers(0, 15), st.integers(0, 3)), min_size=3, max_size=3),
           st.floats(0.1, 100), st.floats(0.1, 100))
    def test_metric_axioms(self, pts, lh, lv):
        m = BeamIndexMetric(lh, lv)
        a, b, c = pts
        assert beam_distance(m, a, a) == 0
        assert beam_distance(m, a, b) == beam_distance(m, b, a)
        assert beam_distance(m, a, c) <= beam_distance(m, a, b) + beam_distance(m, b, c) + 1e-12
