"""DFT beam dictionary over an azimuth x elevation grid.

Angle convention
----------------
:func:`make_dft_beam` implements the planar-array DFT beam literally: the
horizontal phase progression is ``-2*pi*(d_H/lambda)*k*sin(el)*cos(az)`` and
the vertical one ``-2*pi*(d_V/lambda)*k*cos(el)``.  In that convention
``el`` is measured from the array's vertical axis and ``az`` from the array
plane, so broadside is ``(az, el) = (pi/2, pi/2)``.

Operator grids (e.g. azimuth ``-56.25 + 7.5 n`` degrees and downtilt
``{0, 7.5, 15, 22.5}`` degrees) are boresight-relative.  Plugged in as-is
they would make ``az`` and ``-az`` the same beam and collapse the ``el = 0``
row.  :class:`BeamGrid` therefore carries a ``convention``:

``"boresight"`` (default)
    grid angles are boresight azimuth / downtilt and are mapped to the
    formula's angles as ``az_f = pi/2 - az``, ``el_f = pi/2 - el``.
``"formula"``
    grid angles are passed to the formula unchanged.

Flattening: the beam vector is ``kron(horizontal, vertical)``, so antenna
``(m_h, m_v)`` sits at position ``m_h * M_V + m_v``.  Beam ordering in the
grid is row-major over ``(v, h)``: ``flat = v * H + h``.
"""

from dataclasses import dataclass, field

import numpy as np

CONVENTIONS = ("boresight", "formula")


@dataclass(frozen=True)
class ArrayGeometry:
    m_h: int = 16
    m_v: int = 8
    d_h_over_lambda: float = 0.5
    d_v_over_lambda: float = 0.5

    def __post_init__(self):
        if int(self.m_h) < 1 or int(self.m_v) < 1:
            raise ValueError(f"antenna counts must be >= 1, got {self.m_h}x{self.m_v}")
        if self.d_h_over_lambda <= 0 or self.d_v_over_lambda <= 0:
            raise ValueError("antenna spacings must be positive")

    @property
    def n_antennas(self):
        return self.m_h * self.m_v


def _is_even_increasing(x):
    if len(x) < 2:
        return True
    d = np.diff(x)
    return bool(np.all(d > 0) and np.allclose(d, d[0], rtol=1e-9, atol=1e-12))


@dataclass(frozen=True)
class AngleGrid:
    """Evenly spaced azimuths/elevations, radians."""

    azimuths: tuple
    elevations: tuple

    def __post_init__(self):
        az = np.asarray(self.azimuths, dtype=float)
        el = np.asarray(self.elevations, dtype=float)
        if az.size == 0 or el.size == 0:
            raise ValueError("angle grid must be non-empty")
        if not _is_even_increasing(az) or not _is_even_increasing(el):
            raise ValueError("grid angles must be strictly increasing and evenly spaced")
        object.__setattr__(self, "azimuths", tuple(az.tolist()))
        object.__setattr__(self, "elevations", tuple(el.tolist()))

    @classmethod
    def from_degrees(cls, az_start, az_step, az_count, elevations_deg):
        az = np.deg2rad(az_start + az_step * np.arange(az_count))
        return cls(tuple(az), tuple(np.deg2rad(np.asarray(elevations_deg, dtype=float))))

    @property
    def shape(self):
        return len(self.azimuths), len(self.elevations)

    def spacing(self):
        """(azimuth step, elevation step); a single-point axis reports 0."""
        def step(x):
            return x[1] - x[0] if len(x) > 1 else 0.0
        return step(self.azimuths), step(self.elevations)


def _to_formula_angles(azimuth, elevation, convention):
    if convention == "boresight":
        return np.pi / 2 - azimuth, np.pi / 2 - elevation
    if convention == "formula":
        return azimuth, elevation
    raise ValueError(f"unknown angle convention {convention!r}")


def make_dft_beam(geometry, azimuth, elevation):
    """Unit-norm DFT beam for formula angles ``(azimuth, elevation)``.

    Returns a complex vector of length ``M_H * M_V``
    (horizontal-major Kronecker order).
    """
    kh = np.arange(geometry.m_h)
    kv = np.arange(geometry.m_v)
    horiz = np.exp(-2j * np.pi * geometry.d_h_over_lambda * kh
                   * np.sin(elevation) * np.cos(azimuth)) / np.sqrt(geometry.m_h)
    vert = np.exp(-2j * np.pi * geometry.d_v_over_lambda * kv
                  * np.cos(elevation)) / np.sqrt(geometry.m_v)
    return np.kron(horiz, vert)


def steering_vector(geometry, azimuth, elevation, convention="boresight"):
    """Unnormalized (``sqrt(M)``-scaled) steering vector in grid convention."""
    az_f, el_f = _to_formula_angles(azimuth, elevation, convention)
    return make_dft_beam(geometry, az_f, el_f) * np.sqrt(geometry.n_antennas)


@dataclass(frozen=True)
class BeamIndexMetric:
    ell_h: float = 1.0
    ell_v: float = 1.0

    def __post_init__(self):
        if self.ell_h <= 0 or self.ell_v <= 0:
            raise ValueError("metric weights must be positive")


def beam_distance(metric, a, b):
    """Weighted Euclidean distance between two ``(h, v)`` index pairs."""
    dh = a[0] - b[0]
    dv = a[1] - b[1]
    return float(np.sqrt(dh * dh / metric.ell_h + dv * dv / metric.ell_v))


def default_metric(angles):
    """Initial metric weights from the grid spacing ratio, normalized to ell_v = 1."""
    daz, del_ = angles.spacing()
    if daz <= 0 or del_ <= 0:
        return BeamIndexMetric(1.0, 1.0)
    return BeamIndexMetric(ell_h=(daz / del_) ** 2, ell_v=1.0)


@dataclass(frozen=True, eq=False)
class BeamGrid:
    geometry: ArrayGeometry
    angles: AngleGrid
    convention: str = "boresight"
    beams: np.ndarray = field(init=False, repr=False)
    hv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown angle convention {self.convention!r}")
        H, V = self.angles.shape
        az = np.asarray(self.angles.azimuths)
        el = np.asarray(self.angles.elevations)
        beams = np.empty((H * V, self.geometry.n_antennas), dtype=complex)
        hv = np.empty((H * V, 2), dtype=np.int64)
        for v in range(V):
            for h in range(H):
                i = v * H + h
                az_f, el_f = _to_formula_angles(az[h], el[v], self.convention)
                beams[i] = make_dft_beam(self.geometry, az_f, el_f)
                hv[i] = (h, v)
        beams.setflags(write=False)
        hv.setflags(write=False)
        object.__setattr__(self, "beams", beams)
        object.__setattr__(self, "hv", hv)

    @property
    def shape(self):
        return self.angles.shape

    def __len__(self):
        return self.beams.shape[0]

    def index_of(self, h, v):
        H, V = self.shape
        if not (0 <= h < H and 0 <= v < V):
            raise IndexError(f"(h, v) = ({h}, {v}) outside {H}x{V} grid")
        return v * H + h

    def hv_of(self, index):
        return int(self.hv[index, 0]), int(self.hv[index, 1])

    def distance_matrix(self, metric, rows=None, cols=None):
        """Pairwise ``beam_distance`` between flat beam indices."""
        a = self.hv if rows is None else self.hv[np.asarray(rows)]
        b = self.hv if cols is None else self.hv[np.asarray(cols)]
        dh = a[:, None, 0] - b[None, :, 0]
        dv = a[:, None, 1] - b[None, :, 1]
        return np.sqrt(dh * dh / metric.ell_h + dv * dv / metric.ell_v)


def build_grid(geometry, angles, convention="boresight"):
    return BeamGrid(geometry, angles, convention)


def table_grid(geometry=None):
    """16 x 4 operator grid: azimuth -56.25 + 7.5 n deg, downtilt 0..22.5 deg."""
    angles = AngleGrid.from_degrees(-56.25, 7.5, 16, [0.0, 7.5, 15.0, 22.5])
    return build_grid(geometry or ArrayGeometry(), angles)
