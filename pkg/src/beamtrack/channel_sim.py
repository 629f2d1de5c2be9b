"""Synthetic multipath effective channel and RSRP measurements.

The BS-perceived channel at slot t is a row vector

    h_t = sum_l g_l * exp(1j * w_l * t) * conj(a(az_l(t), el_l(t)))

with ``a`` the sqrt(M)-scaled steering vector of :mod:`beamtrack.beam_grid`
and linear angular drift ``az_l(t) = az_l(0) + rate_l * t``.  When a sector
is given, the drifting angle is folded back into it by reflection so a UE
never leaves the area covered by the grid.
"""

from dataclasses import dataclass, field

import numpy as np

from .beam_grid import ArrayGeometry, steering_vector

RSRP_FLOOR_DB = -300.0

# dominant-path azimuth drift bound per speed class, degrees/slot
SPEED_RATES_DEG = {"slow": 0.25, "medium": 0.5, "fast": 0.75}


@dataclass(frozen=True)
class PathComponent:
    gain: complex
    azimuth_0: float
    elevation_0: float
    azimuth_rate: float = 0.0
    elevation_rate: float = 0.0
    gain_phase_rate: float = 0.0

    def __post_init__(self):
        if abs(self.gain) <= 0:
            raise ValueError("path gain must be non-zero")


@dataclass(frozen=True)
class ChannelScenario:
    paths: tuple
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    tx_power: float = 1.0
    noise_std_db: float = 0.5
    rng_seed: int = 0
    convention: str = "boresight"
    azimuth_sector: tuple = None
    elevation_sector: tuple = None

    def __post_init__(self):
        paths = tuple(self.paths)
        if not paths:
            raise ValueError("scenario needs at least one path")
        g0 = abs(paths[0].gain)
        if any(abs(p.gain) > g0 for p in paths[1:]):
            raise ValueError("paths must be ordered dominant first")
        if self.tx_power <= 0:
            raise ValueError("tx_power must be positive")
        if self.noise_std_db < 0:
            raise ValueError("noise_std_db must be non-negative")
        object.__setattr__(self, "paths", paths)


@dataclass(frozen=True)
class EffectiveChannel:
    slot: int
    h_bar: np.ndarray
    tx_power: float = 1.0


@dataclass(frozen=True)
class Observation:
    slot: int
    beam_index: int
    rsrp_db: float


def _reflect(x, bounds):
    if bounds is None:
        return x
    lo, hi = bounds
    width = hi - lo
    if width <= 0:
        return lo
    y = np.mod(x - lo, 2 * width)
    return lo + (y if y <= width else 2 * width - y)


def path_angles(scenario, path, t):
    az = _reflect(path.azimuth_0 + path.azimuth_rate * t, scenario.azimuth_sector)
    el = _reflect(path.elevation_0 + path.elevation_rate * t, scenario.elevation_sector)
    return az, el


def channel_at(scenario, t):
    if t < 0:
        raise ValueError("slot must be non-negative")
    h = np.zeros(scenario.geometry.n_antennas, dtype=complex)
    for p in scenario.paths:
        az, el = path_angles(scenario, p, t)
        a = steering_vector(scenario.geometry, az, el, scenario.convention)
        h += p.gain * np.exp(1j * p.gain_phase_rate * t) * np.conj(a)
    return EffectiveChannel(int(t), h, scenario.tx_power)


def _rsrp_db(power):
    power = np.asarray(power, dtype=float)
    out = np.full(power.shape, RSRP_FLOOR_DB)
    pos = power > 0
    out[pos] = 10.0 * np.log10(power[pos])
    return out


def rsrp_all_db(channel, grid):
    """True RSRP (dB) of every beam in the grid."""
    if channel.h_bar.shape[0] != grid.beams.shape[1]:
        raise ValueError(
            f"channel length {channel.h_bar.shape[0]} != beam length {grid.beams.shape[1]}")
    return _rsrp_db(channel.tx_power * np.abs(grid.beams @ channel.h_bar) ** 2)


def true_rsrp_db(channel, grid, beam_index):
    """``10 log10(rho |h b|^2)``; an exactly zero inner product gives ``RSRP_FLOOR_DB``.

    Evaluated through :func:`rsrp_all_db` so both agree to the last bit.
    """
    return float(rsrp_all_db(channel, grid)[beam_index])


def measure(scenario, channel, grid, beamset, rng=None, true_db=None, grid_noise=None):
    """Noisy dB-domain RSRP report for every beam of ``beamset`` (in the given order).

    Noise is drawn from ``rng``, one value per requested beam, unless
    ``grid_noise`` (one pre-drawn value per grid beam) is supplied.  Without
    either, the stream is seeded from ``(scenario.rng_seed, channel.slot)``.
    """
    beamset = [int(b) for b in beamset]
    if not beamset:
        raise ValueError("beamset must be non-empty")
    if true_db is None:
        true_db = rsrp_all_db(channel, grid)
    if grid_noise is not None:
        noise = np.asarray(grid_noise)[beamset]
    elif scenario.noise_std_db > 0:
        if rng is None:
            rng = np.random.default_rng([scenario.rng_seed, channel.slot])
        noise = rng.normal(0.0, scenario.noise_std_db, size=len(beamset))
    else:
        noise = np.zeros(len(beamset))
    return [Observation(channel.slot, b, float(true_db[b] + e)) for b, e in zip(beamset, noise)]


@dataclass
class ScenarioParams:
    """Episode-generator distribution; angles in degrees."""

    n_paths: int = 3
    gain_decay: float = 0.3
    azimuth_rate_max: float = SPEED_RATES_DEG["slow"]
    elevation_rate_ratio: float = 0.25
    secondary_rate_ratio: float = 1.0
    phase_rate_max: float = 0.2  # radians/slot
    azimuth_range: tuple = (-56.25, 56.25)
    elevation_range: tuple = (0.0, 22.5)
    reflect: bool = True
    tx_power: float = 1.0
    noise_std_db: float = 0.5
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    convention: str = "boresight"

    def validate(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 0 < self.gain_decay <= 1:
            raise ValueError("gain_decay must be in (0, 1]")
        if self.azimuth_rate_max < 0 or self.phase_rate_max < 0:
            raise ValueError("rate bounds must be non-negative")
        if self.noise_std_db < 0:
            raise ValueError("noise_std_db must be non-negative")


def random_scenario(params, rng, seed=0):
    """Draw a scenario.

    The random draws do not depend on the rate bounds, so two configs that
    differ only in ``azimuth_rate_max`` yield the same geometry with scaled
    mobility for the same rng state.
    """
    params.validate()
    az_lo, az_hi = np.deg2rad(params.azimuth_range)
    el_lo, el_hi = np.deg2rad(params.elevation_range)
    rate = np.deg2rad(params.azimuth_rate_max)
    paths = []
    for ell in range(params.n_paths):
        u = rng.uniform(size=6)
        amp = params.gain_decay ** ell
        gain = amp * np.exp(2j * np.pi * u[0])
        scale = 1.0 if ell == 0 else params.secondary_rate_ratio
        paths.append(PathComponent(
            gain=complex(gain),
            azimuth_0=float(az_lo + (az_hi - az_lo) * u[1]),
            elevation_0=float(el_lo + (el_hi - el_lo) * u[2]),
            azimuth_rate=float(scale * rate * (2 * u[3] - 1)),
            elevation_rate=float(scale * rate * params.elevation_rate_ratio * (2 * u[4] - 1)),
            gain_phase_rate=float(params.phase_rate_max * (2 * u[5] - 1)),
        ))
    return ChannelScenario(
        paths=tuple(paths),
        geometry=params.geometry,
        tx_power=params.tx_power,
        noise_std_db=params.noise_std_db,
        rng_seed=int(seed),
        convention=params.convention,
        azimuth_sector=(float(az_lo), float(az_hi)) if params.reflect else None,
        elevation_sector=(float(el_lo), float(el_hi)) if params.reflect else None,
    )
