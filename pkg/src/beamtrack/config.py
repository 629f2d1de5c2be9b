"""Experiment configuration: YAML file -> validated :class:`ExperimentConfig`.

Every validation error carries the source line of the offending key so a
typo in a long config file can be found quickly.  See
``configs/default.yaml`` for the documented defaults.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .acquisition import OverheadPenalty
from .beam_grid import CONVENTIONS, AngleGrid, ArrayGeometry, BeamGrid
from .channel_sim import SPEED_RATES_DEG, ScenarioParams
from .gp_core import HyperBounds
from .tracker import POLICY_KINDS, BoSettings, TrackerPolicy


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based (None when unknown)."""

    def __init__(self, message, line=None, source="<config>"):
        super().__init__(message)
        self.message = message
        self.line = line
        self.source = source

    def __str__(self):
        where = f"{self.source}:{self.line}" if self.line is not None else self.source
        return f"{where}: {self.message}"


def _node_lines(node, path=(), out=None):
    """Map every key path in a composed YAML tree to its 1-based line."""
    if out is None:
        out = {}
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            k = path + (key.value,)
            _node_lines(value, k, out)
            out[k] = key.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _node_lines(item, path + (i,), out)
    return out


class _Reader:
    """Typed access to a nested dict, raising :class:`ConfigError` with line numbers."""

    def __init__(self, lines, source):
        self.lines = lines
        self.source = source

    def fail(self, path, message):
        p = tuple(path)
        while p and p not in self.lines:
            p = p[:-1]
        label = ".".join(str(x) for x in path) or "<root>"
        raise ConfigError(f"{label}: {message}", self.lines.get(p), self.source)

    def mapping(self, data, path, allowed):
        if data is None:
            return {}
        if not isinstance(data, dict):
            self.fail(path, "expected a mapping")
        for key in data:
            if key not in allowed:
                self.fail(tuple(path) + (key,),
                          f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return data

    def number(self, data, path, key, default, *, integer=False, lo=None, hi=None,
               lo_open=False):
        if key not in data:
            return default
        v = data[key]
        p = tuple(path) + (key,)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(p, f"expected a number, got {v!r}")
        if integer:
            if float(v) != int(v):
                self.fail(p, f"expected an integer, got {v!r}")
            v = int(v)
        else:
            v = float(v)
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.fail(p, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
        if hi is not None and v > hi:
            self.fail(p, f"must be <= {hi}, got {v}")
        return v

    def choice(self, data, path, key, default, options):
        if key not in data:
            return default
        v = data[key]
        if v not in options:
            self.fail(tuple(path) + (key,), f"must be one of {list(options)}, got {v!r}")
        return v

    def number_list(self, data, path, key, default, integer=False):
        if key not in data:
            return default
        v = data[key]
        p = tuple(path) + (key,)
        if not isinstance(v, list) or not v:
            self.fail(p, "expected a non-empty list")
        return tuple(self.number({i: x for i, x in enumerate(v)}, p, i, None, integer=integer)
                     for i in range(len(v)))


@dataclass(frozen=True)
class GridSpec:
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    azimuth_start_deg: float = -56.25
    azimuth_step_deg: float = 7.5
    azimuth_count: int = 16
    elevations_deg: tuple = (0.0, 7.5, 15.0, 22.5)
    convention: str = "boresight"

    def build(self):
        angles = AngleGrid.from_degrees(self.azimuth_start_deg, self.azimuth_step_deg,
                                        self.azimuth_count, self.elevations_deg)
        return BeamGrid(self.geometry, angles, self.convention)


@dataclass(frozen=True)
class PolicySpec:
    """A tracker policy plus an optional overhead-matching reference."""

    policy: TrackerPolicy
    match_overhead_of: str = None

    @property
    def name(self):
        return self.policy.name


@dataclass(frozen=True)
class ExperimentConfig:
    horizon: int = 500
    warmup: int = 0
    seeds: tuple = tuple(range(50))
    grid: GridSpec = field(default_factory=GridSpec)
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    speeds: dict = field(default_factory=lambda: dict(SPEED_RATES_DEG))
    policies: tuple = ()
    rolling_window: int = 20
    snapshot_slots: tuple = (0, 30)
    parallelism: int = 1
    output_dir: str = "runs/default"

    def with_seed_offset(self, offset):
        return replace(self, seeds=tuple(s + int(offset) for s in self.seeds))

    def scenario_for(self, speed):
        """Scenario distribution of one speed class, on this config's array."""
        return replace(self.scenario, azimuth_rate_max=float(self.speeds[speed]),
                       geometry=self.grid.geometry, convention=self.grid.convention)

    def policy(self, name):
        for spec in self.policies:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def canonical(self):
        """JSON-ready description of everything that affects outputs."""
        d = asdict(self)
        for key in ("parallelism", "output_dir"):
            d.pop(key)
        return json.loads(json.dumps(d, default=list))

    def digest(self):
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_TOP_KEYS = {"horizon", "warmup", "seeds", "grid", "scenario", "speeds", "policies",
             "plots", "parallelism", "output_dir"}
_GRID_KEYS = {"m_h", "m_v", "d_h_over_lambda", "d_v_over_lambda", "azimuth_start_deg",
              "azimuth_step_deg", "azimuth_count", "elevations_deg", "convention"}
_SCENARIO_KEYS = {"n_paths", "gain_decay", "elevation_rate_ratio", "secondary_rate_ratio",
                  "phase_rate_max", "azimuth_range", "elevation_range", "reflect",
                  "tx_power", "noise_std_db"}
_BO_KEYS = {f.name for f in fields(BoSettings)}
_POLICY_KEYS = {
    "bayes_opt": {"penalty", "bo"},
    "spline": {"phi", "selection"},
    "spatial_gpr": {"phi", "selection", "bo"},
    "random_subset": {"phi", "match_overhead_of"},
    "oracle_full_sweep": set(),
}


def _parse_grid(r, data):
    path = ("grid",)
    g = r.mapping(data, path, _GRID_KEYS)
    d = GridSpec()
    try:
        geometry = ArrayGeometry(
            m_h=r.number(g, path, "m_h", d.geometry.m_h, integer=True, lo=1),
            m_v=r.number(g, path, "m_v", d.geometry.m_v, integer=True, lo=1),
            d_h_over_lambda=r.number(g, path, "d_h_over_lambda", d.geometry.d_h_over_lambda,
                                     lo=0, lo_open=True),
            d_v_over_lambda=r.number(g, path, "d_v_over_lambda", d.geometry.d_v_over_lambda,
                                     lo=0, lo_open=True),
        )
        spec = GridSpec(
            geometry=geometry,
            azimuth_start_deg=r.number(g, path, "azimuth_start_deg", d.azimuth_start_deg),
            azimuth_step_deg=r.number(g, path, "azimuth_step_deg", d.azimuth_step_deg,
                                      lo=0, lo_open=True),
            azimuth_count=r.number(g, path, "azimuth_count", d.azimuth_count, integer=True, lo=1),
            elevations_deg=r.number_list(g, path, "elevations_deg", d.elevations_deg),
            convention=r.choice(g, path, "convention", d.convention, CONVENTIONS),
        )
        spec.build()
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        r.fail(path, str(exc))
    return spec


def _parse_range(r, data, path, key, default):
    if key not in data:
        return default
    v = r.number_list(data, path, key, None)
    if len(v) != 2 or v[0] > v[1]:
        r.fail(tuple(path) + (key,), "expected [low, high] with low <= high")
    return v


def _parse_scenario(r, data):
    path = ("scenario",)
    s = r.mapping(data, path, _SCENARIO_KEYS)
    d = ScenarioParams()
    reflect = s.get("reflect", d.reflect)
    if not isinstance(reflect, bool):
        r.fail(path + ("reflect",), "expected true or false")
    params = ScenarioParams(
        n_paths=r.number(s, path, "n_paths", d.n_paths, integer=True, lo=1),
        gain_decay=r.number(s, path, "gain_decay", d.gain_decay, lo=0, lo_open=True, hi=1),
        elevation_rate_ratio=r.number(s, path, "elevation_rate_ratio", d.elevation_rate_ratio,
                                      lo=0),
        secondary_rate_ratio=r.number(s, path, "secondary_rate_ratio", d.secondary_rate_ratio,
                                      lo=0),
        phase_rate_max=r.number(s, path, "phase_rate_max", d.phase_rate_max, lo=0),
        azimuth_range=_parse_range(r, s, path, "azimuth_range", d.azimuth_range),
        elevation_range=_parse_range(r, s, path, "elevation_range", d.elevation_range),
        reflect=reflect,
        tx_power=r.number(s, path, "tx_power", d.tx_power, lo=0, lo_open=True),
        noise_std_db=r.number(s, path, "noise_std_db", d.noise_std_db, lo=0),
    )
    return params


def _parse_speeds(r, data):
    if data is None:
        return dict(SPEED_RATES_DEG)
    if not isinstance(data, dict) or not data:
        r.fail(("speeds",), "expected a non-empty mapping of speed name -> deg/slot")
    out = {}
    for name in data:
        out[str(name)] = r.number(data, ("speeds",), name, None, lo=0)
    return out


def _parse_bo(r, data, path):
    b = r.mapping(data, path, _BO_KEYS)
    d = BoSettings()
    kw = {}
    for f in fields(BoSettings):
        if f.name not in b or f.name in ("bounds", "prior_mean"):
            continue
        integer = isinstance(getattr(d, f.name), int)
        if f.name in ("ell_h", "ell_v") and b[f.name] is None:
            kw[f.name] = None
            continue
        lo, lo_open = (1, False) if integer else (0, True)
        kw[f.name] = r.number(b, path, f.name, None, integer=integer, lo=lo, lo_open=lo_open)
    if "prior_mean" in b and b["prior_mean"] is not None:
        kw["prior_mean"] = r.number_list(b, path, "prior_mean", None)
    if "bounds" in b:
        bp = tuple(path) + ("bounds",)
        bd = r.mapping(b["bounds"], bp, {"theta1", "theta2", "ell", "sigma"})
        hb = HyperBounds()
        kw["bounds"] = HyperBounds(**{
            k: _parse_range(r, bd, bp, k, getattr(hb, k)) for k in ("theta1", "theta2", "ell", "sigma")})
        for k in ("theta1", "theta2", "ell", "sigma"):
            if getattr(kw["bounds"], k)[0] <= 0:
                r.fail(bp + (k,), "bounds must be positive")
    return BoSettings(**kw)


def _parse_policy(r, data, i, known):
    path = ("policies", i)
    if not isinstance(data, dict):
        r.fail(path, "expected a mapping with at least 'kind'")
    kind = data.get("kind")
    if kind not in POLICY_KINDS:
        r.fail(path + ("kind",), f"must be one of {list(POLICY_KINDS)}, got {kind!r}")
    p = r.mapping(data, path, {"name", "kind"} | _POLICY_KEYS[kind])
    name = str(p.get("name", kind))
    if name in known:
        r.fail(path + ("name",), f"duplicate policy name {name!r}")
    kw = {"kind": kind, "name": name}
    if "phi" in p:
        kw["phi"] = r.number(p, path, "phi", None, lo=0, lo_open=True, hi=1)
    if "selection" in p:
        kw["selection"] = r.choice(p, path, "selection", None, ("measured", "interpolated"))
    if "penalty" in p:
        pp = path + ("penalty",)
        pen = r.mapping(p["penalty"], pp, {"c1", "c2", "n_max"})
        dp = OverheadPenalty()
        kw["penalty"] = OverheadPenalty(
            c1=r.number(pen, pp, "c1", dp.c1, lo=0),
            c2=r.number(pen, pp, "c2", dp.c2, lo=0),
            n_max=r.number(pen, pp, "n_max", dp.n_max, integer=True, lo=1),
        )
    if "bo" in p:
        kw["bo"] = _parse_bo(r, p["bo"], path + ("bo",))
    match = p.get("match_overhead_of")
    if match is not None:
        if match not in known:
            r.fail(path + ("match_overhead_of",),
                   f"{match!r} is not a policy listed before this one")
        if "phi" in p:
            r.fail(path + ("phi",), "give either phi or match_overhead_of, not both")
    return PolicySpec(TrackerPolicy(**kw), match)


def parse_config(text, source="<config>"):
    """Parse and validate YAML ``text``."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"YAML syntax error: {problem}", line, source) from None
    r = _Reader(_node_lines(node) if node is not None else {}, source)
    top = r.mapping(data, (), _TOP_KEYS)
    d = ExperimentConfig()

    if "seeds" in top:
        raw = top["seeds"]
        if isinstance(raw, dict):
            sd = r.mapping(raw, ("seeds",), {"start", "count"})
            start = r.number(sd, ("seeds",), "start", 0, integer=True)
            count = r.number(sd, ("seeds",), "count", None, integer=True, lo=1)
            if count is None:
                r.fail(("seeds",), "seed range needs 'count'")
            seeds = tuple(range(start, start + count))
        else:
            seeds = r.number_list(top, (), "seeds", None, integer=True)
            if len(set(seeds)) != len(seeds):
                r.fail(("seeds",), "seeds must be distinct")
    else:
        seeds = d.seeds

    policies = []
    raw = top.get("policies")
    if not isinstance(raw, list) or not raw:
        r.fail(("policies",), "expected a non-empty list of policies")
    for i, item in enumerate(raw):
        policies.append(_parse_policy(r, item, i, {p.name for p in policies}))

    plots = r.mapping(top.get("plots"), ("plots",), {"rolling_window", "snapshot_slots"})
    horizon = r.number(top, (), "horizon", d.horizon, integer=True, lo=1)
    warmup = r.number(top, (), "warmup", d.warmup, integer=True, lo=0)
    if warmup >= horizon:
        r.fail(("warmup",), f"must be smaller than horizon ({horizon})")
    snapshot_slots = (r.number_list(plots, ("plots",), "snapshot_slots", d.snapshot_slots,
                                    integer=True) if plots.get("snapshot_slots") != [] else ())
    output_dir = top.get("output_dir", d.output_dir)
    if not isinstance(output_dir, str):
        r.fail(("output_dir",), "expected a path string")

    return ExperimentConfig(
        horizon=horizon,
        warmup=warmup,
        seeds=seeds,
        grid=_parse_grid(r, top.get("grid")),
        scenario=_parse_scenario(r, top.get("scenario")),
        speeds=_parse_speeds(r, top.get("speeds")),
        policies=tuple(policies),
        rolling_window=r.number(plots, ("plots",), "rolling_window", d.rolling_window,
                                integer=True, lo=1),
        snapshot_slots=snapshot_slots,
        parallelism=r.number(top, (), "parallelism", d.parallelism, integer=True, lo=1),
        output_dir=output_dir,
    )


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))
