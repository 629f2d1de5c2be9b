"""Per-slot beam tracking loop and competing policies.

Every policy proposes a beamset ``B_t``, the UE reports noisy dB RSRP for each
beam in it, and the beam with the highest report is used for the slot (ties
go to the lowest flat index).  Accuracy, overhead and RSRP error are always
computed against the noiseless ground truth.

Measurement noise is drawn per ``(seed, slot)`` for the whole grid and then
indexed by beam, so different policies run with the same seed see the same
noise on the beams they share.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate

from .acquisition import (
    DEFAULT_MC_SAMPLES,
    OverheadPenalty,
    choose_beamset,
    ei_single_closed_form,
    make_context,
)
from .beam_grid import BeamIndexMetric, default_metric
from .channel_sim import channel_at, measure, rsrp_all_db
from .gp_core import (
    BeamKernelParams,
    GpModel,
    HyperBounds,
    PriorMean,
    TimeKernelParams,
    fit_hyperparameters,
    posterior_at_slot,
    zero_prior,
)

POLICY_KINDS = ("bayes_opt", "spline", "spatial_gpr", "random_subset", "oracle_full_sweep")


@dataclass(frozen=True)
class BoSettings:
    theta1: float = 100.0
    theta2: float = 50.0
    ell_h: float = None  # None: from grid spacing
    ell_v: float = None
    sigma: float = 1.0
    nu: float = 1.5
    window: int = 256
    restarts: int = 4
    refit_restarts: int = 1  # starts used by cadence refits once the buffer is large
    fit_maxiter: int = 50
    fit_min_points: int = 8
    refit_every: int = 5
    dense_refit_below: int = 64
    mc_samples: int = DEFAULT_MC_SAMPLES
    bounds: HyperBounds = field(default_factory=HyperBounds)
    prior_mean: tuple = None  # per-beam values; None is the zero prior


@dataclass(frozen=True)
class TrackerPolicy:
    kind: str
    name: str = None
    phi: float = 1.0
    penalty: OverheadPenalty = field(default_factory=OverheadPenalty)
    bo: BoSettings = field(default_factory=BoSettings)
    selection: str = "measured"  # spline / spatial_gpr: "measured" or "interpolated"
    sizes: tuple = None  # random_subset: per-slot beamset sizes (overrides phi)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind in ("spline", "spatial_gpr", "random_subset") and not 0 < self.phi <= 1:
            raise ValueError(f"phi must be in (0, 1], got {self.phi}")
        if self.selection not in ("measured", "interpolated"):
            raise ValueError(f"unknown selection rule {self.selection!r}")
        if self.sizes is not None:
            if self.kind != "random_subset":
                raise ValueError("a size schedule only applies to random_subset")
            if any(int(k) < 1 for k in self.sizes):
                raise ValueError("scheduled beamset sizes must be >= 1")
            object.__setattr__(self, "sizes", tuple(int(k) for k in self.sizes))
        if self.name is None:
            object.__setattr__(self, "name", self.kind)


@dataclass
class SlotRecord:
    slot: int
    proposed: tuple
    measured: list
    chosen: int
    true_best: int
    chosen_rsrp_db: float
    best_rsrp_db: float
    hyper: tuple = None  # (theta1, theta2, ell_h, ell_v, sigma) after the slot's refit
    j_values: tuple = None


@dataclass
class EpisodeMetrics:
    accuracy: float
    overhead: float
    rsrp_error_db: float
    per_slot: list
    n_beams: int = 0
    warmup: int = 0
    snapshots: dict = None


def compute_metrics(records, n_beams, warmup=0):
    if len(records) <= warmup:
        raise ValueError(f"need more than {warmup} records, got {len(records)}")
    rec = records[warmup:]
    acc = np.mean([r.chosen == r.true_best for r in rec])
    ovh = np.mean([len(r.proposed) / n_beams for r in rec])
    err = np.mean([r.best_rsrp_db - r.chosen_rsrp_db for r in rec])
    return EpisodeMetrics(float(acc), float(ovh), float(err), list(records), n_beams, warmup)


def select_measured(observations):
    """Beam with the highest report; ties to the lowest index."""
    best = None
    for o in observations:
        if best is None or o.rsrp_db > best.rsrp_db or (
                o.rsrp_db == best.rsrp_db and o.beam_index < best.beam_index):
            best = o
    return best.beam_index


def slot_noise(noise_std_db, n_beams, seed, t):
    if noise_std_db <= 0:
        return np.zeros(n_beams)
    return np.random.default_rng([int(seed), int(t), 1]).normal(0.0, noise_std_db, n_beams)


def subgrid(grid, phi):
    """Regular sub-grid keeping every elevation row and ``ceil(phi * H)`` azimuth columns."""
    H, V = grid.shape
    n_cols = int(np.ceil(phi * H - 1e-9))
    if n_cols < 2 and H >= 2:
        n_cols = H  # degenerate: fall back to full rows
    n_cols = min(max(n_cols, 1), H)
    cols = np.unique(np.round(np.linspace(0, H - 1, n_cols)).astype(int))
    beams = [grid.index_of(h, v) for v in range(V) for h in cols]
    return cols, tuple(sorted(beams))


def spline_surface(grid, cols, observations):
    """Rectilinear spline of measured dB RSRP over (h, v), evaluated on the full grid."""
    H, V = grid.shape
    z = np.empty((len(cols), V))
    pos = {int(c): i for i, c in enumerate(cols)}
    for o in observations:
        h, v = grid.hv_of(o.beam_index)
        z[pos[h], v] = o.rsrp_db
    hs = np.arange(H, dtype=float)
    x = np.asarray(cols, dtype=float)
    if len(cols) == 1:
        surf = np.repeat(z, H, axis=0)
    elif V == 1:
        kx = min(3, len(cols) - 1)
        surf = interpolate.make_interp_spline(x, z[:, 0], k=kx)(hs)[:, None]
    else:
        kx = min(3, len(cols) - 1)
        ky = 3 if V >= 4 else 1
        spl = interpolate.RectBivariateSpline(x, np.arange(V, dtype=float), z, kx=kx, ky=ky, s=0)
        surf = spl(hs, np.arange(V, dtype=float))
    # surf is (H, V); flatten to beam order v * H + h
    return surf.T.reshape(-1)


def _initial_model(policy, grid):
    bo = policy.bo
    metric = default_metric(grid.angles)
    ell_h = bo.ell_h if bo.ell_h is not None else metric.ell_h
    ell_v = bo.ell_v if bo.ell_v is not None else metric.ell_v
    prior = zero_prior(len(grid)) if bo.prior_mean is None else PriorMean(bo.prior_mean)
    return GpModel(
        grid_shape=grid.shape,
        time_params=TimeKernelParams(bo.theta1, bo.theta2),
        beam_params=BeamKernelParams(bo.nu, BeamIndexMetric(ell_h, ell_v)),
        noise_std=bo.sigma,
        prior_mean=prior,
        window=bo.window,
        bounds=bo.bounds,
        fit_min_points=bo.fit_min_points,
        restarts=bo.restarts,
        fit_maxiter=bo.fit_maxiter,
    )


def _mc_seed(seed, t):
    return (int(seed) * 1_000_003 + int(t)) % (2 ** 63)


def run_episode(policy, scenario, grid, horizon, seed=0, warmup=0, snapshot_slots=()):
    """Run ``policy`` for ``horizon`` slots and return its metrics.

    Fully determined by ``(policy, scenario, grid, horizon, seed)``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if policy.sizes is not None and len(policy.sizes) < horizon:
        raise ValueError(f"size schedule covers {len(policy.sizes)} slots, horizon is {horizon}")
    n_beams = len(grid)
    policy_rng = np.random.default_rng([int(seed), 2])
    records = []
    snapshots = {}
    snapshot_slots = set(int(s) for s in snapshot_slots)
    model = _initial_model(policy, grid) if policy.kind in ("bayes_opt",) else None

    if policy.kind in ("spline", "spatial_gpr"):
        cols, fixed_set = subgrid(grid, policy.phi)
    elif policy.kind == "oracle_full_sweep":
        fixed_set = tuple(range(n_beams))

    for t in range(horizon):
        chan = channel_at(scenario, t)
        truth = rsrp_all_db(chan, grid)
        noise = slot_noise(scenario.noise_std_db, n_beams, seed, t)
        true_best = int(np.argmax(truth))
        j_values = None
        hyper = None

        if policy.kind == "bayes_opt":
            post = posterior_at_slot(model, grid, t)
            ctx = make_context(post, policy.bo.mc_samples, _mc_seed(seed, t))
            choice = choose_beamset(ctx, policy.penalty)
            proposed = tuple(choice.beams)
            j_values = choice.j_values
            if t in snapshot_slots:
                snapshots[t] = {
                    "ei": ei_single_closed_form(post.mean, post.std, ctx.f_star),
                    "mean": post.mean.copy(),
                    "std": post.std.copy(),
                    "truth": truth.copy(),
                    "proposed": np.array(proposed),
                }
        elif policy.kind == "random_subset":
            if policy.sizes is not None:
                k = min(policy.sizes[t], n_beams)
            else:
                k = max(1, int(round(policy.phi * n_beams)))
            proposed = tuple(int(b) for b in policy_rng.choice(n_beams, size=k, replace=False))
        else:
            proposed = fixed_set

        measured = measure(scenario, chan, grid, proposed, true_db=truth, grid_noise=noise)
        chosen = select_measured(measured)

        if policy.kind == "bayes_opt":
            model = model.with_observations(measured)
            if model.n_obs < policy.bo.dense_refit_below:
                model = fit_hyperparameters(model, seed=_mc_seed(seed, t))
            elif t % max(policy.bo.refit_every, 1) == 0:
                model = fit_hyperparameters(model, seed=_mc_seed(seed, t),
                                            restarts=policy.bo.refit_restarts)
            hyper = tuple(float(x) for x in model.hyperparameters())
        elif policy.kind in ("spline", "spatial_gpr"):
            if policy.kind == "spline":
                surf = spline_surface(grid, cols, measured)
            else:
                surf, hyper = _spatial_gpr_surface(policy, grid, measured)
            if policy.selection == "interpolated":
                chosen = int(np.argmax(surf))

        records.append(SlotRecord(
            slot=t, proposed=proposed, measured=measured, chosen=int(chosen),
            true_best=true_best, chosen_rsrp_db=float(truth[chosen]),
            best_rsrp_db=float(truth[true_best]), hyper=hyper, j_values=j_values))

    out = compute_metrics(records, n_beams, warmup)
    out.snapshots = snapshots or None
    return out


def _spatial_gpr_surface(policy, grid, measured):
    """Beam-only GP on the current slot's reports (all at one slot, so time drops out)."""
    bo = policy.bo
    model = _initial_model(policy, grid)
    model = GpModel(
        grid_shape=model.grid_shape,
        time_params=TimeKernelParams(bo.theta1, 1.0),
        beam_params=model.beam_params,
        noise_std=bo.sigma,
        prior_mean=model.prior_mean,
        window=max(len(measured), 1),
        bounds=bo.bounds,
        fit_min_points=bo.fit_min_points,
        restarts=1,
        fit_maxiter=bo.fit_maxiter,
    ).with_observations(measured)
    model = fit_hyperparameters(model)
    post = posterior_at_slot(model, grid, measured[0].slot)
    return post.mean, tuple(float(x) for x in model.hyperparameters())
