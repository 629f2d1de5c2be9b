"""Static figures from a run directory: convergence curves and landscape snapshots."""

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import episode_stem, load_manifest, read_slot_csv  # noqa: E402


class PlotInputError(ValueError):
    """Requested data is not present in the run directory."""


def rolling_mean(x, window):
    """Trailing mean over up to ``window`` samples (shorter at the start)."""
    x = np.asarray(x, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def convergence_curves(run_dir, policy, window=None):
    """Per speed class: slot-wise mean over seeds of rolling accuracy, overhead, rolling error."""
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    window = window or manifest["config"]["rolling_window"]
    failed = {(f["policy"], f["speed"], f["seed"]) for f in manifest["failures"]}
    n_beams = manifest["n_beams"]
    curves = {}
    for speed in manifest["speeds"]:
        acc, ovh, err = [], [], []
        for seed in manifest["seeds"]:
            if (policy, speed, seed) in failed:
                continue
            path = run_dir / "per_slot" / f"{episode_stem(policy, speed, seed)}.csv"
            if not path.exists():
                raise PlotInputError(f"{path} not found")
            try:
                cols = read_slot_csv(path)
            except ValueError as exc:
                raise PlotInputError(str(exc)) from None
            acc.append(rolling_mean(cols["chosen"] == cols["true_best"], window))
            ovh.append(cols["n_beams"] / n_beams)
            err.append(rolling_mean(cols["best_rsrp_db"] - cols["chosen_rsrp_db"], window))
        if acc:
            curves[speed] = {
                "accuracy": np.mean(acc, axis=0),
                "overhead": np.mean(ovh, axis=0),
                "rsrp_error_db": np.mean(err, axis=0),
            }
    return curves


def plot_convergence(run_dir, out_dir=None, policies=None, window=None):
    """One three-panel figure per policy; returns the written paths."""
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    out_dir = Path(out_dir or run_dir / "figures")
    out_dir.mkdir(parents=True, exist_ok=True)
    names = policies or [p["name"] for p in manifest["policies"]]
    known = {p["name"] for p in manifest["policies"]}
    window = window or manifest["config"]["rolling_window"]
    written = []
    for name in names:
        if name not in known:
            raise PlotInputError(f"policy {name!r} not in run (have {sorted(known)})")
        curves = convergence_curves(run_dir, name, window)
        fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
        labels = (("accuracy", f"accuracy (rolling {window})"),
                  ("overhead", "overhead |B_t|/|grid|"),
                  ("rsrp_error_db", f"RSRP error, dB (rolling {window})"))
        for ax, (key, label) in zip(axes, labels):
            for speed, c in curves.items():
                ax.plot(np.arange(c[key].size), c[key], label=speed, lw=1.2)
            ax.set_ylabel(label)
            ax.grid(alpha=0.3)
        axes[0].legend(title="speed")
        axes[-1].set_xlabel("slot")
        fig.suptitle(name)
        fig.tight_layout()
        path = out_dir / f"convergence__{name}.png"
        fig.savefig(path, dpi=120, metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    return written


def load_snapshots(run_dir, policy, speed, seed):
    path = Path(run_dir) / "snapshots" / f"{episode_stem(policy, speed, seed)}.json"
    if not path.exists():
        raise PlotInputError(f"no snapshots for {policy}/{speed}/seed {seed} ({path})")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _edges(x):
    step = x[1] - x[0] if len(x) > 1 else 1.0
    return x[0] - 0.5 * step, x[-1] + 0.5 * step


def _heatmap(ax, values, shape, az, el, title, marks, marker, color):
    H, V = shape
    img = np.asarray(values).reshape(V, H)  # flat index = v * H + h
    az_lo, az_hi = _edges(az)
    el_lo, el_hi = _edges(el)
    im = ax.imshow(img, origin="upper", aspect="auto", cmap="viridis",
                   extent=(az_lo, az_hi, el_hi, el_lo))
    for b in marks:
        ax.plot(az[b % H], el[b // H], marker, color=color, ms=8, mfc="none", mew=1.8)
    ax.set_title(title)
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("downtilt (deg)")
    plt.colorbar(im, ax=ax)


def plot_landscape(run_dir, slots, policy=None, speed=None, seed=None, out_dir=None):
    """EI / posterior mean / true RSRP heatmaps for each requested slot."""
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    if policy is None:
        bo = [p["name"] for p in manifest["policies"] if p["kind"] == "bayes_opt"]
        if not bo:
            raise PlotInputError("run has no bayes_opt policy")
        policy = bo[0]
    speed = speed or next(iter(manifest["speeds"]))
    seed = manifest["seeds"][0] if seed is None else seed
    doc = load_snapshots(run_dir, policy, speed, seed)
    shape = tuple(doc["grid_shape"])
    az = np.asarray(doc["azimuths_deg"])
    el = np.asarray(doc["elevations_deg"])
    out_dir = Path(out_dir or run_dir / "figures")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t in slots:
        snap = doc["slots"].get(str(int(t)))
        if snap is None:
            raise PlotInputError(f"slot {t} was not logged (logged: {sorted(map(int, doc['slots']))})")
        fig, axes = plt.subplots(1, 3, figsize=(15, 3.6))
        _heatmap(axes[0], snap["ei"], shape, az, el, "single-beam EI (o: measured)",
                 snap["proposed"], "o", "w")
        _heatmap(axes[1], snap["mean"], shape, az, el, "posterior mean (x: predicted best)",
                 [int(np.argmax(snap["mean"]))], "x", "r")
        _heatmap(axes[2], snap["truth"], shape, az, el, "true RSRP, dB (x: true best)",
                 [snap["true_best"]], "x", "r")
        fig.suptitle(f"{policy}, {speed}, seed {seed}, slot {t}")
        fig.tight_layout()
        path = out_dir / f"landscape__{episode_stem(policy, speed, seed)}__t{int(t)}.png"
        fig.savefig(path, dpi=110, metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    return written
