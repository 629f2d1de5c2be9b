"""Batch experiments: every (policy, speed, seed) episode, aggregated per cell.

Layout of a run directory::

    manifest.json          config digest, versions, seeds, failures, file list
    episodes.csv           per-episode metrics (one row per episode and warmup)
    results.csv            mean/std over seeds per (policy, speed, warmup)
    per_slot/<policy>__<speed>__<seed>.csv
    snapshots/<policy>__<speed>__<seed>.json   (bayes_opt only)

Aggregates are always recomputed from the per-slot files, so ``verify`` can
reproduce them byte for byte.  Nothing time-dependent is written, which
makes reruns of the same config byte-identical.
"""

import csv
import io
import json
import logging
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .channel_sim import random_scenario
from .tracker import run_episode

log = logging.getLogger(__name__)

CSV_VERSION = 1
SLOT_COLUMNS = ("t", "n_beams", "chosen", "true_best", "chosen_rsrp_db", "best_rsrp_db",
                "proposed", "theta1", "theta2", "ell_h", "ell_v", "sigma")
EPISODE_COLUMNS = ("policy", "kind", "speed", "seed", "warmup",
                   "accuracy", "overhead", "rsrp_error_db")
RESULT_COLUMNS = ("policy", "kind", "speed", "warmup", "n_seeds", "n_failed",
                  "accuracy_mean", "accuracy_std", "overhead_mean", "overhead_std",
                  "rsrp_error_db_mean", "rsrp_error_db_std")
SECONDARY_WARMUP = 20


def episode_stem(policy, speed, seed):
    return f"{policy}__{speed}__{seed}"


def warmups_for(config):
    return tuple(sorted({w for w in (config.warmup, SECONDARY_WARMUP) if w < config.horizon}))


def _fmt(x):
    return repr(float(x))


def slot_csv_text(metrics):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SLOT_COLUMNS)
    for r in metrics.per_slot:
        hyper = [_fmt(x) for x in r.hyper] if r.hyper is not None else [""] * 5
        w.writerow([r.slot, len(r.proposed), r.chosen, r.true_best,
                    _fmt(r.chosen_rsrp_db), _fmt(r.best_rsrp_db),
                    " ".join(str(b) for b in r.proposed), *hyper])
    return buf.getvalue()


def snapshot_json_text(metrics, grid):
    H, V = grid.shape
    slots = {}
    for t, snap in sorted(metrics.snapshots.items()):
        slots[str(t)] = {
            "ei": snap["ei"].tolist(),
            "mean": snap["mean"].tolist(),
            "std": snap["std"].tolist(),
            "truth": snap["truth"].tolist(),
            "proposed": [int(b) for b in snap["proposed"]],
            "true_best": int(metrics.per_slot[t].true_best),
        }
    doc = {
        "grid_shape": [H, V],
        "azimuths_deg": np.rad2deg(grid.angles.azimuths).tolist(),
        "elevations_deg": np.rad2deg(grid.angles.elevations).tolist(),
        "slots": slots,
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def read_slot_csv(path):
    """Columns of a per-slot CSV as numpy arrays (``proposed`` stays a list of str)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    missing = [c for c in SLOT_COLUMNS[:6] if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    cols = {name: [row[i] for row in body] for i, name in enumerate(header)}
    out = {"proposed": cols.get("proposed", [])}
    for name in ("t", "n_beams", "chosen", "true_best"):
        out[name] = np.array([int(x) for x in cols[name]], dtype=np.int64)
    for name in ("chosen_rsrp_db", "best_rsrp_db"):
        out[name] = np.array([float(x) for x in cols[name]])
    return out


def metrics_from_columns(cols, n_beams, warmup):
    """(accuracy, overhead, rsrp_error_db) over slots >= warmup; same formulas as the tracker."""
    sel = cols["t"] >= warmup
    if not np.any(sel):
        raise ValueError(f"no slots at or after warmup {warmup}")
    acc = float(np.mean(cols["chosen"][sel] == cols["true_best"][sel]))
    ovh = float(np.mean(cols["n_beams"][sel] / n_beams))
    err = float(np.mean(cols["best_rsrp_db"][sel] - cols["chosen_rsrp_db"][sel]))
    return acc, ovh, err


@dataclass
class EpisodeOutput:
    policy: str
    speed: str
    seed: int
    slot_csv: str = None
    snapshot_json: str = None
    error: str = None


def run_task(config, speed, seed):
    """All policies on one (speed, seed) scenario, in config order.

    Policies with ``match_overhead_of`` copy the per-slot beamset sizes of the
    referenced episode, so the comparison is at exactly equal overhead.
    """
    grid = config.grid.build()
    scenario = random_scenario(config.scenario_for(speed), np.random.default_rng([seed, 0]), seed)
    done = {}
    outputs = []
    for spec in config.policies:
        policy = spec.policy
        out = EpisodeOutput(spec.name, speed, seed)
        outputs.append(out)
        if spec.match_overhead_of is not None:
            ref = done.get(spec.match_overhead_of)
            if ref is None:
                out.error = f"reference policy {spec.match_overhead_of!r} failed"
                continue
            policy = replace(policy, sizes=tuple(len(r.proposed) for r in ref.per_slot))
        snaps = config.snapshot_slots if policy.kind == "bayes_opt" else ()
        try:
            metrics = run_episode(policy, scenario, grid, config.horizon, seed=seed,
                                  snapshot_slots=snaps)
        except Exception as exc:  # recorded in the manifest; other cells continue
            out.error = f"{type(exc).__name__}: {exc}"
            log.warning("episode %s failed: %s", episode_stem(spec.name, speed, seed), out.error)
            continue
        done[spec.name] = metrics
        out.slot_csv = slot_csv_text(metrics)
        if metrics.snapshots:
            out.snapshot_json = snapshot_json_text(metrics, grid)
    return outputs


def _task_entry(args):
    config, speed, seed = args
    return run_task(config, speed, seed)


def _run_all(config, parallelism):
    tasks = [(config, speed, seed) for speed in config.speeds for seed in config.seeds]
    if parallelism <= 1 or len(tasks) <= 1:
        results = []
        for i, task in enumerate(tasks):
            results.append(_task_entry(task))
            log.info("task %d/%d done (%s, seed %d)", i + 1, len(tasks), task[1], task[2])
        return results
    with ProcessPoolExecutor(max_workers=min(parallelism, len(tasks))) as pool:
        return list(pool.map(_task_entry, tasks))


def _versions():
    import scipy
    try:
        import numba
        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    return {
        "beamtrack": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba_version,
        "kernel_backend": kernels.BACKEND,
    }


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def aggregate_texts(run_dir, manifest):
    """(episodes.csv text, results.csv text) recomputed from the per-slot files."""
    run_dir = Path(run_dir)
    n_beams = manifest["n_beams"]
    kinds = {p["name"]: p["kind"] for p in manifest["policies"]}
    failed = {(f["policy"], f["speed"], f["seed"]) for f in manifest["failures"]}
    ep = io.StringIO()
    ew = csv.writer(ep, lineterminator="\n")
    ew.writerow(EPISODE_COLUMNS)
    res = io.StringIO()
    rw = csv.writer(res, lineterminator="\n")
    rw.writerow(RESULT_COLUMNS)
    for name in kinds:
        for speed in manifest["speeds"]:
            per_warmup = {w: [] for w in manifest["warmups"]}
            n_failed = 0
            for seed in manifest["seeds"]:
                if (name, speed, seed) in failed:
                    n_failed += 1
                    continue
                cols = read_slot_csv(run_dir / "per_slot" / f"{episode_stem(name, speed, seed)}.csv")
                for w in manifest["warmups"]:
                    m = metrics_from_columns(cols, n_beams, w)
                    per_warmup[w].append(m)
                    ew.writerow([name, kinds[name], speed, seed, w, *(_fmt(x) for x in m)])
            for w in manifest["warmups"]:
                vals = np.array(per_warmup[w]).reshape(-1, 3)
                n = vals.shape[0]
                if n == 0:
                    mean = std = np.full(3, np.nan)
                else:
                    mean = vals.mean(axis=0)
                    std = vals.std(axis=0, ddof=1) if n > 1 else np.zeros(3)
                stats = [f"{x:.6f}" for pair in zip(mean, std) for x in pair]
                rw.writerow([name, kinds[name], speed, w, n, n_failed, *stats])
    return ep.getvalue(), res.getvalue()


def run_experiments(config, out_dir=None, parallelism=None):
    """Run every episode of ``config`` and write the run directory.

    Returns ``(run_dir, manifest)``; ``manifest["failures"]`` lists failed
    episodes (the CLI maps a non-empty list to exit code 1).
    """
    run_dir = Path(out_dir or config.output_dir)
    parallelism = config.parallelism if parallelism is None else parallelism
    grid = config.grid.build()
    log.info("running %d policies x %d speeds x %d seeds, horizon %d, parallelism %d",
             len(config.policies), len(config.speeds), len(config.seeds), config.horizon,
             parallelism)
    results = _run_all(config, parallelism)

    failures = []
    files = []
    for outputs in results:
        for out in outputs:
            stem = episode_stem(out.policy, out.speed, out.seed)
            if out.error is not None:
                failures.append({"policy": out.policy, "speed": out.speed, "seed": out.seed,
                                 "error": out.error})
                continue
            _write(run_dir / "per_slot" / f"{stem}.csv", out.slot_csv)
            files.append(f"per_slot/{stem}.csv")
            if out.snapshot_json is not None:
                _write(run_dir / "snapshots" / f"{stem}.json", out.snapshot_json)
                files.append(f"snapshots/{stem}.json")

    manifest = {
        "csv_version": CSV_VERSION,
        "slot_columns": list(SLOT_COLUMNS),
        "episode_columns": list(EPISODE_COLUMNS),
        "result_columns": list(RESULT_COLUMNS),
        "config_sha256": config.digest(),
        "config": config.canonical(),
        "versions": _versions(),
        "n_beams": len(grid),
        "grid_shape": list(grid.shape),
        "horizon": config.horizon,
        "warmups": list(warmups_for(config)),
        "seeds": list(config.seeds),
        "speeds": list(config.speeds),  # ordered; a JSON object would be key-sorted
        "speed_rates_deg": dict(config.speeds),
        "policies": [{"name": s.name, "kind": s.policy.kind} for s in config.policies],
        "failures": failures,
        "files": sorted(files),
    }
    episodes_text, results_text = aggregate_texts(run_dir, manifest)
    _write(run_dir / "episodes.csv", episodes_text)
    _write(run_dir / "results.csv", results_text)
    _write(run_dir / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return run_dir, manifest


def load_manifest(run_dir):
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; is this a run directory?")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def verify(run_dir):
    """List of problems (empty when the aggregates match the per-slot files)."""
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    problems = []
    for rel in manifest["files"]:
        if not (run_dir / rel).exists():
            problems.append(f"missing file {rel}")
    if problems:
        return problems
    try:
        episodes_text, results_text = aggregate_texts(run_dir, manifest)
    except (OSError, ValueError) as exc:
        return [f"cannot recompute aggregates: {exc}"]
    for name, text in (("episodes.csv", episodes_text), ("results.csv", results_text)):
        path = run_dir / name
        if not path.exists():
            problems.append(f"missing {name}")
        elif path.read_text(encoding="utf-8") != text:
            problems.append(f"{name} differs from recomputation")
    for rel in manifest["files"]:
        if rel.startswith("per_slot/"):
            cols = read_slot_csv(run_dir / rel)
            if len(cols["t"]) != manifest["horizon"]:
                problems.append(f"{rel}: {len(cols['t'])} rows, expected {manifest['horizon']}")
    return problems


def read_results(run_dir):
    """results.csv as a list of dicts with numeric fields converted."""
    with open(Path(run_dir) / "results.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k in RESULT_COLUMNS[3:]:
            row[k] = float(row[k]) if k not in ("warmup", "n_seeds", "n_failed") else int(row[k])
    return rows


def read_episodes(run_dir):
    with open(Path(run_dir) / "episodes.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["seed"] = int(row["seed"])
        row["warmup"] = int(row["warmup"])
        for k in ("accuracy", "overhead", "rsrp_error_db"):
            row[k] = float(row[k])
    return rows


def configure_logging(verbose=False):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
