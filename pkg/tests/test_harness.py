import json

import numpy as np
import pytest

from beamtrack import harness
from beamtrack.cli import main
from beamtrack.config import ConfigError, load_config, parse_config
from beamtrack.harness import read_results, read_slot_csv, run_experiments, verify
from beamtrack.plots import PlotInputError, convergence_curves, load_snapshots, plot_landscape

TINY = """
horizon: 6
seeds: [3]
speeds: {slow: 0.25}
scenario: {noise_std_db: 0.0}
policies:
  - name: sweep
    kind: oracle_full_sweep
"""

SMALL = """
horizon: 12
seeds: [0, 1]
speeds: {slow: 0.25, fast: 0.75}
scenario: {noise_std_db: 0.0}
policies:
  - name: bo
    kind: bayes_opt
    penalty: {c1: 0.2, n_max: 16}
  - name: matched
    kind: random_subset
    match_overhead_of: bo
  - name: spline
    kind: spline
    phi: 0.5
  - name: sweep
    kind: oracle_full_sweep
plots:
  snapshot_slots: [0, 5]
"""


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small") / "run"
    run_dir, manifest = run_experiments(parse_config(SMALL), out_dir=out)
    return run_dir, manifest


class TestConfig:
    def test_defaults_file_parses(self):
        cfg = load_config("configs/default.yaml")
        assert cfg.horizon == 500 and len(cfg.seeds) == 50
        assert list(cfg.speeds) == ["slow", "medium", "fast"]
        assert cfg.policy("random_matched").match_overhead_of == "bo_low_overhead"

    def test_seed_range(self):
        cfg = parse_config(TINY.replace("seeds: [3]", "seeds: {start: 10, count: 3}"))
        assert cfg.seeds == (10, 11, 12)
        assert cfg.with_seed_offset(5).seeds == (15, 16, 17)

    @pytest.mark.parametrize("bad, line, fragment", [
        ("horizon: 0", 2, "horizon"),
        ("horizon: 6\nbogus: 1", 3, "bogus"),
        ("horizon: [1", None, "YAML"),
    ])
    def test_errors_carry_line_numbers(self, bad, line, fragment):
        with pytest.raises(ConfigError) as info:
            parse_config(TINY.replace("horizon: 6", bad), source="x.yaml")
        assert fragment in str(info.value)
        if line is not None:
            assert info.value.line == line
            assert str(info.value).startswith(f"x.yaml:{line}:")

    def test_bad_phi(self):
        text = TINY.replace("kind: oracle_full_sweep", "kind: spline\n    phi: 1.5")
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_match_must_reference_earlier_policy(self):
        text = TINY.replace("kind: oracle_full_sweep",
                            "kind: random_subset\n    match_overhead_of: later")
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_duplicate_seeds(self):
        with pytest.raises(ConfigError):
            parse_config(TINY.replace("[3]", "[3, 3]"))

    def test_digest_ignores_parallelism(self):
        a = parse_config(TINY)
        b = parse_config(TINY + "parallelism: 4\n")
        assert a.digest() == b.digest()
        assert a.digest() != parse_config(TINY.replace("horizon: 6", "horizon: 7")).digest()


class TestRun:
    def test_single_cell(self, tmp_path):
        run_dir, manifest = run_experiments(parse_config(TINY), out_dir=tmp_path / "r")
        rows = [r for r in read_results(run_dir) if r["warmup"] == 0]
        assert len(rows) == 1
        assert rows[0]["accuracy_mean"] == 1.0 and rows[0]["overhead_mean"] == 1.0
        assert sorted(p.name for p in (run_dir / "per_slot").iterdir()) == \
            ["sweep__slow__3.csv"]
        assert manifest["failures"] == [] and verify(run_dir) == []

    def test_rerun_byte_identical(self, small_run, tmp_path):
        run_dir, _ = small_run
        again, _ = run_experiments(parse_config(SMALL), out_dir=tmp_path / "again")
        for rel in ["results.csv", "episodes.csv", "manifest.json"] + \
                json.loads((run_dir / "manifest.json").read_text())["files"]:
            assert (run_dir / rel).read_bytes() == (again / rel).read_bytes(), rel

    def test_matched_overhead_is_exact(self, small_run):
        run_dir, _ = small_run
        for speed in ("slow", "fast"):
            for seed in (0, 1):
                bo = read_slot_csv(run_dir / "per_slot" / f"bo__{speed}__{seed}.csv")
                rnd = read_slot_csv(run_dir / "per_slot" / f"matched__{speed}__{seed}.csv")
                np.testing.assert_array_equal(bo["n_beams"], rnd["n_beams"])

    def test_manifest_contents(self, small_run):
        _, manifest = small_run
        assert manifest["speeds"] == ["slow", "fast"]
        assert manifest["warmups"] == list(harness.warmups_for(parse_config(SMALL)))
        assert manifest["versions"]["numpy"] == np.__version__
        assert len(manifest["config_sha256"]) == 64

    def test_verify_detects_tampering(self, small_run, tmp_path):
        import shutil
        run_dir, _ = small_run
        copy = tmp_path / "copy"
        shutil.copytree(run_dir, copy)
        path = copy / "per_slot" / "spline__slow__0.csv"
        lines = path.read_text().splitlines()
        fields = lines[3].split(",")
        fields[2] = str((int(fields[2]) + 1) % 64)
        lines[3] = ",".join(fields)
        path.write_text("\n".join(lines) + "\n")
        assert verify(copy)
        assert main(["verify", str(copy)]) == 1

    def test_episode_failure_recorded(self, tmp_path, monkeypatch, capsys):
        real = harness.run_episode

        def flaky(policy, *args, **kwargs):
            if policy.kind == "bayes_opt":
                raise np.linalg.LinAlgError("boom")
            return real(policy, *args, **kwargs)

        monkeypatch.setattr(harness, "run_episode", flaky)
        cfg = write(tmp_path, SMALL.replace("seeds: [0, 1]", "seeds: [0]"))
        code = main(["run", str(cfg), "--out", str(tmp_path / "r")])
        assert code == 1
        manifest = json.loads((tmp_path / "r" / "manifest.json").read_text())
        failed = {(f["policy"], f["speed"]) for f in manifest["failures"]}
        # the matched baseline depends on the failed episode and fails with it
        assert failed == {(p, s) for p in ("bo", "matched") for s in ("slow", "fast")}
        assert verify(tmp_path / "r") == []
        assert "boom" in capsys.readouterr().err


class TestCli:
    def test_run_and_verify(self, tmp_path, capsys):
        cfg = write(tmp_path, TINY)
        assert main(["run", str(cfg), "--out", str(tmp_path / "r")]) == 0
        assert main(["verify", str(tmp_path / "r")]) == 0
        assert "ok" in capsys.readouterr().out

    def test_invalid_config_exit_2(self, tmp_path, capsys):
        cfg = write(tmp_path, TINY.replace("horizon: 6", "horizon: -1"))
        assert main(["run", str(cfg)]) == 2
        assert "cfg.yaml:2:" in capsys.readouterr().err

    def test_missing_config_exit_2(self, tmp_path):
        assert main(["run", str(tmp_path / "none.yaml")]) == 2

    def test_bad_parallelism(self, tmp_path):
        assert main(["run", str(write(tmp_path, TINY)), "--parallelism", "0"]) == 2

    def test_verify_not_a_run_dir(self, tmp_path):
        assert main(["verify", str(tmp_path)]) == 2

    def test_seed_offset(self, tmp_path):
        cfg = write(tmp_path, TINY)
        assert main(["run", str(cfg), "--out", str(tmp_path / "r"), "--seed-offset", "4"]) == 0
        assert (tmp_path / "r" / "per_slot" / "sweep__slow__7.csv").exists()

    def test_parallel_matches_serial(self, tmp_path):
        text = SMALL.replace("horizon: 12", "horizon: 4")
        a, _ = run_experiments(parse_config(text), out_dir=tmp_path / "a", parallelism=1)
        b, _ = run_experiments(parse_config(text), out_dir=tmp_path / "b", parallelism=2)
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()


class TestPlots:
    def test_convergence_figures(self, small_run, tmp_path):
        run_dir, _ = small_run
        assert main(["plot-convergence", str(run_dir), "--out", str(tmp_path)]) == 0
        for name in ("bo", "matched", "spline", "sweep"):
            assert (tmp_path / f"convergence__{name}.png").stat().st_size > 0

    def test_single_episode_figure(self, tmp_path):
        run_dir, _ = run_experiments(parse_config(TINY), out_dir=tmp_path / "r")
        assert main(["plot-convergence", str(run_dir)]) == 0
        assert (run_dir / "figures" / "convergence__sweep.png").exists()

    def test_oracle_overhead_constant(self, small_run):
        curves = convergence_curves(small_run[0], "sweep")
        for c in curves.values():
            assert np.all(c["overhead"] == 1.0)
            assert np.all(c["rsrp_error_db"] == 0.0)

    def test_unknown_policy(self, small_run):
        assert main(["plot-convergence", str(small_run[0]), "--policy", "nope"]) == 2

    def test_landscape(self, small_run, tmp_path):
        run_dir, _ = small_run
        assert main(["plot-landscape", str(run_dir), "--slots", "0", "5",
                     "--out", str(tmp_path)]) == 0
        assert (tmp_path / "landscape__bo__slow__0__t5.png").exists()

    def test_landscape_unlogged_slot(self, small_run, tmp_path):
        with pytest.raises(PlotInputError):
            plot_landscape(small_run[0], [7], out_dir=tmp_path)
        assert main(["plot-landscape", str(small_run[0]), "--slots", "7"]) == 2

    def test_snapshot_consistency(self, small_run):
        run_dir, _ = small_run
        doc = load_snapshots(run_dir, "bo", "slow", 0)
        cols = read_slot_csv(run_dir / "per_slot" / "bo__slow__0.csv")
        first = doc["slots"]["0"]
        assert np.ptp(first["mean"]) == 0.0  # cold start: constant prior mean
        for key, snap in doc["slots"].items():
            assert snap["true_best"] == int(cols["true_best"][int(key)])
            assert int(np.argmax(snap["truth"])) == snap["true_best"]


@pytest.mark.slow
def test_posterior_tracks_best_beam_by_slot_30(tmp_path):
    text = """
horizon: 31
seeds: {start: 0, count: 20}
speeds: {slow: 0.25}
scenario: {n_paths: 1}
policies:
  - name: bo
    kind: bayes_opt
plots:
  snapshot_slots: [30]
"""
    run_dir, _ = run_experiments(parse_config(text), out_dir=tmp_path / "r")
    H = 16
    for seed in range(20):
        snap = load_snapshots(run_dir, "bo", "slow", seed)["slots"]["30"]
        a, b = int(np.argmax(snap["mean"])), snap["true_best"]
        assert abs(a % H - b % H) <= 1 and abs(a // H - b // H) <= 1, seed
