"""Compare the numba and pure-numpy implementations of the hot kernels.

    python benchmarks/bench_kernels.py               # kernel timings
    python benchmarks/bench_kernels.py --episode     # also a full BO episode per backend

Both implementations are imported directly, so one process covers both
kernel paths.  The episode timing runs a subprocess per backend with
BEAMTRACK_DISABLE_NUMBA toggled, which is how the library selects its path.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from beamtrack import kernels


def best_time(fn, repeat):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng, n_buffer, n_samples):
    n_beams = 64
    samples = rng.normal(size=(n_samples, n_beams))
    running = rng.normal(size=n_samples)
    candidates = np.ones(n_beams, dtype=np.bool_)
    subsets = np.array([rng.choice(n_beams, 3, replace=False) for _ in range(200)])
    slots = np.sort(rng.integers(0, 100, n_buffer))
    beams = rng.integers(0, n_beams, n_buffer)
    _, lag_code = np.unique(np.abs(slots[:, None] - slots[None, :]), return_inverse=True)
    lag_code = lag_code.reshape(n_buffer, n_buffer)
    h, v = beams % 16, beams // 16
    off_code = np.abs(h[:, None] - h[None, :]) * 4 + np.abs(v[:, None] - v[None, :])
    time_tab = rng.uniform(size=lag_code.max() + 1)
    beam_tab = rng.uniform(size=64)
    a = rng.normal(size=(n_buffer, n_buffer))
    w = np.ascontiguousarray(a + a.T)
    n_lag, n_off = time_tab.size, beam_tab.size
    return {
        "greedy_gains": lambda impl: impl(samples, running, 0.1, candidates),
        "set_improvements": lambda impl: impl(samples, 0.1, subsets),
        "table_gram": lambda impl: impl(lag_code, off_code, time_tab, beam_tab),
        "cell_sums": lambda impl: impl(w, lag_code, off_code, n_lag, n_off),
    }


def episode_seconds(disable_numba, horizon):
    code = (
        "import time, numpy as np\n"
        "from beamtrack import table_grid, ScenarioParams, random_scenario, TrackerPolicy, run_episode\n"
        "g = table_grid(); sc = random_scenario(ScenarioParams(), np.random.default_rng(0))\n"
        "run_episode(TrackerPolicy('bayes_opt'), sc, g, 5)\n"
        "t0 = time.perf_counter()\n"
        f"run_episode(TrackerPolicy('bayes_opt'), sc, g, {horizon})\n"
        "print(time.perf_counter() - t0)\n"
    )
    env = dict(os.environ)
    if disable_numba:
        env["BEAMTRACK_DISABLE_NUMBA"] = "1"
    else:
        env.pop("BEAMTRACK_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--buffer", type=int, default=256, help="GP buffer size")
    parser.add_argument("--samples", type=int, default=2048, help="MC samples")
    parser.add_argument("--episode", action="store_true", help="time a BO episode per backend")
    parser.add_argument("--horizon", type=int, default=200)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}  max|diff|")
    for name, call in kernel_cases(rng, args.buffer, args.samples).items():
        impl_np = getattr(kernels, f"{name}_numpy")
        impl_nb = getattr(kernels, f"{name}_numba")
        t_np = best_time(lambda: call(impl_np), args.repeat)
        t_nb = best_time(lambda: call(impl_nb), args.repeat)
        diff = np.max(np.abs(np.nan_to_num(call(impl_np) - call(impl_nb), nan=0.0,
                                           posinf=0.0, neginf=0.0)))
        print(f"{name:<18}{1e3 * t_np:>10.3f}{1e3 * t_nb:>10.3f}{t_np / t_nb:>8.1f}x  {diff:.1e}")

    if args.episode:
        t_nb = episode_seconds(False, args.horizon)
        t_np = episode_seconds(True, args.horizon)
        print(f"\nbayes_opt episode, {args.horizon} slots: numpy {t_np:.1f} s, "
              f"numba {t_nb:.1f} s ({t_np / t_nb:.1f}x)")


if __name__ == "__main__":
    main()
