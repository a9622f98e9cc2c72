"""Compare compiled kernels against the pure-Python fallback.

Each configuration runs in a fresh interpreter because the backend is chosen
at import time from PHOTON_REUSE_JIT.

    python3 benchmarks/bench_kernels.py [--paths N] [--fallback-paths N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
from photon_reuse.gather import render_engine
from photon_reuse.pipeline import Engine
from photon_reuse.scene import load_scene

n_paths = int(sys.argv[1])
scene = load_scene("builtin:moving-cube")
# one untimed frame so compilation is not measured
warm = Engine(scene, "error", n_paths=64, dm_dims=(1, 1, 2, 2))
warm.run_frame(0); warm.run_frame(1); render_engine(warm)

e = Engine(scene, "error", n_paths=n_paths, dm_dims=(2, 2, 8, 8))
t0 = time.perf_counter()
first = e.run_frame(0)
t1 = time.perf_counter()
second = e.run_frame(1)
t2 = time.perf_counter()
render_engine(e)
t3 = time.perf_counter()
print(json.dumps({"paths": n_paths, "trace_rays": first.rays_traced, "trace_s": t1 - t0,
                  "verify_rays": second.rays_traced + second.visibility_rays,
                  "verify_s": t2 - t1, "gather_s": t3 - t2}))
"""


def measure(jit, n_paths):
    env = dict(os.environ, PHOTON_REUSE_JIT="1" if jit else "0")
    done = subprocess.run([sys.executable, "-c", WORKLOAD, str(n_paths)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(done.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=50_000)
    ap.add_argument("--fallback-paths", type=int, default=500)
    args = ap.parse_args()
    rows = [("numba", measure(True, args.paths)), ("python", measure(False, args.fallback_paths))]
    print(f"{'backend':>8} {'paths':>8} {'trace rays/s':>14} {'frame-1 s':>10} {'gather s':>9}")
    rate = {}
    for name, r in rows:
        rate[name] = r["trace_rays"] / r["trace_s"]
        print(f"{name:>8} {r['paths']:>8} {rate[name]:>14.0f} {r['verify_s']:>10.3f} "
              f"{r['gather_s']:>9.3f}")
    print(f"speedup (trace rays/s): {rate['numba'] / rate['python']:.0f}x")


if __name__ == "__main__":
    main()
