"""
Compiled kernels vs the pure-numpy fallback.

Each mode runs in its own interpreter because the JIT switch is read at
import time. The first call (compile or cache load) is reported apart from
the best steady-state timing.

    python benchmarks/bench_kernels.py [--repeat N] [--seconds S]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
import numpy as np
import arrayins._jit as jit
from arrayins.array_model import paper_array
from arrayins.filter import FilterState, InitialStd, initial_covariance, run_filter
from arrayins.harness import truth_initial_state
from arrayins.lie_group import so3_exp, so3_log
from arrayins.models import ALL_VARIANTS, propagate_increment, jacobian_state
from arrayins.jacobian_check import random_operating_point
from arrayins.sensor_sim import NoiseConfig, SinusoidProfile, generate_sinusoid_trajectory, synthesize_measurements

repeat, seconds = int(sys.argv[1]), float(sys.argv[2])
geo, noise = paper_array(), NoiseConfig()
rng = np.random.default_rng(0)
phis = rng.normal(size=(2000, 3))
traj = generate_sinusoid_trajectory(SinusoidProfile.low(), seconds, 1e-3)
stream, _ = synthesize_measurements(traj, geo, noise, 500, seed=0)
point = random_operating_point(ALL_VARIANTS[0], geo, rng)

def lie():
    for p in phis:
        so3_log(so3_exp(p))

def model():
    x, acc, gyro = point
    for _ in range(500):
        propagate_increment(ALL_VARIANTS[0], x, acc, gyro, geo, 0.002)
        jacobian_state(ALL_VARIANTS[0], x, acc, gyro, geo, 0.002)

def filt():
    for v in ALL_VARIANTS:
        init = FilterState(truth_initial_state(v, traj), initial_covariance(v, geo, noise, InitialStd()))
        run_filter(v, init, stream, geo, noise)

out = {"jit": jit.JIT_ENABLED}
for name, fn in (("so3 exp/log x2000", lie), ("increment+jacobian x500", model),
                 (f"filter 4 variants, {seconds:g} s @ 500 Hz", filt)):
    t0 = time.perf_counter(); fn(); first = time.perf_counter() - t0
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter(); fn(); times.append(time.perf_counter() - t0)
    out[name] = (first, min(times))
print(json.dumps(out))
"""


def _measure(disable: bool, repeat: int, seconds: float) -> dict:
    env = dict(os.environ)
    env.pop("ARRAYINS_DISABLE_JIT", None)
    if disable:
        env["ARRAYINS_DISABLE_JIT"] = "1"
    proc = subprocess.run([sys.executable, "-c", _WORKER, str(repeat), str(seconds)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seconds", type=float, default=2.0, help="simulated seconds for the filter case")
    args = parser.parse_args()

    fast = _measure(False, args.repeat, args.seconds)
    slow = _measure(True, args.repeat, args.seconds)
    if not fast.pop("jit"):
        print("numba unavailable; both columns use the fallback")
    slow.pop("jit")
    print(f"{'case':40s} {'jit first':>10s} {'jit best':>10s} {'numpy best':>11s} {'speedup':>8s}")
    for name, (first, best) in fast.items():
        ref = slow[name][1]
        print(f"{name:40s} {first:10.4f} {best:10.4f} {ref:11.4f} {ref / best:7.1f}x")


if __name__ == "__main__":
    main()
