"""Time the LSTM kernels under the numba and pure-numpy backends.

Each backend runs in its own interpreter because the backend is chosen at
import time from MOMENTUM_WORKBENCH_DISABLE_NUMBA.

    python3 benchmarks/bench_kernels.py [--epochs 200] [--repeats 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, statistics, sys, time
import numpy as np
from momentum_workbench import _accel, _kernels
from momentum_workbench.predictor import LstmParams

epochs, repeats = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
flat = LstmParams.initialize(32, 0).flat

def median_time(fn, n):
    fn()                                   # warm-up (includes JIT compile)
    times = []
    for _ in range(n):
        t0 = time.perf_counter(); fn(); times.append(time.perf_counter() - t0)
    return statistics.median(times)

out = {"backend": _accel.backend_name(), "loss_grad_ms": {}}
for B in (1, 10, 240):
    X = rng.standard_normal((10, B, 6)); y = rng.standard_normal(B) * 0.01
    out["loss_grad_ms"][B] = 1e3 * median_time(lambda: _kernels.loss_and_grad(flat, X, y, 32), 50)
X = rng.standard_normal((10, 240, 6)); y = rng.standard_normal(240) * 0.01
out["train_s"] = median_time(lambda: _kernels.train_adam(flat, X, y, 32, epochs, 1e-3), repeats)
out["final_loss"] = float(_kernels.train_adam(flat, X, y, 32, epochs, 1e-3)[1][-1])
print(json.dumps(out))
"""


def run(disable: bool, epochs: int, repeats: int) -> dict:
    env = dict(os.environ, MOMENTUM_WORKBENCH_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", WORKER, str(epochs), str(repeats)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    rows = [run(False, args.epochs, args.repeats), run(True, args.epochs, args.repeats)]
    print(f"hidden 32, window 10 x 6 features; medians; train = {args.epochs} Adam epochs at batch 240")
    print(f"{'backend':<8} {'grad B=1 ms':>12} {'grad B=10 ms':>13} {'grad B=240 ms':>14} "
          f"{'train s':>8} {'final loss':>12}")
    for r in rows:
        g = r["loss_grad_ms"]
        print(f"{r['backend']:<8} {g['1']:>12.3f} {g['10']:>13.3f} {g['240']:>14.3f} "
              f"{r['train_s']:>8.3f} {r['final_loss']:>12.6g}")
    if rows[0]["backend"] == "numba":
        nb, np_ = rows
        for b in ("1", "10", "240"):
            print(f"loss+grad speedup at batch {b}: "
                  f"{np_['loss_grad_ms'][b] / nb['loss_grad_ms'][b]:.2f}x")
        print(f"training speedup: {np_['train_s'] / nb['train_s']:.2f}x")
        drift = abs(nb["final_loss"] - np_["final_loss"]) / abs(np_["final_loss"])
        print(f"final loss relative difference: {drift:.2e}")
    else:
        print("numba unavailable; only the numpy backend was timed")

if __name__ == "__main__":
    main()
