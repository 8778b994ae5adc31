"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py            # kernel micro-benchmarks
    python benchmarks/bench_kernels.py --e2e      # also one desk seed under each backend

Micro-benchmarks call both entries of ``ltu._kernels.BACKENDS`` in one
process. The end-to-end run starts a fresh interpreter per backend, toggled
with ``LTU_DISABLE_NUMBA``, so the whole package uses a single backend.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ltu import _kernels as K
from ltu.diffnum import ModelSpec, init_params

E2E_SCRIPT = """
import time
from ltu import experiment as ex, _kernels
cfg = ex.load_config({config!r})
t0 = time.perf_counter()
ctx = ex.prepare_seed(cfg, 0)
t1 = time.perf_counter()
ex.run_method(cfg, ctx.spec, ctx.original, ctx.split, ctx.ensemble, 0, "ltu")
t2 = time.perf_counter()
print(_kernels.BACKEND, t1 - t0, t2 - t1)
"""


def cases(batch):
    rng = np.random.default_rng(0)
    spec = ModelSpec((2, 32, 32, 8))
    p = init_params(spec, rng)
    X = rng.normal(size=(batch, 2))
    w, act = spec.widths_array, spec.act_code
    tape = K.BACKENDS["numpy"]["forward_tape"](p, w, act, X)
    dout = rng.normal(size=(batch, 8))
    A, B = rng.normal(size=(64, 32)), rng.normal(size=(600, 32))
    return {
        f"forward_tape  (2-32-32-8, n={batch})": ("forward_tape", (p, w, act, X)),
        f"backward      (2-32-32-8, n={batch})": ("backward", (p, w, act, tape, dout)),
        "pairwise_sqdist (64 x 600, d=32)": ("pairwise_sqdist", (A, B)),
        "nearest_index   (64 x 600, d=32)": ("nearest_index", (A, B)),
    }


def best_of(fn, args, repeat):
    fn(*args)  # compile / warm up
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def run_micro(batches, repeat):
    if not K.HAVE_NUMBA:
        print("numba is not importable; only the numpy path exists")
        return
    print(f"{'kernel':<40}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for batch in batches:
        for label, (name, args) in cases(batch).items():
            t_np = best_of(K.BACKENDS["numpy"][name], args, repeat)
            t_nb = best_of(K.BACKENDS["numba"][name], args, repeat)
            print(f"{label:<40}{1e6 * t_np:>12.1f}{1e6 * t_nb:>12.1f}{t_np / t_nb:>9.1f}x")


def run_e2e(config):
    print(f"\none desk seed ({config}): setup = original + gold + MI ensemble, then one LTU run")
    print(f"{'backend':<10}{'setup s':>10}{'ltu s':>10}")
    for disable in ("1", "0"):
        env = {**os.environ, "LTU_DISABLE_NUMBA": disable}
        out = subprocess.run(
            [sys.executable, "-c", E2E_SCRIPT.format(config=config)],
            env=env, capture_output=True, text=True, check=True,
        ).stdout.split()
        print(f"{out[0]:<10}{float(out[1]):>10.2f}{float(out[2]):>10.2f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, nargs="+", default=[32, 500])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--e2e", action="store_true")
    ap.add_argument("--config", default=os.path.join(os.path.dirname(__file__), "..", "configs", "desk.toml"))
    args = ap.parse_args()
    run_micro(args.batch, args.repeat)
    if args.e2e:
        run_e2e(os.path.abspath(args.config))


if __name__ == "__main__":
    main()
