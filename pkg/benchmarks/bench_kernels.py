"""Time the compiled kernels against the numpy fallback, plus one full training step.

Usage::

    python benchmarks/bench_kernels.py [--repeat 200] [--batch 1024] [--width 32]

Timings are medians over ``--repeat`` calls.  The training-step line runs each
backend in a subprocess because the backend is fixed at import time.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from nlcca import _kernels_py, kernels
from nlcca.latent import make_rng

STEP_SNIPPET = """
import timeit
from nlcca.encoder import TrainConfig, train_cca
from nlcca.latent import make_latent_spec
from nlcca.mixing import make_decoder
spec = make_latent_spec("gaussian", 5)
decs = (make_decoder(5, 20, 3, seed=1), make_decoder(5, 20, 3, seed=2))
cfg = TrainConfig(steps={steps}, batch_size={batch}, hidden_widths=({width},) * 3, eval_every=0, log_every=0)
t = min(timeit.repeat(lambda: train_cca(cfg, spec, decs), number=1, repeat=3))
print(t / {steps})
"""


def median_time(fn, repeat):
    times = timeit.repeat(fn, number=1, repeat=repeat)
    return float(np.median(times))


def kernel_cases(batch, width):
    rng = make_rng(0)
    a = rng.standard_normal((batch, width))
    g = rng.uniform(0.5, 2.0, width)
    b = rng.standard_normal(width)
    out = _kernels_py.bn_leaky_forward(a, g, b, 0.2, 1e-5)
    go = rng.standard_normal((batch, width))
    x = rng.standard_normal(batch * 10)
    return {
        "bn_leaky_forward": lambda m: m.bn_leaky_forward(a, g, b, 0.2, 1e-5),
        "bn_leaky_backward": lambda m: m.bn_leaky_backward(go, out[1], out[2], g, out[5], 0.2),
        "affine_leaky": lambda m: m.affine_leaky(a, g, b, 0.2),
        "leaky": lambda m: m.leaky(a, 0.2),
        "hermite_table": lambda m: m.hermite_table(x, 6),
    }


def step_time(flag, steps, batch, width):
    env = dict(os.environ, NLCCA_PURE_PYTHON=flag)
    code = STEP_SNIPPET.format(steps=steps, batch=batch, width=width)
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(res.stdout)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    p.add_argument("--batch", type=int, default=1024)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--steps", type=int, default=200, help="training steps per timing run")
    args = p.parse_args(argv)

    compiled = kernels.compiled_module()
    if compiled is None:
        print("compiled extension not available; build it with `pip install -e .`")
        return 1
    print(f"batch {args.batch}, width {args.width}, median of {args.repeat} calls")
    print(f"{'kernel':<20}{'cython (us)':>14}{'python (us)':>14}{'speedup':>10}")
    for name, call in kernel_cases(args.batch, args.width).items():
        tc = median_time(lambda: call(compiled), args.repeat) * 1e6
        tp = median_time(lambda: call(_kernels_py), args.repeat) * 1e6
        print(f"{name:<20}{tc:>14.1f}{tp:>14.1f}{tp / tc:>10.2f}")
    tc = step_time("0", args.steps, args.batch, args.width) * 1e3
    tp = step_time("1", args.steps, args.batch, args.width) * 1e3
    print(f"{'training step (ms)':<20}{tc:>14.2f}{tp:>14.2f}{tp / tc:>10.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
