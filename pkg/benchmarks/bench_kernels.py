"""Compare the numba kernels with their numpy twins, then time a training step
under each backend.

    python3 benchmarks/bench_kernels.py [--repeat N]

Kernel timings call both twins directly on toy-model shapes (batch 16, 7x7
patch, 32 bands). The training-step timing runs in a subprocess per backend,
because the backend is fixed when ``spgat`` is imported.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from spgat.kernels import _numba, _numpy
from spgat.ops import atrous_offsets

STEP_SCRIPT = """
import time, numpy as np
from spgat import kernels
from spgat.config import RunConfig
from spgat.data import extract_patches
from spgat.train import load_dataset, train
from spgat.model import init_model
cfg = RunConfig()
data = load_dataset(cfg)
patches = extract_patches(data.cube, data.labels, data.split.train_coords, cfg.patch)
model = init_model(cfg.model_config(data.classes), 0)
train(model, patches, 1)  # warm-up and JIT
t = time.perf_counter()
train(model, patches, {epochs})
print(kernels.BACKEND, (time.perf_counter() - t) / {epochs})
"""


def kernel_cases(rng):
    B, C, S, HW = 16, 32, 32, 49
    L = S * HW
    x = rng.normal(size=(B, C, L))
    g = rng.normal(size=(B, C, L))
    offsets = atrous_offsets(3, 4)
    z = rng.normal(size=(B, len(offsets), C, L))
    bias = rng.normal(size=C)
    mean, var = _numpy.bn_stats(x)
    invstd = 1.0 / np.sqrt(var + 1e-5)
    gamma = rng.normal(size=C)
    beta = rng.normal(size=C)
    return [
        ("leaky_relu_fwd", lambda k: k.leaky_relu_fwd(x, 0.2)),
        ("leaky_relu_bwd", lambda k: k.leaky_relu_bwd(x, g, 0.2)),
        ("shift_sum", lambda k: k.shift_sum(z, bias, offsets, S, HW, False)),
        ("shift_stack", lambda k: k.shift_stack(g, offsets, S, HW, False)),
        ("add_bias_", lambda k: k.add_bias_(x.copy(), bias)),
        ("channel_sum", lambda k: k.channel_sum(g)),
        ("bn_stats", lambda k: k.bn_stats(x)),
        ("bn_forward", lambda k: k.bn_forward(x, mean, invstd, gamma, beta)),
        ("bn_backward", lambda k: k.bn_backward(x, g, mean, invstd, gamma)),
    ]


def best_of(fn, repeat):
    fn()  # JIT compile / warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--step-epochs", type=int, default=3,
                        help="epochs of 16 samples timed per backend (0 skips)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':<16} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, call in kernel_cases(rng):
        t_np = best_of(lambda: call(_numpy), args.repeat) * 1e3
        t_nb = best_of(lambda: call(_numba), args.repeat) * 1e3
        print(f"{name:<16} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.2f}")

    if args.step_epochs > 0:
        print()
        script = STEP_SCRIPT.format(epochs=args.step_epochs)
        for flag in ("1", "0"):
            env = {**os.environ, "SPGAT_DISABLE_NUMBA": flag}
            out = subprocess.run([sys.executable, "-c", script], env=env, check=True,
                                 capture_output=True, text=True).stdout.split()
            print(f"training step, {out[0]:<6} backend: {float(out[1]):.3f} s per batch of 16")


if __name__ == "__main__":
    main()
