"""Time the jitted kernels against the pure-numpy fallback.

The hot path is thousands of forward/backward passes over small dense
networks, where per-call dispatch overhead dominates vectorized math. This
script times the three kernel entry points plus a short end-to-end training
run under both backends and prints the speedups.

    python3 benchmarks/bench_backends.py [--repeats N] [--iterations T]
"""

import argparse
import time

import numpy as np

from foca import backend
from foca.datasets import ToyConfig, gen_two_arcs, gen_warped_blobs
from foca.nn_core import (
    Activation,
    LayerSpec,
    LossKind,
    batch_loss_grad,
    batch_outputs,
    chain_specs,
    init_gaussian_params,
    per_sample_param_grads,
)
from foca.trainers import FocaConfig, WeakSolver, train_foca
from foca.weak_classifiers import WeakBatchSpec

SIG, REL, IDY = Activation.SIGMOID, Activation.RELU, Activation.IDENTITY


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def kernel_cases(rng):
    extractor = chain_specs((10, 32, 32, 16), SIG, SIG)
    classifier = chain_specs((16, 32, 10), REL, IDY)
    ext_params = init_gaussian_params(extractor, 0.5, rng)
    clf_params = init_gaussian_params(classifier, 0.5, rng)
    X = rng.normal(size=(100, 10))
    X_small = X[:10]
    F = rng.normal(size=(100, 16))
    T_sq = rng.normal(size=(100, 16))
    T_ce = np.eye(10)[rng.integers(10, size=100)]
    return [
        ("outputs 100x(10-32-32-16)", lambda: batch_outputs(ext_params, X)),
        (
            "loss+grad 100x(10-32-32-16) squared",
            lambda: batch_loss_grad(ext_params, X, T_sq, LossKind.SQUARED_ERROR),
        ),
        (
            "loss+grad 10x(10-32-32-16) squared",
            lambda: batch_loss_grad(ext_params, X_small, T_sq[:10], LossKind.SQUARED_ERROR),
        ),
        (
            "per-sample grads 100x(16-32-10) ce",
            lambda: per_sample_param_grads(
                clf_params, F, T_ce, LossKind.SOFTMAX_CROSS_ENTROPY
            ),
        ),
    ]


def training_case(iterations: int):
    toy = gen_two_arcs(ToyConfig(samples_per_class=100, noise_std=0.1, seed=0))
    ext = chain_specs((2, 16, 16, 2), SIG, SIG)
    head = (LayerSpec(2, 1, IDY),)
    config = FocaConfig(
        iterations=iterations,
        k=1,
        m=50,
        eta=0.5,
        weak_spec=WeakBatchSpec(k=1, lam=0.5),
        solver=WeakSolver.PAIR_RIDGE,
        seed=0,
        max_norm_cap=None,
    )
    return (
        f"train_foca {iterations} iterations",
        lambda: train_foca(toy, ext, head, config),
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="best-of repeats per case")
    parser.add_argument(
        "--iterations", type=int, default=300, help="training iterations for the end-to-end case"
    )
    args = parser.parse_args(argv)

    backends = ["numpy"]
    if backend.NUMBA_AVAILABLE:
        backends.append("numba")
    else:
        print("numba not importable; timing the numpy fallback only")

    rng = np.random.default_rng(0)
    cases = kernel_cases(rng) + [training_case(args.iterations)]
    # exercise the data generators once so their cost stays out of the loop
    gen_warped_blobs(3, 3, 5, 1.0, task_seed=0, split_seed=1)

    width = max(len(name) for name, _ in cases)
    header = f"{'case':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, fn in cases:
        timings = {}
        for b in backends:
            with backend.use(b):
                fn()  # warm: jit compilation and caches outside the timing
                timings[b] = best_of(fn, args.repeats)
        row = f"{name:<{width}}  " + "".join(f"{timings[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{timings['numpy'] / timings['numba']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
