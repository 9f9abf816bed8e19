"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--stream 1000000] [--batches 2000]
"""
import argparse
import time

import numpy as np

from resure._backend import available_backends


def bench_stream(kern, values):
    t0 = time.perf_counter()
    out = kern.absorb_stream(0, 0.0, 0.0, values)
    return time.perf_counter() - t0, out


def bench_batches(kern, losses, groups, num_groups):
    counts = np.full(num_groups, 50, dtype=np.int64)
    means = np.ones(num_groups)
    ssds = np.full(num_groups, 10.0)
    n = losses.shape[1]
    tau = np.empty(n)
    flags = np.zeros(n, dtype=np.uint8)
    cand = np.empty(n)
    t0 = time.perf_counter()
    for lb, gb in zip(losses, groups):
        kern.decide(lb, gb, counts, means, ssds, 1.0, 16, tau, flags, cand)
        kern.absorb_masked(counts, means, ssds, lb, gb, np.ascontiguousarray(flags ^ 1))
    return time.perf_counter() - t0, (counts.copy(), means.copy(), ssds.copy())


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--stream", type=int, default=1_000_000)
    p.add_argument("--batches", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--groups", type=int, default=4)
    args = p.parse_args()

    rng = np.random.default_rng(0)
    values = rng.uniform(0, 100, args.stream)
    losses = np.ascontiguousarray(rng.gamma(2.0, 0.6, (args.batches, args.batch_size)))
    groups = np.ascontiguousarray(rng.integers(0, args.groups, (args.batches, args.batch_size)))

    backends = available_backends()
    results = {}
    print(f"{'kernel':<28}{'backend':<10}{'seconds':>10}{'per item (ns)':>16}")
    for name, kern in backends.items():
        t, out = bench_stream(kern, values)
        results[("stream", name)] = out
        print(f"{'absorb_stream':<28}{name:<10}{t:>10.4f}{1e9 * t / args.stream:>16.1f}")
        t, out = bench_batches(kern, losses, groups, args.groups)
        results[("batch", name)] = out
        items = args.batches * args.batch_size
        print(f"{'decide + absorb_masked':<28}{name:<10}{t:>10.4f}{1e9 * t / items:>16.1f}")

    if len(backends) > 1:
        same_stream = results[("stream", "python")] == results[("stream", "cython")]
        same_batch = all(
            np.array_equal(a, b)
            for a, b in zip(results[("batch", "python")], results[("batch", "cython")])
        )
        print(f"bit-identical results: stream={same_stream} batches={same_batch}")
    else:
        print("compiled kernels not built; only the Python fallback was timed")


if __name__ == "__main__":
    main()
