#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Times every kernel pair on training-shaped inputs, verifies the two backends
agree numerically, and emits JSON. The package picks its backend at import
via FORMQUERY_KERNELS; this script always exercises both variants.
"""

import argparse
import json
import sys
import time

import numpy as np

from formquery import kernels

WARMUP_RUNS = 3
BENCH_RUNS = 20


def _inputs(rng, rows, width):
    x = rng.normal(0, 2, size=(rows, width))
    g = rng.normal(size=(rows, width))
    gain = rng.normal(1, 0.1, size=width)
    bias = rng.normal(0, 0.1, size=width)
    _, mu, rstd = kernels.VARIANTS["layernorm_rows"]["numpy"](x, gain, bias, 1e-5)
    ids = rng.integers(0, 4096, size=rows)
    table = np.zeros((4096, width))
    p = rng.normal(size=rows * width)
    boxes = np.zeros((256, 4))
    boxes[:, 0] = rng.integers(0, 900, 256)
    boxes[:, 1] = rng.integers(0, 950, 256)
    boxes[:, 2] = boxes[:, 0] + rng.integers(5, 90, 256)
    boxes[:, 3] = boxes[:, 1] + rng.integers(5, 30, 256)
    return {
        "softmax_rows": lambda f: f(x),
        "softmax_rows_bwd": lambda f: f(np.abs(x) / np.abs(x).sum(1, keepdims=True), g),
        "layernorm_rows": lambda f: f(x, gain, bias, 1e-5),
        "layernorm_rows_bwd": lambda f: f(g, x, gain, mu, rstd),
        "gelu": lambda f: f(x),
        "gelu_bwd": lambda f: f(g, x),
        "scatter_add_rows": lambda f: f(table, ids, g),
        "adam_update": lambda f: f(p.copy(), rng.normal(size=p.size), np.zeros(p.size),
                                   np.zeros(p.size), 5, 1e-3, 0.9, 0.999, 1e-8, 0.01),
        "box_neighbors": lambda f: f(boxes, 15.0, 0.5),
    }


def _time(call, impl):
    for _ in range(WARMUP_RUNS):
        call(impl)
    times = []
    for _ in range(BENCH_RUNS):
        t0 = time.perf_counter()
        call(impl)
        times.append(time.perf_counter() - t0)
    return {"min": min(times), "mean": sum(times) / len(times)}


def _agreement(name, call):
    np_impl = kernels.VARIANTS[name]["numpy"]
    nb_impl = kernels.VARIANTS[name]["numba"]
    rng = np.random.default_rng(0)
    if name == "scatter_add_rows":
        t1 = np.zeros((4096, 64))
        t2 = np.zeros((4096, 64))
        ids = rng.integers(0, 4096, 512)
        rows = rng.normal(size=(512, 64))
        np_impl(t1, ids, rows)
        nb_impl(t2, ids, rows)
        return float(np.max(np.abs(t1 - t2)))
    if name == "adam_update":
        p = rng.normal(size=4096)
        g = rng.normal(size=4096)
        state1 = (p.copy(), np.zeros(4096), np.zeros(4096))
        state2 = (p.copy(), np.zeros(4096), np.zeros(4096))
        np_impl(state1[0], g, state1[1], state1[2], 5, 1e-3, 0.9, 0.999, 1e-8, 0.01)
        nb_impl(state2[0], g, state2[1], state2[2], 5, 1e-3, 0.9, 0.999, 1e-8, 0.01)
        return float(max(np.max(np.abs(a - b)) for a, b in zip(state1, state2)))
    a, b = call(np_impl), call(nb_impl)
    if not isinstance(a, tuple):
        a, b = (a,), (b,)
    return float(max(np.max(np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
                     for x, y in zip(a, b)))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=2048,
                        help="rows per 2-D input (tokens per batch)")
    parser.add_argument("--width", type=int, default=64)
    parser.add_argument("--output", "-o", help="write JSON here instead of stdout")
    args = parser.parse_args()

    if kernels.VARIANTS["softmax_rows"]["numba"] is None:
        print("numba unavailable; nothing to compare", file=sys.stderr)
        return 1
    kernels.warmup()

    rng = np.random.default_rng(42)
    calls = _inputs(rng, args.rows, args.width)
    results = {"rows": args.rows, "width": args.width,
               "selected_backend": kernels.BACKEND, "kernels": {}}
    for name, call in calls.items():
        entry = {
            "numpy": _time(call, kernels.VARIANTS[name]["numpy"]),
            "numba": _time(call, kernels.VARIANTS[name]["numba"]),
            "max_abs_diff": _agreement(name, call),
        }
        entry["speedup"] = entry["numpy"]["min"] / entry["numba"]["min"]
        results["kernels"][name] = entry
        print(f"{name:20s} numpy {entry['numpy']['min'] * 1e6:9.1f}us  "
              f"numba {entry['numba']['min'] * 1e6:9.1f}us  "
              f"x{entry['speedup']:5.2f}  |diff| {entry['max_abs_diff']:.2e}",
              file=sys.stderr)

    payload = json.dumps(results, indent=2)
    if args.output:
        with open(args.output, "w") as f:
            f.write(payload)
    else:
        print(payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
