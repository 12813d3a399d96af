"""Benchmark the compiled kernels against the numpy fallback.

Times the individual kernels at transformer-typical shapes plus a full
forward pass and an index build.  Run from the repo root:

    python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from phsearch import numerics as nm
from phsearch.manifest import DatasetManifest, ImageEntry
from phsearch.model import DEFAULT_TOY, gen_toy_model
from phsearch.retrieval import build_index
from phsearch.vit import forward


def timeit(fn, repeats):
    fn()  # warm up
    started = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - started) / repeats


def benchmark(repeats):
    rng = np.random.default_rng(0)
    t, d, ffn = 257, 64, 256  # mid-size token count, as in a 224/14 grid
    a = rng.normal(size=(t, d))
    b = rng.normal(size=(d, d))
    wide = rng.normal(size=(d, ffn))
    logits = rng.normal(size=(t, t))
    gamma, beta = np.ones(d), np.zeros(d)

    weights = gen_toy_model(0, DEFAULT_TOY)
    img = rng.uniform(size=(32, 32, 1))
    manifest = DatasetManifest(
        images=[
            ImageEntry(image_id=f"img-{i}", h=32, w=32,
                       generator={"kind": "noise", "seed": i})
            for i in range(16)
        ]
    )

    cases = {
        f"matmul {t}x{d} @ {d}x{d}": lambda: nm.matmul(a, b),
        f"matmul {t}x{d} @ {d}x{ffn}": lambda: nm.matmul(a, wide),
        f"softmax_rows {t}x{t}": lambda: nm.softmax_rows(logits),
        f"layer_norm_rows {t}x{d}": lambda: nm.layer_norm_rows(a, gamma, beta, 1e-6),
        f"gelu {t}x{ffn}": lambda: nm.gelu(rng.normal(size=(t, ffn))),
        "forward 32x32 toy model": lambda: forward(img, weights),
        "build_index 16 images": lambda: build_index(manifest, weights, cache=False),
    }

    available = nm.available_backends()
    results = {}
    for backend in available:
        nm.set_backend(backend)
        results[backend] = {
            name: timeit(fn, max(1, repeats // (20 if "index" in name else 1)))
            for name, fn in cases.items()
        }

    width = max(len(name) for name in cases)
    header = f"{'kernel':<{width}}  " + "  ".join(f"{b:>12}" for b in available)
    if len(available) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name in cases:
        row = f"{name:<{width}}  "
        row += "  ".join(f"{results[b][name] * 1e6:>10.1f}us" for b in available)
        if len(available) == 2:
            py, cy = results["python"][name], results["cython"][name]
            row += f"  {py / cy:>7.2f}x"
        print(row)


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    benchmark(parser.parse_args().repeats)
