"""Benchmark: compiled vs pure-Python greedy matching kernel.

The matcher is the evaluation suite's hot inner loop once prediction files
get large (millions of prompts at a few boxes each). This script times both
backends on synthetic per-prompt workloads and prints a small table.

Run: python benchmarks/bench_matching.py [n_prompts]
"""

import sys
import time

import numpy as np

from bevground import _matchpy
from bevground.matching import score_order

try:
    from bevground import _matchcore
except ImportError:
    _matchcore = None


def make_workload(n_prompts, seed=0, n_pred=15, n_gt=8):
    rng = np.random.default_rng(seed)
    prompts = []
    for _ in range(n_prompts):
        preds = rng.uniform(-30, 30, (n_pred, 2))
        gts = rng.uniform(-30, 30, (n_gt, 2))
        order = score_order(rng.random(n_pred))
        prompts.append((preds, order, gts))
    return prompts


def run(kernel, prompts):
    start = time.perf_counter()
    matched = 0
    for preds, order, gts in prompts:
        matched += int((kernel(preds, order, gts, 2.0) >= 0).sum())
    return time.perf_counter() - start, matched


def main():
    n_prompts = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
    prompts = make_workload(n_prompts)

    pure_time, pure_matched = run(_matchpy.greedy_assign, prompts)
    print(f"{'backend':<10} {'prompts':>8} {'matched':>8} {'seconds':>9} {'prompts/s':>11}")
    print(f"{'pure':<10} {n_prompts:>8} {pure_matched:>8} {pure_time:>9.3f} {n_prompts / pure_time:>11.0f}")

    if _matchcore is None:
        print("compiled   (extension not built; pip install -e . with a C compiler)")
        return

    compiled_time, compiled_matched = run(_matchcore.greedy_assign, prompts)
    assert compiled_matched == pure_matched, "backends disagree"
    print(
        f"{'compiled':<10} {n_prompts:>8} {compiled_matched:>8} {compiled_time:>9.3f} "
        f"{n_prompts / compiled_time:>11.0f}"
    )
    print(f"speedup: {pure_time / compiled_time:.1f}x")


if __name__ == "__main__":
    main()
