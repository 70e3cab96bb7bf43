#!/usr/bin/env python3
"""Benchmark: compiled vs pure-Python communication-cost kernel.

The kernel is called once per candidate move of the allocator's local
search, so its throughput bounds the usable search budget.
"""
import argparse
import random
import time

import numpy as np

from mmtplan._cost_py import comm_cost_kernel as py_kernel
from mmtplan.allocator import HAVE_COMPILED_KERNEL, CostContext
from mmtplan.core import ClusterTopology, ModuleKey, Side, TaskSpec, task_id
from mmtplan.sharing import enumerate_modules

try:
    from mmtplan._speedups import comm_cost_kernel as cy_kernel
except ImportError:
    cy_kernel = None


def build_instance(n_tasks, n_groups, topo, seed=0):
    rng = random.Random(seed)
    tasks = []
    for i in range(n_tasks):
        src, tgt = f"s{i:03d}", f"t{i:03d}"
        enc = (
            ModuleKey(Side.ENCODER, 0, f"g{rng.randrange(n_groups)}"),
            ModuleKey(Side.ENCODER, 1, "full"),
        )
        dec = (ModuleKey(Side.DECODER, 0, f"g{rng.randrange(n_groups)}"),)
        tasks.append(
            TaskSpec(
                id=task_id(src, tgt),
                src_lang=src,
                tgt_lang=tgt,
                src_path="x",
                tgt_path="y",
                enc_modules=enc,
                dec_modules=dec,
                enc_layers=(4, 4),
                dec_layers=(6,),
            )
        )
    return tasks


def bench(kernel, ctx, placements, out):
    start = time.perf_counter()
    acc = 0.0
    for p in placements:
        acc += kernel(
            ctx.params,
            ctx.mod_task_off,
            ctx.mod_task_idx,
            p,
            ctx.dev_node,
            ctx.w_intra,
            ctx.w_inter,
            out,
        )
    return time.perf_counter() - start, acc


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tasks", type=int, default=200)
    parser.add_argument("--groups", type=int, default=12)
    parser.add_argument("--calls", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    topo = ClusterTopology(5, 4, 12)
    tasks = build_instance(args.tasks, args.groups, topo, args.seed)
    modules = enumerate_modules(tasks)
    ctx = CostContext(tasks, modules, topo)

    rng = np.random.default_rng(args.seed)
    placements = [
        rng.integers(0, topo.n_devices, size=len(tasks)).astype(np.int64)
        for _ in range(args.calls)
    ]
    out = np.zeros(len(ctx.module_keys))

    print(f"instance: {args.tasks} tasks, {len(modules)} modules, "
          f"{topo.n_devices} devices, {args.calls} kernel calls")
    py_time, py_acc = bench(py_kernel, ctx, placements, out)
    print(f"pure python: {py_time:.3f}s ({args.calls / py_time:,.0f} calls/s)")
    if cy_kernel is None:
        print("compiled kernel not built (HAVE_COMPILED_KERNEL="
              f"{HAVE_COMPILED_KERNEL}); skipping comparison")
        return
    cy_time, cy_acc = bench(cy_kernel, ctx, placements, out)
    print(f"compiled:    {cy_time:.3f}s ({args.calls / cy_time:,.0f} calls/s)")
    print(f"speedup:     {py_time / cy_time:.1f}x")
    assert abs(py_acc - cy_acc) <= 1e-6 * max(1.0, abs(py_acc)), "kernel mismatch"


if __name__ == "__main__":
    main()
