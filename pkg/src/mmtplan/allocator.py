"""Task-to-GPU assignment by local search.

Minimizes cross-device module synchronization cost while respecting GPU
slot capacity and the curriculum-cover constraint: every GPU that hosts
any task must host at least one task active from step 0, so no device
idles early in training.

The cost of a placement is, per module, its parameter count times a
weighted span: w_intra per extra device plus (w_inter - w_intra) per
extra node.  The kernel evaluating this is the hot path of the search;
a compiled extension is used when available, with a pure-Python fallback
selected at import time.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import ClusterTopology, DeviceId, ModuleKey, TaskSpec

try:
    from ._speedups import comm_cost_kernel

    HAVE_COMPILED_KERNEL = True
except ImportError:
    from ._cost_py import comm_cost_kernel

    HAVE_COMPILED_KERNEL = False

DEFAULT_W_INTRA = 1.0
DEFAULT_W_INTER = 4.0
DEFAULT_BUDGET = 10000


class AllocationError(ValueError):
    pass


@dataclass(frozen=True)
class Assignment:
    placement: dict[str, DeviceId]


@dataclass(frozen=True)
class CommCost:
    total: float
    per_module: dict[ModuleKey, float]


def _param_count(value) -> float:
    return float(getattr(value, "n_params", value))


class CostContext:
    """Precomputed index arrays for repeated cost evaluations over one
    task/module structure with varying placements."""

    def __init__(
        self,
        tasks: Sequence[TaskSpec],
        modules: Mapping[ModuleKey, object],
        topo: ClusterTopology,
        w_intra: float = DEFAULT_W_INTRA,
        w_inter: float = DEFAULT_W_INTER,
    ):
        self.topo = topo
        self.w_intra = w_intra
        self.w_inter = w_inter
        self.tasks = sorted(tasks, key=lambda t: t.id)
        self.task_index = {t.id: i for i, t in enumerate(self.tasks)}
        self.module_keys = sorted(modules)
        self.params = np.array(
            [_param_count(modules[k]) for k in self.module_keys], dtype=np.float64
        )
        by_module: dict[ModuleKey, list[int]] = {k: [] for k in self.module_keys}
        for i, task in enumerate(self.tasks):
            for key in task.modules():
                by_module[key].append(i)
        offsets = [0]
        indices: list[int] = []
        for key in self.module_keys:
            indices.extend(by_module[key])
            offsets.append(len(indices))
        self.mod_task_off = np.array(offsets, dtype=np.int64)
        self.mod_task_idx = np.array(indices, dtype=np.int64)
        self.dev_node = np.array(
            [d.node for d in topo.devices()], dtype=np.int64
        )
        self._per_module = np.zeros(len(self.module_keys), dtype=np.float64)

    def placement_array(self, placement: Mapping[str, DeviceId]) -> np.ndarray:
        arr = np.zeros(len(self.tasks), dtype=np.int64)
        for task in self.tasks:
            arr[self.task_index[task.id]] = self.topo.flat(placement[task.id])
        return arr

    def cost(self, task_dev: np.ndarray) -> float:
        return comm_cost_kernel(
            self.params,
            self.mod_task_off,
            self.mod_task_idx,
            task_dev,
            self.dev_node,
            self.w_intra,
            self.w_inter,
            self._per_module,
        )

    def cost_breakdown(self, task_dev: np.ndarray) -> CommCost:
        total = self.cost(task_dev)
        per_module = dict(zip(self.module_keys, self._per_module.tolist()))
        return CommCost(total, per_module)


def comm_cost(
    a: Assignment,
    tasks: Sequence[TaskSpec],
    modules: Mapping[ModuleKey, object],
    topo: ClusterTopology,
    w_intra: float = DEFAULT_W_INTRA,
    w_inter: float = DEFAULT_W_INTER,
) -> CommCost:
    """Synchronization cost of an assignment; total is the sum of the
    non-negative per-module contributions."""
    ctx = CostContext(tasks, modules, topo, w_intra, w_inter)
    return ctx.cost_breakdown(ctx.placement_array(a.placement))


def validate_assignment(
    a: Assignment, tasks: Sequence[TaskSpec], topo: ClusterTopology
) -> list[str]:
    violations = []
    per_device: dict[DeviceId, list[TaskSpec]] = {}
    for task in sorted(tasks, key=lambda t: t.id):
        dev = a.placement.get(task.id)
        if dev is None:
            violations.append(f"task {task.id} not placed")
            continue
        if not topo.contains(dev):
            violations.append(f"task {task.id} placed on {dev}, outside topology")
            continue
        per_device.setdefault(dev, []).append(task)
    for dev in sorted(per_device):
        hosted = per_device[dev]
        if len(hosted) > topo.n_slots_per_gpu:
            violations.append(
                f"device {dev} over capacity: {len(hosted)} > {topo.n_slots_per_gpu}"
            )
        if not any(t.introduce_at_training_step == 0 for t in hosted):
            violations.append(f"device {dev} has no task active from step 0")
    return violations


def _signature(task: TaskSpec) -> tuple:
    return tuple(sorted(task.modules()))


def _device_order(topo: ClusterTopology) -> list[DeviceId]:
    # round-robin over nodes: consecutive GPUs land on different nodes
    return [
        DeviceId(g % topo.n_nodes, g // topo.n_nodes)
        for g in range(topo.n_devices)
    ]


def initial_assignment(
    tasks: Sequence[TaskSpec], topo: ClusterTopology, seed: int = 0
) -> Assignment:
    """Greedy warm start: group tasks by sharing signature and pack
    signature-similar tasks onto the same GPU, spreading load evenly over
    as many GPUs as the curriculum cover allows."""
    n = len(tasks)
    if n == 0:
        return Assignment({})
    capacity = topo.n_devices * topo.n_slots_per_gpu
    if n > capacity:
        raise AllocationError(f"{n} tasks exceed {capacity} total slots")

    n_step0 = sum(1 for t in tasks if t.introduce_at_training_step == 0)
    min_gpus = math.ceil(n / topo.n_slots_per_gpu)
    if n_step0 < min_gpus:
        raise AllocationError(
            f"only {n_step0} step-0 tasks for at least {min_gpus} required GPUs: "
            "some device would idle before curriculum catch-up"
        )
    used = min(topo.n_devices, n)
    if n_step0 < used:
        used = n_step0

    rng = random.Random(seed)
    order = sorted(tasks, key=lambda t: t.id)
    rng.shuffle(order)
    order.sort(key=_signature)  # stable: seeded order within equal signatures

    base, rem = divmod(n, used)
    devices = _device_order(topo)[:used]
    placement: dict[str, DeviceId] = {}
    blocks: list[list[TaskSpec]] = []
    pos = 0
    for b in range(used):
        size = base + (1 if b < rem else 0)
        blocks.append(order[pos : pos + size])
        pos += size

    # repair curriculum cover: move a spare step-0 task into uncovered blocks
    def step0(block: list[TaskSpec]) -> list[TaskSpec]:
        return [t for t in block if t.introduce_at_training_step == 0]

    for b, block in enumerate(blocks):
        if step0(block):
            continue
        for other in blocks:
            spare = step0(other)
            if len(spare) >= 2:
                delayed = next(t for t in block if t.introduce_at_training_step > 0)
                block[block.index(delayed)] = spare[0]
                other[other.index(spare[0])] = delayed
                break
        else:
            raise AllocationError("unable to cover every used GPU with a step-0 task")

    for dev, block in zip(devices, blocks):
        for task in block:
            placement[task.id] = dev
    return Assignment(placement)


def local_search(
    a0: Assignment,
    tasks: Sequence[TaskSpec],
    modules: Mapping[ModuleKey, object],
    topo: ClusterTopology,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    w_intra: float = DEFAULT_W_INTRA,
    w_inter: float = DEFAULT_W_INTER,
) -> Assignment:
    """First-improvement hill climbing over relocations and swaps.

    A move is accepted iff it strictly decreases the communication cost
    and keeps the assignment feasible (capacity and curriculum cover).
    Stops at a local optimum or after `budget` cost evaluations; the
    result never costs more than the input.
    """
    ctx = CostContext(tasks, modules, topo, w_intra, w_inter)
    task_dev = ctx.placement_array(a0.placement)
    n_tasks = len(ctx.tasks)
    n_dev = topo.n_devices

    is_step0 = np.array(
        [t.introduce_at_training_step == 0 for t in ctx.tasks], dtype=bool
    )
    count = np.zeros(n_dev, dtype=np.int64)
    count0 = np.zeros(n_dev, dtype=np.int64)
    for i in range(n_tasks):
        count[task_dev[i]] += 1
        if is_step0[i]:
            count0[task_dev[i]] += 1

    def relocate_ok(t: int, dst: int) -> bool:
        src = task_dev[t]
        if count[dst] >= topo.n_slots_per_gpu:
            return False
        s0 = 1 if is_step0[t] else 0
        if count[src] - 1 > 0 and count0[src] - s0 == 0:
            return False
        if count0[dst] + s0 == 0:
            return False
        return True

    def swap_ok(t1: int, t2: int) -> bool:
        d1, d2 = task_dev[t1], task_dev[t2]
        delta = (1 if is_step0[t2] else 0) - (1 if is_step0[t1] else 0)
        return count0[d1] + delta > 0 and count0[d2] - delta > 0

    rng = random.Random(seed)
    cur_cost = ctx.cost(task_dev)
    evals = 0
    improved = True
    while improved and evals < budget:
        improved = False
        moves: list[tuple[int, int, int]] = []
        for t in range(n_tasks):
            for dst in range(n_dev):
                if dst != task_dev[t] and count[dst] < topo.n_slots_per_gpu:
                    moves.append((0, t, dst))
        for t1 in range(n_tasks):
            for t2 in range(t1 + 1, n_tasks):
                if task_dev[t1] != task_dev[t2]:
                    moves.append((1, t1, t2))
        rng.shuffle(moves)
        for kind, x, y in moves:
            if evals >= budget:
                break
            if kind == 0:
                if not relocate_ok(x, y):
                    continue
                src = task_dev[x]
                task_dev[x] = y
                evals += 1
                new_cost = ctx.cost(task_dev)
                if new_cost < cur_cost - 1e-12:
                    cur_cost = new_cost
                    count[src] -= 1
                    count[y] += 1
                    if is_step0[x]:
                        count0[src] -= 1
                        count0[y] += 1
                    improved = True
                    break
                task_dev[x] = src
            else:
                if not swap_ok(x, y):
                    continue
                d1, d2 = task_dev[x], task_dev[y]
                task_dev[x], task_dev[y] = d2, d1
                evals += 1
                new_cost = ctx.cost(task_dev)
                if new_cost < cur_cost - 1e-12:
                    cur_cost = new_cost
                    if is_step0[x] != is_step0[y]:
                        delta = (1 if is_step0[y] else 0) - (1 if is_step0[x] else 0)
                        count0[d1] += delta
                        count0[d2] -= delta
                    improved = True
                    break
                task_dev[x], task_dev[y] = d1, d2

    devices = topo.devices()
    placement = {
        ctx.tasks[i].id: devices[task_dev[i]] for i in range(n_tasks)
    }
    return Assignment(placement)
