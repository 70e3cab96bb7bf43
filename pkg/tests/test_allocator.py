import itertools
import random

import numpy as np
import pytest

from mmtplan.allocator import (
    AllocationError,
    Assignment,
    CostContext,
    comm_cost,
    initial_assignment,
    local_search,
    validate_assignment,
)
from mmtplan.core import ClusterTopology, DeviceId, ModuleKey, Side
from mmtplan.sharing import enumerate_modules
from mmtplan._cost_py import comm_cost_kernel as py_kernel

from conftest import make_task


def random_instance(seed, n_tasks, topo, n_groups=3, allow_delayed=True):
    """Random tasks over a small pool of sharing groups."""
    rng = random.Random(seed)
    tasks = []
    for i in range(n_tasks):
        src = f"s{i:02d}"
        tgt = f"t{i:02d}"
        enc = [f"e{rng.randrange(n_groups)}", "full"]
        dec = [f"d{rng.randrange(n_groups)}"]
        intro = 0
        if allow_delayed and rng.random() < 0.3:
            intro = 1000
        tasks.append(make_task(src, tgt, enc, dec, intro=intro))
    # guarantee feasibility: at least one step-0 task per possibly-used GPU
    n_step0 = sum(1 for t in tasks if t.introduce_at_training_step == 0)
    needed = -(-n_tasks // topo.n_slots_per_gpu)
    i = 0
    while n_step0 < needed:
        if tasks[i].introduce_at_training_step > 0:
            tasks[i] = make_task(
                tasks[i].src_lang, tasks[i].tgt_lang,
                [m.group for m in tasks[i].enc_modules],
                [m.group for m in tasks[i].dec_modules],
            )
            n_step0 += 1
        i += 1
    return tasks


def feasible_placements(tasks, topo):
    devices = topo.devices()
    for combo in itertools.product(devices, repeat=len(tasks)):
        counts = {}
        for dev in combo:
            counts[dev] = counts.get(dev, 0) + 1
        if any(c > topo.n_slots_per_gpu for c in counts.values()):
            continue
        placement = {t.id: d for t, d in zip(tasks, combo)}
        a = Assignment(placement)
        if validate_assignment(a, tasks, topo):
            continue
        yield a


class TestCommCost:
    def test_single_task_single_gpu(self):
        topo = ClusterTopology(1, 1, 1)
        t = make_task("aa", "bb", ["x"], ["y"], device=(0, 0))
        a = Assignment({t.id: DeviceId(0, 0)})
        cost = comm_cost(a, [t], enumerate_modules([t], 100), topo)
        assert cost.total == 0.0

    def test_independent_tasks_cost_zero(self):
        topo = ClusterTopology(1, 4, 1)
        tasks = [
            make_task(f"s{i}", f"t{i}", [f"s{i}"], [f"t{i}"]) for i in range(4)
        ]
        a = Assignment({t.id: DeviceId(0, i) for i, t in enumerate(tasks)})
        cost = comm_cost(a, tasks, enumerate_modules(tasks, 100), topo)
        assert cost.total == 0.0

    def test_full_module_two_gpus_one_node(self):
        topo = ClusterTopology(1, 2, 1)
        t1 = make_task("aa", "bb", ["full"], ["d1"])
        t2 = make_task("bb", "aa", ["full"], ["d2"])
        a = Assignment({t1.id: DeviceId(0, 0), t2.id: DeviceId(0, 1)})
        modules = {k: 100 for k in enumerate_modules([t1, t2])}
        cost = comm_cost(a, [t1, t2], modules, topo)
        # 100 * (1*(2-1) + (4-1)*(1-1))
        assert cost.total == 100.0
        assert cost.per_module[ModuleKey(Side.ENCODER, 0, "full")] == 100.0

    def test_inter_node_span_weighted(self):
        topo = ClusterTopology(2, 1, 1)
        t1 = make_task("aa", "bb", ["full"], ["d1"])
        t2 = make_task("bb", "aa", ["full"], ["d2"])
        a = Assignment({t1.id: DeviceId(0, 0), t2.id: DeviceId(1, 0)})
        modules = {k: 100 for k in enumerate_modules([t1, t2])}
        # 100 * (1*1 + 3*1) = 400 for the shared encoder
        assert comm_cost(a, [t1, t2], modules, topo).total == 400.0

    def test_total_is_sum_of_contributions(self):
        topo = ClusterTopology(2, 2, 2)
        tasks = random_instance(11, 6, topo)
        a = initial_assignment(tasks, topo)
        cost = comm_cost(a, tasks, enumerate_modules(tasks, 10), topo)
        assert cost.total == pytest.approx(sum(cost.per_module.values()))
        assert all(v >= 0 for v in cost.per_module.values())

    def test_device_relabeling_invariance(self):
        # cost depends only on co-location structure
        topo = ClusterTopology(2, 2, 2)
        tasks = random_instance(5, 6, topo, allow_delayed=False)
        modules = enumerate_modules(tasks, 10)
        a = initial_assignment(tasks, topo)
        base = comm_cost(a, tasks, modules, topo).total
        # swap the gpu labels within each node, then swap the two nodes
        relabeled = {
            tid: DeviceId(1 - d.node, 1 - d.gpu) for tid, d in a.placement.items()
        }
        assert comm_cost(Assignment(relabeled), tasks, modules, topo).total == base


class TestKernelParity:
    def test_compiled_matches_pure_python(self):
        topo = ClusterTopology(3, 2, 2)
        tasks = random_instance(21, 9, topo)
        modules = enumerate_modules(tasks, 7)
        ctx = CostContext(tasks, modules, topo)
        rng = random.Random(0)
        for _ in range(50):
            placement = np.array(
                [rng.randrange(topo.n_devices) for _ in tasks], dtype=np.int64
            )
            out = np.zeros(len(ctx.module_keys))
            expected = py_kernel(
                ctx.params, ctx.mod_task_off, ctx.mod_task_idx,
                placement, ctx.dev_node, ctx.w_intra, ctx.w_inter, out,
            )
            assert ctx.cost(placement) == pytest.approx(expected, rel=1e-12)


class TestInitialAssignment:
    def test_forced_one_per_gpu(self):
        topo = ClusterTopology(1, 4, 1)
        tasks = [make_task(f"s{i}", "zz", ["full"], ["full"]) for i in range(4)]
        a = initial_assignment(tasks, topo)
        assert len(set(a.placement.values())) == 4

    def test_balanced_packing(self):
        topo = ClusterTopology(1, 4, 2)
        tasks = [make_task(f"s{i}", "zz", ["full"], ["full"]) for i in range(8)]
        a = initial_assignment(tasks, topo)
        counts = {}
        for dev in a.placement.values():
            counts[dev] = counts.get(dev, 0) + 1
        assert sorted(counts.values()) == [2, 2, 2, 2]

    def test_capacity_error(self):
        topo = ClusterTopology(1, 4, 1)
        tasks = [make_task(f"s{i}", "zz", ["full"], ["full"]) for i in range(5)]
        with pytest.raises(AllocationError):
            initial_assignment(tasks, topo)

    def test_curriculum_cover_infeasible(self):
        topo = ClusterTopology(1, 2, 1)
        tasks = [
            make_task("aa", "zz", ["full"], ["full"], intro=0),
            make_task("bb", "zz", ["full"], ["full"], intro=5000),
        ]
        # 2 tasks, slots=1: both GPUs used, but only one step-0 task...
        # the allocator shrinks to the feasible GPU count instead
        with pytest.raises(AllocationError):
            initial_assignment(tasks, topo)

    def test_cover_repair(self):
        topo = ClusterTopology(1, 2, 2)
        tasks = [
            make_task("aa", "zz", ["x"], ["x"], intro=0),
            make_task("bb", "zz", ["x"], ["x"], intro=0),
            make_task("cc", "zz", ["y"], ["y"], intro=5000),
            make_task("dd", "zz", ["y"], ["y"], intro=5000),
        ]
        a = initial_assignment(tasks, topo)
        assert validate_assignment(a, tasks, topo) == []

    def test_deterministic_given_seed(self):
        topo = ClusterTopology(2, 2, 2)
        tasks = random_instance(3, 7, topo)
        assert initial_assignment(tasks, topo, seed=5) == initial_assignment(
            tasks, topo, seed=5
        )


class TestLocalSearch:
    def test_never_worse_and_valid(self):
        topo = ClusterTopology(2, 2, 2)
        for seed in range(8):
            tasks = random_instance(seed, 7, topo)
            modules = enumerate_modules(tasks, 10)
            a0 = initial_assignment(tasks, topo, seed=seed)
            before = comm_cost(a0, tasks, modules, topo).total
            result = local_search(a0, tasks, modules, topo, seed=seed)
            after = comm_cost(result, tasks, modules, topo).total
            assert after <= before
            assert validate_assignment(result, tasks, topo) == []

    def test_already_optimal_unchanged(self):
        topo = ClusterTopology(1, 2, 1)
        tasks = [
            make_task("s0", "t0", ["s0"], ["t0"]),
            make_task("s1", "t1", ["s1"], ["t1"]),
        ]
        modules = enumerate_modules(tasks, 10)
        a0 = Assignment({tasks[0].id: DeviceId(0, 0), tasks[1].id: DeviceId(0, 1)})
        assert local_search(a0, tasks, modules, topo).placement == a0.placement

    def test_colocates_shared_decoder(self):
        # two tasks sharing a decoder on different nodes, with a same-node
        # free slot: the search must bring them together
        topo = ClusterTopology(2, 1, 2)
        t1 = make_task("aa", "zz", ["aa"], ["shared"])
        t2 = make_task("bb", "zz", ["bb"], ["shared"])
        modules = enumerate_modules([t1, t2], 10)
        a0 = Assignment({t1.id: DeviceId(0, 0), t2.id: DeviceId(1, 0)})
        before = comm_cost(a0, [t1, t2], modules, topo).total
        result = local_search(a0, [t1, t2], modules, topo)
        after = comm_cost(result, [t1, t2], modules, topo).total
        assert after < before
        devs = set(result.placement.values())
        assert len(devs) == 1

    def test_matches_exhaustive_optimum(self):
        topo = ClusterTopology(1, 2, 3)
        for seed in range(10):
            tasks = random_instance(seed + 100, 6, topo)
            modules = enumerate_modules(tasks, 10)
            best = min(
                comm_cost(a, tasks, modules, topo).total
                for a in feasible_placements(tasks, topo)
            )
            a0 = initial_assignment(tasks, topo, seed=seed)
            result = local_search(a0, tasks, modules, topo, seed=seed)
            assert comm_cost(result, tasks, modules, topo).total == pytest.approx(best)

    def test_budget_zero_is_identity(self):
        topo = ClusterTopology(2, 2, 2)
        tasks = random_instance(2, 6, topo)
        modules = enumerate_modules(tasks, 10)
        a0 = initial_assignment(tasks, topo)
        assert local_search(a0, tasks, modules, topo, budget=0).placement == a0.placement
