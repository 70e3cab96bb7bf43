"""Pure-Python communication cost kernel.

Reference implementation and import-time fallback for the compiled
extension.  Semantics must stay bit-identical to ``_speedups.pyx``.
"""
from __future__ import annotations

import numpy as np


def comm_cost_kernel(
    params: np.ndarray,
    mod_task_off: np.ndarray,
    mod_task_idx: np.ndarray,
    task_dev: np.ndarray,
    dev_node: np.ndarray,
    w_intra: float,
    w_inter: float,
    out_per_module: np.ndarray,
) -> float:
    """Total synchronization cost of a placement.

    For each module, the device set spans the devices of its tasks; the
    contribution is params * (w_intra*(|devices|-1) + (w_inter-w_intra)*(|nodes|-1)).
    """
    n_modules = len(params)
    dev_stamp = np.full(len(dev_node), -1, dtype=np.int64)
    node_stamp = np.full(int(dev_node.max()) + 1 if len(dev_node) else 1, -1, dtype=np.int64)
    total = 0.0
    for m in range(n_modules):
        n_dev = 0
        n_node = 0
        for t in mod_task_idx[mod_task_off[m] : mod_task_off[m + 1]]:
            d = task_dev[t]
            if dev_stamp[d] != m:
                dev_stamp[d] = m
                n_dev += 1
                node = dev_node[d]
                if node_stamp[node] != m:
                    node_stamp[node] = m
                    n_node += 1
        if n_dev > 0:
            cost = params[m] * (w_intra * (n_dev - 1) + (w_inter - w_intra) * (n_node - 1))
        else:
            cost = 0.0
        out_per_module[m] = cost
        total += cost
    return total
