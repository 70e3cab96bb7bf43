# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled communication cost kernel.

Hot path of the local-search allocator: one call per candidate move.
Must stay semantically identical to ``_cost_py.comm_cost_kernel``.
"""

import numpy as np


def comm_cost_kernel(
    double[::1] params,
    long long[::1] mod_task_off,
    long long[::1] mod_task_idx,
    long long[::1] task_dev,
    long long[::1] dev_node,
    double w_intra,
    double w_inter,
    double[::1] out_per_module,
):
    cdef Py_ssize_t n_modules = params.shape[0]
    cdef Py_ssize_t n_devices = dev_node.shape[0]
    cdef Py_ssize_t m, i, n_dev, n_node
    cdef long long t, d, node
    cdef double total = 0.0
    cdef double cost

    cdef long long max_node = 0
    for i in range(n_devices):
        if dev_node[i] > max_node:
            max_node = dev_node[i]

    dev_stamp_arr = np.full(n_devices, -1, dtype=np.int64)
    node_stamp_arr = np.full(max_node + 1, -1, dtype=np.int64)
    cdef long long[::1] dev_stamp = dev_stamp_arr
    cdef long long[::1] node_stamp = node_stamp_arr

    for m in range(n_modules):
        n_dev = 0
        n_node = 0
        for i in range(mod_task_off[m], mod_task_off[m + 1]):
            t = mod_task_idx[i]
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
