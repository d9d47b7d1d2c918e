# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled enumeration of exogenous assignments for counterfactual queries."""
import numpy as np

from libc.stdint cimport int64_t


def run_program(const int64_t[:] noise_cards, const double[:] noise_probs,
                const int64_t[:] noise_offsets,
                const int64_t[:] step_out, const int64_t[:] step_ptr,
                const int64_t[:] step_in_slots, const int64_t[:] step_in_strides,
                const int64_t[:] step_table_off, const int64_t[:] tables,
                const int64_t[:] cond_slots, const int64_t[:] cond_vals,
                const int64_t[:] out_slots, const int64_t[:] out_strides,
                int64_t n_slots, int64_t out_size):
    """Accumulate ``Σ_u λ(u) [conditions hold] δ(outputs)`` over every ``u``."""
    cdef Py_ssize_t n_noise = noise_cards.shape[0]
    cdef Py_ssize_t n_steps = step_out.shape[0]
    cdef Py_ssize_t n_cond = cond_slots.shape[0]
    cdef Py_ssize_t n_out = out_slots.shape[0]
    cdef int64_t[:] slots = np.zeros(max(n_slots, 1), dtype=np.int64)
    cdef int64_t[:] u = np.zeros(max(n_noise, 1), dtype=np.int64)
    acc_arr = np.zeros(max(out_size, 1), dtype=np.float64)
    cdef double[:] acc = acc_arr
    cdef Py_ssize_t i, s, k, j
    cdef int64_t idx, off
    cdef double w
    cdef bint ok
    cdef bint done = False
    while not done:
        w = 1.0
        for i in range(n_noise):
            slots[i] = u[i]
            w *= noise_probs[noise_offsets[i] + u[i]]
        if w != 0.0:
            for s in range(n_steps):
                idx = 0
                for k in range(step_ptr[s], step_ptr[s + 1]):
                    idx += slots[step_in_slots[k]] * step_in_strides[k]
                slots[step_out[s]] = tables[step_table_off[s] + idx]
            ok = True
            for j in range(n_cond):
                if slots[cond_slots[j]] != cond_vals[j]:
                    ok = False
                    break
            if ok:
                off = 0
                for j in range(n_out):
                    off += slots[out_slots[j]] * out_strides[j]
                acc[off] += w
        # mixed-radix increment, last noise fastest
        i = n_noise - 1
        while True:
            if i < 0:
                done = True
                break
            u[i] += 1
            if u[i] < noise_cards[i]:
                break
            u[i] = 0
            i -= 1
    return acc_arr[:out_size] if out_size > 0 else acc_arr[:1]
