"""Vectorised numpy fallback for the compiled enumeration kernel."""
from __future__ import annotations

import numpy as np

CHUNK = 1 << 20


def run_program(noise_cards, noise_probs, noise_offsets, step_out, step_ptr, step_in_slots,
                step_in_strides, step_table_off, tables, cond_slots, cond_vals, out_slots,
                out_strides, n_slots, out_size):
    """Same contract as the compiled kernel, processing assignments in chunks."""
    noise_cards = np.asarray(noise_cards, dtype=np.int64)
    total = int(np.prod(noise_cards)) if len(noise_cards) else 1
    acc = np.zeros(max(out_size, 1))
    for start in range(0, total, CHUNK):
        flat = np.arange(start, min(total, start + CHUNK), dtype=np.int64)
        n = len(flat)
        slots = np.zeros((max(n_slots, 1), n), dtype=np.int64)
        w = np.ones(n)
        if len(noise_cards):
            digits = np.unravel_index(flat, tuple(noise_cards))
            for i, d in enumerate(digits):
                slots[i] = d
                w *= noise_probs[noise_offsets[i] + d]
        for s in range(len(step_out)):
            idx = np.zeros(n, dtype=np.int64)
            for k in range(step_ptr[s], step_ptr[s + 1]):
                idx += slots[step_in_slots[k]] * step_in_strides[k]
            slots[step_out[s]] = tables[step_table_off[s] + idx]
        ok = np.ones(n, dtype=bool)
        for j in range(len(cond_slots)):
            ok &= slots[cond_slots[j]] == cond_vals[j]
        off = np.zeros(n, dtype=np.int64)
        for j in range(len(out_slots)):
            off += slots[out_slots[j]] * out_strides[j]
        acc += np.bincount(off[ok], weights=w[ok], minlength=len(acc))[:len(acc)]
    return acc[:out_size] if out_size > 0 else acc[:1]
