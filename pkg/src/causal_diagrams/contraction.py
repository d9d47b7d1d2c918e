"""Tensor-network contraction over named indices.

Factors are ``(array, labels)`` pairs.  Labels are arbitrary hashables;
einsum letters are assigned locally per pairwise step, so networks with
more distinct labels than einsum has letters still contract.
"""
from __future__ import annotations

import string
from typing import Sequence

import numpy as np

_LETTERS = string.ascii_letters


def _einsum(operands, labels_in, labels_out):
    letters = {}
    for lab in [l for ls in labels_in for l in ls] + list(labels_out):
        if lab not in letters:
            letters[lab] = _LETTERS[len(letters)]
    spec = ",".join("".join(letters[l] for l in ls) for ls in labels_in)
    spec += "->" + "".join(letters[l] for l in labels_out)
    return np.einsum(spec, *operands)


def _dedupe(labels):
    out = []
    for l in labels:
        if l not in out:
            out.append(l)
    return out


def contract(factors: Sequence, open_labels: Sequence, method: str = "greedy") -> np.ndarray:
    """Contract ``factors`` leaving ``open_labels`` (distinct) in that order.

    ``greedy`` repeatedly merges the pair with the smallest result;
    ``sweep`` folds factors in the given order.  Both sum over every label
    that is not open, and agree up to float rounding.
    """
    open_labels = list(open_labels)
    if len(set(open_labels)) != len(open_labels):
        raise ValueError("open labels must be distinct")
    dims = {}
    work = []
    for arr, labels in factors:
        arr = np.asarray(arr, dtype=np.float64)
        labels = list(labels)
        if arr.ndim != len(labels):
            raise ValueError(f"factor rank {arr.ndim} does not match labels {labels}")
        for l, d in zip(labels, arr.shape):
            if dims.setdefault(l, d) != d:
                raise ValueError(f"index {l!r} has inconsistent sizes")
        work.append((arr, labels))
    for l in open_labels:
        if l not in dims:
            raise ValueError(f"open label {l!r} does not occur in any factor")
    keep_open = set(open_labels)

    def needed_elsewhere(idx_skip, lab):
        if lab in keep_open:
            return True
        return any(lab in ls for k, (_, ls) in enumerate(work) if k not in idx_skip)

    # collapse repeated labels and sum out private ones first
    for k in range(len(work)):
        arr, labels = work[k]
        out = [l for l in _dedupe(labels) if needed_elsewhere({k}, l)]
        if out != labels:
            work[k] = (_einsum([arr], [labels], out), out)

    if method == "greedy":
        while len(work) > 1:
            best = None
            for i in range(len(work)):
                for j in range(i + 1, len(work)):
                    li, lj = work[i][1], work[j][1]
                    shared = set(li) & set(lj)
                    union = _dedupe(li + lj)
                    out = [l for l in union if needed_elsewhere({i, j}, l)]
                    size = 1
                    for l in out:
                        size *= dims[l]
                    key = (0 if shared else 1, size, i, j)
                    if best is None or key < best[0]:
                        best = (key, i, j, out)
            _, i, j, out = best
            (ai, li), (aj, lj) = work[i], work[j]
            merged = (_einsum([ai, aj], [li, lj], out), out)
            work = [w for k, w in enumerate(work) if k not in (i, j)] + [merged]
    elif method == "sweep":
        acc = (np.array(1.0), [])
        work_all = work
        for idx in range(len(work_all)):
            arr, labels = work_all[idx]
            rest = work_all[idx + 1:]
            union = _dedupe(acc[1] + labels)
            out = [l for l in union if l in keep_open or any(l in ls for _, ls in rest)]
            acc = (_einsum([acc[0], arr], [acc[1], labels], out), out)
        work = [acc]
    else:
        raise ValueError(f"unknown contraction method {method!r}")

    if not work:
        return np.array(1.0)
    arr, labels = work[0]
    return _einsum([arr], [labels], open_labels)
