import os
import subprocess
import sys

import numpy as np
import pytest

from causal_diagrams import _kernels_py, kernels
from causal_diagrams.counterfactual import _program, evaluate_counterfactual, random_terms
from causal_diagrams.sampling import random_dag_bounded, random_fcm

compiled = pytest.importorskip("causal_diagrams._kernels")


def cases(rng, n):
    for _ in range(n):
        g = random_dag_bounded(rng, int(rng.integers(1, 6)), 2)
        cards = {v: int(rng.integers(2, 4)) for v in g.vertices}
        fcm = random_fcm(rng, g, cards, noise_card=int(rng.integers(1, 4)))
        yield fcm, random_terms(rng, cards)


def test_backends_agree(rng):
    for fcm, terms in cases(rng, 200):
        prog, _ = _program(fcm, terms)
        a = np.asarray(compiled.run_program(**prog))
        b = _kernels_py.run_program(**prog)
        assert np.max(np.abs(a - b)) <= 1e-14


def test_kernel_argument_is_used(rng):
    fcm, terms = next(cases(rng, 1))
    a = evaluate_counterfactual(fcm, terms, kernel=_kernels_py.run_program)
    b = evaluate_counterfactual(fcm, terms, kernel=compiled.run_program)
    assert a.max_diff(b) <= 1e-14


def test_chunked_fallback(rng, monkeypatch):
    monkeypatch.setattr(_kernels_py, "CHUNK", 7)
    for fcm, terms in cases(rng, 30):
        prog, _ = _program(fcm, terms)
        a = np.asarray(compiled.run_program(**prog))
        assert np.max(np.abs(a - _kernels_py.run_program(**prog))) <= 1e-14


def test_compiled_backend_selected():
    assert kernels.BACKEND == "cython"


def test_pure_switch():
    env = {**os.environ, "CAUSAL_DIAGRAMS_PURE": "1"}
    out = subprocess.run([sys.executable, "-c",
                          "from causal_diagrams import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
