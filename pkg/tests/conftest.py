"""Shared fixtures and construction helpers for the test suite."""

import numpy as np
import pytest

from qmctree import DensityOperator, SubsystemLayout, classical_state


def ghz_state() -> DensityOperator:
    """3-qubit GHZ projector |GHZ><GHZ| with |GHZ> = (|000> + |111>)/sqrt(2)."""
    layout = SubsystemLayout(("A", "B", "C"), (2, 2, 2))
    vec = np.zeros(8, dtype=complex)
    vec[0] = vec[7] = 1 / np.sqrt(2)
    return DensityOperator(layout, np.outer(vec, vec.conj()))


def bell_state(labels=("A", "B")) -> DensityOperator:
    """Two-qubit Bell projector |Phi+><Phi+|."""
    layout = SubsystemLayout(tuple(labels), (2, 2))
    vec = np.zeros(4, dtype=complex)
    vec[0] = vec[3] = 1 / np.sqrt(2)
    return DensityOperator(layout, np.outer(vec, vec.conj()))


def classical_chain(p_a, p_b_given_a, p_c_given_b,
                    labels=("A", "B", "C")) -> DensityOperator:
    """Diagonal embedding of p(a) p(b|a) p(c|b)."""
    p_a = np.asarray(p_a, float)
    p_ba = np.asarray(p_b_given_a, float)   # [a, b]
    p_cb = np.asarray(p_c_given_b, float)   # [b, c]
    joint = np.einsum("a,ab,bc->abc", p_a, p_ba, p_cb)
    dims = joint.shape
    layout = SubsystemLayout(tuple(labels), dims)
    return classical_state(layout, joint)


def random_conditional(rng, rows: int, cols: int) -> np.ndarray:
    """Row-stochastic matrix with entries bounded away from zero."""
    m = rng.uniform(0.1, 1.0, (rows, cols))
    return m / m.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
