"""Shared constructions used across the test modules."""

from __future__ import annotations

import numpy as np

from markovkit.qcore import (
    DensityState,
    PureState,
    SystemLayout,
    kron_all,
    random_state,
    random_unitary,
)


def ghz(d: int = 2) -> PureState:
    """|GHZ> = sum_j |jjj> / sqrt(d) on A,B,C."""
    layout = SystemLayout.of(("A", d), ("B", d), ("C", d))
    v = np.zeros(d ** 3, dtype=complex)
    for j in range(d):
        v[j * d * d + j * d + j] = 1.0
    return PureState(v / np.sqrt(d), layout)


def bell_pair(label_a: str = "A", label_b: str = "B") -> PureState:
    layout = SystemLayout.of((label_a, 2), (label_b, 2))
    v = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    return PureState(v, layout)


def embedded_unitary_on_b(u: np.ndarray, d_a: int, d_c: int) -> np.ndarray:
    return kron_all([np.eye(d_a), u, np.eye(d_c)])


def planted_markov_state(
    rng: np.random.Generator,
    b0: int = 2,
    b_l: int = 2,
    b_r: int = 2,
    d_a: int = 2,
    d_c: int = 2,
    rotate: bool = True,
):
    """Random state of the exact block-decomposed Markov form.

    Returns (state, plant) where plant records the block data and the
    B-side isometry gamma (rows map B onto b0 (x) b_l (x) b_r coordinates).
    """
    d_b = b0 * b_l * b_r
    q = rng.dirichlet(np.ones(b0) * 4.0)
    sigmas, phis = [], []
    lay_s = SystemLayout.of(("A", d_a), ("bL", b_l))
    lay_p = SystemLayout.of(("bR", b_r), ("C", d_c))
    blocks = []
    for i in range(b0):
        sig = random_state(lay_s, seed=rng).matrix
        phi = random_state(lay_p, seed=rng).matrix
        sigmas.append(sig)
        phis.append(phi)
        blocks.append((float(q[i]), sig, phi))
    # Assemble on (A, b0, bL, bR, C), then permute B-factors together.
    dim = d_a * d_b * d_c
    full = np.zeros((dim, dim), dtype=complex)
    for i in range(b0):
        e = np.zeros((b0, b0))
        e[i, i] = 1.0
        # order (A, bL) x (b0) x (bR, C) -> rearrange to A,(b0,bL,bR),C
        blk = kron_all([np.array([[q[i]]]), sigmas[i], e, phis[i]])
        # current order: (A, bL, b0, bR, C); move b0 before bL
        t = blk.reshape((d_a, b_l, b0, b_r, d_c) * 2)
        t = t.transpose(0, 2, 1, 3, 4, 5, 7, 6, 8, 9)
        full += t.reshape(dim, dim)
    gamma = np.eye(d_b, dtype=complex)
    if rotate:
        u = random_unitary(d_b, rng)
        ub = embedded_unitary_on_b(u.conj().T, d_a, d_c)
        full = ub @ full @ ub.conj().T
        gamma = u
    layout = SystemLayout.of(("A", d_a), ("B", d_b), ("C", d_c))
    state = DensityState(full, layout, validate=False)
    plant = {
        "q": np.asarray(q, dtype=float),
        "blocks": blocks,
        "gamma": gamma,
        "dims": (b0, b_l, b_r),
    }
    return state, plant


def mix_with_noise(state: DensityState, rng: np.random.Generator, weight: float) -> DensityState:
    noise = random_state(state.layout, seed=rng)
    mat = (1.0 - weight) * state.matrix + weight * noise.matrix
    return DensityState(mat, state.layout, validate=False)
