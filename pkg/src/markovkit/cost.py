"""Markovianizing cost of a pure tripartite state, with universal bounds.

The cost of erasing the A-to-C conditional correlation by randomizing A is
determined by the splitting of supp(psi^A): H({p_j}) + 2 sum_j p_j S(phi_j^{aR})
bits per copy.  I(A:C|B) lower-bounds it for every state, pure or mixed; no
closed form is known for mixed inputs, so ``cost_bounds`` reports the upper
value only when the input is pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kidecomp import ki_decompose
from .markov import _three_groups
from .qcore import (
    DEFAULT_TOLS,
    DensityState,
    PureState,
    Tolerances,
    VerificationError,
    entropy_of_spectrum,
    partial_trace,
    qcmi,
    von_neumann_entropy,
)

__all__ = ["CostReport", "CostBounds", "markovianizing_cost", "cost_bounds"]


@dataclass
class CostReport:
    """Cost value, its universal lower bound, and the two summands."""

    m_dec_bits: float
    qcmi_lower_bits: float
    weight_entropy_bits: float  # H({p_j})
    mean_right_entropy_bits: float  # sum_j p_j S(phi_j^{aR})


@dataclass
class CostBounds:
    """Bounds applicable to a general (possibly mixed) state."""

    qcmi_lower_bits: float
    m_dec_bits: float | None
    upper_known: bool


def markovianizing_cost(psi: PureState, grouping,
                        tols: Tolerances = DEFAULT_TOLS) -> CostReport:
    """H({p_j}) + 2 sum_j p_j S(phi_j^{aR}) in bits for a pure state.

    The splitting comes from the decomposition of psi^{AC} over the A
    grouping; I(A:C|B) is attached as the universal lower bound and checked
    against the value.
    """
    a, b, c = _three_groups(grouping, psi.layout)
    rho = psi.to_density()
    rho_ac = partial_trace(rho, tuple(a) + tuple(c))
    ki = ki_decompose(rho_ac, a, tols)
    d_c = ki.rest.total_dim
    h = entropy_of_spectrum(ki.probabilities)
    mean = 0.0
    for blk in ki.blocks:
        n = blk.a_r_dim
        marg = np.einsum("acbc->ab", blk.phi.reshape(n, d_c, n, d_c))
        mean += blk.p * von_neumann_entropy(marg, tols)
    value = h + 2.0 * mean
    lower = qcmi(rho, (a, b, c), tols)
    if lower > value + 1e-9:
        raise VerificationError(
            f"cost {value:.12f} bits fell below its lower bound {lower:.12f}")
    return CostReport(value, lower, h, mean)


def cost_bounds(state: DensityState, grouping,
                tols: Tolerances = DEFAULT_TOLS) -> CostBounds:
    """I(A:C|B) lower bound; the exact cost on top when the state is pure.

    Purity is decided spectrally (top eigenvalue within 1e-10 of one).  For
    mixed states no formula for the cost is known and upper_known is False.
    """
    a, b, c = _three_groups(grouping, state.layout)
    lower = qcmi(state, (a, b, c), tols)
    vals, vecs = np.linalg.eigh(state.matrix)
    if vals[-1] >= 1.0 - 1e-10:
        psi = PureState(vecs[:, -1], state.layout)
        report = markovianizing_cost(psi, (a, b, c), tols)
        return CostBounds(lower, report.m_dec_bits, True)
    return CostBounds(lower, None, False)
