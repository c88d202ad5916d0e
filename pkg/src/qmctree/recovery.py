"""Petz-map recovery, the normality compatibility test, and pair selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layout import LayoutError, SubsystemLayout, embed
from .linalg import frobenius, matrix_function, support_cutoff, trace_distance
from .states import (
    DensityOperator,
    conditional_mutual_information,
    mutual_information,
    relative_entropy,
    von_neumann_entropy,
)

DEFAULT_EPS_MARGINAL = 1e-8
DEFAULT_EPS_NORMALITY = 1e-8


class RecoveryError(ValueError):
    """Raised for inconsistent overlaps or malformed recovery inputs."""


class IncompatiblePairsError(RecoveryError):
    """Raised when a selection rule's all-pairs hypothesis fails."""


def _compose_layouts(
    rho_ab: DensityOperator, rho_bc: DensityOperator
) -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...], SubsystemLayout]:
    """Split two overlapping marginals into (A, B, C) label groups."""
    s1, s2 = set(rho_ab.labels), set(rho_bc.labels)
    b = s1 & s2
    if not b:
        raise LayoutError("marginals share no label")
    a = tuple(l for l in rho_ab.labels if l not in b)
    c = tuple(l for l in rho_bc.labels if l not in b)
    if not a or not c:
        raise LayoutError("one marginal is contained in the other")
    b = tuple(l for l in rho_ab.labels if l in b)
    for label in b:
        if rho_ab.layout.dim_of(label) != rho_bc.layout.dim_of(label):
            raise LayoutError(f"dimension mismatch on shared label {label!r}")
    labels = a + b + c
    dims = tuple(
        rho_ab.layout.dim_of(l) if l in rho_ab.labels else rho_bc.layout.dim_of(l)
        for l in labels
    )
    return a, b, c, SubsystemLayout(labels, dims)


def _overlap_residual(rho_ab, rho_bc, b_labels) -> float:
    return trace_distance(
        rho_ab.marginal(b_labels).matrix, rho_bc.marginal(b_labels).matrix
    )


@dataclass(frozen=True)
class RecoveryResult:
    state: DensityOperator
    pre_normalization_trace: float


def petz_recover(
    rho_ab: DensityOperator,
    rho_bc: DensityOperator,
    t: float = 0.0,
    eps_m: float = DEFAULT_EPS_MARGINAL,
    target: SubsystemLayout | None = None,
    check_overlap: bool = True,
) -> RecoveryResult:
    """Recover a joint state from two marginals sharing their middle factor.

    Applies the rotated transpose map to ``rho_ab`` (t = 0 is the plain
    map); the output is renormalized with the raw trace recorded.
    """
    a, b, c, layout = _compose_layouts(rho_ab, rho_bc)
    if target is not None:
        if set(target.labels) != set(layout.labels):
            raise LayoutError("target layout labels do not match the marginals")
        layout = target
    if check_overlap:
        residual = _overlap_residual(rho_ab, rho_bc, b)
        if residual > eps_m:
            raise RecoveryError(
                f"marginals disagree on {b}: trace distance {residual:.3e} "
                f"> {eps_m:.1e}"
            )
    rho_b = rho_bc.marginal(b)
    z = (1 + 1j * t) / 2
    bc_l = embed(matrix_function(rho_bc.matrix, "power", z), rho_bc.layout, layout)
    bc_r = embed(
        matrix_function(rho_bc.matrix, "power", z.conjugate()), rho_bc.layout, layout
    )
    b_l = embed(matrix_function(rho_b.matrix, "power", -z), rho_b.layout, layout)
    b_r = embed(
        matrix_function(rho_b.matrix, "power", -z.conjugate()), rho_b.layout, layout
    )
    ab = embed(rho_ab.matrix, rho_ab.layout, layout)
    m = bc_l @ b_l @ ab @ b_r @ bc_r
    m = (m + m.conj().T) / 2
    # clip tiny negative eigenvalues left by floating-point cancellation
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    m = (v * w) @ v.conj().T
    tr = float(np.trace(m).real)
    return RecoveryResult(DensityOperator(layout, m / tr), tr)


@dataclass(frozen=True)
class CompatReport:
    """Outcome of the normality-based compatibility test."""

    marginal_consistency_residual: float
    normality_residual: float
    self_adjoint_residual: float
    rank_deficient: bool
    verdict: bool
    eps_m: float = field(default=DEFAULT_EPS_MARGINAL, compare=False)
    eps_n: float = field(default=DEFAULT_EPS_NORMALITY, compare=False)


def check_qmc_compatibility(
    rho_ab: DensityOperator,
    rho_bc: DensityOperator,
    eps_m: float = DEFAULT_EPS_MARGINAL,
    eps_n: float = DEFAULT_EPS_NORMALITY,
) -> CompatReport:
    """Test whether two overlapping marginals admit a joint state with zero
    conditional correlation across their shared factor."""
    a, b, c, layout = _compose_layouts(rho_ab, rho_bc)
    marg_res = _overlap_residual(rho_ab, rho_bc, b)
    rho_b = rho_bc.marginal(b)

    w_b = rho_b.eigenvalues()
    rank_deficient = bool(np.min(w_b) <= support_cutoff(w_b)) or not (
        rho_ab.is_full_rank() and rho_bc.is_full_rank()
    )

    bc_half = embed(matrix_function(rho_bc.matrix, "sqrt"), rho_bc.layout, layout)
    b_inv = embed(matrix_function(rho_b.matrix, "inv_sqrt"), rho_b.layout, layout)
    ab_half = embed(matrix_function(rho_ab.matrix, "sqrt"), rho_ab.layout, layout)
    theta = bc_half @ b_inv @ ab_half
    scale = max(frobenius(theta) ** 2, support_cutoff(np.array([1.0])))
    comm = theta @ theta.conj().T - theta.conj().T @ theta
    norm_res = frobenius(comm) / scale
    sa_res = frobenius(theta - theta.conj().T) / max(frobenius(theta), 1e-300)

    verdict = marg_res <= eps_m and norm_res <= eps_n
    return CompatReport(marg_res, norm_res, sa_res, rank_deficient, verdict, eps_m, eps_n)


# ---------------------------------------------------------------------------
# best two out of three

def chains_in_tie_order(labels: tuple[str, str, str]):
    """The three middle-vertex chains, in the fixed tie-break order
    (XY,YZ) pairs: (AB,BC) < (BC,AC) < (AB,AC)."""
    a, b, c = labels
    return [(a, b, c), (b, c, a), (b, a, c)]


def chain_pairs(chain):
    x, y, z = chain
    return tuple(sorted((x, y))), tuple(sorted((y, z)))


def chain_discarded(chain):
    x, y, z = chain
    return tuple(sorted((x, z)))


@dataclass(frozen=True)
class PairSelection:
    discarded_pair: tuple[str, str]
    chain: tuple[str, str, str]
    scores: dict
    estimator: DensityOperator


def best_pair_min_entropy(
    marginals: dict, estimators: dict
) -> PairSelection:
    """Select the chain whose estimator has minimum von Neumann entropy.

    ``estimators`` maps chains (X, Y, Z) to their joint estimators; ties
    are broken by the fixed chain order.
    """
    if not estimators:
        raise RecoveryError("no estimators supplied")
    labels = _tripartite_labels(marginals)
    order = [c for c in chains_in_tie_order(labels) if c in estimators]
    if not order:
        raise RecoveryError("estimators do not match any tripartite chain")
    scores = {c: von_neumann_entropy(estimators[c]) for c in order}
    best = min(order, key=lambda c: (scores[c], order.index(c)))
    return PairSelection(chain_discarded(best), best, scores, estimators[best])


def _tripartite_labels(marginals: dict) -> tuple[str, str, str]:
    labels = sorted({l for pair in marginals for l in pair})
    if len(labels) != 3 or len(marginals) != 3:
        raise RecoveryError("expected three bipartite marginals on three labels")
    return tuple(labels)


def best_pair_mutual_info(
    source,
    eps_m: float = DEFAULT_EPS_MARGINAL,
    eps_n: float = DEFAULT_EPS_NORMALITY,
    require_compatible: bool = True,
) -> PairSelection:
    """Discard the marginal with minimum mutual information and recover.

    ``source`` is either a tripartite DensityOperator or a dict mapping
    sorted label pairs to bipartite marginals.  All three chains must pass
    the compatibility check; otherwise IncompatiblePairsError is raised and
    the caller should fall back to the min-entropy rule.
    """
    if isinstance(source, DensityOperator):
        if len(source.labels) != 3:
            raise LayoutError("mutual-information selection expects three factors")
        marginals = {
            tuple(sorted(p)): source.marginal(sorted(p))
            for p in [
                (source.labels[0], source.labels[1]),
                (source.labels[1], source.labels[2]),
                (source.labels[0], source.labels[2]),
            ]
        }
    else:
        marginals = {tuple(sorted(k)): v for k, v in source.items()}
    labels = _tripartite_labels(marginals)

    if require_compatible:
        for chain in chains_in_tie_order(labels):
            p1, p2 = chain_pairs(chain)
            report = check_qmc_compatibility(
                marginals[p1], marginals[p2], eps_m, eps_n
            )
            if not report.verdict:
                raise IncompatiblePairsError(
                    f"chain {'-'.join(chain)} fails the compatibility check "
                    f"(marginal residual {report.marginal_consistency_residual:.3e}, "
                    f"normality residual {report.normality_residual:.3e})"
                )

    mi = {
        pair: mutual_information(m, (pair[0],), (pair[1],))
        for pair, m in marginals.items()
    }
    order = chains_in_tie_order(labels)
    best = min(
        order,
        key=lambda c: (-(mi[chain_pairs(c)[0]] + mi[chain_pairs(c)[1]]),
                       order.index(c)),
    )
    p1, p2 = chain_pairs(best)
    estimator = petz_recover(marginals[p1], marginals[p2], eps_m=eps_m).state
    scores = {c: mi[chain_pairs(c)[0]] + mi[chain_pairs(c)[1]] for c in order}
    return PairSelection(chain_discarded(best), best, scores, estimator)


# ---------------------------------------------------------------------------
# relative-entropy bookkeeping

@dataclass(frozen=True)
class RelativeEntropyGap:
    """Four-term split of S(rho_true || estimator) for a chain X-Y-Z."""

    neg_pairwise_mutual_info: float
    neg_estimator_cmi: float
    sum_single_entropies: float
    neg_joint_entropy: float

    @property
    def total(self) -> float:
        return (
            self.neg_pairwise_mutual_info
            + self.neg_estimator_cmi
            + self.sum_single_entropies
            + self.neg_joint_entropy
        )


def relative_entropy_gap(
    rho_true: DensityOperator,
    estimator: DensityOperator,
    chain: tuple[str, str, str],
    eps_compat: float = 1e-6,
) -> RelativeEntropyGap:
    x, y, z = chain
    for pair in chain_pairs(chain):
        dist = trace_distance(
            rho_true.marginal(pair).matrix, estimator.marginal(pair).matrix
        )
        if dist > eps_compat:
            raise RecoveryError(
                f"estimator violates the {pair} marginal by {dist:.3e}"
            )
    mi_sum = mutual_information(
        rho_true.marginal(sorted((x, y))), (x,), (y,)
    ) + mutual_information(rho_true.marginal(sorted((y, z))), (y,), (z,))
    cmi = conditional_mutual_information(estimator, (x,), (y,), (z,))
    singles = sum(
        von_neumann_entropy(rho_true.marginal((w,))) for w in rho_true.labels
    )
    return RelativeEntropyGap(
        -mi_sum, -cmi, singles, -von_neumann_entropy(rho_true)
    )
