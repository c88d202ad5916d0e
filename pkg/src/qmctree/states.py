"""Density operators, entropic functionals and random state ensembles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .layout import LayoutError, SubsystemLayout, partial_trace
from .linalg import (
    frobenius,
    hermitian_eig,
    support_cutoff,
    trace_distance,
)

TRACE_TOL = 1e-9
OVERLAP_TOL = 1e-8


class StateError(ValueError):
    """Raised when a candidate density operator violates its invariants."""


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian, PSD, trace-one matrix bound to a SubsystemLayout."""

    layout: SubsystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.layout.dim, self.layout.dim):
            raise StateError(
                f"matrix shape {m.shape} does not match layout dim {self.layout.dim}"
            )
        scale = max(frobenius(m), 1.0)
        if frobenius(m - m.conj().T) > 1e-10 * scale:
            raise StateError("matrix is not Hermitian within tolerance")
        w = np.linalg.eigvalsh((m + m.conj().T) / 2)
        if np.min(w) < -1e-10:
            raise StateError(f"negative eigenvalue {np.min(w):.3e}")
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > TRACE_TOL:
            raise StateError(f"trace is {tr}, expected 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.layout.labels

    def marginal(self, keep) -> "DensityOperator":
        reduced = partial_trace(self.matrix, self.layout, keep)
        return DensityOperator(self.layout.restrict(keep), reduced)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def is_full_rank(self) -> bool:
        w = self.eigenvalues()
        return bool(np.min(w) > support_cutoff(w))


def maximally_mixed(layout: SubsystemLayout) -> DensityOperator:
    d = layout.dim
    return DensityOperator(layout, np.eye(d, dtype=complex) / d)


def classical_state(layout: SubsystemLayout, probs: np.ndarray) -> DensityOperator:
    """Diagonal state embedding a joint probability table (shape = dims)."""
    p = np.asarray(probs, dtype=float).reshape(layout.dim)
    return DensityOperator(layout, np.diag(p.astype(complex)))


@dataclass(frozen=True)
class MarginalSet:
    """Marginals on sub-layouts of a common parent, with cover + overlap checks."""

    parent: SubsystemLayout
    marginals: tuple[DensityOperator, ...]
    overlap_tol: float = field(default=OVERLAP_TOL, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        covered = set()
        for m in self.marginals:
            for label in m.labels:
                if label not in self.parent.labels:
                    raise LayoutError(
                        f"marginal label {label!r} not in parent layout"
                    )
                if m.layout.dim_of(label) != self.parent.dim_of(label):
                    raise LayoutError(f"dimension mismatch on label {label!r}")
            covered.update(m.labels)
        if covered != set(self.parent.labels):
            missing = set(self.parent.labels) - covered
            raise LayoutError(f"marginals do not cover labels {sorted(missing)}")
        for i, a in enumerate(self.marginals):
            for b in self.marginals[i + 1:]:
                shared = set(a.labels) & set(b.labels)
                if not shared:
                    continue
                dist = trace_distance(
                    a.marginal(shared).matrix, b.marginal(shared).matrix
                )
                if dist > self.overlap_tol:
                    raise StateError(
                        f"marginals on {a.labels} and {b.labels} disagree on "
                        f"{sorted(shared)}: trace distance {dist:.3e}"
                    )


# ---------------------------------------------------------------------------
# entropies

def von_neumann_entropy(rho: DensityOperator) -> float:
    """S(rho) = -sum lambda log lambda, in nats."""
    w = rho.eigenvalues()
    tau = support_cutoff(w)
    w = w[w > tau]
    return float(-np.sum(w * np.log(w)))


def relative_entropy(rho: DensityOperator, sigma: DensityOperator) -> float:
    """S(rho||sigma) in nats; +inf when supp(rho) is not inside supp(sigma)."""
    if rho.layout.labels != sigma.layout.labels or rho.layout.dims != sigma.layout.dims:
        raise LayoutError("relative entropy requires matching layouts")
    pe = hermitian_eig(rho.matrix)
    qe = hermitian_eig(sigma.matrix)
    p, u = pe.eigenvalues, pe.eigenvectors
    q, v = qe.eigenvalues, qe.eigenvectors
    p_sup = p > support_cutoff(p)
    q_ker = q <= support_cutoff(q)
    overlap = np.abs(u.conj().T @ v) ** 2
    leakage = float(p[p_sup] @ overlap[np.ix_(p_sup, q_ker)].sum(axis=1)) \
        if np.any(q_ker) else 0.0
    if leakage > 1e-10:
        return math.inf
    term_p = float(np.sum(p[p_sup] * np.log(p[p_sup])))
    q_sup = ~q_ker
    term_q = float(p[p_sup] @ overlap[np.ix_(p_sup, q_sup)] @ np.log(q[q_sup]))
    return term_p - term_q


def mutual_information(rho: DensityOperator, part1, part2) -> float:
    part1, part2 = tuple(part1), tuple(part2)
    if set(part1) & set(part2) or set(part1) | set(part2) != set(rho.labels):
        raise LayoutError(
            f"parts {part1} and {part2} must partition {rho.labels}"
        )
    return (
        von_neumann_entropy(rho.marginal(part1))
        + von_neumann_entropy(rho.marginal(part2))
        - von_neumann_entropy(rho)
    )


def conditional_mutual_information(rho: DensityOperator, part_a, part_b, part_c) -> float:
    """I(A:C|B) = S(AB) + S(BC) - S(B) - S(ABC)."""
    a, b, c = tuple(part_a), tuple(part_b), tuple(part_c)
    blocks = set(a) | set(b) | set(c)
    if (
        blocks != set(rho.labels)
        or len(a) + len(b) + len(c) != len(rho.labels)
    ):
        raise LayoutError(
            f"blocks {a}, {b}, {c} must partition {rho.labels}"
        )
    return (
        von_neumann_entropy(rho.marginal(a + b))
        + von_neumann_entropy(rho.marginal(b + c))
        - von_neumann_entropy(rho.marginal(b))
        - von_neumann_entropy(rho)
    )


# ---------------------------------------------------------------------------
# random ensembles

def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))


def sample_density(
    layout: SubsystemLayout, rank: int | None = None, seed=None
) -> DensityOperator:
    """Hilbert-Schmidt-ensemble sample rho = G G^dagger / Tr(G G^dagger)."""
    d = layout.dim
    if rank is None:
        rank = d
    if not 1 <= rank <= d:
        raise StateError(f"rank must be in [1, {d}], got {rank}")
    g = _ginibre(_rng(seed), d, rank)
    m = g @ g.conj().T
    return DensityOperator(layout, m / np.trace(m).real)


def random_unitary(d: int, seed=None) -> np.ndarray:
    """Haar-random unitary: QR of a Ginibre matrix with phase-fixed R diagonal."""
    q, r = np.linalg.qr(_ginibre(_rng(seed), d, d))
    phase = np.diag(r) / np.abs(np.diag(r))
    return q * phase


@dataclass(frozen=True)
class QmcSpec:
    """Block structure for a tripartite state with zero conditional correlation.

    ``blocks`` lists (probability, left dim, right dim) for the direct-sum
    decomposition of the middle factor; ``basis_rotation`` optionally hides
    the block structure behind a unitary on that factor.
    """

    dim_a: int
    dim_c: int
    blocks: tuple[tuple[float, int, int], ...]
    basis_rotation: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(
            self,
            "blocks",
            tuple((float(p), int(dl), int(dr)) for p, dl, dr in self.blocks),
        )
        if self.dim_a < 1 or self.dim_c < 1 or not self.blocks:
            raise StateError("dims must be >= 1 and blocks nonempty")
        probs = [p for p, _, _ in self.blocks]
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise StateError("block probabilities must be >= 0 and sum to 1")
        if any(dl < 1 or dr < 1 for _, dl, dr in self.blocks):
            raise StateError("block dimensions must be >= 1")
        if self.basis_rotation is not None:
            u = np.asarray(self.basis_rotation, dtype=complex)
            if u.shape != (self.dim_b, self.dim_b):
                raise StateError(
                    f"basis rotation shape {u.shape} does not match middle "
                    f"dimension {self.dim_b}"
                )
            if frobenius(u.conj().T @ u - np.eye(self.dim_b)) > 1e-10 * self.dim_b:
                raise StateError("basis rotation is not unitary")
            object.__setattr__(self, "basis_rotation", u)

    @property
    def dim_b(self) -> int:
        return sum(dl * dr for _, dl, dr in self.blocks)


def sample_qmc(
    spec: QmcSpec,
    seed=None,
    labels: tuple[str, str, str] = ("A", "B", "C"),
    rotate: bool = True,
) -> DensityOperator:
    """Assemble a random block-direct-sum state with zero I(A:C|B).

    Each block is a product of two Hilbert-Schmidt samples; unless the spec
    carries an explicit rotation, a Haar-random unitary on the middle factor
    hides the block basis (disable with ``rotate=False``).
    """
    rng = _rng(seed)
    da, db, dc = spec.dim_a, spec.dim_b, spec.dim_c
    layout = SubsystemLayout(labels, (da, db, dc))
    full = np.zeros((layout.dim, layout.dim), dtype=complex)
    offset = 0
    for p, dl, dr in spec.blocks:
        left = sample_density(SubsystemLayout(("a", "l"), (da, dl)), seed=rng)
        right = sample_density(SubsystemLayout(("r", "c"), (dr, dc)), seed=rng)
        # block on A (x) B_j (x) C with B_j = L (x) R occupying rows
        # offset..offset + dl*dr of the middle factor
        block = np.kron(left.matrix, right.matrix)
        iso = np.zeros((db, dl * dr))
        iso[offset:offset + dl * dr, :] = np.eye(dl * dr)
        lift = np.kron(np.kron(np.eye(da), iso), np.eye(dc))
        full += p * (lift @ block @ lift.conj().T)
        offset += dl * dr
    u = spec.basis_rotation
    if u is None and rotate:
        u = random_unitary(db, rng)
    if u is not None:
        ub = np.kron(np.kron(np.eye(da), u), np.eye(dc))
        full = ub @ full @ ub.conj().T
    full = (full + full.conj().T) / 2
    return DensityOperator(layout, full / np.trace(full).real)


def sample_markov_path(
    labels: tuple[str, ...], dims: tuple[int, ...], seed=None
) -> DensityOperator:
    """Random state with zero conditional correlation along a path of labels."""
    if len(labels) < 2:
        raise StateError("a path needs at least two vertices")
    layout = SubsystemLayout(tuple(labels), tuple(dims))
    edges = [tuple(sorted((a, b))) for a, b in zip(labels, labels[1:])]
    return sample_markov_tree(layout, edges, seed)


def sample_markov_tree(
    layout: SubsystemLayout, edges, seed=None
) -> DensityOperator:
    """Random globally Markov state on an arbitrary spanning tree.

    Internal vertices carry a random local basis and a classical
    tree-structured distribution over the basis labels; leaves attach
    genuinely mixed quantum states conditioned on the neighboring label.
    Per separator this is exactly the block form characterizing states
    with zero conditional correlation, so the global Markov property
    holds by construction.  (For low-dimensional internal vertices the
    block decomposition of any Markov state degenerates to exactly this
    shape, so the construction loses no generality there.)
    """
    edges = [tuple(sorted(e)) for e in edges]
    _check_spanning_tree(layout.labels, edges)
    rng = _rng(seed)
    if len(layout.labels) == 2:
        return sample_density(layout, seed=rng)
    return _sample_classical_backbone_tree(layout, edges, rng)


def _check_spanning_tree(labels, edges):
    labels = tuple(labels)
    if len(edges) != len(labels) - 1:
        raise StateError(f"{len(edges)} edges cannot span {len(labels)} vertices")
    parent = {l: l for l in labels}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            raise StateError(f"edge set contains a cycle through {a}-{b}")
        parent[ra] = rb


def _sample_classical_backbone_tree(layout, edges, rng) -> DensityOperator:
    adj = {l: [] for l in layout.labels}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    internal = [l for l in layout.labels if len(adj[l]) > 1]
    leaves = [l for l in layout.labels if len(adj[l]) == 1]

    # classical tree-structured distribution over internal basis labels
    root = internal[0]
    order, parent_of = [root], {root: None}
    stack = [root]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w in internal and w not in parent_of:
                parent_of[w] = v
                order.append(w)
                stack.append(w)
    dims_int = {l: layout.dim_of(l) for l in internal}
    marg = {root: _random_dist(rng, dims_int[root])}
    cond = {}
    for v in order[1:]:
        p = parent_of[v]
        cond[v] = np.stack(
            [_random_dist(rng, dims_int[v]) for _ in range(dims_int[p])]
        )

    bases = {l: random_unitary(layout.dim_of(l), rng) for l in internal}
    leaf_states = {
        l: [
            sample_density(SubsystemLayout((l,), (layout.dim_of(l),)), seed=rng)
            for _ in range(dims_int[adj[l][0]])
        ]
        for l in leaves
    }

    full = np.zeros((layout.dim, layout.dim), dtype=complex)
    for config in np.ndindex(*(dims_int[l] for l in internal)):
        x = dict(zip(internal, config))
        weight = marg[root][x[root]]
        for v in order[1:]:
            weight *= cond[v][x[parent_of[v]], x[v]]
        if weight == 0.0:
            continue
        factors = []
        for l in layout.labels:
            if l in internal:
                vec = bases[l][:, x[l]]
                factors.append(np.outer(vec, vec.conj()))
            else:
                factors.append(leaf_states[l][x[adj[l][0]]].matrix)
        block = factors[0]
        for f in factors[1:]:
            block = np.kron(block, f)
        full += weight * block
    full = (full + full.conj().T) / 2
    return DensityOperator(layout, full / np.trace(full).real)


def _random_dist(rng, n: int) -> np.ndarray:
    p = rng.uniform(0.1, 1.0, n)
    return p / p.sum()
