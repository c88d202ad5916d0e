"""Tensor-product index bookkeeping for multipartite operators.

Operators are dense complex numpy arrays in row-major order.  The
multi-index convention is big-endian: the first label of a layout is the
most significant factor, matching ``np.kron(first, ..., last)``.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DIM_CAP = 4096


class LayoutError(ValueError):
    """Raised for malformed layouts or label/dimension mismatches."""


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered, labeled tensor factors with local dimensions."""

    labels: tuple[str, ...]
    dims: tuple[int, ...]
    cap: int = field(default=DEFAULT_DIM_CAP, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.labels) != len(self.dims):
            raise LayoutError(
                f"{len(self.labels)} labels but {len(self.dims)} dims"
            )
        if len(set(self.labels)) != len(self.labels):
            raise LayoutError(f"duplicate labels in {self.labels}")
        if any(d < 1 for d in self.dims):
            raise LayoutError(f"dims must be >= 1, got {self.dims}")
        if self.dim > self.cap:
            raise LayoutError(
                f"total dimension {self.dim} exceeds cap {self.cap}"
            )

    @property
    def dim(self) -> int:
        """Total Hilbert-space dimension."""
        return int(np.prod(self.dims))

    @property
    def n(self) -> int:
        return len(self.labels)

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown label {label!r} in layout {self.labels}")

    def restrict(self, keep) -> "SubsystemLayout":
        """Sub-layout on ``keep``, preserving this layout's label order."""
        keep = set(keep)
        unknown = keep - set(self.labels)
        if unknown:
            raise LayoutError(f"unknown labels {sorted(unknown)}")
        pairs = [(l, d) for l, d in zip(self.labels, self.dims) if l in keep]
        return SubsystemLayout(
            tuple(l for l, _ in pairs), tuple(d for _, d in pairs), cap=self.cap
        )

    def complement(self, labels) -> tuple[str, ...]:
        labels = set(labels)
        return tuple(l for l in self.labels if l not in labels)


def _check_square(op: np.ndarray, layout: SubsystemLayout):
    op = np.asarray(op, dtype=complex)
    if op.shape != (layout.dim, layout.dim):
        raise LayoutError(
            f"operator shape {op.shape} does not match layout dimension "
            f"{layout.dim}"
        )
    return op


def partial_trace(op: np.ndarray, layout: SubsystemLayout, keep) -> np.ndarray:
    """Trace out the factors of ``layout`` not listed in ``keep``.

    Returns the operator on ``layout.restrict(keep)``; kept label order
    follows the parent layout.
    """
    op = _check_square(op, layout)
    keep = set(keep)
    if not keep:
        raise LayoutError("keep must be nonempty")
    keep_idx = sorted(layout.index(l) for l in keep)

    n = layout.n
    letters = string.ascii_letters
    if 2 * n > len(letters):
        raise LayoutError("too many factors for einsum contraction")
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for j in range(n):
        if j not in keep_idx:
            col[j] = row[j]
    out = [row[j] for j in keep_idx] + [col[j] for j in keep_idx]
    spec = "".join(row) + "".join(col) + "->" + "".join(out)

    tensor = op.reshape(*layout.dims, *layout.dims)
    kept_dim = int(np.prod([layout.dims[j] for j in keep_idx]))
    return np.einsum(spec, tensor).reshape(kept_dim, kept_dim)


def embed(op: np.ndarray, sub: SubsystemLayout, target: SubsystemLayout) -> np.ndarray:
    """Extend ``op`` on ``sub`` to ``target`` by tensoring identities.

    ``sub`` may sit on non-contiguous factors of ``target``; the result is
    permuted into the target's factor order.
    """
    op = _check_square(op, sub)
    for label, d in zip(sub.labels, sub.dims):
        if target.dim_of(label) != d:
            raise LayoutError(
                f"dimension mismatch for {label!r}: sub has {d}, "
                f"target has {target.dim_of(label)}"
            )
    comp = target.complement(sub.labels)
    comp_dim = int(np.prod([target.dim_of(l) for l in comp])) if comp else 1
    full = np.kron(op, np.eye(comp_dim, dtype=complex))

    # current factor order: sub.labels then complement (in target order)
    current = list(sub.labels) + list(comp)
    cur_dims = [target.dim_of(l) for l in current]
    perm = [current.index(l) for l in target.labels]
    n = len(current)
    tensor = full.reshape(*cur_dims, *cur_dims)
    tensor = tensor.transpose(perm + [n + p for p in perm])
    return tensor.reshape(target.dim, target.dim)
