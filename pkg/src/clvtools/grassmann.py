"""Subspaces of R^d and the Grassmannian quantities built on them.

Every subspace is stored through an orthonormal basis.  Distances follow the
unit-ball Hausdorff metric: for equal dimensions it reduces to the sine of the
largest principal angle, and each directed term is the spectral norm of a
projection residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AmbientMismatch, IllConditionedSplitting, NonFiniteValues, RankDeficient

__all__ = [
    "Subspace",
    "SplittingPair",
    "orthonormalize",
    "span",
    "subspace_sum",
    "grassmann_distance",
    "directed_gap",
    "transversality_degree",
    "oblique_project",
    "projector",
    "projection_norm",
    "restricted_norm",
    "sample_complement",
    "random_subspace",
]

ORTHONORMAL_TOL = 1e-12
RANK_TOL = 1e-10
MAX_SPLITTING_COND = 1e14


@dataclass(frozen=True, eq=False)
class Subspace:
    """A k-dimensional subspace of R^d held as a d x k orthonormal basis.

    The basis is not canonical; compare subspaces with
    :func:`grassmann_distance`, never with ``==``.
    """

    basis: np.ndarray

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.ndim != 2:
            raise ValueError(f"basis must be a d x k array, got shape {b.shape}")
        d, k = b.shape
        if not 1 <= k <= d:
            raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
        if not np.all(np.isfinite(b)):
            raise NonFiniteValues("basis contains non-finite entries")
        err = np.abs(b.T @ b - np.eye(k)).max()
        if err > ORTHONORMAL_TOL:
            raise ValueError(f"basis columns are not orthonormal (max deviation {err:.2e})")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def project(self, x):
        """Orthogonal projection of ``x`` (vector or d x m array) onto the subspace."""
        return self.basis @ (self.basis.T @ x)

    def residual(self, x):
        """``x`` minus its orthogonal projection."""
        return x - self.project(x)

    def complement(self) -> "Subspace | None":
        """Orthogonal complement, or None when the subspace is the whole space."""
        d, k = self.basis.shape
        if k == d:
            return None
        u, _, _ = np.linalg.svd(self.basis, full_matrices=True)
        return orthonormalize(u[:, k:])[0]

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"


def orthonormalize(vectors, tol: float = RANK_TOL):
    """Modified Gram-Schmidt with one reorthogonalization pass.

    Returns ``(Subspace, R)`` with ``vectors = basis @ R``, ``R`` upper
    triangular with strictly positive diagonal.  The first j columns of the
    basis depend only on the first j input columns.

    Raises
    ------
    RankDeficient
        If a residual norm drops to ``tol`` times the largest input column
        norm or below.
    """
    a = np.array(vectors, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"expected a d x k array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteValues("cannot orthonormalize non-finite vectors")
    d, k = a.shape
    if k > d:
        raise RankDeficient(d, message=f"{k} vectors in dimension {d} cannot be independent")
    scale = np.linalg.norm(a, axis=0).max() if k else 0.0
    q = np.empty((d, k))
    r = np.zeros((k, k))
    for j in range(k):
        v = a[:, j].copy()
        for _ in range(2):
            for i in range(j):
                c = q[:, i] @ v
                r[i, j] += c
                v -= c * q[:, i]
        nrm = np.linalg.norm(v)
        if not nrm > tol * scale:
            raise RankDeficient(j)
        r[j, j] = nrm
        q[:, j] = v / nrm
    return Subspace(q), r


def span(*vectors, tol: float = RANK_TOL) -> Subspace:
    """Subspace spanned by the given vectors (or by the columns of one array)."""
    if len(vectors) == 1:
        return orthonormalize(vectors[0], tol)[0]
    return orthonormalize(np.column_stack(vectors), tol)[0]


def subspace_sum(*subspaces: Subspace, tol: float = RANK_TOL) -> Subspace:
    """Direct sum of subspaces; raises RankDeficient if they intersect."""
    _check_ambient(*subspaces)
    return orthonormalize(np.hstack([s.basis for s in subspaces]), tol)[0]


def _check_ambient(*subspaces):
    dims = {s.ambient_dim for s in subspaces}
    if len(dims) > 1:
        raise AmbientMismatch(f"ambient dimensions differ: {sorted(dims)}")


def directed_gap(v: Subspace, w: Subspace) -> float:
    """sup over v in V with |v| <= 1 of the distance from v to the unit ball of W.

    For a unit vector the nearest point of W is its orthogonal projection,
    which already lies in the ball, so this is the spectral norm of
    ``(I - P_W) V``.
    """
    _check_ambient(v, w)
    if v.dim > w.dim:
        return 1.0
    res = w.residual(v.basis)
    return float(min(1.0, np.linalg.norm(res, 2)))


def grassmann_distance(v: Subspace, w: Subspace) -> float:
    """Hausdorff distance between the unit balls of V and W.

    Subspaces of different dimension are at distance 1 by convention.
    """
    _check_ambient(v, w)
    if v.dim != w.dim:
        return 1.0
    return max(directed_gap(v, w), directed_gap(w, v))


def transversality_degree(w: Subspace, v: Subspace) -> float:
    """inf over unit x in W of dist(x, V).

    Equals zero exactly when W and V intersect nontrivially.
    """
    _check_ambient(w, v)
    if w.dim + v.dim > w.ambient_dim:
        return 0.0
    s = np.linalg.svd(v.residual(w.basis), compute_uv=False)
    return float(np.clip(s[-1], 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class SplittingPair:
    """Complementary subspaces with R^d = Y (+) Z."""

    y: Subspace
    z: Subspace

    def __post_init__(self):
        _check_ambient(self.y, self.z)
        d = self.y.ambient_dim
        if self.y.dim + self.z.dim != d:
            raise ValueError(f"dimensions {self.y.dim} + {self.z.dim} do not add up to {d}")
        m = np.hstack([self.y.basis, self.z.basis])
        cond = np.linalg.cond(m)
        if not cond <= MAX_SPLITTING_COND:
            raise IllConditionedSplitting(f"splitting basis condition number {cond:.3g} exceeds "
                                          f"{MAX_SPLITTING_COND:.0e}")
        object.__setattr__(self, "_inverse", np.linalg.inv(m))

    @property
    def ambient_dim(self) -> int:
        return self.y.ambient_dim

    def coefficients(self, x):
        return self._inverse @ x


def oblique_project(pair: SplittingPair, x):
    """Split ``x = y_part + z_part`` with y_part in Y and z_part in Z."""
    x = np.asarray(x, dtype=float)
    c = np.linalg.solve(np.hstack([pair.y.basis, pair.z.basis]), x)
    k = pair.y.dim
    y_part = pair.y.basis @ c[:k]
    z_part = pair.z.basis @ c[k:]
    return y_part, z_part


def projector(pair: SplittingPair, onto_y: bool = True) -> np.ndarray:
    """Matrix of the projection onto Y along Z (or onto Z along Y)."""
    k = pair.y.dim
    if onto_y:
        return pair.y.basis @ pair._inverse[:k]
    return pair.z.basis @ pair._inverse[k:]


def projection_norm(pair: SplittingPair, onto_y: bool = True) -> float:
    return float(np.linalg.norm(projector(pair, onto_y), 2))


def restricted_norm(op, s: Subspace) -> float:
    """Operator norm of ``op`` restricted to the subspace ``s``."""
    return float(np.linalg.norm(np.asarray(op) @ s.basis, 2))


def sample_complement(ambient_dim: int, k: int, rng_seed) -> Subspace:
    """Span of k i.i.d. standard Gaussian vectors, orthonormalized.

    Almost every such span is a well-separating common complement of any
    fixed sequence of codimension-k subspaces.
    """
    if not 1 <= k <= ambient_dim:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={ambient_dim}")
    rng = np.random.default_rng(rng_seed)
    try:
        return orthonormalize(rng.standard_normal((ambient_dim, k)))[0]
    except RankDeficient:
        return orthonormalize(rng.standard_normal((ambient_dim, k)))[0]


def random_subspace(rng: np.random.Generator, ambient_dim: int, k: int) -> Subspace:
    return orthonormalize(rng.standard_normal((ambient_dim, k)))[0]
