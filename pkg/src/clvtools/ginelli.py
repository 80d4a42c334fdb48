"""Ginelli's algorithm for covariant Lyapunov vectors.

The forward stage pushes k vectors from ``center - n1`` to ``center + n2``
and re-orthonormalizes them every ``qr_stride`` steps, storing the
orthonormal factors ``Q_t`` and the coefficient-space cocycle ``R_t``.  The
backward stage never touches the ambient space: it runs triangular solves on
the coefficient matrix from ``center + n2`` back to ``center``.  Finally the
coefficients are mapped into the ambient space through the ``Q`` stored at the
center and the columns are normalized.

Re-orthonormalization does not change any of the spans the algorithm uses,
so the output agrees with the plain (unstable) sequence of steps in exact
arithmetic for every stride.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .cocycle import CocycleOrbit
from .errors import NonFiniteValues, RankDeficient, SingularR, SingularRInit, ZeroColumn
from .grassmann import RANK_TOL, Subspace, orthonormalize

__all__ = [
    "GinelliConfig",
    "GinelliRun",
    "CLVResult",
    "default_inputs",
    "forward_stage",
    "backward_stage",
    "finalize",
    "run",
]


@dataclass(frozen=True)
class GinelliConfig:
    """Parameters of one run.

    ``k`` vectors are pushed from ``center - n1`` to ``center + n2``;
    ``seed`` only matters when the caller does not supply inputs.
    """

    k: int
    n1: int
    n2: int
    qr_stride: int = 1
    seed: int = 0
    rank_tol: float = RANK_TOL
    center: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.n1 < 1:
            raise ValueError(f"n1 must be >= 1, got {self.n1}")
        if self.n2 < 0:
            raise ValueError(f"n2 must be >= 0, got {self.n2}")
        if self.qr_stride < 1:
            raise ValueError(f"qr_stride must be >= 1, got {self.qr_stride}")
        if not self.rank_tol > 0:
            raise ValueError("rank_tol must be positive")

    @property
    def start(self) -> int:
        return self.center - self.n1

    @property
    def stop(self) -> int:
        return self.center + self.n2

    def checkpoints(self) -> list:
        s = self.qr_stride
        pts = set(range(self.start, self.center, s)) | set(range(self.center, self.stop, s))
        pts |= {self.start, self.center, self.stop}
        return sorted(pts)


@dataclass(frozen=True, eq=False)
class GinelliRun:
    """Retained Q/R history of a forward stage.

    ``r_history[i]`` is the triangular factor of the transition from
    checkpoint ``indices[i]`` to ``indices[i + 1]``:
    ``L^(steps) Q_i = Q_{i+1} R_{i+1}``.  ``r_start`` factors the initial
    vectors, ``init = Q_0 r_start``.
    """

    indices: tuple
    q_history: tuple
    r_history: tuple
    r_start: np.ndarray
    center: int

    @property
    def k(self) -> int:
        return self.q_history[0].dim

    @property
    def total_steps(self) -> int:
        return self.indices[-1] - self.indices[0]

    def position(self, index: int) -> int:
        return self.indices.index(index)

    def q_at(self, index: int) -> Subspace:
        return self.q_history[self.position(index)]


@dataclass(frozen=True, eq=False)
class CLVResult:
    """Normalized CLV approximations grouped into multiplicity blocks."""

    vectors: np.ndarray
    blocks: tuple
    block_spans: tuple

    @property
    def k(self) -> int:
        return self.vectors.shape[1]


def default_inputs(ambient_dim: int, k: int, seed):
    """Gaussian initial vectors and a unit-diagonal upper-triangular ``r_init``.

    Both are generic with probability one, which is what the convergence
    guarantee asks of the inputs.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((ambient_dim, k))
    r = np.eye(k) + np.triu(rng.standard_normal((k, k)), 1)
    return x, r


def forward_stage(orbit: CocycleOrbit, cfg: GinelliConfig, init_vectors) -> GinelliRun:
    """Push ``init_vectors`` from ``cfg.start`` to ``cfg.stop`` with stride-wise QR."""
    orbit.check_window(cfg.start, cfg.stop)
    x = np.asarray(init_vectors, dtype=float)
    if x.shape != (orbit.ambient_dim, cfg.k):
        raise ValueError(f"init_vectors must have shape {(orbit.ambient_dim, cfg.k)}, got {x.shape}")
    idx = cfg.checkpoints()
    try:
        q, r0 = orthonormalize(x, cfg.rank_tol)
    except RankDeficient as exc:
        raise RankDeficient(exc.column_index, idx[0]) from None
    qs, rs = [q], []
    gens, off = orbit.generators, orbit.start
    for a, b in zip(idx[:-1], idx[1:]):
        y = q.basis
        for n in range(a, b):
            y = gens[n - off] @ y
        if not np.all(np.isfinite(y)):
            raise NonFiniteValues(f"overflow between checkpoints {a} and {b}; use a smaller qr_stride")
        try:
            q, r = orthonormalize(y, cfg.rank_tol)
        except RankDeficient as exc:
            raise RankDeficient(exc.column_index, b) from None
        qs.append(q)
        rs.append(r)
    return GinelliRun(tuple(idx), tuple(qs), tuple(rs), r0, cfg.center)


def _check_r_init(r_init, k: int) -> np.ndarray:
    r = np.array(r_init, dtype=float)
    if r.shape != (k, k):
        raise ValueError(f"r_init must be {k} x {k}, got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise SingularRInit("r_init contains non-finite entries")
    if np.any(np.tril(r, -1) != 0):
        raise ValueError("r_init must be upper triangular")
    if np.any(np.diag(r) == 0):
        raise SingularRInit("r_init has a zero diagonal entry")
    return r


def backward_stage(runrec: GinelliRun, r_init, return_log_scales: bool = False):
    """Coefficients of the backward-propagated vectors in the basis ``Q`` at the center.

    Starting from ``C = r_init`` at the last checkpoint, solves
    ``R_t C_new = C`` back to the center.  Columns are rescaled to unit norm
    after every solve; the accumulated log-scales are returned on request.
    """
    k = runrec.k
    c = _check_r_init(r_init, k)
    norms = np.linalg.norm(c, axis=0)
    log_scales = np.log(norms)
    c = c / norms
    stop = runrec.position(runrec.center)
    for i in range(len(runrec.indices) - 1, stop, -1):
        r = runrec.r_history[i - 1]
        dg = np.diag(r)
        if not (np.all(np.isfinite(r)) and np.all(dg > 0)):
            raise SingularR(runrec.indices[i])
        c = np.triu(solve_triangular(r, c, lower=False, check_finite=False))
        norms = np.linalg.norm(c, axis=0)
        if not np.all(np.isfinite(norms)) or np.any(norms == 0):
            raise SingularR(runrec.indices[i])
        log_scales += np.log(norms)
        c /= norms
    if return_log_scales:
        return c, log_scales
    return c


def _partition(multiplicities, k: int) -> tuple:
    mult = [int(m) for m in multiplicities]
    if any(m < 1 for m in mult) or sum(mult) != k:
        raise ValueError(f"multiplicities {mult} must be positive and sum to k={k}")
    blocks, i = [], 0
    for m in mult:
        blocks.append(tuple(range(i, i + m)))
        i += m
    return tuple(blocks)


def finalize(runrec: GinelliRun, coeffs, multiplicities, rank_tol: float = RANK_TOL) -> CLVResult:
    """Map coefficients to the ambient space at the center, normalize, group into blocks."""
    coeffs = np.asarray(coeffs, dtype=float)
    k = runrec.k
    blocks = _partition(multiplicities, k)
    v = runrec.q_at(runrec.center).basis @ coeffs
    norms = np.linalg.norm(v, axis=0)
    for j, nrm in enumerate(norms):
        if not nrm > 0:
            raise ZeroColumn(j)
    v = v / norms
    v.setflags(write=False)
    spans = tuple(orthonormalize(v[:, list(b)], rank_tol)[0] for b in blocks)
    return CLVResult(v, blocks, spans)


def run(orbit: CocycleOrbit, cfg: GinelliConfig, init_vectors=None, r_init=None,
        multiplicities=None):
    """Full algorithm: forward stage, backward stage in coefficient space, normalization.

    Missing inputs are drawn with :func:`default_inputs` from ``cfg.seed``;
    missing multiplicities mean k blocks of size one.

    Returns
    -------
    (CLVResult, GinelliRun)
    """
    if init_vectors is None or r_init is None:
        x0, r0 = default_inputs(orbit.ambient_dim, cfg.k, cfg.seed)
        init_vectors = x0 if init_vectors is None else init_vectors
        r_init = r0 if r_init is None else r_init
    r_init = _check_r_init(r_init, cfg.k)
    try:
        runrec = forward_stage(orbit, cfg, init_vectors)
    except RankDeficient as exc:
        # a collapse after the center means L restricted to W^1 cannot be inverted
        if exc.index is not None and exc.index > cfg.center:
            raise SingularR(exc.index) from exc
        raise
    coeffs = backward_stage(runrec, r_init)
    if multiplicities is None:
        multiplicities = (1,) * cfg.k
    return finalize(runrec, coeffs, multiplicities, cfg.rank_tol), runrec
