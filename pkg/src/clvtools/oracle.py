"""Ground truth for validating Ginelli output.

Two independent references:

* :class:`OracleSplitting` gives the exact Oseledets splitting of a
  conjugated diagonal cocycle, ``Y_j(sigma^n omega) = T_n (coordinate block j)``.
* :func:`svd_reference_clvs` recovers CLVs of an invertible cocycle from
  singular value decompositions of the past and future products, intersecting
  the two flags.  It shares no code with :mod:`clvtools.ginelli`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cocycle import CocycleOrbit, ConjugatedDiagonalSpec, conjugator
from .errors import NotInvertible
from .ginelli import CLVResult, _partition
from .grassmann import Subspace, orthonormalize

__all__ = ["OracleSplitting", "analytic_oseledets", "svd_reference_clvs", "jacobi_svd"]


@dataclass(frozen=True)
class OracleSplitting:
    """Closed-form splitting ``R^d = Y_1 (+) ... (+) Y_p (+) V`` along the orbit.

    ``V`` is spanned by the ``-inf`` coordinates of ``spec`` and is ``None``
    when there are none.
    """

    spec: ConjugatedDiagonalSpec

    @property
    def exponents(self) -> tuple:
        return tuple(rate for rate, _ in self.spec.groups())

    @property
    def multiplicities(self) -> tuple:
        return tuple(s.stop - s.start for _, s in self.spec.groups())

    @property
    def tail_exponent(self) -> float:
        """Growth rate of the tail space; -inf for these cocycles."""
        return -np.inf

    def _columns(self, n: int, sl: slice) -> Subspace:
        return orthonormalize(conjugator(self.spec, n)[:, sl])[0]

    def spaces_at(self, n: int) -> list:
        return [self._columns(n, sl) for _, sl in self.spec.groups()]

    def tail_at(self, n: int):
        sl = self.spec.tail_slice
        if sl.start == sl.stop:
            return None
        return self._columns(n, sl)

    def leading_sum_at(self, n: int, j: int) -> Subspace:
        """``Y_1 (+) ... (+) Y_j`` at index n (j counts groups, 1-based)."""
        groups = self.spec.groups()
        return self._columns(n, slice(0, groups[j - 1][1].stop))

    def filtration_at(self, n: int) -> list:
        """``[V_1, ..., V_p]`` followed by ``V`` itself when the tail is nontrivial.

        ``V_j = Y_j (+) ... (+) Y_p (+) V``; ``V_1`` is the whole space.
        """
        d = self.spec.ambient_dim
        out = [self._columns(n, slice(sl.start, d)) for _, sl in self.spec.groups()]
        tail = self.tail_at(n)
        if tail is not None:
            out.append(tail)
        return out


def analytic_oseledets(spec: ConjugatedDiagonalSpec, index: int) -> list:
    """Oseledets spaces ``Y_j(sigma^index omega)`` of a conjugated diagonal cocycle."""
    spec.validate()
    return OracleSplitting(spec).spaces_at(index)


def jacobi_svd(a, tol: float = 1e-15, max_sweeps: int = 60):
    """One-sided (Hestenes) Jacobi SVD: ``a V = U diag(s)``.

    Singular values come out with high relative accuracy when ``a`` is a
    well-conditioned matrix times a diagonal column scaling, which is the
    shape of every matrix fed to it by :func:`_product_left_svd`.
    Returns ``(U, s)`` sorted by decreasing ``s``; columns of U belonging to
    zero singular values are completed to an orthonormal basis.
    """
    g = np.array(a, dtype=float)
    n = g.shape[1]
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                gp, gq = g[:, p], g[:, q]
                alpha, beta, gamma = gp @ gp, gq @ gq, gp @ gq
                if alpha == 0 or beta == 0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1 + zeta * zeta))
                c = 1 / np.sqrt(1 + t * t)
                s = c * t
                g[:, p], g[:, q] = c * gp - s * gq, s * gp + c * gq
        if not rotated:
            break
    sv = np.linalg.norm(g, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, g = sv[order], g[:, order]
    nz = sv > 0
    u = np.zeros_like(g)
    u[:, nz] = g[:, nz] / sv[nz]
    if not np.all(nz):
        # complete the basis for the annihilated directions
        m = int(nz.sum())
        full, _ = np.linalg.qr(np.hstack([u[:, :m], np.eye(g.shape[0])]))
        u[:, m:] = full[:, m:n]
    return u, sv


def _product_left_svd(mats, stride: int = 1):
    """Left singular vectors and log singular values of ``mats[-1] ... mats[0]``.

    Keeps the product as ``U diag(exp(log_s)) V^T`` and never forms it: each
    refactorization takes the SVD of ``(A U) diag(s / max s)``, a
    well-conditioned matrix with graded columns.
    """
    d = mats[0].shape[0]
    u = np.eye(d)
    log_s = np.zeros(d)
    for i in range(0, len(mats), stride):
        a = mats[i]
        for m in mats[i + 1:i + stride]:
            a = m @ a
        top = log_s.max()
        u, s = jacobi_svd(a @ u * np.exp(log_s - top))
        with np.errstate(divide="ignore"):
            log_s = np.log(s) + top
    return u, log_s


def svd_reference_clvs(orbit: CocycleOrbit, k: int, n1: int, n2: int, multiplicities=None,
                       center: int = 0, stride: int = 1, max_cond: float = 1e12) -> CLVResult:
    """CLVs at ``center`` from SVDs of the past and future cocycle products.

    The span of the leading ``m_1 + ... + m_j`` left singular vectors of the
    past product approximates ``Y_1 (+) ... (+) Y_j``; the orthogonal
    complement of the leading right singular vectors of the future product
    approximates the filtration space ``V_j``.  ``Y_j`` is their intersection.
    """
    if n1 < 1 or n2 < 1:
        raise ValueError("svd reference needs n1 >= 1 and n2 >= 1")
    orbit.check_window(center - n1, center + n2)
    d = orbit.ambient_dim
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}")
    blocks = _partition((1,) * k if multiplicities is None else multiplicities, k)
    for n in range(center - n1, center + n2):
        cond = np.linalg.cond(orbit.generator_at(n))
        if not cond <= max_cond:
            raise NotInvertible(n, cond)

    past = [orbit.generator_at(n) for n in range(center - n1, center)]
    future_t = [orbit.generator_at(n).T for n in range(center + n2 - 1, center - 1, -1)]
    u_past, _ = _product_left_svd(past, stride)
    v_future, _ = _product_left_svd(future_t, stride)

    spans, cols = [], []
    for b in blocks:
        lead = u_past[:, :b[-1] + 1]
        before = b[0]
        if before == 0:
            y = lead[:, :len(b)]
        else:
            # vectors of `lead` orthogonal to the leading `before` future directions
            _, _, vt = np.linalg.svd(v_future[:, :before].T @ lead)
            y = lead @ vt[-len(b):].T
        sub = orthonormalize(y)[0]
        spans.append(sub)
        cols.append(sub.basis)
    v = np.hstack(cols)
    v.setflags(write=False)
    return CLVResult(v, blocks, tuple(spans))
