"""Empirical checks of the convergence theory.

* Lyapunov exponents from the R-diagonals of a forward stage.
* Covariance residuals of computed block spans.
* Exponential rate fits of Grassmannian distances against the spectral gap.
* Randomized checkers for the one-step forward and backward estimates that
  drive the convergence proof: for every instance the computed left-hand side
  must not exceed the bound.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .cocycle import CocycleOrbit, ConjugatedDiagonalSpec, make_conjugated_diagonal
from .errors import EmptyHistory, InsufficientData, PreconditionUnsatisfiable, RankDeficient
from .ginelli import GinelliConfig, GinelliRun, default_inputs, forward_stage, run
from .grassmann import (
    SplittingPair,
    Subspace,
    directed_gap,
    grassmann_distance,
    orthonormalize,
    projection_norm,
    projector,
    restricted_norm,
    subspace_sum,
    transversality_degree,
)
from .oracle import OracleSplitting

__all__ = [
    "DISTANCE_FLOOR",
    "ROUNDOFF_ATOL",
    "lyapunov_from_r",
    "covariance_residual",
    "fit_rate",
    "BlockConvergence",
    "ConvergenceReport",
    "convergence_experiment",
    "LemmaCheckRecord",
    "ForwardInstance",
    "BackwardInstance",
    "random_forward_instance",
    "random_backward_instance",
    "evaluate_forward_lemma",
    "evaluate_forward_corollary",
    "evaluate_backward_lemma",
    "check_forward_lemma",
    "check_forward_projection_corollary",
    "check_backward_lemma",
    "LemmaSweep",
    "lemma_sweep",
    "sampled_directed_gap",
]

DISTANCE_FLOOR = 1e-13
MC_SAMPLES = 10_000
# absolute slack for round-off in computed lemma sides (both sides are O(1) or smaller
# on the instances where the inequality has content)
ROUNDOFF_ATOL = 1e-12


# ---------------------------------------------------------------------------
# exponents and covariance


def lyapunov_from_r(runrec: GinelliRun, transient: int = 0) -> np.ndarray:
    """Estimate the k leading exponents as averaged log R-diagonals.

    ``transient`` checkpoint transitions at the start are skipped.
    """
    rs = runrec.r_history[transient:]
    if not rs:
        raise EmptyHistory("forward stage has no checkpoint transitions")
    steps = runrec.indices[-1] - runrec.indices[transient]
    logs = np.sum([np.log(np.diag(r)) for r in rs], axis=0)
    return logs / steps


def covariance_residual(orbit: CocycleOrbit, block_span_at_0: Subspace, block_span_at_1: Subspace,
                        index: int = 0) -> float:
    """Distance between ``L(index)`` applied to a span and the span computed one step later."""
    if block_span_at_0.dim != block_span_at_1.dim:
        raise ValueError("spans must have the same dimension")
    mapped = orthonormalize(orbit.generator_at(index) @ block_span_at_0.basis)[0]
    return grassmann_distance(mapped, block_span_at_1)


# ---------------------------------------------------------------------------
# rate fitting


def fit_rate(points, floor: float = DISTANCE_FLOOR, return_details: bool = False):
    """Least-squares slope of ``log(distance)`` against N on the latter half of the data.

    Points at or below ``floor`` (round-off level) are dropped before the
    split.  With ``return_details`` the result is ``(slope, used, dropped)``.
    """
    pts = sorted((int(n), float(dist)) for n, dist in points)
    usable = [(n, dist) for n, dist in pts if math.isfinite(dist) and dist > floor]
    dropped = [p for p in pts if p not in usable]
    if len(usable) < 4:
        raise InsufficientData(f"need at least 4 distances above {floor:g}, have {len(usable)}")
    tail = usable[len(usable) // 2:]
    ns = np.array([n for n, _ in tail], dtype=float)
    logs = np.log([dist for _, dist in tail])
    slope = float(np.polyfit(ns, logs, 1)[0])
    if return_details:
        return slope, tail, dropped
    return slope


# ---------------------------------------------------------------------------
# convergence experiment


@dataclass
class BlockConvergence:
    block: int
    dim: int
    exponent: float
    theoretical_gap: float
    distances: list
    per_seed: list
    fitted_rate: float | None
    slack: float
    passed: bool
    trivial: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        gap = self.theoretical_gap if math.isfinite(self.theoretical_gap) else None
        return {
            "block": self.block,
            "dim": self.dim,
            "exponent": self.exponent,
            "theoretical_gap": gap,
            "slack": self.slack,
            "distances": self.distances,
            "per_seed": self.per_seed,
            "fitted_rate": self.fitted_rate,
            "pass": self.passed,
            "trivial": self.trivial,
            "note": self.note,
        }


@dataclass
class ConvergenceReport:
    experiment: str
    spec: dict
    grid: list
    seeds: list
    blocks: list
    qr_stride: int = 1

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.blocks)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "spec": self.spec,
            "grid": self.grid,
            "seeds": self.seeds,
            "qr_stride": self.qr_stride,
            "blocks": [b.to_dict() for b in self.blocks],
            "pass": self.passed,
            "tool_version": __version__,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "block", "distance", "seed"])
        for b in self.blocks:
            for i, seed in enumerate(self.seeds):
                for n, dist in zip(self.grid, b.per_seed[i]):
                    w.writerow([n, b.block, repr(dist), seed])
        return buf.getvalue()


def _neighbour_gaps(exponents, next_exponent, mode):
    gaps = []
    for j, lam in enumerate(exponents):
        below = exponents[j + 1] if j + 1 < len(exponents) else next_exponent
        gap_below = lam - below
        if mode == "forward":
            gaps.append(gap_below)
        else:
            gap_above = math.inf if j == 0 else exponents[j - 1] - lam
            gaps.append(min(gap_above, gap_below))
    return gaps


def convergence_experiment(spec: ConjugatedDiagonalSpec, grid, seeds, n_blocks: int | None = None,
                           slack: float = 0.15, mode: str = "clv", qr_stride: int = 1,
                           workers: int = 1) -> ConvergenceReport:
    """Distances of Ginelli block spans to the exact Oseledets spaces for n1 = n2 = N.

    ``mode="clv"`` runs the full algorithm and compares block j with Y_j at
    index 0; ``mode="forward"`` runs only the forward stage (n2 = 0) and
    compares the span of the first m_1 + ... + m_j vectors with
    Y_1 (+) ... (+) Y_j.  Per-N medians over seeds are fitted with
    :func:`fit_rate`; block j passes when the fitted rate is at most
    ``-(1 - slack) * gap_j``.
    """
    if mode not in ("clv", "forward"):
        raise ValueError(f"unknown mode {mode!r}")
    grid = [int(n) for n in grid]
    seeds = [int(s) for s in seeds]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
        raise ValueError(f"grid must be strictly increasing positive integers, got {grid}")
    if not seeds:
        raise ValueError("need at least one seed")
    spec.validate()
    oracle = OracleSplitting(spec)
    exps = list(oracle.exponents)
    mults = list(oracle.multiplicities)
    p = len(exps) if n_blocks is None else int(n_blocks)
    if not 1 <= p <= len(exps):
        raise ValueError(f"n_blocks must be in [1, {len(exps)}]")
    next_exp = exps[p] if p < len(exps) else oracle.tail_exponent
    exps, mults = exps[:p], mults[:p]
    k = sum(mults)
    gaps = _neighbour_gaps(exps, next_exp, mode)
    if mode == "clv":
        targets = oracle.spaces_at(0)[:p]
    else:
        targets = [oracle.leading_sum_at(0, j) for j in range(1, p + 1)]

    nmax = grid[-1]
    orbit, _ = make_conjugated_diagonal(spec, -nmax, nmax)
    d = spec.ambient_dim

    def cell(seed, n):
        cfg = GinelliConfig(k, n, n if mode == "clv" else 0, qr_stride=qr_stride, seed=seed)
        if mode == "clv":
            res, _ = run(orbit, cfg, multiplicities=mults)
            spans = res.block_spans
        else:
            x0, _ = default_inputs(d, k, seed)
            q0 = forward_stage(orbit, cfg, x0).q_at(0).basis
            ends = np.cumsum(mults)
            spans = [Subspace(q0[:, :e]) for e in ends]
        return [grassmann_distance(s, t) for s, t in zip(spans, targets)]

    jobs = [(s, n) for s in seeds for n in grid]
    if workers == 1:
        results = [cell(s, n) for s, n in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers or None) as pool:
            results = list(pool.map(lambda sn: cell(*sn), jobs))
    table = np.array(results).reshape(len(seeds), len(grid), p)

    blocks = []
    for j in range(p):
        per_seed = table[:, :, j]
        med = np.median(per_seed, axis=0)
        b = BlockConvergence(block=j + 1, dim=mults[j], exponent=exps[j], theoretical_gap=gaps[j],
                             distances=[float(x) for x in med],
                             per_seed=[[float(x) for x in row] for row in per_seed],
                             fitted_rate=None, slack=slack, passed=False)
        if not math.isfinite(gaps[j]):
            b.trivial = True
            b.passed = bool(np.all(per_seed <= 1e-10))
            b.note = "infinite gap: the block is the whole space or is exact after one step"
        else:
            try:
                b.fitted_rate = fit_rate(zip(grid, b.distances))
                b.passed = b.fitted_rate <= -(1.0 - slack) * gaps[j]
            except InsufficientData as exc:
                b.note = f"InsufficientData: {exc}"
        blocks.append(b)
    return ConvergenceReport(experiment=f"ginelli-{mode}", spec=spec.to_dict(), grid=grid,
                             seeds=seeds, blocks=blocks, qr_stride=qr_stride)


# ---------------------------------------------------------------------------
# lemma checkers


@dataclass
class LemmaCheckRecord:
    lemma_id: str
    instance: dict
    lhs: float
    rhs: float
    satisfied: bool
    precondition_met: bool
    details: dict = field(default_factory=dict)

    @staticmethod
    def holds(lhs: float, rhs: float) -> bool:
        return bool(lhs <= rhs + ROUNDOFF_ATOL)

    def row(self) -> dict:
        out = {"lemma_id": self.lemma_id, "lhs": self.lhs, "rhs": self.rhs,
               "satisfied": self.satisfied, "precondition_met": self.precondition_met}
        out.update({f"instance.{k}": v for k, v in self.instance.items()})
        out.update({f"details.{k}": v for k, v in self.details.items()})
        return out


def sampled_directed_gap(v: Subspace, w: Subspace, samples: int, rng: np.random.Generator):
    """Monte-Carlo lower bound for :func:`directed_gap` from random unit vectors of V."""
    c = rng.standard_normal((v.dim, samples))
    x = v.basis @ c
    x /= np.linalg.norm(x, axis=0)
    return float(np.linalg.norm(w.residual(x), axis=0).max())


@dataclass(frozen=True, eq=False)
class ForwardInstance:
    """Splittings ``(Y, V)``, ``(Y', V')``, a map with ``L Y in Y'``, ``L V in V'``,
    ``ker L in V``, and a complement ``W`` of V."""

    y: Subspace
    v: Subspace
    y_next: Subspace
    v_next: Subspace
    op: np.ndarray
    w: Subspace
    info: dict = field(default_factory=dict)


def _random_basis(rng, d, max_cond=1e4):
    while True:
        b = rng.standard_normal((d, d))
        if np.linalg.cond(b) < max_cond:
            return b


def _orth(x) -> Subspace:
    return orthonormalize(x)[0]


def _block_map(rng, dims, scales, kernel_dims=()):
    """Block-diagonal coefficient map: block i has singular values around ``scales[i]``.

    Blocks listed in ``kernel_dims`` as ``(block, rank)`` get reduced rank.
    """
    blocks = []
    ranks = dict(kernel_dims)
    for i, (m, s) in enumerate(zip(dims, scales)):
        u = np.linalg.qr(rng.standard_normal((m, m)))[0]
        vt = np.linalg.qr(rng.standard_normal((m, m)))[0]
        sv = s * np.exp(rng.uniform(-0.5, 0.5, m))
        if i in ranks:
            sv[ranks[i]:] = 0.0
        blocks.append((u * sv) @ vt)
    out = np.zeros((sum(dims), sum(dims)))
    i = 0
    for b, m in zip(blocks, dims):
        out[i:i + m, i:i + m] = b
        i += m
    return out


def random_forward_instance(rng: np.random.Generator, dims=None) -> ForwardInstance:
    """Generic instance for the one-step forward estimate.

    ``dims = (d, k)``; sampled with d <= 8, k <= 3 when omitted.
    """
    if dims is None:
        d = int(rng.integers(2, 9))
        k = int(rng.integers(1, min(3, d - 1) + 1))
    else:
        d, k = dims
    src, dst = _random_basis(rng, d), _random_basis(rng, d)
    gap = rng.uniform(0.5, 6.0)
    kernel = ()
    u = rng.random()
    if u < 0.05:
        kernel = ((1, 0),)
    elif u < 0.25:
        kernel = ((1, int(rng.integers(0, d - k))),)
    core = _block_map(rng, (k, d - k), (math.exp(gap), 1.0), kernel)
    op = dst @ core @ np.linalg.inv(src)
    y, v = _orth(src[:, :k]), _orth(src[:, k:])
    if rng.random() < 0.2:
        w = _orth(rng.standard_normal((d, k)))
    else:
        tilt = 10 ** rng.uniform(-3, 0.5)
        w = _orth(y.basis + v.basis @ (tilt * rng.standard_normal((d - k, k))))
    return ForwardInstance(y, v, _orth(dst[:, :k]), _orth(dst[:, k:]), op, w,
                           {"d": d, "k": k, "log_gap": gap, "kernel": bool(kernel)})


def _forward_terms(inst: ForwardInstance):
    t = transversality_degree(inst.w, inst.v)
    p_vy = projection_norm(SplittingPair(inst.y, inst.v), onto_y=False)
    l_v = restricted_norm(inst.op, inst.v)
    low_y = float(np.linalg.svd(inst.op @ inst.y.basis, compute_uv=False)[-1])
    ratio = l_v / low_y
    precondition = t > 0 and t >= 2 * p_vy * ratio
    return t, p_vy, l_v, low_y, ratio, precondition


def evaluate_forward_lemma(inst: ForwardInstance, samples: int = MC_SAMPLES, rng=None,
                           seed=None) -> LemmaCheckRecord:
    """sup over LW-ball of dist to the Y'-ball against ``4 |Pi_{V||Y}| |L|_V| / (t inf|Ly|)``.

    The supremum is computed exactly from singular values; a Monte-Carlo
    estimate from ``samples`` unit vectors is recorded alongside as a lower
    bound cross-check.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    t, p_vy, l_v, low_y, ratio, pre = _forward_terms(inst)
    image = _orth(inst.op @ inst.w.basis)
    lhs = directed_gap(image, inst.y_next)
    lhs_mc = sampled_directed_gap(image, inst.y_next, samples, rng) if samples else float("nan")
    rhs = 4 * p_vy * ratio / t if t > 0 else math.inf
    return LemmaCheckRecord("forward_lemma", dict(inst.info), lhs, rhs, LemmaCheckRecord.holds(lhs, rhs), bool(pre),
                            {"transversality": t, "proj_norm": p_vy, "norm_on_V": l_v, "min_growth_Y": low_y,
                             "lhs_sampled": lhs_mc, "samples": samples})


def evaluate_forward_corollary(inst: ForwardInstance) -> LemmaCheckRecord:
    """``|Pi_{V'||Y'} restricted to LW|`` against ``2 |Pi_{V||Y}| |L|_V| / (t inf|Ly|)``."""
    t, p_vy, l_v, low_y, ratio, pre = _forward_terms(inst)
    image = _orth(inst.op @ inst.w.basis)
    lhs = restricted_norm(projector(SplittingPair(inst.y_next, inst.v_next), onto_y=False), image)
    rhs = 2 * p_vy * ratio / t if t > 0 else math.inf
    return LemmaCheckRecord("forward_corollary", dict(inst.info), lhs, rhs, LemmaCheckRecord.holds(lhs, rhs), bool(pre),
                            {"transversality": t, "proj_norm": p_vy, "norm_on_V": l_v, "min_growth_Y": low_y})


@dataclass(frozen=True, eq=False)
class BackwardInstance:
    """Nested splittings ``X = Y1 (+) V1``, ``V1 = Y2 (+) V2``, complements
    ``W1 in W2`` of V1 and V2, a map with ``ker L in V2``, and a complement
    ``Wt`` of W1 inside W2."""

    y1: Subspace
    y2: Subspace
    v2: Subspace
    op: np.ndarray
    w1: Subspace
    w2: Subspace
    wt: Subspace
    info: dict = field(default_factory=dict)

    @property
    def v1(self) -> Subspace:
        return subspace_sum(self.y2, self.v2)


def random_backward_instance(rng: np.random.Generator, dims=None) -> BackwardInstance:
    """Generic instance for the backward estimate, shaped like one Ginelli step.

    ``dims = (d, k1, k2)`` with ``k1 + k2 < d``; sampled with d <= 8 when
    omitted.  W1 and W2 are small tilts of Y1 and Y1 (+) Y2, and Wt is the
    preimage under L of a generic complement of LW1 in LW2, as produced by
    the backward stage.
    """
    if dims is None:
        d = int(rng.integers(3, 9))
        k1 = int(rng.integers(1, min(3, d - 2) + 1))
        k2 = int(rng.integers(1, min(3, d - k1 - 1) + 1))
    else:
        d, k1, k2 = dims
    k12 = k1 + k2
    src, dst = _random_basis(rng, d), _random_basis(rng, d)
    g12, g23 = rng.uniform(0.5, 8.0), rng.uniform(0.5, 8.0)
    kernel = ((2, int(rng.integers(0, d - k12))),) if rng.random() < 0.25 else ()
    core = _block_map(rng, (k1, k2, d - k12), (math.exp(g12 + g23), math.exp(g23), 1.0), kernel)
    op = dst @ core @ np.linalg.inv(src)
    y1, y2, v2 = _orth(src[:, :k1]), _orth(src[:, k1:k12]), _orth(src[:, k12:])
    v1 = _orth(src[:, k1:])
    t1, t2 = 10 ** rng.uniform(-3, 0), 10 ** rng.uniform(-3, 0)
    w1_raw = y1.basis + v1.basis @ (t1 * rng.standard_normal((d - k1, k1)))
    extra = (y2.basis + v2.basis @ (t2 * rng.standard_normal((d - k12, k2)))
             + y1.basis @ rng.standard_normal((k1, k2)))
    w1 = _orth(w1_raw)
    w2_basis = np.hstack([w1.basis, extra])
    w2 = _orth(w2_basis)
    if rng.random() < 0.2:
        wt = _orth(w2.basis @ rng.standard_normal((k12, k2)))
        how = "random"
    else:
        image = _orth(op @ w2.basis).basis
        # coefficient columns k1..k12-1 of an upper-triangular matrix with nonzero diagonal
        coeff = np.triu(rng.standard_normal((k12, k12)))[:, k1:]
        coeff[np.arange(k1, k12), np.arange(k2)] = rng.choice([-1, 1], k2) * rng.uniform(0.2, 2.0, k2)
        pre_img = np.linalg.lstsq(op @ w2.basis, image @ coeff, rcond=None)[0]
        wt = _orth(w2.basis @ pre_img)
        how = "preimage"
    return BackwardInstance(y1, y2, v2, op, w1, w2, wt,
                            {"d": d, "k1": k1, "k2": k2, "log_gap12": g12, "log_gap23": g23,
                             "kernel": bool(kernel), "wt": how})


def evaluate_backward_lemma(inst: BackwardInstance, samples: int = MC_SAMPLES, rng=None,
                            seed=None) -> LemmaCheckRecord:
    """Backward estimate for the span ``Wt`` against its bound in terms of delta.

    ``delta`` is the measured degree of transversality of ``L Wt`` to
    ``L W1``; the bound holds for any ``0 < delta`` below it, so the measured
    value is the tightest admissible choice.  The record also counts sampled
    unit vectors of Wt that satisfy the per-vector hypothesis and how many of
    them break the per-vector conclusion (must be zero).
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    op = inst.op
    v1 = inst.v1
    lw1 = _orth(op @ inst.w1.basis)
    lwt = _orth(op @ inst.wt.basis)
    delta = transversality_degree(lwt, lw1)
    pair_w1 = SplittingPair(inst.w1, v1)
    p_v1_w1 = projection_norm(pair_w1, onto_y=False)
    p_w1_v1 = projection_norm(pair_w1, onto_y=True)
    p_v1_y1 = projection_norm(SplittingPair(inst.y1, v1), onto_y=False)
    y12 = subspace_sum(inst.y1, inst.y2)
    p_v2_on_w2 = restricted_norm(projector(SplittingPair(y12, inst.v2), onto_y=False), inst.w2)
    l_v1 = restricted_norm(op, v1)
    low_y1 = float(np.linalg.svd(op @ inst.y1.basis, compute_uv=False)[-1])
    ratio = l_v1 / low_y1
    kernel_ok = float(np.linalg.svd(op @ y12.basis, compute_uv=False)[-1]) > 0
    pre = bool(0 < delta <= 1 and kernel_ok)

    lhs = directed_gap(inst.wt, inst.y2)
    lhs_mc = sampled_directed_gap(inst.wt, inst.y2, samples, rng) if samples else float("nan")
    if delta > 0:
        rhs = 2 * ((2 / delta) * p_v1_w1 + p_v1_y1 * p_w1_v1) * ratio + 2 * p_v2_on_w2
    else:
        rhs = math.inf

    # per-vector form: hypothesis on dist(w, Y2), conclusion on dist(Lw/|Lw|, L W1)
    tested = violated = 0
    if samples:
        x = inst.wt.basis @ rng.standard_normal((inst.wt.dim, samples))
        x /= np.linalg.norm(x, axis=0)
        dist_y2 = np.linalg.norm(inst.y2.residual(x), axis=0)
        threshold = (2 * p_v1_w1 + p_v1_y1 * p_w1_v1) * ratio + p_v2_on_w2
        mask = dist_y2 >= threshold
        tested = int(mask.sum())
        if tested:
            lx = op @ x[:, mask]
            lx /= np.linalg.norm(lx, axis=0)
            conc = np.linalg.norm(lw1.residual(lx), axis=0)
            denom = low_y1 * (dist_y2[mask] - p_v2_on_w2) - l_v1 * p_v1_y1 * p_w1_v1
            bound = 2 * l_v1 * p_v1_w1 / denom
            violated = int(np.sum((denom <= 0) | (conc > bound + ROUNDOFF_ATOL)))

    return LemmaCheckRecord("backward_lemma", dict(inst.info), lhs, rhs, LemmaCheckRecord.holds(lhs, rhs), pre,
                            {"delta": delta, "proj_V1_W1": p_v1_w1, "proj_W1_V1": p_w1_v1,
                             "proj_V1_Y1": p_v1_y1, "proj_V2_on_W2": p_v2_on_w2, "norm_on_V1": l_v1,
                             "min_growth_Y1": low_y1, "lhs_sampled": lhs_mc, "samples": samples,
                             "vector_tests": tested, "vector_violations": violated})


def _seeded(instance_seed):
    return np.random.default_rng(instance_seed)


def _require(record: LemmaCheckRecord) -> LemmaCheckRecord:
    if not record.precondition_met:
        raise PreconditionUnsatisfiable(record)
    return record


def check_forward_lemma(instance_seed, dims=None, samples: int = MC_SAMPLES) -> LemmaCheckRecord:
    """Random instance from ``instance_seed``; raises PreconditionUnsatisfiable when rejected."""
    rng = _seeded(instance_seed)
    inst = random_forward_instance(rng, dims)
    rec = evaluate_forward_lemma(inst, samples, rng)
    rec.instance["seed"] = _seed_repr(instance_seed)
    return _require(rec)


def check_forward_projection_corollary(instance_seed, dims=None) -> LemmaCheckRecord:
    rng = _seeded(instance_seed)
    rec = evaluate_forward_corollary(random_forward_instance(rng, dims))
    rec.instance["seed"] = _seed_repr(instance_seed)
    return _require(rec)


def check_backward_lemma(instance_seed, dims=None, samples: int = MC_SAMPLES) -> LemmaCheckRecord:
    rng = _seeded(instance_seed)
    inst = random_backward_instance(rng, dims)
    rec = evaluate_backward_lemma(inst, samples, rng)
    rec.instance["seed"] = _seed_repr(instance_seed)
    return _require(rec)


def _seed_repr(seed):
    return list(seed) if isinstance(seed, (tuple, list)) else seed


_CHECKERS = {
    "forward": check_forward_lemma,
    "corollary": check_forward_projection_corollary,
    "backward": check_backward_lemma,
}


@dataclass
class LemmaSweep:
    lemma: str
    instances: int
    attempts: int
    records: list
    unresolved: int

    @property
    def precondition_met(self) -> int:
        return sum(r.precondition_met for r in self.records)

    @property
    def violations(self) -> int:
        return sum(1 for r in self.records
                   if r.precondition_met and (not r.satisfied or r.details.get("vector_violations", 0)))

    @property
    def nontrivial(self) -> int:
        """Instances whose bound is below 1, where the inequality has content."""
        return sum(1 for r in self.records if r.precondition_met and r.rhs < 1)

    def summary(self) -> dict:
        return {"lemma": self.lemma, "instances": self.instances, "attempts": self.attempts,
                "precondition_met": self.precondition_met, "unresolved": self.unresolved,
                "violations": self.violations, "nontrivial": self.nontrivial}

    def to_csv(self) -> str:
        rows = [r.row() for r in self.records]
        keys = sorted({k for r in rows for k in r})
        front = ["lemma_id", "lhs", "rhs", "satisfied", "precondition_met"]
        keys = front + [k for k in keys if k not in front]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()


def lemma_sweep(lemma: str, instances: int, seed: int = 0, resample: int = 10, samples: int = MC_SAMPLES,
                dims=None) -> LemmaSweep:
    """Run ``instances`` randomized checks; rejected instances are redrawn up to ``resample`` times.

    Instance i, attempt a uses the seed ``(seed, i, a)``.
    """
    if lemma not in _CHECKERS:
        raise ValueError(f"unknown lemma {lemma!r}; choose from {sorted(_CHECKERS)}")
    if instances < 1:
        raise ValueError("instances must be >= 1")
    check = _CHECKERS[lemma]
    kwargs = {"dims": dims}
    if lemma != "corollary":
        kwargs["samples"] = samples
    records, attempts, unresolved = [], 0, 0
    for i in range(instances):
        for a in range(resample):
            attempts += 1
            try:
                records.append(check((seed, i, a), **kwargs))
                break
            except PreconditionUnsatisfiable:
                continue
            except RankDeficient:
                continue
        else:
            unresolved += 1
    return LemmaSweep(lemma, instances, attempts, records, unresolved)
