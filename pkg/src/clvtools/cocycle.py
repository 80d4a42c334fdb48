"""Two-sided matrix cocycles along a finite window of an orbit.

A :class:`CocycleOrbit` stores the generators ``L(sigma^n omega)`` for
``n`` in ``[start, stop)``.  Products are never formed; vectors are pushed
through one generator at a time.

Two synthetic families are provided:

* conjugated diagonal cocycles ``L_n = T_{n+1} D T_n^{-1}``, whose Oseledets
  spaces are known in closed form (see :mod:`clvtools.oracle`);
* Ulam discretizations of non-autonomous expanding circle maps, a finite
  truncation of a transfer-operator cocycle.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadSpec, NonFiniteValues, OrbitFormatError, OutOfRange

__all__ = [
    "CocycleOrbit",
    "ConjugatedDiagonalSpec",
    "UlamTransferSpec",
    "push_forward",
    "conjugator",
    "make_conjugated_diagonal",
    "ulam_matrix",
    "make_ulam_transfer",
    "embed_step_function",
    "save_orbit",
    "load_orbit",
]


@dataclass(frozen=True, eq=False)
class CocycleOrbit:
    """Generators ``L(sigma^n omega)`` for ``start <= n < start + len(generators)``."""

    generators: np.ndarray
    start: int = 0

    def __post_init__(self):
        g = np.asarray(self.generators, dtype=float)
        if g.ndim != 3 or g.shape[1] != g.shape[2] or g.shape[0] == 0:
            raise ValueError(f"generators must have shape (steps, d, d), got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteValues("generators contain non-finite entries")
        if g.flags.writeable:
            g = g.copy()
            g.setflags(write=False)
        object.__setattr__(self, "generators", g)
        object.__setattr__(self, "start", int(self.start))

    @classmethod
    def constant(cls, matrix, start: int, stop: int) -> "CocycleOrbit":
        """Autonomous cocycle: the same generator at every index (no copies made)."""
        m = np.array(matrix, dtype=float)
        m.setflags(write=False)
        return cls(np.broadcast_to(m, (stop - start,) + m.shape), start)

    @property
    def stop(self) -> int:
        return self.start + self.generators.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.generators.shape[1]

    @property
    def range(self) -> range:
        return range(self.start, self.stop)

    def check_window(self, start: int, stop: int):
        if start < self.start or stop > self.stop or start > stop:
            raise OutOfRange(f"window [{start}, {stop}) not inside orbit range [{self.start}, {self.stop})")

    def generator_at(self, n: int) -> np.ndarray:
        if not self.start <= n < self.stop:
            raise OutOfRange(f"index {n} outside orbit range [{self.start}, {self.stop})")
        return self.generators[n - self.start]


def push_forward(orbit: CocycleOrbit, start: int, steps: int, vectors):
    """Apply ``L(sigma^{start+steps-1} omega) ... L(sigma^start omega)`` to ``vectors``."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    orbit.check_window(start, start + steps)
    x = np.array(vectors, dtype=float)
    for n in range(start, start + steps):
        x = orbit.generators[n - orbit.start] @ x
    return x


def _index_rng(seed: int, n: int, stream: int) -> np.random.Generator:
    # one independent stream per (seed, orbit index, purpose)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, int(n < 0), abs(int(n)))))


# ---------------------------------------------------------------------------
# conjugated diagonal cocycles


@dataclass(frozen=True)
class ConjugatedDiagonalSpec:
    """``L_n = T_{n+1} diag(exp(rates)) T_n^{-1}`` with cond(T_n) <= conditioning.

    Rates are non-increasing log growth rates, repeated per multiplicity.
    Entries equal to ``-inf`` give a zero diagonal entry: those coordinates
    form the tail space and put a kernel into every generator.
    """

    rates: tuple
    conditioning: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        self.validate()

    def validate(self):
        r = np.array(self.rates)
        if r.size == 0:
            raise BadSpec("rates must be non-empty")
        if np.any(np.isnan(r)) or np.any(r == np.inf):
            raise BadSpec("rates must be finite or -inf")
        if np.any(r[1:] > r[:-1]):
            raise BadSpec(f"rates must be sorted non-increasing, got {self.rates}")
        if not np.isfinite(r[0]):
            raise BadSpec("at least one rate must be finite")
        if not self.conditioning >= 1.0 or not math.isfinite(self.conditioning):
            raise BadSpec(f"conditioning must be a finite number >= 1, got {self.conditioning}")

    @property
    def ambient_dim(self) -> int:
        return len(self.rates)

    def groups(self):
        """Distinct finite rates as ``(rate, slice of coordinates)``, fastest first."""
        out = []
        i = 0
        finite = [r for r in self.rates if math.isfinite(r)]
        while i < len(finite):
            j = i
            while j < len(finite) and finite[j] == finite[i]:
                j += 1
            out.append((finite[i], slice(i, j)))
            i = j
        return out

    @property
    def tail_slice(self) -> slice:
        n_finite = sum(math.isfinite(r) for r in self.rates)
        return slice(n_finite, len(self.rates))

    def to_dict(self) -> dict:
        return {"rates": [r if math.isfinite(r) else "-inf" for r in self.rates],
                "conditioning": self.conditioning, "seed": self.seed}


def _haar_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def conjugator(spec: ConjugatedDiagonalSpec, n: int) -> np.ndarray:
    """``T(sigma^n omega) = (1 - b) I + b O_n`` with O_n Haar orthogonal.

    T is normal with singular values in ``[1 - 2b, 1]``; choosing
    ``b = (1 - 1/conditioning) / 2`` bounds its condition number by
    ``conditioning`` and gives exactly the identity when it equals 1.
    """
    d = spec.ambient_dim
    if spec.conditioning == 1.0:
        return np.eye(d)
    b = 0.5 * (1.0 - 1.0 / spec.conditioning)
    o = _haar_orthogonal(_index_rng(spec.seed, n, 0), d)
    return (1.0 - b) * np.eye(d) + b * o


def make_conjugated_diagonal(spec: ConjugatedDiagonalSpec, start: int, stop: int):
    """Build the orbit on ``[start, stop)`` together with its exact Oseledets data."""
    from .oracle import OracleSplitting

    spec.validate()
    if stop <= start:
        raise BadSpec(f"empty window [{start}, {stop})")
    diag = np.exp(np.array(spec.rates))
    ts = [conjugator(spec, n) for n in range(start, stop + 1)]
    gens = np.empty((stop - start, spec.ambient_dim, spec.ambient_dim))
    for i in range(stop - start):
        gens[i] = ts[i + 1] @ (diag[:, None] * np.linalg.inv(ts[i]))
    return CocycleOrbit(gens, start), OracleSplitting(spec)


# ---------------------------------------------------------------------------
# Ulam discretization of driven expanding circle maps


@dataclass(frozen=True)
class UlamTransferSpec:
    """Ulam matrices of ``x -> m x + eps sin(2 pi x + phi_n) mod 1``.

    The phases ``phi_n`` are drawn uniformly per orbit index from ``seed``,
    independently of ``bins``, so different truncations see the same maps.
    """

    bins: int
    m: int = 2
    eps: float = 0.0
    seed: int = 0
    samples_per_bin: int = 256

    def validate(self):
        if int(self.m) != self.m or self.m < 2:
            raise BadSpec(f"m must be an integer >= 2, got {self.m}")
        if not self.m - 2 * math.pi * abs(self.eps) > 1:
            raise BadSpec(f"map is not uniformly expanding: m - 2 pi |eps| = "
                          f"{self.m - 2 * math.pi * abs(self.eps):.4g} <= 1")
        if self.bins < 8:
            raise BadSpec(f"need at least 8 bins, got {self.bins}")
        if self.samples_per_bin < 100:
            raise BadSpec(f"need at least 100 samples per bin, got {self.samples_per_bin}")

    def phase(self, n: int) -> float:
        return 2 * math.pi * _index_rng(self.seed, n, 1).random()

    def circle_map(self, x, n: int):
        return np.mod(self.m * x + self.eps * np.sin(2 * math.pi * x + self.phase(n)), 1.0)


def ulam_matrix(spec: UlamTransferSpec, n: int) -> np.ndarray:
    """Column-stochastic matrix: entry (i, j) is the fraction of bin j mapped into bin i.

    Fractions are estimated from ``samples_per_bin`` midpoint samples per bin.
    """
    nb, q = spec.bins, spec.samples_per_bin
    x = (np.arange(nb * q) + 0.5) / (nb * q)
    src = np.arange(nb * q) // q
    dst = np.minimum((spec.circle_map(x, n) * nb).astype(np.int64), nb - 1)
    counts = np.bincount(dst * nb + src, minlength=nb * nb).reshape(nb, nb)
    return counts / q


def make_ulam_transfer(spec: UlamTransferSpec, start: int, stop: int) -> CocycleOrbit:
    spec.validate()
    if stop <= start:
        raise BadSpec(f"empty window [{start}, {stop})")
    return CocycleOrbit(np.stack([ulam_matrix(spec, n) for n in range(start, stop)]), start)


def embed_step_function(values, bins: int) -> np.ndarray:
    """Refine a piecewise-constant function on a uniform grid to ``bins`` cells.

    ``bins`` must be a multiple of ``len(values)``; the L2([0, 1]) inner
    product of two embedded functions is then proportional to their dot
    product.
    """
    values = np.asarray(values, dtype=float)
    factor, rem = divmod(bins, values.shape[0])
    if rem or factor < 1:
        raise ValueError(f"{bins} cells is not a refinement of {values.shape[0]}")
    return np.repeat(values, factor, axis=0)


# ---------------------------------------------------------------------------
# CLVMAT1 binary orbit format

MAGIC = b"CLVMAT1"
_HEADER = struct.Struct("<7sIq")
MANIFEST = "manifest.json"


def _matrix_filename(n: int) -> str:
    return f"L{n:+09d}.clvmat"


def write_matrix(path, matrix: np.ndarray, index: int):
    m = np.asarray(matrix, dtype="<f8")
    d = m.shape[0]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, d, index))
        fh.write(m.tobytes(order="F"))


def read_matrix(path):
    """Return ``(index, matrix)`` from one CLVMAT1 file."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise OrbitFormatError(f"{path}: truncated header")
    magic, d, index = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise OrbitFormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * d * d
    if len(data) != expected:
        raise OrbitFormatError(f"{path}: expected {expected} bytes for d={d}, found {len(data)}")
    m = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape((d, d), order="F")
    return index, m.astype(float)


def save_orbit(orbit: CocycleOrbit, directory):
    """Write one CLVMAT1 file per generator plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for n in orbit.range:
        name = _matrix_filename(n)
        write_matrix(directory / name, orbit.generator_at(n), n)
        files.append(name)
    manifest = {"format": "CLVMAT1", "ambient_dim": orbit.ambient_dim,
                "start": orbit.start, "stop": orbit.stop, "files": files}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")


def load_orbit(directory) -> CocycleOrbit:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text())
    except FileNotFoundError as exc:
        raise OrbitFormatError(f"{directory}: missing {MANIFEST}") from exc
    except json.JSONDecodeError as exc:
        raise OrbitFormatError(f"{directory / MANIFEST}: {exc}") from exc
    try:
        d, start, stop = int(manifest["ambient_dim"]), int(manifest["start"]), int(manifest["stop"])
        files = list(manifest.get("files") or [_matrix_filename(n) for n in range(start, stop)])
    except (KeyError, TypeError, ValueError) as exc:
        raise OrbitFormatError(f"{directory / MANIFEST}: malformed manifest ({exc})") from exc
    if manifest.get("format", "CLVMAT1") != "CLVMAT1" or len(files) != stop - start:
        raise OrbitFormatError(f"{directory / MANIFEST}: inconsistent manifest")
    gens = np.empty((stop - start, d, d))
    for expected, name in zip(range(start, stop), files):
        try:
            index, m = read_matrix(directory / name)
        except FileNotFoundError as exc:
            raise OrbitFormatError(f"{directory / name}: missing matrix file") from exc
        if index != expected or m.shape != (d, d):
            raise OrbitFormatError(f"{name}: holds index {index}, dimension {m.shape[0]}; "
                                   f"expected index {expected}, dimension {d}")
        gens[index - start] = m
    return CocycleOrbit(gens, start)
