"""Linear maps over a prime field GF(q) and random ensembles of them.

Vectors and matrices are plain integer numpy arrays with entries in
``[0, q)``.  Hash ensembles draw matrices column by column, so every
collision question reduces to the distribution of a single random column.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

import numpy as np

from .errors import InputError, ResourceLimitError

MAX_ENUM_BITS = 26
ENSEMBLE_KINDS = ("uniform", "sparse", "sparse-replace")


@lru_cache(maxsize=None)
def check_field(q: int) -> int:
    if not isinstance(q, (int, np.integer)) or q < 2 or q > 257:
        raise InputError(f"field order must be a prime in [2, 257], got {q!r}")
    if any(q % p == 0 for p in range(2, math.isqrt(q) + 1)):
        raise InputError(f"field order {q} is not prime")
    return int(q)


def _guard(what: str, count: float, max_bits: float = MAX_ENUM_BITS):
    bits = math.log2(count) if count > 0 else 0.0
    if bits > max_bits:
        raise ResourceLimitError(what, bits, max_bits)


@dataclass(frozen=True, eq=False)
class LinearMap:
    q: int
    matrix: np.ndarray
    kind: str = "dense"

    def __post_init__(self):
        check_field(self.q)
        m = np.asarray(self.matrix, dtype=np.int64)
        if m.ndim != 2:
            raise InputError("matrix must be two-dimensional")
        if m.shape[0] > m.shape[1]:
            raise InputError(f"map has more rows ({m.shape[0]}) than columns ({m.shape[1]})")
        if m.size and (m.min() < 0 or m.max() >= self.q):
            raise InputError(f"entries must lie in [0, {self.q})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def __eq__(self, other):
        return (isinstance(other, LinearMap) and self.q == other.q
                and np.array_equal(self.matrix, other.matrix))

    def __hash__(self):
        return hash((self.q, self.matrix.shape, self.matrix.tobytes()))

    def __repr__(self):
        return f"LinearMap(q={self.q}, {self.rows}x{self.cols}, {self.kind})"

    @classmethod
    def zeros(cls, rows: int, cols: int, q: int = 2) -> "LinearMap":
        return cls(q, np.zeros((rows, cols), dtype=np.int64))

    @classmethod
    def identity(cls, n: int, q: int = 2) -> "LinearMap":
        return cls(q, np.eye(n, dtype=np.int64))

    def column_support(self) -> list[list[tuple[int, int]]]:
        """Per column, the (row, value) pairs of nonzero entries."""
        return [[(int(r), int(self.matrix[r, c])) for r in np.flatnonzero(self.matrix[:, c])]
                for c in range(self.cols)]

    def to_text(self) -> str:
        head = f"{self.q} {self.rows} {self.cols} {self.kind}"
        if self.kind == "dense":
            body = [" ".join(str(int(x)) for x in row) for row in self.matrix]
        else:
            body = [f"{r} {c} {v}" for c, col in enumerate(self.column_support()) for r, v in col]
        return "\n".join([head, *body]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LinearMap":
        lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or len(lines[0]) != 4:
            raise InputError("matrix header must be 'q rows cols kind'")
        q, rows, cols, kind = int(lines[0][0]), int(lines[0][1]), int(lines[0][2]), lines[0][3]
        mat = np.zeros((rows, cols), dtype=np.int64)
        if kind == "dense":
            if len(lines) - 1 != rows:
                raise InputError(f"expected {rows} matrix rows, got {len(lines) - 1}")
            for r, ln in enumerate(lines[1:]):
                if len(ln) != cols:
                    raise InputError(f"row {r} has {len(ln)} entries, expected {cols}")
                mat[r] = [int(x) for x in ln]
        else:
            for ln in lines[1:]:
                r, c, v = (int(x) for x in ln)
                mat[r, c] = v
        return cls(q, mat, kind)


@dataclass(frozen=True)
class FunctionPair:
    """Codeword-side map ``f`` and message-side map ``g`` on the same space."""
    f: LinearMap
    g: LinearMap

    def __post_init__(self):
        if self.f.q != self.g.q:
            raise InputError("f and g must share the field")
        if self.f.cols != self.g.cols:
            raise InputError(f"f has {self.f.cols} columns but g has {self.g.cols}")

    @property
    def n(self) -> int:
        return self.f.cols

    @property
    def q(self) -> int:
        return self.f.q

    def stacked(self) -> np.ndarray:
        return np.vstack([self.f.matrix, self.g.matrix])


def apply(f: LinearMap, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64)
    if v.shape[-1] != f.cols:
        raise InputError(f"vector length {v.shape[-1]} does not match map with {f.cols} columns")
    return (v @ f.matrix.T) % f.q


def row_reduce(mat: np.ndarray, q: int) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(q) and the pivot columns."""
    a = np.array(mat, dtype=np.int64) % q
    rows, cols = a.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.flatnonzero(a[r:, c])
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        a[r] = (a[r] * pow(int(a[r, c]), -1, q)) % q
        others = np.flatnonzero(a[:, c])
        others = others[others != r]
        if others.size:
            a[others] = (a[others] - np.outer(a[others, c], a[r])) % q
        pivots.append(c)
        r += 1
    return a, pivots


def rank(f: LinearMap | np.ndarray, q: int | None = None) -> int:
    if isinstance(f, LinearMap):
        mat, q = f.matrix, f.q
    else:
        mat = f
    if mat.shape[0] == 0:
        return 0
    return len(row_reduce(mat, q)[1])


def nullspace(mat: np.ndarray, q: int) -> np.ndarray:
    """Basis of {z : mat z = 0} as rows of a (k, cols) array."""
    cols = mat.shape[1]
    if mat.shape[0] == 0:
        return np.eye(cols, dtype=np.int64)
    red, pivots = row_reduce(mat, q)
    free = [c for c in range(cols) if c not in pivots]
    basis = np.zeros((len(free), cols), dtype=np.int64)
    for b, fc in enumerate(free):
        basis[b, fc] = 1
        for r, pc in enumerate(pivots):
            basis[b, pc] = (-red[r, fc]) % q
    return basis


def solve(mat: np.ndarray, rhs, q: int) -> np.ndarray | None:
    """One solution z of mat z = rhs over GF(q), or None if inconsistent."""
    rows, cols = mat.shape
    rhs = np.asarray(rhs, dtype=np.int64).reshape(rows) % q
    if rows == 0:
        return np.zeros(cols, dtype=np.int64)
    red, pivots = row_reduce(np.hstack([mat, rhs[:, None]]), q)
    if cols in pivots:
        return None
    z = np.zeros(cols, dtype=np.int64)
    for r, pc in enumerate(pivots):
        z[pc] = red[r, cols]
    return z


def span_points(offset: np.ndarray, basis: np.ndarray, q: int) -> np.ndarray:
    """All points offset + span(basis), in lexicographic order of coefficients."""
    k = basis.shape[0]
    if k == 0:
        return offset[None, :].copy()
    coeffs = np.array(list(itertools.product(range(q), repeat=k)), dtype=np.int64)
    return (offset[None, :] + coeffs @ basis) % q


def all_vectors(n: int, q: int, max_bits: float = MAX_ENUM_BITS) -> np.ndarray:
    _guard("vector space enumeration", float(q) ** n, max_bits)
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int64)


def affine_solutions(mat: np.ndarray, rhs, q: int, max_bits: float = MAX_ENUM_BITS) -> np.ndarray:
    cols = mat.shape[1]
    z0 = solve(mat, rhs, q)
    if z0 is None:
        return np.zeros((0, cols), dtype=np.int64)
    basis = nullspace(mat, q)
    _guard("coset enumeration", float(q) ** basis.shape[0], max_bits)
    return span_points(z0, basis, q)


def coset_members(f: LinearMap, c, max_bits: float = MAX_ENUM_BITS) -> np.ndarray:
    """Rows are exactly the vectors z with f(z) = c."""
    _guard("coset enumeration", float(f.q) ** f.cols, max_bits)
    c = np.asarray(c, dtype=np.int64).reshape(-1)
    if c.size != f.rows:
        raise InputError(f"coset value has length {c.size}, map has {f.rows} rows")
    return affine_solutions(f.matrix, c, f.q, max_bits)


def joint_coset_members(pair: FunctionPair, c, m, max_bits: float = MAX_ENUM_BITS) -> np.ndarray:
    """Rows are the vectors z with f(z) = c and g(z) = m."""
    _guard("coset enumeration", float(pair.q) ** pair.n, max_bits)
    c = np.asarray(c, dtype=np.int64).reshape(-1)
    m = np.asarray(m, dtype=np.int64).reshape(-1)
    if c.size != pair.f.rows or m.size != pair.g.rows:
        raise InputError("coset value lengths do not match (f, g) row counts")
    return affine_solutions(pair.stacked(), np.concatenate([c, m]), pair.q, max_bits)


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class HashEnsembleSpec:
    kind: str
    n: int
    rows: int
    q: int = 2
    column_degree: int | None = None
    seed: int | None = None

    def __post_init__(self):
        check_field(self.q)
        if self.kind not in ENSEMBLE_KINDS:
            raise InputError(f"unknown ensemble kind {self.kind!r}; choose from {ENSEMBLE_KINDS}")
        if not 0 <= self.rows <= self.n:
            raise InputError(f"need 0 <= rows <= n, got rows={self.rows}, n={self.n}")
        if self.column_degree is not None:
            if self.column_degree < 1:
                raise InputError("column_degree must be at least 1")
            if self.kind == "sparse" and self.column_degree > self.rows:
                raise InputError(f"column_degree {self.column_degree} exceeds rows {self.rows}")

    @property
    def degree(self) -> int:
        """Nonzeros per column for the sparse kinds."""
        if self.column_degree is not None:
            return self.column_degree
        d = max(1, math.ceil(math.log2(self.n))) if self.n > 1 else 1
        return min(d, self.rows) if self.kind == "sparse" else d


def sample_map(spec: HashEnsembleSpec, rng: np.random.Generator) -> LinearMap:
    q, m, n = spec.q, spec.rows, spec.n
    if spec.kind == "uniform":
        return LinearMap(q, rng.integers(0, q, size=(m, n)), "dense")
    mat = np.zeros((m, n), dtype=np.int64)
    if m == 0:
        return LinearMap(q, mat, "sparse")
    d = spec.degree
    for c in range(n):
        if spec.kind == "sparse":
            rows = rng.choice(m, size=d, replace=False)
            mat[rows, c] = rng.integers(1, q, size=d)
        else:
            for r in rng.integers(0, m, size=d):
                mat[r, c] = (mat[r, c] + rng.integers(1, q)) % q
    return LinearMap(q, mat, "sparse")


def _encode(vec, q: int) -> int:
    out = 0
    for x in vec:
        out = out * q + int(x)
    return out


def _decode(code: int, m: int, q: int) -> tuple[int, ...]:
    digits = []
    for _ in range(m):
        code, r = divmod(code, q)
        digits.append(r)
    return tuple(reversed(digits))


def column_distribution(spec: HashEnsembleSpec) -> dict[tuple[int, ...], Fraction]:
    """Exact law of one matrix column as {column tuple: probability}."""
    q, m = spec.q, spec.rows
    if m == 0:
        return {(): Fraction(1)}
    if spec.kind == "uniform":
        _guard("column distribution", float(q) ** m, 20)
        p = Fraction(1, q ** m)
        return {_decode(k, m, q): p for k in range(q ** m)}
    d = spec.degree
    if spec.kind == "sparse":
        support = math.comb(m, d) * (q - 1) ** d
        _guard("column distribution", support, 20)
        p = Fraction(1, support)
        out = {}
        for rows in itertools.combinations(range(m), d):
            for vals in itertools.product(range(1, q), repeat=d):
                col = [0] * m
                for r, v in zip(rows, vals):
                    col[r] = v
                out[tuple(col)] = p
        return out
    _guard("column distribution", float(m * (q - 1)) ** d, 20)
    counts: Counter = Counter()
    for draws in itertools.product(itertools.product(range(m), range(1, q)), repeat=d):
        col = [0] * m
        for r, v in draws:
            col[r] = (col[r] + v) % q
        counts[tuple(col)] += 1
    total = (m * (q - 1)) ** d
    return {col: Fraction(k, total) for col, k in counts.items()}


def ensemble_image_size(spec: HashEnsembleSpec) -> int:
    """|Im F|: size of the union of images over the ensemble.

    Each image lies in the span of the column support, and because
    rows <= n some member attains that whole span.
    """
    if spec.rows == 0:
        return 1
    support = [c for c, p in column_distribution(spec).items() if p > 0 and any(c)]
    if not support:
        return 1
    return spec.q ** rank(np.array(support, dtype=np.int64), spec.q)


def _zero_sum_probability(col_dist, scalars, q) -> Fraction:
    """P(sum_j a_j X_j = 0) for independent columns X_j with the given law."""
    state: dict[tuple[int, ...], Fraction] = {tuple([0] * len(next(iter(col_dist)))): Fraction(1)}
    for a in scalars:
        scaled: dict = {}
        for col, p in col_dist.items():
            key = tuple((a * x) % q for x in col)
            scaled[key] = scaled.get(key, 0) + p
        nxt: dict = {}
        for u, pu in state.items():
            for v, pv in scaled.items():
                key = tuple((x + y) % q for x, y in zip(u, v))
                nxt[key] = nxt.get(key, 0) + pu * pv
        state = nxt
    zero = tuple([0] * len(next(iter(state))))
    return Fraction(state.get(zero, 0))


@dataclass(frozen=True)
class CollisionResult:
    probability: float | Fraction
    exact: bool
    stderr: float = 0.0
    samples: int = 0


def collision_spectrum(spec: HashEnsembleSpec, z, z2, samples: int = 20000,
                       rng: np.random.Generator | None = None) -> CollisionResult:
    """P_F(f(z) = f(z2)), exactly when the column law is small, else sampled."""
    z = np.asarray(z, dtype=np.int64) % spec.q
    z2 = np.asarray(z2, dtype=np.int64) % spec.q
    if z.shape != (spec.n,) or z2.shape != (spec.n,):
        raise InputError(f"vectors must have length {spec.n}")
    if np.array_equal(z, z2):
        raise InputError("z and z' coincide; the collision probability is trivially 1")
    diff = (z - z2) % spec.q
    if spec.rows == 0:
        return CollisionResult(Fraction(1), True)
    try:
        dist = column_distribution(spec)
    except ResourceLimitError:
        rng = rng if rng is not None else np.random.default_rng(spec.seed)
        hits = 0
        for _ in range(samples):
            hits += not apply(sample_map(spec, rng), diff).any()
        p = hits / samples
        return CollisionResult(p, False, math.sqrt(max(p * (1 - p), 1e-300) / samples), samples)
    scalars = [int(a) for a in diff if a]
    return CollisionResult(_zero_sum_probability(dist, scalars, spec.q), True)


def collision_profile(spec: HashEnsembleSpec) -> dict[int, Fraction]:
    """Collision probability of a nonzero difference, keyed by its Hamming weight.

    Both supported column laws are invariant under scaling by a nonzero
    field element, so P(F d = 0) only depends on how many entries of d are
    nonzero.
    """
    if spec.rows == 0:
        return {w: Fraction(1) for w in range(1, spec.n + 1)}
    if spec.kind == "uniform":
        # F d is uniform on GF(q)^rows for any nonzero d
        return {w: Fraction(1, spec.q ** spec.rows) for w in range(1, spec.n + 1)}
    dist = column_distribution(spec)
    _guard("collision profile state", float(spec.q) ** spec.rows * len(dist), 24)
    zero = tuple([0] * spec.rows)
    state: dict[tuple[int, ...], Fraction] = {zero: Fraction(1)}
    out = {}
    for w in range(1, spec.n + 1):
        nxt: dict = {}
        for u, pu in state.items():
            for v, pv in dist.items():
                key = tuple((x + y) % spec.q for x, y in zip(u, v))
                nxt[key] = nxt.get(key, 0) + pu * pv
        state = nxt
        out[w] = Fraction(state.get(zero, 0))
    return out


def _weight_count(n: int, w: int, q: int) -> int:
    return math.comb(n, w) * (q - 1) ** w


def excess_collision_mass(profile: dict[int, Fraction], n: int, q: int,
                          alpha: Fraction, image_size: int) -> Fraction:
    thresh = Fraction(alpha) / image_size
    return sum((_weight_count(n, w, q) * p for w, p in profile.items() if p > thresh), Fraction(0))


def hash_alpha_beta(spec: HashEnsembleSpec) -> tuple[Fraction, Fraction]:
    """(alpha, beta) with alpha = 1 and the exact excess collision mass as beta.

    By linearity the excess mass is the same for every base point z.
    """
    alpha = Fraction(1)
    if spec.rows == 0:
        return alpha, Fraction(0)
    beta = excess_collision_mass(collision_profile(spec), spec.n, spec.q, alpha,
                                 ensemble_image_size(spec))
    return alpha, beta


def joint_ensemble_alpha_beta(ab_f, ab_g) -> tuple:
    (af, bf), (ag, bg) = ab_f, ab_g
    if af < 1 or ag < 1 or bf < 0 or bg < 0:
        raise InputError("hash parameters need alpha >= 1 and beta >= 0")
    return af * ag, bf + bg


def product_ensemble_beta(spec_f: HashEnsembleSpec, spec_g: HashEnsembleSpec,
                          alpha) -> Fraction:
    """Measured excess mass of the independent pair (F, G) at the given alpha."""
    if spec_f.n != spec_g.n or spec_f.q != spec_g.q:
        raise InputError("pair ensembles must act on the same space")
    pf, pg = collision_profile(spec_f), collision_profile(spec_g)
    joint = {w: pf[w] * pg[w] for w in pf}
    size = ensemble_image_size(spec_f) * ensemble_image_size(spec_g)
    return excess_collision_mass(joint, spec_f.n, spec_f.q, Fraction(alpha), size)


def enumerate_ensemble(spec: HashEnsembleSpec, max_bits: float = 20) -> Iterator[tuple[LinearMap, Fraction]]:
    """Every matrix in the ensemble's support with its probability."""
    dist = column_distribution(spec)
    cols = list(dist.items())
    _guard("ensemble enumeration", float(len(cols)) ** spec.n, max_bits)
    kind = "dense" if spec.kind == "uniform" else "sparse"
    for choice in itertools.product(cols, repeat=spec.n):
        p = Fraction(1)
        for _, pc in choice:
            p *= pc
        mat = np.array([c for c, _ in choice], dtype=np.int64).reshape(spec.n, spec.rows).T
        yield LinearMap(spec.q, mat, kind), p
