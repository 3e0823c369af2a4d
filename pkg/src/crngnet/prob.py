"""Finite distributions, conditional kernels and the memoryless letter model.

A :class:`FiniteDist` is a numpy table with one named axis per factor.  The
joint source over messages is assembled group by group from conditional
kernels, and the letter model stacks sources, encoder input kernels and the
channel into one per-letter joint table.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .access import AccessStructure, SortedFamily, messages_of_encoder
from .errors import InputError, ResourceLimitError

SUM_TOL = 1e-12
ROW_TOL = 1e-9
MAX_TABLE_BITS = 22


def _guard_cells(what: str, cells: float):
    bits = math.log2(cells) if cells > 0 else 0.0
    if bits > MAX_TABLE_BITS:
        raise ResourceLimitError(what, bits, MAX_TABLE_BITS)


@dataclass(frozen=True, eq=False)
class FiniteDist:
    factors: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != len(self.factors):
            raise InputError(f"table has {t.ndim} axes for {len(self.factors)} factors")
        if len(set(self.factors)) != len(self.factors):
            raise InputError(f"repeated factor in {self.factors}")
        if (t < 0).any():
            raise InputError("negative probability")
        if abs(t.sum() - 1.0) > SUM_TOL * max(1, t.size):
            raise InputError(f"probabilities sum to {t.sum():.15g}, not 1")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def of(cls, name: str, probs: Sequence[float]) -> "FiniteDist":
        return cls((name,), np.asarray(probs, dtype=float))

    @classmethod
    def uniform(cls, factors: Sequence[str], sizes: Sequence[int]) -> "FiniteDist":
        t = np.ones(tuple(sizes))
        return cls(tuple(factors), t / t.sum())

    @property
    def sizes(self) -> dict[str, int]:
        return dict(zip(self.factors, self.table.shape))

    def axes(self, names: Iterable[str]) -> list[int]:
        try:
            return [self.factors.index(n) for n in names]
        except ValueError:
            raise InputError(f"unknown factor among {list(names)}; have {self.factors}") from None

    def marginal(self, names: Sequence[str]) -> "FiniteDist":
        names = tuple(names)
        keep = self.axes(names)
        drop = tuple(a for a in range(len(self.factors)) if a not in keep)
        t = self.table.sum(axis=drop) if drop else self.table
        remaining = [a for a in range(len(self.factors)) if a in keep]
        t = np.transpose(t, [remaining.index(a) for a in keep]) if names else np.asarray(t)
        return FiniteDist(names, t)

    def prob(self, outcome: Mapping[str, int] | Sequence[int]) -> float:
        if isinstance(outcome, Mapping):
            outcome = tuple(outcome[f] for f in self.factors)
        return float(self.table[tuple(outcome)])


@dataclass(frozen=True, eq=False)
class ConditionalKernel:
    """Row-stochastic table: axes ``given`` then ``outputs``."""
    given: tuple[str, ...]
    outputs: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != len(self.given) + len(self.outputs):
            raise InputError(f"kernel table has {t.ndim} axes for "
                             f"{len(self.given)} + {len(self.outputs)} factors")
        if (t < 0).any():
            raise InputError("negative probability in kernel")
        out_axes = tuple(range(len(self.given), t.ndim))
        rows = t.sum(axis=out_axes) if out_axes else np.ones(t.shape)
        bad = np.argwhere(np.abs(np.atleast_1d(rows) - 1.0) > ROW_TOL)
        if bad.size:
            idx = tuple(int(x) for x in bad[0]) if len(self.given) else ()
            raise InputError(f"kernel row {idx} sums to {np.atleast_1d(rows)[tuple(bad[0])]:.6g}")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def unconditional(cls, dist: FiniteDist) -> "ConditionalKernel":
        return cls((), dist.factors, dist.table)

    @property
    def given_shape(self) -> tuple[int, ...]:
        return self.table.shape[:len(self.given)]

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.table.shape[len(self.given):]

    def row(self, given_letters: Sequence[int]) -> np.ndarray:
        return self.table[tuple(given_letters)]


def _expand(table: np.ndarray, names: Sequence[str], order: Sequence[str]) -> np.ndarray:
    """Transpose/reshape ``table`` (axes ``names``) to broadcast over ``order``."""
    pos = [order.index(n) for n in names]
    perm = np.argsort(pos)
    t = np.transpose(table, perm)
    shape = [1] * len(order)
    for n, size in zip(names, table.shape):
        shape[order.index(n)] = size
    return t.reshape(shape)


# ---------------------------------------------------------------------------
# joint source over messages


@dataclass(frozen=True)
class JointSourceSpec:
    """Per-group conditional kernels; every message letter lives in GF(q)."""
    message_ids: tuple[str, ...]
    q: int
    kernels: Mapping[frozenset, ConditionalKernel] = field(default_factory=dict)

    def kernel(self, group: frozenset) -> ConditionalKernel:
        try:
            return self.kernels[frozenset(group)]
        except KeyError:
            raise InputError(f"no source kernel for group {sorted(group)}") from None

    def check_against(self, sf: SortedFamily):
        for g, own, up in zip(sf.groups, sf.group_messages, sf.upper_closure):
            k = self.kernel(g)
            if set(k.outputs) != set(own) or len(k.outputs) != len(own):
                raise InputError(f"kernel of group {sorted(g)} outputs {k.outputs}, "
                                 f"expected messages {sorted(own)}")
            if set(k.given) != set(up) or len(k.given) != len(up):
                raise InputError(f"kernel of group {sorted(g)} conditions on {k.given}, "
                                 f"expected upper closure {sorted(up)}")
            if any(x != self.q for x in k.table.shape):
                raise InputError(f"kernel of group {sorted(g)} is not over GF({self.q}) letters")


def independent_uniform_source(a: AccessStructure, sf: SortedFamily, q: int = 2) -> JointSourceSpec:
    kernels = {}
    for g, own, up in zip(sf.groups, sf.group_messages, sf.upper_closure):
        given, outs = a.sort_messages(up), a.sort_messages(own)
        t = np.full((q,) * (len(given) + len(outs)), 1.0 / q ** len(outs))
        kernels[g] = ConditionalKernel(given, outs, t)
    return JointSourceSpec(a.message_ids, q, kernels)


def build_joint_z(spec: JointSourceSpec, sf: SortedFamily) -> FiniteDist:
    """Product of the group conditionals, taken in the family's order."""
    spec.check_against(sf)
    order = list(spec.message_ids)
    _guard_cells("joint source table", float(spec.q) ** len(order))
    t = np.ones((spec.q,) * len(order))
    for g in sf.groups:
        k = spec.kernel(g)
        t = t * _expand(k.table, k.given + k.outputs, order)
    return FiniteDist(tuple(order), t)


def refactorize(joint: FiniteDist, a: AccessStructure, sf: SortedFamily) -> JointSourceSpec:
    """Group conditionals P(Z_group | Z_upper) read off a joint table.

    Rows with zero conditioning mass get a uniform filler.
    """
    q = joint.table.shape[0]
    kernels = {}
    for g, own, up in zip(sf.groups, sf.group_messages, sf.upper_closure):
        given, outs = a.sort_messages(up), a.sort_messages(own)
        pj = joint.marginal(given + outs).table
        pg = pj.sum(axis=tuple(range(len(given), pj.ndim)), keepdims=True) if outs else pj
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(pg > 0, pj / np.where(pg > 0, pg, 1), 1.0 / q ** len(outs))
        kernels[g] = ConditionalKernel(given, outs, cond)
    return JointSourceSpec(tuple(joint.factors), q, kernels)


def total_variation(p: FiniteDist, r: FiniteDist) -> float:
    rt = r.marginal(p.factors).table
    return 0.5 * float(np.abs(p.table - rt).sum())


@dataclass(frozen=True)
class MarkovCheck:
    group: frozenset
    irrelevant: frozenset
    public: frozenset
    private: frozenset
    violation: float
    passed: bool


@dataclass(frozen=True)
class MarkovReport:
    checks: tuple[MarkovCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[MarkovCheck]:
        return [c for c in self.checks if not c.passed]


def conditional_independence_gap(joint: FiniteDist, A, B, C) -> float:
    """max |P(a,b,c) P(b) - P(a,b) P(b,c)|; zero iff A and C are independent given B."""
    A, B, C = tuple(A), tuple(B), tuple(C)
    if not A or not C:
        return 0.0
    order = A + B + C
    pabc = joint.marginal(order).table
    na, nb = len(A), len(B)
    pab = pabc.sum(axis=tuple(range(na + nb, len(order))), keepdims=True)
    pbc = pabc.sum(axis=tuple(range(na)), keepdims=True)
    pb = pab.sum(axis=tuple(range(na)), keepdims=True)
    return float(np.abs(pabc * pb - pab * pbc).max())


def markov_sets(a: AccessStructure, sf: SortedFamily, k: int):
    """(irrelevant, public, private) message sets of group k."""
    g = sf.groups[k]
    S = set(a.message_ids)
    common = set(S)
    for i in g:
        common &= messages_of_encoder(a, i)
    private = set(sf.group_messages[k])
    public = common - private
    relevant = set()
    for other, msgs in zip(sf.groups, sf.group_messages):
        if other <= g:
            relevant |= msgs
    irrelevant = S - common - relevant
    return frozenset(irrelevant), frozenset(public), frozenset(private)


def check_markov(joint: FiniteDist, a: AccessStructure, sf: SortedFamily,
                 tol: float = 1e-9) -> MarkovReport:
    checks = []
    for k, g in enumerate(sf.groups):
        irr, pub, priv = markov_sets(a, sf, k)
        gap = conditional_independence_gap(joint, a.sort_messages(irr), a.sort_messages(pub),
                                           a.sort_messages(priv))
        checks.append(MarkovCheck(g, irr, pub, priv, gap, gap <= tol))
    return MarkovReport(tuple(checks))


# ---------------------------------------------------------------------------
# entropy


def _h(table: np.ndarray) -> float:
    p = table[table > 0]
    return float(-(p * np.log2(p)).sum())


def entropy(joint: FiniteDist, names: Sequence[str]) -> float:
    if not names:
        return 0.0
    return _h(joint.marginal(tuple(names)).table)


def conditional_entropy(joint: FiniteDist, target: Iterable[str], given: Iterable[str] = ()) -> float:
    """H(target | given) in bits."""
    target, given = tuple(target), tuple(given)
    if not target:
        raise InputError("conditional entropy needs a nonempty target")
    if set(target) & set(given):
        overlap = set(target) & set(given)
        target = tuple(t for t in target if t not in overlap)
        if not target:
            return 0.0
    return entropy(joint, target + given) - entropy(joint, given)


# ---------------------------------------------------------------------------
# memoryless extension


@dataclass(frozen=True)
class IIDBlock:
    """n-fold product of a per-letter distribution or kernel, evaluated lazily."""
    letter: FiniteDist | ConditionalKernel
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InputError("block length must be positive")

    def log2_prob(self, block, given=None) -> float:
        block = np.asarray(block, dtype=np.int64).reshape(self.n, -1)
        if isinstance(self.letter, FiniteDist):
            vals = self.letter.table[tuple(block.T)]
        else:
            g = np.asarray(given, dtype=np.int64).reshape(self.n, -1)
            vals = self.letter.table[tuple(np.hstack([g, block]).T)]
        if (vals <= 0).any():
            return -math.inf
        return float(np.log2(vals).sum())

    def prob(self, block, given=None) -> float:
        return 2.0 ** self.log2_prob(block, given)


def extend_iid(letter: FiniteDist | ConditionalKernel, n: int) -> IIDBlock:
    return IIDBlock(letter, n)


# ---------------------------------------------------------------------------
# channels and encoder input maps


def zf(s: str) -> str:
    return f"z:{s}"


def xf(i: str) -> str:
    return f"x:{i}"


def yf(j: str) -> str:
    return f"y:{j}"


@dataclass(frozen=True)
class ChannelSpec:
    """Memoryless channel kernel from encoder inputs to decoder outputs."""
    kernel: ConditionalKernel
    memoryless: bool = True

    def __post_init__(self):
        if not self.memoryless:
            raise InputError("only memoryless channels are supported")
        if not all(g.startswith("x:") for g in self.kernel.given):
            raise InputError("channel inputs must be x:<encoder> factors")
        if not all(o.startswith("y:") for o in self.kernel.outputs):
            raise InputError("channel outputs must be y:<decoder> factors")

    @property
    def input_sizes(self) -> dict[str, int]:
        return {g[2:]: s for g, s in zip(self.kernel.given, self.kernel.given_shape)}

    @property
    def output_sizes(self) -> dict[str, int]:
        return {o[2:]: s for o, s in zip(self.kernel.outputs, self.kernel.output_shape)}


_PRESET = re.compile(r"^\s*([a-z-]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$")


def parse_preset(text: str) -> tuple[str, list[float]]:
    m = _PRESET.match(text)
    if not m:
        raise InputError(f"cannot parse preset {text!r}")
    args = [float(x) for x in m.group(2).split(",")] if m.group(2) else []
    return m.group(1), args


def channel_preset(text: str, encoders: Sequence[str], decoders: Sequence[str],
                   q: int = 2) -> ChannelSpec:
    """bsc(p), bec(p), noiseless(q) or binary-adder.

    Every decoder gets its own independent copy of the single-letter
    output (a broadcast of identical, independently-noised channels).
    """
    name, args = parse_preset(text)
    given = tuple(xf(i) for i in encoders)
    outs = tuple(yf(j) for j in decoders)
    if name in ("bsc", "bec"):
        if len(encoders) != 1:
            raise InputError(f"{name} needs exactly one encoder")
        if len(args) != 1 or not 0 <= args[0] <= 1:
            raise InputError(f"{name} needs one crossover/erasure probability in [0, 1]")
        p = args[0]
        base = np.array([[1 - p, p], [p, 1 - p]]) if name == "bsc" else \
            np.array([[1 - p, 0.0, p], [0.0, 1 - p, p]])
        ins = (2,)
    elif name == "noiseless":
        size = int(args[0]) if args else q
        ins = (size,) * len(encoders)
        base = np.eye(size ** len(encoders))
    elif name == "binary-adder":
        if args:
            raise InputError("binary-adder takes no arguments")
        ins = (2,) * len(encoders)
        base = np.zeros((2 ** len(encoders), len(encoders) + 1))
        for idx, xs in enumerate(np.ndindex(*ins)):
            base[idx, sum(xs)] = 1.0
    else:
        raise InputError(f"unknown channel preset {name!r}")
    osize = base.shape[1]
    t = np.ones((base.shape[0],) + (1,) * len(outs))
    for d in range(len(outs)):
        shape = [base.shape[0]] + [1] * len(outs)
        shape[d + 1] = osize
        t = t * base.reshape(shape)
    t = t.reshape(ins + (osize,) * len(outs))
    return ChannelSpec(ConditionalKernel(given, outs, t))


def input_map_preset(text: str, a: AccessStructure, i: str, q: int) -> ConditionalKernel:
    """Per-letter kernel from Z_{S(i)} to X_i: identity, sum or tuple."""
    msgs = a.sort_messages(messages_of_encoder(a, i))
    given = tuple(zf(s) for s in msgs)
    shape = (q,) * len(msgs)
    name, _ = parse_preset(text)
    if name == "identity":
        if len(msgs) != 1:
            raise InputError(f"identity input map needs one message at encoder {i}, "
                             f"it reads {list(msgs)}")
        t = np.eye(q)
    elif name == "sum":
        t = np.zeros(shape + (q,))
        for zs in np.ndindex(*shape):
            t[zs + (sum(zs) % q,)] = 1.0
    elif name == "tuple":
        size = q ** len(msgs)
        t = np.zeros(shape + (size,))
        for idx, zs in enumerate(np.ndindex(*shape)):
            t[zs + (idx,)] = 1.0
    else:
        raise InputError(f"unknown input map preset {name!r}")
    return ConditionalKernel(given, (xf(i),), t)


@dataclass(frozen=True, eq=False)
class LetterModel:
    """Per-letter joint law of (Z_S, X_I, Y_J)."""
    access: AccessStructure
    family: SortedFamily
    source: JointSourceSpec
    inputs: Mapping[str, ConditionalKernel]
    channel: ChannelSpec
    joint: FiniteDist = field(init=False)

    def __post_init__(self):
        a = self.access
        pz = build_joint_z(self.source, self.family)
        zs = tuple(zf(s) for s in a.message_ids)
        xs = tuple(xf(i) for i in a.encoder_ids)
        ys = tuple(yf(j) for j in a.decoder_ids)
        order = list(zs + xs + ys)
        if set(self.channel.kernel.given) != set(xs):
            raise InputError(f"channel inputs {self.channel.kernel.given} do not match encoders {xs}")
        if set(self.channel.kernel.outputs) != set(ys):
            raise InputError(f"channel outputs {self.channel.kernel.outputs} do not match decoders {ys}")
        sizes = {zf(s): self.source.q for s in a.message_ids}
        for i in a.encoder_ids:
            k = self.inputs.get(i)
            if k is None:
                raise InputError(f"no input map for encoder {i}")
            want = {zf(s) for s in messages_of_encoder(a, i)}
            if set(k.given) != want:
                raise InputError(f"input map of encoder {i} reads {k.given}, expected {sorted(want)}")
            sizes[xf(i)] = k.output_shape[0]
        for name, size in zip(self.channel.kernel.given, self.channel.kernel.given_shape):
            if sizes[name] != size:
                raise InputError(f"channel expects {size} letters for {name}, input map gives {sizes[name]}")
        for name, size in zip(self.channel.kernel.outputs, self.channel.kernel.output_shape):
            sizes[name] = size
        _guard_cells("letter model table", float(np.prod([sizes[o] for o in order])))
        t = _expand(pz.table, zs, order)
        for i in a.encoder_ids:
            k = self.inputs[i]
            t = t * _expand(k.table, k.given + k.outputs, order)
        ck = self.channel.kernel
        t = t * _expand(ck.table, ck.given + ck.outputs, order)
        object.__setattr__(self, "joint", FiniteDist(tuple(order), t))

    @property
    def source_joint(self) -> FiniteDist:
        return self.joint.marginal(tuple(zf(s) for s in self.access.message_ids))

    def letter_table(self, names: Sequence[str]) -> np.ndarray:
        return self.joint.marginal(tuple(names)).table


def stochastic_vs_map_ratio(posterior: ConditionalKernel, prior: FiniteDist):
    """Error of sampling from mu(u|v) versus the MAP rule, and their ratio."""
    post = posterior.table.reshape(int(np.prod(posterior.given_shape)), -1)
    pv = prior.table.reshape(-1)
    if pv.size != post.shape[0]:
        raise InputError("prior size does not match the posterior's conditioning alphabet")
    stochastic = float((pv * (1.0 - (post ** 2).sum(axis=1))).sum())
    map_err = float((pv * (1.0 - post.max(axis=1))).sum())
    ratio = stochastic / map_err if map_err > 0 else (1.0 if stochastic == 0 else math.inf)
    if ratio > 2 + 1e-12:
        raise AssertionError(f"stochastic/MAP error ratio {ratio} exceeds 2")
    return stochastic, map_err, ratio
