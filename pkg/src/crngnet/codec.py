"""Constrained-random-number encoders and decoders, and error simulation.

Encoders walk the sorted group family; each group's block is drawn once
from the source conditional restricted to the joint (f, g) coset and shared
by every encoder that reads it.  Decoders draw from the channel posterior
restricted to the f-coset (or take its argmax in ``map`` mode).
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import binomtest

from .access import AccessStructure, SortedFamily, messages_of_encoder
from .errors import InputError, ResourceLimitError
from .galois import (FunctionPair, HashEnsembleSpec, apply, coset_members, joint_coset_members,
                     sample_map)
from .prob import ChannelSpec, ConditionalKernel, JointSourceSpec, LetterModel, yf, zf

MAX_COSET_BITS = 22
TIE_TOL = 1e-12

TAG_MESSAGE, TAG_GROUP, TAG_INPUT, TAG_CHANNEL, TAG_DECODER, TAG_CODE = range(6)


def rate_to_rows(rate: float, n: int, q: int) -> int:
    if rate < 0:
        raise InputError(f"rate {rate} is negative")
    return int(round(rate * n / math.log2(q)))


def _stream(*words: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(w) for w in words]))


@dataclass(frozen=True, eq=False)
class CodeConfig:
    n: int
    q: int
    pairs: Mapping[str, FunctionPair]
    cosets: Mapping[str, np.ndarray]
    seed: int = 0
    ensemble: str = "uniform"
    code_policy: str = "per-trial"

    def __post_init__(self):
        if self.code_policy not in ("fixed", "per-trial"):
            raise InputError(f"unknown code policy {self.code_policy!r}")
        for s, p in self.pairs.items():
            if p.n != self.n or p.q != self.q:
                raise InputError(f"function pair of message {s} is not GF({self.q})^{self.n}")
            c = np.asarray(self.cosets.get(s, ()), dtype=np.int64).reshape(-1)
            if c.size != p.f.rows:
                raise InputError(f"coset value of message {s} has length {c.size}, f has {p.f.rows} rows")

    def r(self, s: str) -> float:
        return self.pairs[s].f.rows * math.log2(self.q) / self.n

    def R(self, s: str) -> float:
        return self.pairs[s].g.rows * math.log2(self.q) / self.n

    @property
    def rows(self) -> dict[str, tuple[int, int]]:
        return {s: (p.f.rows, p.g.rows) for s, p in self.pairs.items()}


def draw_code(message_ids: Sequence[str], n: int, q: int, rows: Mapping[str, tuple[int, int]],
              seed: int = 0, ensemble: str = "uniform", cosets: Mapping | None = None,
              code_policy: str = "per-trial", stream: Sequence[int] = ()) -> CodeConfig:
    """Draw (f_s, g_s) from the ensemble and c_s uniformly, from the master seed."""
    pairs, cs = {}, {}
    for idx, s in enumerate(message_ids):
        if s not in rows:
            raise InputError(f"no code dimensions for message {s}")
        lf, lg = rows[s]
        rng = _stream(seed, TAG_CODE, *stream, idx)
        f = sample_map(HashEnsembleSpec(ensemble, n, lf, q), rng)
        g = sample_map(HashEnsembleSpec(ensemble, n, lg, q), rng)
        pairs[s] = FunctionPair(f, g)
        if cosets is not None and s in cosets:
            cs[s] = np.asarray(cosets[s], dtype=np.int64).reshape(-1) % q
        else:
            cs[s] = rng.integers(0, q, size=lf)
    return CodeConfig(n, q, pairs, cs, seed, ensemble, code_policy)


def redraw(code: CodeConfig, trial: int) -> CodeConfig:
    """Fresh (f, g) for one trial; the coset values stay those of the experiment."""
    return draw_code(list(code.pairs), code.n, code.q, code.rows, code.seed, code.ensemble,
                     code.cosets, code.code_policy, stream=(trial + 1,))


# ---------------------------------------------------------------------------
# block distributions on cosets


@dataclass(frozen=True)
class BlockDist:
    """Distribution over a finite list of blocks; ``blocks[t, s]`` is the n-vector for message s."""
    messages: tuple[str, ...]
    blocks: np.ndarray
    probs: np.ndarray

    def as_dict(self) -> dict[tuple, float]:
        return {tuple(map(tuple, b)): float(p) for b, p in zip(self.blocks, self.probs)}


@dataclass(frozen=True)
class EncoderFailure:
    group: int


@dataclass(frozen=True)
class DecoderFailure:
    decoder: str


def _product_blocks(parts: Sequence[np.ndarray]) -> np.ndarray:
    sizes = [p.shape[0] for p in parts]
    total = float(np.prod(sizes)) if parts else 1.0
    if total > 2 ** MAX_COSET_BITS:
        raise ResourceLimitError("coset product enumeration", math.log2(total), MAX_COSET_BITS)
    idx = np.array(list(itertools.product(*[range(k) for k in sizes])), dtype=np.int64)
    if not parts:
        return np.zeros((1, 0, 0), dtype=np.int64)
    return np.stack([p[idx[:, t]] for t, p in enumerate(parts)], axis=1)


def _normalize_log(logp: np.ndarray) -> np.ndarray | None:
    if logp.size == 0 or not np.isfinite(logp).any():
        return None
    w = np.exp2(logp - logp.max())
    return w / w.sum()


def _block_log2(table: np.ndarray, letters: np.ndarray) -> np.ndarray:
    """Sum over letters of log2 table[...]; ``letters`` has shape (N, axes, n)."""
    with np.errstate(divide="ignore"):
        vals = table[tuple(letters[:, a, :] for a in range(letters.shape[1]))]
        return np.log2(vals).sum(axis=1)


def encoder_crng_dist(sf: SortedFamily, k: int, z_upper: Mapping[str, np.ndarray],
                      code: CodeConfig, messages: Mapping[str, np.ndarray],
                      source: JointSourceSpec) -> BlockDist | EncoderFailure:
    kernel = source.kernel(sf.groups[k])
    own = kernel.outputs
    parts = []
    for s in own:
        pair = code.pairs[s]
        pts = joint_coset_members(pair, code.cosets[s], messages[s], MAX_COSET_BITS)
        if pts.shape[0] == 0:
            return EncoderFailure(k)
        parts.append(pts)
    blocks = _product_blocks(parts)
    if kernel.given:
        up = np.stack([np.asarray(z_upper[s], dtype=np.int64) for s in kernel.given])
        up = np.broadcast_to(up, (blocks.shape[0],) + up.shape)
        letters = np.concatenate([up, blocks], axis=1)
    else:
        letters = blocks
    probs = _normalize_log(_block_log2(kernel.table, letters))
    if probs is None:
        return EncoderFailure(k)
    keep = probs > 0
    return BlockDist(own, blocks[keep], probs[keep])


def _sample_rows(table_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a (n, K) probability array."""
    cum = np.cumsum(table_rows, axis=1)
    u = rng.random(table_rows.shape[0])[:, None] * cum[:, -1:]
    return np.minimum((u >= cum).sum(axis=1), table_rows.shape[1] - 1)


@dataclass(frozen=True)
class EncoderRealization:
    z: Mapping[str, np.ndarray]
    x: Mapping[str, np.ndarray]
    views: Mapping[str, Mapping[str, np.ndarray]]
    failure: EncoderFailure | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


def generate_encoder_inputs(a: AccessStructure, sf: SortedFamily, code: CodeConfig,
                            source: JointSourceSpec, inputs: Mapping[str, ConditionalKernel],
                            messages: Mapping[str, np.ndarray], trial: int = 0) -> EncoderRealization:
    z: dict[str, np.ndarray] = {}
    for k in range(len(sf)):
        up = {s: z[s] for s in sf.upper_closure[k]}
        dist = encoder_crng_dist(sf, k, up, code, messages, source)
        if isinstance(dist, EncoderFailure):
            return EncoderRealization(z, {}, {}, dist)
        rng = _stream(code.seed, trial, TAG_GROUP, k)
        pick = rng.choice(dist.probs.size, p=dist.probs)
        for t, s in enumerate(dist.messages):
            z[s] = dist.blocks[pick, t].copy()
    views, x = {}, {}
    for idx, i in enumerate(a.encoder_ids):
        mine = messages_of_encoder(a, i)
        views[i] = {s: z[s] for s in a.sort_messages(mine)}
        kern = inputs[i]
        letters = np.stack([z[g[2:]] for g in kern.given]) if kern.given else np.zeros((0, code.n), int)
        rows = kern.table[tuple(letters)]
        x[i] = _sample_rows(rows.reshape(code.n, -1), _stream(code.seed, trial, TAG_INPUT, idx))
    return EncoderRealization(z, x, views)


def transmit(channel: ChannelSpec, x: Mapping[str, np.ndarray], n: int, seed: int, trial: int) -> dict[str, np.ndarray]:
    ck = channel.kernel
    letters = np.stack([x[g[2:]] for g in ck.given])
    rows = ck.table[tuple(letters)].reshape(n, -1)
    flat = _sample_rows(rows, _stream(seed, trial, TAG_CHANNEL, 0))
    outs = np.unravel_index(flat, ck.output_shape)
    return {o[2:]: np.asarray(v, dtype=np.int64) for o, v in zip(ck.outputs, outs)}


# ---------------------------------------------------------------------------
# decoding


def decoder_posterior(j: str, y: np.ndarray, a: AccessStructure, code: CodeConfig,
                      model: LetterModel) -> tuple[tuple[str, ...], np.ndarray, np.ndarray | None]:
    """Coset blocks for D(j) and their normalized posterior given y (None if zero mass)."""
    demanded = a.sort_messages(a.demands[j])
    parts = [coset_members(code.pairs[s].f, code.cosets[s], MAX_COSET_BITS) for s in demanded]
    if any(p.shape[0] == 0 for p in parts):
        return demanded, np.zeros((0, len(demanded), code.n), dtype=np.int64), None
    blocks = _product_blocks(parts)
    table = model.letter_table(tuple(zf(s) for s in demanded) + (yf(j),))
    yy = np.broadcast_to(np.asarray(y, dtype=np.int64), (blocks.shape[0], 1, code.n))
    logp = _block_log2(table, np.concatenate([blocks, yy], axis=1))
    return demanded, blocks, _normalize_log(logp)


def _map_index(blocks: np.ndarray, probs: np.ndarray) -> int:
    logp = np.log2(np.where(probs > 0, probs, np.nan))
    best = np.nanmax(logp)
    ties = np.flatnonzero(logp >= best - TIE_TOL)
    flat = blocks[ties].reshape(ties.size, -1)
    order = np.lexsort(flat.T[::-1])
    return int(ties[order[0]])


def decoder_crng(j: str, y: np.ndarray, a: AccessStructure, code: CodeConfig, model: LetterModel,
                 rng: np.random.Generator | None = None, mode: str = "stochastic"):
    """Reproduced blocks and messages for decoder j, or DecoderFailure."""
    demanded, blocks, probs = decoder_posterior(j, y, a, code, model)
    if probs is None:
        return DecoderFailure(j)
    if mode == "map":
        pick = _map_index(blocks, probs)
    elif mode == "stochastic":
        rng = rng if rng is not None else np.random.default_rng()
        pick = rng.choice(probs.size, p=probs)
    else:
        raise InputError(f"unknown decoding mode {mode!r}")
    zhat = {s: blocks[pick, t] for t, s in enumerate(demanded)}
    mhat = {s: apply(code.pairs[s].g, zhat[s]) for s in demanded}
    return zhat, mhat


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class TrialOutcome:
    trial: int
    messages: Mapping[str, np.ndarray]
    reproductions: Mapping[tuple[str, str], np.ndarray]
    encoder_failure: int | None
    decoder_success: Mapping[str, bool]

    @property
    def success(self) -> bool:
        return self.encoder_failure is None and all(self.decoder_success.values())

    def log_record(self, n_groups: int) -> dict:
        groups = ["ok"] * n_groups
        if self.encoder_failure is not None:
            groups = (["ok"] * self.encoder_failure + ["fail"]
                      + ["skipped"] * (n_groups - self.encoder_failure - 1))
        return {"trial": self.trial, "groups": groups,
                "decoders": {j: int(v) for j, v in self.decoder_success.items()}}


@dataclass(frozen=True, eq=False)
class Scenario:
    access: AccessStructure
    family: SortedFamily
    source: JointSourceSpec
    inputs: Mapping[str, ConditionalKernel]
    channel: ChannelSpec
    code: CodeConfig
    model: LetterModel = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "model", LetterModel(self.access, self.family, self.source,
                                                      self.inputs, self.channel))
        missing = set(self.access.message_ids) - set(self.code.pairs)
        if missing:
            raise InputError(f"code has no function pair for messages {sorted(missing)}")
        for s in self.access.message_ids:
            if self.source.q != self.code.q:
                raise InputError(f"message {s}: source letters are GF({self.source.q}), code is GF({self.code.q})")


def run_trial(sc: Scenario, trial: int, mode: str = "stochastic") -> TrialOutcome:
    a, code = sc.access, sc.code
    if code.code_policy == "per-trial":
        code = redraw(code, trial)
    msgs = {}
    rng = _stream(code.seed, trial, TAG_MESSAGE, 0)
    for s in a.message_ids:
        msgs[s] = rng.integers(0, code.q, size=code.pairs[s].g.rows)
    enc = generate_encoder_inputs(a, sc.family, code, sc.source, sc.inputs, msgs, trial)
    if not enc.ok:
        return TrialOutcome(trial, msgs, {}, enc.failure.group, {j: False for j in a.decoder_ids})
    y = transmit(sc.channel, enc.x, code.n, code.seed, trial)
    repro, success = {}, {}
    for idx, j in enumerate(a.decoder_ids):
        out = decoder_crng(j, y[j], a, code, sc.model, _stream(code.seed, trial, TAG_DECODER, idx), mode)
        if isinstance(out, DecoderFailure):
            success[j] = False
            continue
        _, mhat = out
        ok = True
        for s, v in mhat.items():
            repro[(j, s)] = v
            ok &= bool(np.array_equal(v, msgs[s]))
        success[j] = ok
    return TrialOutcome(trial, msgs, repro, None, success)


@dataclass(frozen=True)
class SimulationResult:
    trials: int
    errors: int
    encoder_errors: int
    mode: str
    ci_low: float
    ci_high: float
    log: tuple = ()

    @property
    def p_hat(self) -> float:
        return self.errors / self.trials

    @property
    def sigma(self) -> float:
        p = self.p_hat
        return math.sqrt(p * (1 - p) / self.trials)

    def summary(self) -> dict:
        return {"trials": self.trials, "errors": self.errors, "encoder_errors": self.encoder_errors,
                "p_hat": self.p_hat, "sigma": self.sigma, "ci_low": self.ci_low,
                "ci_high": self.ci_high, "mode": self.mode}


def simulate_error(sc: Scenario, trials: int, mode: str = "stochastic", threads: int = 1,
                   keep_log: bool = False) -> SimulationResult:
    """Monte Carlo estimate of the block error probability with a Wilson 95% interval."""
    if trials < 1:
        raise InputError("trials must be at least 1")
    if mode not in ("stochastic", "map"):
        raise InputError(f"unknown decoding mode {mode!r}")
    one = lambda t: run_trial(sc, t, mode)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            outcomes = list(ex.map(one, range(trials)))
    else:
        outcomes = [one(t) for t in range(trials)]
    errors = sum(not o.success for o in outcomes)
    enc = sum(o.encoder_failure is not None for o in outcomes)
    ci = binomtest(errors, trials).proportion_ci(confidence_level=0.95, method="wilson")
    log = tuple(o.log_record(len(sc.family)) for o in outcomes) if keep_log else ()
    return SimulationResult(trials, errors, enc, mode, float(ci.low), float(ci.high), log)


def with_code(sc: Scenario, code: CodeConfig) -> Scenario:
    return Scenario(sc.access, sc.family, sc.source, sc.inputs, sc.channel, code)


# re-exported for convenience
from .prob import stochastic_vs_map_ratio  # noqa: E402,F401

__all__ = [
    "BlockDist", "CodeConfig", "DecoderFailure", "EncoderFailure", "EncoderRealization",
    "Scenario", "SimulationResult", "TrialOutcome", "decoder_crng", "decoder_posterior",
    "draw_code", "encoder_crng_dist", "generate_encoder_inputs", "rate_to_rows", "redraw",
    "run_trial", "simulate_error", "stochastic_vs_map_ratio", "transmit", "with_code",
]
