"""Analytic error bound for the coset code and exact checks of the hash lemmas.

Typical-set tail masses are computed exactly by summing over joint types
(multinomial weights) whenever the number of types is small; otherwise they
are estimated by sampling and the standard error is reported.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import InputError, ResourceLimitError
from .galois import (HashEnsembleSpec, apply, all_vectors, enumerate_ensemble,
                     ensemble_image_size, hash_alpha_beta, joint_ensemble_alpha_beta)
from .prob import conditional_entropy, yf, zf
from .region import nonempty_subsets

MAX_TYPE_BITS = 20
MC_SAMPLES = 20000


# ---------------------------------------------------------------------------
# hash parameter algebra


def alpha_of(params: Mapping, subset) -> float:
    return float(np.prod([float(params[s][0]) for s in subset])) if subset else 1.0


def beta_of(params: Mapping, subset) -> float:
    return float(np.prod([float(params[s][1]) + 1.0 for s in subset])) - 1.0 if subset else 0.0


def pair_params(alpha_beta: Mapping, messages) -> tuple[dict, dict]:
    """Per-message (alpha, beta) for F alone and for the pair (F, G)."""
    f_par, fg_par = {}, {}
    for s in messages:
        if s not in alpha_beta:
            raise InputError(f"missing hash parameters for message {s}")
        ab_f, ab_g = alpha_beta[s]
        f_par[s] = tuple(float(x) for x in ab_f)
        fg_par[s] = tuple(float(x) for x in joint_ensemble_alpha_beta(ab_f, ab_g))
    return f_par, fg_par


def ensemble_alpha_beta(code) -> dict:
    """Exact hash parameters of the ensembles a code was drawn from."""
    out = {}
    for s, (lf, lg) in code.rows.items():
        out[s] = tuple(hash_alpha_beta(HashEnsembleSpec(code.ensemble, code.n, rows, code.q))
                       for rows in (lf, lg))
    return out


def diff_prod(thetas: Sequence[float]) -> tuple[float, float]:
    """(|prod theta - 1|, sum_k |theta_k - 1| prod_{k'>k} theta_k')."""
    t = np.asarray(thetas, dtype=float)
    if (t <= 0).any():
        raise InputError("diff_prod needs positive numbers")
    tail = np.append(np.cumprod(t[::-1])[::-1][1:], 1.0)
    return abs(float(np.prod(t)) - 1.0), float((np.abs(t - 1.0) * tail).sum())


# ---------------------------------------------------------------------------
# typical-set tails


def _compositions(n: int, parts: int) -> np.ndarray:
    if parts == 1:
        return np.array([[n]], dtype=np.int64)
    bars = np.array(list(itertools.combinations(range(n + parts - 1), parts - 1)), dtype=np.int64)
    edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), n + parts - 1)])
    return np.diff(edges, axis=1) - 1


@dataclass(frozen=True)
class TailMass:
    value: float
    exact: bool
    stderr: float = 0.0


def atypical_mass(p: np.ndarray, scores: np.ndarray, thresholds: np.ndarray, n: int,
                  below: bool, seed: int = 0) -> TailMass:
    """Probability that some block-average score falls outside its threshold.

    ``p`` is the letter law on its support, ``scores[i, u]`` the per-letter
    score of test i.  With ``below`` a block is atypical when some average is
    < threshold, otherwise when some average is > threshold.
    """
    p = np.asarray(p, dtype=float)
    scores = np.atleast_2d(scores)
    th = np.asarray(thresholds, dtype=float)[:, None]
    count = math.comb(n + p.size - 1, p.size - 1)
    tol = 1e-9
    if math.log2(count) <= MAX_TYPE_BITS:
        types = _compositions(n, p.size)
        logw = gammaln(n + 1) - gammaln(types + 1).sum(axis=1) + (types * np.log(p)).sum(axis=1)
        means = scores @ types.T / n
        bad = (means < th - tol) if below else (means > th + tol)
        mass = float(np.exp(logw[bad.any(axis=0)]).sum()) if bad.any() else 0.0
        return TailMass(min(1.0, mass), True)
    rng = np.random.default_rng(seed)
    draws = rng.choice(p.size, size=(MC_SAMPLES, n), p=p)
    means = scores[:, draws].mean(axis=2)
    bad = (means < th - tol) if below else (means > th + tol)
    frac = float(bad.any(axis=0).mean())
    return TailMass(frac, False, math.sqrt(frac * (1 - frac) / MC_SAMPLES))


def _letter_scores(table: np.ndarray, names: Sequence[str], target: Sequence[str]):
    """Support letters, their probabilities, and -log2 p(target | rest) per letter."""
    rest = [k for k, nm in enumerate(names) if nm not in target]
    marg = table.sum(axis=tuple(k for k in range(table.ndim) if k not in rest), keepdims=True)
    flat = table.reshape(-1)
    support = np.flatnonzero(flat > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = (table / np.broadcast_to(marg, table.shape)).reshape(-1)[support]
    return support, flat[support], -np.log2(cond)


# ---------------------------------------------------------------------------
# the assembled bound


@dataclass(frozen=True)
class BoundReport:
    epsilon: float
    gamma_encoder: Mapping[tuple, float]
    gamma_decoder: Mapping[tuple, float]
    tail_encoder: Mapping[int, TailMass]
    tail_decoder: Mapping[str, TailMass]
    terms: Mapping[str, float] = field(default_factory=dict)

    @property
    def rhs(self) -> float:
        return float(sum(self.terms.values()))

    @property
    def all_positive(self) -> bool:
        return all(g > 0 for g in self.gamma_encoder.values()) and \
            all(g > 0 for g in self.gamma_decoder.values())

    @property
    def tails_exact(self) -> bool:
        return all(t.exact for t in list(self.tail_encoder.values()) + list(self.tail_decoder.values()))


def evaluate_error_bound(sc, epsilon: float, alpha_beta: Mapping | None) -> BoundReport:
    """Averaged block-error bound of a scenario at its realized rates."""
    if alpha_beta is None:
        raise InputError("hash parameters (alpha, beta) are required for every message")
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    a, sf, code, model = sc.access, sc.family, sc.code, sc.model
    n = code.n
    f_par, fg_par = pair_params(alpha_beta, a.message_ids)
    zjoint = model.joint.marginal(tuple(zf(s) for s in a.message_ids))

    gam_e, tail_e, enc_term = {}, {}, 0.0
    for k, (own, up) in enumerate(zip(sf.group_messages, sf.upper_closure)):
        names = tuple(zf(s) for s in a.sort_messages(up)) + tuple(zf(s) for s in a.sort_messages(own))
        table = zjoint.marginal(names).table
        inner = alpha_of(fg_par, own) - 1.0
        scores, ths = [], []
        for sub in nonempty_subsets(own):
            h = conditional_entropy(zjoint, [zf(s) for s in a.sort_messages(sub)],
                                    [zf(s) for s in a.sort_messages(up)])
            rate = sum(code.r(s) + code.R(s) for s in sub)
            g = h - rate - epsilon
            gam_e[(k, sub)] = g
            inner += alpha_of(fg_par, own - sub) * (beta_of(fg_par, sub) + 1.0) * 2.0 ** (-n * g)
            sub_names = [zf(s) for s in sub]
            keep = [nm for nm in names if nm in sub_names or nm in {zf(s) for s in up}]
            marg = zjoint.marginal(tuple(keep)).table
            # broadcast the S' conditional back onto the full letter table
            expand = [names.index(nm) for nm in keep]
            shape = [table.shape[i] if i in expand else 1 for i in range(len(names))]
            perm = np.argsort(expand)
            mt = np.transpose(marg, perm).reshape(shape)
            ut = mt.sum(axis=tuple(i for i in range(len(names)) if names[i] in sub_names), keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                cond = np.broadcast_to(mt / ut, table.shape)
            scores.append(-np.log2(cond.reshape(-1)[table.reshape(-1) > 0]))
            ths.append(h - epsilon)
        enc_term += math.sqrt(max(inner, 0.0))
        p = table.reshape(-1)[table.reshape(-1) > 0]
        tail_e[k] = atypical_mass(p, np.array(scores), np.array(ths), n, below=True, seed=k)

    gam_d, tail_d, dec_term, hash_term = {}, {}, 0.0, 0.0
    for j in a.decoder_ids:
        dj = a.demands[j]
        names = tuple(zf(s) for s in a.sort_messages(dj)) + (yf(j),)
        table = model.joint.marginal(names).table
        scores, ths = [], []
        for sub in nonempty_subsets(dj):
            target = [zf(s) for s in a.sort_messages(sub)]
            h = conditional_entropy(model.joint, target,
                                    [yf(j)] + [zf(s) for s in a.sort_messages(dj - sub)])
            g = sum(code.r(s) for s in sub) - h - epsilon
            gam_d[(j, sub)] = g
            dec_term += alpha_of(f_par, sub) * (beta_of(f_par, dj - sub) + 1.0) * 2.0 ** (-n * g)
            _, _, sc_ = _letter_scores(table, names, target)
            scores.append(sc_)
            ths.append(h + epsilon)
        hash_term += beta_of(f_par, dj)
        p = table.reshape(-1)[table.reshape(-1) > 0]
        tail_d[j] = atypical_mass(p, np.array(scores), np.array(ths), n, below=False, seed=1000 + len(tail_d))

    terms = {
        "encoder": enc_term,
        "encoder_tail": 2.0 * sum(t.value for t in tail_e.values()),
        "decoder": 2.0 * dec_term,
        "decoder_hash": 2.0 * hash_term,
        "decoder_tail": 2.0 * sum(t.value for t in tail_d.values()),
    }
    return BoundReport(epsilon, gam_e, gam_d, tail_e, tail_d, terms)


# ---------------------------------------------------------------------------
# exact hash-lemma checks


def _enum_product(specs: Sequence[HashEnsembleSpec], max_bits: float):
    lists = [list(enumerate_ensemble(sp, max_bits)) for sp in specs]
    total = math.prod(len(x) for x in lists)
    if total > 2 ** max_bits:
        raise ResourceLimitError("product ensemble enumeration", math.log2(total), max_bits)
    for combo in itertools.product(*lists):
        yield [m for m, _ in combo], math.prod((w for _, w in combo), start=Fraction(1))


def _bins(maps, spaces, q) -> list[np.ndarray]:
    """Per message, the integer code of f_s(z) for every z in Z_s^n."""
    out = []
    for f, space in zip(maps, spaces):
        img = apply(f, space) if f.rows else np.zeros((space.shape[0], 0), dtype=np.int64)
        out.append(img @ (q ** np.arange(f.rows, dtype=np.int64)) if f.rows else np.zeros(space.shape[0], dtype=np.int64))
    return out


def _hash_params(specs):
    return {t: tuple(float(x) for x in hash_alpha_beta(sp)) for t, sp in enumerate(specs)}


def _check_space(specs, shape):
    q = specs[0].q
    if any(sp.q != q for sp in specs):
        raise InputError("all ensembles must share the field")
    want = tuple(q ** sp.n for sp in specs)
    if tuple(shape) != want:
        raise InputError(f"weight/subset table has shape {tuple(shape)}, expected {want}")
    return q


@dataclass(frozen=True)
class LemmaBound:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-12


def mbcp_lhs_exact(specs: Sequence[HashEnsembleSpec], Q: np.ndarray, T: np.ndarray,
                   max_bits: float = 20) -> LemmaBound:
    """E_F sum_c |Q(T and bin c)/Q(T) - 1/|Im F||, with the balanced-coloring bound.

    Axis t of ``Q`` and ``T`` indexes Z_t^n by the integer code of the vector.
    """
    Q = np.asarray(Q, dtype=float)
    T = np.asarray(T, dtype=bool)
    q = _check_space(specs, Q.shape)
    if T.shape != Q.shape:
        raise InputError("T and Q shapes differ")
    QT = np.where(T, Q, 0.0)
    total = QT.sum()
    if total <= 0:
        raise InputError("Q(T) must be positive")
    spaces = [all_vectors(sp.n, q) for sp in specs]
    ims = [ensemble_image_size(sp) for sp in specs]
    N = math.prod(ims)
    radix = [q ** sp.rows for sp in specs]
    lhs = 0.0
    for maps, w in _enum_product(specs, max_bits):
        bins = _bins(maps, spaces, q)
        grid = np.ravel_multi_index(np.meshgrid(*bins, indexing="ij"), radix) if bins else np.zeros(())
        mass = np.bincount(grid.reshape(-1), weights=QT.reshape(-1), minlength=math.prod(radix))
        nz = mass[mass > 0] / total
        lhs += float(w) * (float(np.abs(nz - 1.0 / N).sum()) + (N - nz.size) / N)

    par = _hash_params(specs)
    S = frozenset(range(len(specs)))
    inner = alpha_of(par, S) - 1.0
    for sub in nonempty_subsets(S):
        rest = S - sub
        # max over z_sub in T_sub of the Q-mass of the T-slice over the rest
        slice_mass = QT.sum(axis=tuple(sorted(rest))) if rest else QT
        qbar = float(slice_mass.max())
        inner += (alpha_of(par, rest) * (beta_of(par, sub) + 1.0)
                  * math.prod(ims[t] for t in sub) * qbar / total)
    return LemmaBound(lhs, math.sqrt(max(inner, 0.0)))


def mcrp_lhs_exact(specs: Sequence[HashEnsembleSpec], T: np.ndarray, z: Sequence[int],
                   max_bits: float = 20) -> LemmaBound:
    """P_F(some other point of T shares z's bin), with the collision-resistance bound.

    ``z`` gives the integer code of each message's vector.
    """
    T = np.asarray(T, dtype=bool)
    q = _check_space(specs, T.shape)
    z = tuple(int(v) for v in z)
    others = T.copy()
    others[z] = False
    spaces = [all_vectors(sp.n, q) for sp in specs]
    lhs = Fraction(0)
    for maps, w in _enum_product(specs, max_bits):
        bins = _bins(maps, spaces, q)
        same = np.ones(T.shape, dtype=bool)
        for t, b in enumerate(bins):
            shape = [1] * len(bins)
            shape[t] = b.size
            same = same & (b == b[z[t]]).reshape(shape)
        if (same & others).any():
            lhs += w

    par = _hash_params(specs)
    ims = [ensemble_image_size(sp) for sp in specs]
    S = frozenset(range(len(specs)))
    rhs = beta_of(par, S)
    for sub in nonempty_subsets(S):
        rest = S - sub
        if not rest:
            obar = float(T.sum())
        else:
            obar = float(T.sum(axis=tuple(sorted(sub))).max())
        rhs += alpha_of(par, sub) * (beta_of(par, rest) + 1.0) * obar / math.prod(ims[t] for t in sub)
    return LemmaBound(float(lhs), rhs)
