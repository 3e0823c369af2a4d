"""Shared builders for the test suite."""
from __future__ import annotations

import itertools

import numpy as np
from hypothesis import strategies as st

from crngnet.access import AccessStructure, sort_family
from crngnet.codec import Scenario, draw_code, rate_to_rows
from crngnet.prob import (ConditionalKernel, JointSourceSpec, channel_preset,
                          independent_uniform_source, input_map_preset)

EXAMPLE1 = AccessStructure.build(
    ["1", "2", "12"], ["1"], [("1", "1"), ("2", "1"), ("12", "1")],
    ["1", "2"], {"1": ["1", "12"], "2": ["2", "12"]})
EXAMPLE2 = AccessStructure.build(
    ["1", "2", "12"], ["1", "2"], [("1", "1"), ("2", "2"), ("12", "1"), ("12", "2")],
    ["1", "2"], {"1": ["1", "12"], "2": ["2", "12"]})
EXAMPLE3 = AccessStructure.build(
    ["1", "3", "12", "23", "123"], ["1", "2", "3"],
    [("1", "1"), ("3", "3"), ("12", "1"), ("12", "2"), ("23", "2"), ("23", "3"),
     ("123", "1"), ("123", "2"), ("123", "3")],
    ["1"], {"1": ["1", "3", "12", "23", "123"]})

P2P = AccessStructure.build(["1"], ["1"], [("1", "1")], ["1"], {"1": ["1"]})


def p2p_scenario(channel: str, R: float, r: float, n: int = 12, seed: int = 7,
                 policy: str = "per-trial", cosets=None) -> Scenario:
    sf = sort_family(P2P)
    code = draw_code(P2P.message_ids, n, 2, {"1": (rate_to_rows(r, n, 2), rate_to_rows(R, n, 2))},
                     seed, cosets=cosets, code_policy=policy)
    return Scenario(P2P, sf, independent_uniform_source(P2P, sf, 2),
                    {"1": input_map_preset("identity", P2P, "1", 2)},
                    channel_preset(channel, ["1"], ["1"]), code)


@st.composite
def access_structures(draw, max_messages: int = 6, max_encoders: int = 4):
    n_enc = draw(st.integers(1, max_encoders))
    n_msg = draw(st.integers(1, max_messages))
    encs = [f"e{i}" for i in range(n_enc)]
    arcs = []
    for s in range(n_msg):
        readers = draw(st.sets(st.sampled_from(encs), min_size=1))
        arcs += [(f"m{s}", i) for i in sorted(readers)]
    return AccessStructure.build([f"m{s}" for s in range(n_msg)], encs, arcs)


def random_access(rng: np.random.Generator, max_messages: int = 6, max_encoders: int = 4,
                  decoders: bool = False) -> AccessStructure:
    n_enc = int(rng.integers(1, max_encoders + 1))
    n_msg = int(rng.integers(1, max_messages + 1))
    encs = [f"e{i}" for i in range(n_enc)]
    arcs = []
    for s in range(n_msg):
        mask = rng.random(n_enc) < 0.5
        mask[rng.integers(n_enc)] = True
        arcs += [(f"m{s}", e) for e, m in zip(encs, mask) if m]
    msgs = [f"m{s}" for s in range(n_msg)]
    if decoders:
        return AccessStructure.build(msgs, encs, arcs, ["d0"], {"d0": msgs})
    return AccessStructure.build(msgs, encs, arcs)


def random_source(a: AccessStructure, sf, rng: np.random.Generator, q: int = 2) -> JointSourceSpec:
    """Group kernels with random rows (some zero entries) conditioned on the upper closures."""
    kernels = {}
    for g, own, up in zip(sf.groups, sf.group_messages, sf.upper_closure):
        given, outs = a.sort_messages(up), a.sort_messages(own)
        shape = (q,) * (len(given) + len(outs))
        t = rng.random(shape) * (rng.random(shape) < 0.85) + 1e-3 * (rng.random(shape) < 0.5)
        t = t.reshape(q ** len(given), -1)
        t[:, 0] += 1e-6
        t = (t / t.sum(axis=1, keepdims=True)).reshape(shape)
        kernels[g] = ConditionalKernel(given, outs, t)
    return JointSourceSpec(a.message_ids, q, kernels)


def binary_entropy(p: float) -> float:
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


def all_binary_matrices(rows: int, cols: int):
    for bits in itertools.product((0, 1), repeat=rows * cols):
        yield np.array(bits, dtype=np.int64).reshape(rows, cols)
