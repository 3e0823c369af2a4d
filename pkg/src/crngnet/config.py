"""Experiment configuration: a single JSON document, validated into objects.

Validation collects every problem it finds instead of stopping at the first;
each message carries the line of the offending JSON value.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .access import AccessStructure, SortedFamily, messages_of_encoder, sort_family
from .codec import CodeConfig, Scenario, draw_code, rate_to_rows
from .errors import InputError
from .galois import ENSEMBLE_KINDS, check_field
from .prob import (ROW_TOL, ChannelSpec, ConditionalKernel, JointSourceSpec,
                   channel_preset, independent_uniform_source, input_map_preset, xf, yf, zf)

COMMANDS = ("region", "simulate", "verify", "bounds")

RUN_DEFAULTS = {
    "trials": 500,
    "seed": 0,
    "mode": "stochastic",
    "threads": 1,
    "epsilon": 0.05,
    "markov_tol": 1e-9,
    "strict": True,
    "log_trials": False,
}


# ---------------------------------------------------------------------------
# JSON with value positions


def _ws(text: str, i: int) -> int:
    while i < len(text) and text[i] in " \t\r\n":
        i += 1
    return i


def _walk(text: str, i: int, path: tuple, lines: dict, dec: json.JSONDecoder) -> int:
    i = _ws(text, i)
    lines[path] = text.count("\n", 0, i) + 1
    if i < len(text) and text[i] == "{":
        i = _ws(text, i + 1)
        if text[i] == "}":
            return i + 1
        while True:
            i = _ws(text, i)
            key, i = dec.raw_decode(text, i)
            i = _ws(text, i) + 1  # colon
            i = _ws(text, _walk(text, i, path + (key,), lines, dec))
            if text[i] == "}":
                return i + 1
            i += 1
    if i < len(text) and text[i] == "[":
        i = _ws(text, i + 1)
        if text[i] == "]":
            return i + 1
        k = 0
        while True:
            i = _ws(text, _walk(text, i, path + (k,), lines, dec))
            k += 1
            if text[i] == "]":
                return i + 1
            i += 1
    _, end = dec.raw_decode(text, i)
    return end


def parse_with_lines(text: str) -> tuple[Any, dict]:
    data = json.loads(text)
    lines: dict = {}
    _walk(text, 0, (), lines, json.JSONDecoder())
    return data, lines


# ---------------------------------------------------------------------------
# canonical form and hashing


def _normalize(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, float)):
        f = float(obj)
        if math.isfinite(f) and f == int(f) and abs(f) < 2 ** 53:
            return int(f)
        return float(repr(f))
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(_normalize(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(raw: dict) -> str:
    """Digest of the canonical spec; thread count does not affect results and is left out."""
    body = json.loads(json.dumps(raw))
    body.get("run", {}).pop("threads", None)
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()


# ---------------------------------------------------------------------------
# the validated experiment


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    raw: dict
    access: AccessStructure
    family: SortedFamily
    source: JointSourceSpec
    inputs: dict
    channel: ChannelSpec | None
    code: dict | None
    run: dict = field(default_factory=dict)

    @property
    def command(self) -> str:
        return self.run.get("command", "verify")

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def code_config(self) -> CodeConfig:
        if self.code is None:
            raise InputError("this command needs a 'code' block")
        c = self.code
        return draw_code(self.access.message_ids, c["n"], c["q"], c["rows"], self.run["seed"],
                         c["ensemble"], c.get("cosets"), c["code_policy"])

    def scenario(self) -> Scenario:
        if self.channel is None:
            raise InputError("this command needs a 'channel' block")
        return Scenario(self.access, self.family, self.source, self.inputs, self.channel,
                        self.code_config())


class _Errors:
    def __init__(self, lines: dict):
        self.lines = lines
        self.items: list[str] = []

    def add(self, path: tuple, msg: str):
        p = tuple(path)
        while p and p not in self.lines:
            p = p[:-1]
        line = self.lines.get(p, 1)
        where = "/".join(str(x) for x in path) or "<root>"
        self.items.append(f"line {line}: {where}: {msg}")


def _ids(v) -> list[str] | None:
    if not isinstance(v, list):
        return None
    return [str(x) for x in v]


def _rows_table(rows, n_given: int, n_out: int, sizes_given, sizes_out, path, err, name) -> np.ndarray | None:
    want_rows = int(np.prod(sizes_given)) if n_given else 1
    want_cols = int(np.prod(sizes_out))
    if not isinstance(rows, list) or len(rows) != want_rows:
        err.add(path, f"{name}: expected {want_rows} rows, got "
                      f"{len(rows) if isinstance(rows, list) else type(rows).__name__}")
        return None
    ok = True
    for r, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != want_cols or \
                not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row):
            err.add(path + (r,), f"{name} row {r}: expected {want_cols} numbers")
            ok = False
            continue
        if any(x < 0 for x in row):
            err.add(path + (r,), f"{name} row {r}: negative probability")
            ok = False
        elif abs(sum(row) - 1.0) > ROW_TOL:
            err.add(path + (r,), f"{name} row {r} sums to {sum(row):.12g}, not 1")
            ok = False
    if not ok:
        return None
    return np.array(rows, dtype=float).reshape(tuple(sizes_given) + tuple(sizes_out))


def _parse_access(raw, err) -> AccessStructure | None:
    blk = raw.get("access")
    if not isinstance(blk, dict):
        err.add(("access",), "missing 'access' block")
        return None
    msgs, encs = _ids(blk.get("messages")), _ids(blk.get("encoders"))
    decs = _ids(blk.get("decoders", []))
    if msgs is None or not msgs:
        err.add(("access", "messages"), "need a nonempty list of message ids")
    if encs is None or not encs:
        err.add(("access", "encoders"), "need a nonempty list of encoder ids")
    if decs is None:
        err.add(("access", "decoders"), "decoders must be a list")
    arcs = blk.get("arcs")
    if not isinstance(arcs, list):
        err.add(("access", "arcs"), "need a list of [message, encoder] pairs")
        arcs = []
    if msgs is None or encs is None or decs is None:
        return None
    good_arcs, ok = [], True
    for k, arc in enumerate(arcs):
        if not isinstance(arc, list) or len(arc) != 2:
            err.add(("access", "arcs", k), "arc must be a [message, encoder] pair")
            ok = False
            continue
        s, i = str(arc[0]), str(arc[1])
        if s not in msgs:
            err.add(("access", "arcs", k), f"arc ({s}, {i}) references unknown message {s!r}")
            ok = False
        if i not in encs:
            err.add(("access", "arcs", k), f"arc ({s}, {i}) references unknown encoder {i!r}")
            ok = False
        good_arcs.append((s, i))
    demands = blk.get("demands", {})
    if not isinstance(demands, dict):
        err.add(("access", "demands"), "demands must map decoder id to a list of messages")
        return None
    for j, d in demands.items():
        if j not in decs:
            err.add(("access", "demands", j), f"demand for unknown decoder {j!r}")
            ok = False
        dl = _ids(d)
        if not dl:
            err.add(("access", "demands", j), f"decoder {j!r} needs a nonempty demand list")
            ok = False
        elif set(dl) - set(msgs):
            err.add(("access", "demands", j), f"decoder {j!r} demands unknown messages "
                                               f"{sorted(set(dl) - set(msgs))}")
            ok = False
    for j in decs:
        if j not in demands:
            err.add(("access", "decoders"), f"decoder {j!r} has no demand set")
            ok = False
    if not ok:
        return None
    try:
        return AccessStructure.build(msgs, encs, good_arcs, decs, {j: _ids(d) for j, d in demands.items()})
    except InputError as e:
        err.add(("access",), str(e))
        return None


def _parse_source(raw, a, sf, err) -> JointSourceSpec | None:
    blk = raw.get("source", {"q": 2, "preset": "uniform"})
    path = ("source",)
    if not isinstance(blk, dict):
        err.add(path, "source must be an object")
        return None
    q = blk.get("q", 2)
    try:
        check_field(q)
    except (InputError, TypeError) as e:
        err.add(path + ("q",), str(e))
        return None
    base = independent_uniform_source(a, sf, q)
    preset = blk.get("preset", "uniform" if "kernels" not in blk else None)
    if preset not in (None, "uniform"):
        err.add(path + ("preset",), f"unknown source preset {preset!r}")
        return None
    kernels = dict(base.kernels)
    given_kernels = blk.get("kernels", [])
    if not isinstance(given_kernels, list):
        err.add(path + ("kernels",), "kernels must be a list")
        return None
    seen = set()
    for k, kb in enumerate(given_kernels):
        kp = path + ("kernels", k)
        if not isinstance(kb, dict):
            err.add(kp, "kernel must be an object")
            continue
        group = frozenset(_ids(kb.get("group")) or [])
        if group not in sf.groups:
            err.add(kp + ("group",), f"{sorted(group)} is not a message group of this access structure")
            continue
        if group in seen:
            err.add(kp + ("group",), f"second kernel for group {sorted(group)}")
            continue
        seen.add(group)
        g = sf.index_of(group)
        given = _ids(kb.get("given", [])) or []
        outs = _ids(kb.get("outputs")) or []
        if set(given) != set(sf.upper_closure[g]) or len(given) != len(sf.upper_closure[g]):
            err.add(kp + ("given",), f"group {sorted(group)} must condition on its upper closure "
                                     f"{sorted(sf.upper_closure[g])}")
            continue
        if set(outs) != set(sf.group_messages[g]) or len(outs) != len(sf.group_messages[g]):
            err.add(kp + ("outputs",), f"group {sorted(group)} must output messages "
                                       f"{sorted(sf.group_messages[g])}")
            continue
        name = f"source kernel for group {sorted(group)}"
        t = _rows_table(kb.get("rows"), len(given), len(outs), [q] * len(given), [q] * len(outs),
                        kp + ("rows",), err, name)
        if t is not None:
            kernels[group] = ConditionalKernel(tuple(given), tuple(outs), t)
    if blk.get("default", "uniform") != "uniform":
        missing = [g for g in sf.groups if g not in seen]
        if missing:
            err.add(path, f"no kernel for groups {[sorted(g) for g in missing]}")
    return JointSourceSpec(a.message_ids, q, kernels)


def _parse_inputs(raw, a, q, err) -> dict:
    blk = raw.get("inputs", {})
    out = {}
    if not isinstance(blk, dict):
        err.add(("inputs",), "inputs must map encoder id to a preset or table")
        return out
    for j in blk:
        if j not in a.encoder_ids:
            err.add(("inputs", j), f"input map for unknown encoder {j!r}")
    for i in a.encoder_ids:
        spec = blk.get(i, "identity" if len(messages_of_encoder(a, i)) == 1 else "tuple")
        path = ("inputs", i)
        try:
            if isinstance(spec, str):
                out[i] = input_map_preset(spec, a, i, q)
                continue
            if not isinstance(spec, dict):
                err.add(path, "input map must be a preset name or {size, rows}")
                continue
            msgs = a.sort_messages(messages_of_encoder(a, i))
            size = spec.get("size")
            if not isinstance(size, int) or size < 1:
                err.add(path + ("size",), "input alphabet size must be a positive integer")
                continue
            t = _rows_table(spec.get("rows"), len(msgs), 1, [q] * len(msgs), [size],
                            path + ("rows",), err, f"input map of encoder {i}")
            if t is not None:
                out[i] = ConditionalKernel(tuple(zf(s) for s in msgs), (xf(i),), t)
        except InputError as e:
            err.add(path, str(e))
    return out


def _parse_channel(raw, a, q, err) -> ChannelSpec | None:
    blk = raw.get("channel")
    if blk is None:
        return None
    path = ("channel",)
    if not isinstance(blk, dict):
        err.add(path, "channel must be an object")
        return None
    if blk.get("memoryless", True) is not True:
        err.add(path + ("memoryless",), "only memoryless channels are supported")
        return None
    try:
        if "preset" in blk:
            return channel_preset(str(blk["preset"]), a.encoder_ids, a.decoder_ids, q)
        ins, outs = blk.get("input_sizes", {}), blk.get("output_sizes", {})
        if set(ins) != set(a.encoder_ids):
            err.add(path + ("input_sizes",), f"need an input size for each encoder {list(a.encoder_ids)}")
            return None
        if set(outs) != set(a.decoder_ids):
            err.add(path + ("output_sizes",), f"need an output size for each decoder {list(a.decoder_ids)}")
            return None
        t = _rows_table(blk.get("rows"), len(ins), len(outs), [ins[i] for i in a.encoder_ids],
                        [outs[j] for j in a.decoder_ids], path + ("rows",), err, "channel")
        if t is None:
            return None
        return ChannelSpec(ConditionalKernel(tuple(xf(i) for i in a.encoder_ids),
                                             tuple(yf(j) for j in a.decoder_ids), t))
    except InputError as e:
        err.add(path, str(e))
        return None


def _parse_code(raw, a, q, err) -> dict | None:
    blk = raw.get("code")
    if blk is None:
        return None
    path = ("code",)
    if not isinstance(blk, dict):
        err.add(path, "code must be an object")
        return None
    n = blk.get("n")
    if not isinstance(n, int) or n < 1:
        err.add(path + ("n",), "block length n must be a positive integer")
        return None
    cq = blk.get("q", q)
    if cq != q:
        err.add(path + ("q",), f"code field GF({cq}) differs from source letters GF({q})")
    ens = blk.get("ensemble", "uniform")
    if ens not in ENSEMBLE_KINDS:
        err.add(path + ("ensemble",), f"unknown ensemble {ens!r}; choose from {list(ENSEMBLE_KINDS)}")
    policy = blk.get("code_policy", "per-trial")
    if policy not in ("per-trial", "fixed"):
        err.add(path + ("code_policy",), f"unknown code policy {policy!r}")
    rows = {}
    rates, dims = blk.get("rates"), blk.get("dims")
    if (rates is None) == (dims is None):
        err.add(path, "give exactly one of 'rates' ({s: {r, R}}) or 'dims' ({s: {lf, lg}})")
        return None
    table, keys = (rates, ("r", "R")) if rates is not None else (dims, ("lf", "lg"))
    tname = "rates" if rates is not None else "dims"
    if not isinstance(table, dict):
        err.add(path + (tname,), f"{tname} must map message id to an object")
        return None
    for s in table:
        if s not in a.message_ids:
            err.add(path + (tname, s), f"code entry for unknown message {s!r}")
    for s in a.message_ids:
        ent = table.get(s)
        if not isinstance(ent, dict) or any(k not in ent for k in keys):
            err.add(path + (tname, s) if s in table else path + (tname,),
                    f"message {s} needs {keys[0]} and {keys[1]}")
            continue
        vals = [ent[k] for k in keys]
        if any(not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0 for v in vals):
            err.add(path + (tname, s), f"message {s}: {keys} must be nonnegative numbers")
            continue
        if rates is not None:
            lf, lg = rate_to_rows(vals[0], n, q), rate_to_rows(vals[1], n, q)
        else:
            lf, lg = int(vals[0]), int(vals[1])
        if lf > n or lg > n:
            err.add(path + (tname, s), f"message {s}: map rows ({lf}, {lg}) exceed n={n}")
            continue
        rows[s] = (lf, lg)
    cosets = blk.get("cosets")
    if cosets is not None:
        if not isinstance(cosets, dict):
            err.add(path + ("cosets",), "cosets must map message id to a vector")
            cosets = None
        else:
            for s, c in cosets.items():
                if s not in rows:
                    err.add(path + ("cosets", s), f"coset for unknown message {s!r}")
                elif not isinstance(c, list) or len(c) != rows[s][0]:
                    err.add(path + ("cosets", s), f"coset of message {s} needs {rows[s][0]} entries")
    return {"n": n, "q": q, "rows": rows, "ensemble": ens, "code_policy": policy, "cosets": cosets}


def _parse_run(raw, err) -> dict:
    blk = raw.get("run", {})
    if not isinstance(blk, dict):
        err.add(("run",), "run must be an object")
        blk = {}
    out = dict(RUN_DEFAULTS)
    out.update(blk)
    if "command" in blk and blk["command"] not in COMMANDS:
        err.add(("run", "command"), f"unknown command {blk['command']!r}; choose from {list(COMMANDS)}")
    for key in ("trials", "threads"):
        if not isinstance(out[key], int) or isinstance(out[key], bool) or out[key] < 1:
            err.add(("run", key), f"{key} must be a positive integer")
    if not isinstance(out["seed"], int) or isinstance(out["seed"], bool) or out["seed"] < 0:
        err.add(("run", "seed"), "seed must be a nonnegative integer")
    if out["mode"] not in ("stochastic", "map"):
        err.add(("run", "mode"), "mode must be 'stochastic' or 'map'")
    for key in ("epsilon", "markov_tol"):
        if not isinstance(out[key], (int, float)) or out[key] <= 0:
            err.add(("run", key), f"{key} must be a positive number")
    return out


def validate_spec(text: str) -> ExperimentSpec | list[str]:
    """Parse and check a JSON experiment; returns the spec or a list of errors."""
    try:
        raw, lines = parse_with_lines(text)
    except json.JSONDecodeError as e:
        return [f"line {e.lineno}: <json>: {e.msg}"]
    err = _Errors(lines)
    if not isinstance(raw, dict):
        return ["line 1: <root>: config must be a JSON object"]
    run = _parse_run(raw, err)
    a = _parse_access(raw, err)
    if a is None:
        return err.items
    sf = sort_family(a)
    source = _parse_source(raw, a, sf, err)
    q = source.q if source is not None else 2
    inputs = _parse_inputs(raw, a, q, err)
    channel = _parse_channel(raw, a, q, err)
    code = _parse_code(raw, a, q, err)
    if channel is not None and len(inputs) == len(a.encoder_ids):
        for i in a.encoder_ids:
            want = channel.input_sizes.get(i)
            got = inputs[i].output_shape[0]
            if want != got:
                err.add(("channel",), f"channel expects {want} input letters from encoder {i}, "
                                      f"its input map produces {got}")
    if err.items or source is None:
        return err.items
    return ExperimentSpec(raw, a, sf, source, inputs, channel, code, run)


def load_spec(path: str) -> ExperimentSpec:
    with open(path) as fh:
        out = validate_spec(fh.read())
    if isinstance(out, list):
        raise InputError("\n".join(out))
    return out
