"""Command orchestration and result persistence."""
from __future__ import annotations

import csv
import itertools
import json
import os
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np

from .access import encoders_of_message, messages_of_encoder, validate
from .bounds import ensemble_alpha_beta, evaluate_error_bound
from .codec import simulate_error
from .config import ExperimentSpec, config_hash
from .errors import InputError, ResourceLimitError
from .galois import HashEnsembleSpec, hash_alpha_beta
from .prob import LetterModel, build_joint_z, check_markov
from .region import (Rv, build_constraints, channel_entropies, describe, fourier_motzkin_project,
                     lp_feasible, rv, source_entropies)

CSV_COLUMNS = {
    "region": ["section", "label", "relation", "bound", "coefficients", "feasible", "certificate"],
    "simulate": ["metric", "value"],
    "verify": ["check", "passed", "detail"],
    "bounds": ["quantity", "key", "value", "exact"],
}


def fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


@dataclass(frozen=True)
class ResultRecord:
    config_hash: str
    command: str
    timestamp: str
    payload: dict
    rows: tuple = ()
    log: tuple = ()
    exit_code: int = 0

    def to_json(self) -> dict:
        return {"config_hash": self.config_hash, "command": self.command,
                "timestamp": self.timestamp, "payload": self.payload}


def with_overrides(spec: ExperimentSpec, trials=None, seed=None, threads=None) -> ExperimentSpec:
    raw = json.loads(json.dumps(spec.raw))
    run = dict(spec.run)
    for key, val in (("trials", trials), ("seed", seed), ("threads", threads)):
        if val is not None:
            if not isinstance(val, int) or val < (0 if key == "seed" else 1):
                raise InputError(f"--{key} must be a {'nonnegative' if key == 'seed' else 'positive'} integer")
            raw.setdefault("run", {})[key] = val
            run[key] = val
    return replace(spec, raw=raw, run=run)


def _sorted(x) -> list[str]:
    return sorted(x, key=lambda v: (len(v), v))


# ---------------------------------------------------------------------------
# commands


def cmd_verify(spec: ExperimentSpec):
    a, sf = spec.access, spec.family
    report = validate(sf, a)
    joint = build_joint_z(spec.source, sf)
    markov = check_markov(joint, a, sf, spec.run["markov_tol"])
    sets = {
        "S(i)": {i: _sorted(messages_of_encoder(a, i)) for i in a.encoder_ids},
        "I(s)": {s: _sorted(encoders_of_message(a, s)) for s in a.message_ids},
        "family": [_sorted(g) for g in sf.groups],
        "groups": [{"encoders": _sorted(g), "messages": _sorted(m),
                    "upper": _sorted(u), "lower": _sorted(lo)}
                   for g, m, u, lo in zip(sf.groups, sf.group_messages, sf.upper_closure, sf.lower_closure)],
    }
    rows = [[c.name, c.passed, c.witness] for c in report.checks]
    mk = []
    for c in markov.checks:
        mk.append({"group": _sorted(c.group), "irrelevant": _sorted(c.irrelevant),
                   "public": _sorted(c.public), "private": _sorted(c.private),
                   "violation": c.violation, "passed": c.passed})
        rows.append([f"markov {{{','.join(_sorted(c.group))}}}", c.passed, fmt(c.violation)])
    hashes = {}
    if spec.code is not None:
        c = spec.code
        for s, (lf, lg) in c["rows"].items():
            try:
                pars = [hash_alpha_beta(HashEnsembleSpec(c["ensemble"], c["n"], r, c["q"])) for r in (lf, lg)]
                hashes[s] = {"f": [float(x) for x in pars[0]], "g": [float(x) for x in pars[1]]}
                rows.append([f"hash {s}", True, f"f={pars[0][0]},{pars[0][1]} g={pars[1][0]},{pars[1][1]}"])
            except ResourceLimitError as e:
                hashes[s] = {"skipped": str(e)}
    payload = {"sets": sets, "checks": [{"name": c.name, "passed": c.passed, "witness": c.witness}
                                        for c in report.checks],
               "markov": mk, "hash": hashes, "ok": report.ok and markov.ok}
    return payload, rows, (), 0 if payload["ok"] else 4


def _grid_points(spec: ExperimentSpec) -> list[dict]:
    run = spec.run
    pts = [{str(k): float(v) for k, v in p.items()} for p in run.get("points", [])]
    grid = run.get("grid")
    if grid:
        axes = []
        for s in spec.access.message_ids:
            lo, hi, count = grid.get(s, [0.0, 0.0, 1])
            axes.append(np.linspace(lo, hi, int(count)))
        for combo in itertools.product(*axes):
            pts.append({s: float(round(v, 12)) for s, v in zip(spec.access.message_ids, combo)})
    return pts


def region_analysis(spec: ExperimentSpec):
    a, sf = spec.access, spec.family
    if spec.channel is None:
        raise InputError("region needs a 'channel' block")
    model = LetterModel(a, sf, spec.source, spec.inputs, spec.channel)
    src_h = source_entropies(build_joint_z(spec.source, sf), a, sf)
    ch_h = channel_entropies(model, a)
    system = build_constraints(a, sf, src_h, ch_h, strict=spec.run["strict"])
    projected = fourier_motzkin_project(system, [rv(s) for s in a.message_ids])
    return system, projected


def closure_system(spec: ExperimentSpec):
    """The same system with every strict row relaxed, i.e. the closure of the region."""
    system, _ = region_analysis(spec)
    return type(system)(system.variables, tuple(
        replace(r, rel={"<": "<=", ">": ">="}.get(r.rel, r.rel)) for r in system.rows))


def cmd_region(spec: ExperimentSpec):
    system, projected = region_analysis(spec)
    closure = closure_system(spec)
    rows, cons, proj, points = [], [], [], []
    for r in system.rows:
        cons.append({"label": r.label, "relation": r.rel, "bound": r.bound,
                     "coefficients": dict(zip(system.variables, r.coeffs))})
        rows.append(["constraint", r.label, r.rel, fmt(r.bound),
                     " ".join(fmt(c) for c in r.coeffs), "", ""])
    for r in projected.rows:
        text = describe(r, projected.variables)
        proj.append({"text": text, "relation": r.rel, "bound": r.bound,
                     "coefficients": dict(zip(projected.variables, r.coeffs))})
        rows.append(["projected", text, r.rel, fmt(r.bound), " ".join(fmt(c) for c in r.coeffs), "", ""])
    for p in _grid_points(spec):
        fixed = {Rv(s): v for s, v in p.items()}
        lp = lp_feasible(system, fixed)
        fm = projected.satisfied(fixed)
        closed = lp_feasible(closure, fixed)
        points.append({"R": p, "feasible": lp.feasible, "projected_feasible": fm,
                       "closure_feasible": closed.feasible, "certificate": dict(lp.assignment)})
        label = ",".join(f"{s}={fmt(v)}" for s, v in p.items())
        cert = " ".join(f"{k}={fmt(v)}" for k, v in lp.assignment.items())
        rows.append(["point", label, "", "", "", lp.feasible, cert])
        rows.append(["closure-point", label, "", "", "", closed.feasible,
                     " ".join(f"{k}={fmt(v)}" for k, v in closed.assignment.items())])
    payload = {"variables": list(system.variables), "strict": spec.run["strict"],
               "constraints": cons, "projected": proj, "points": points}
    return payload, rows, (), 0


def cmd_simulate(spec: ExperimentSpec):
    sc = spec.scenario()
    res = simulate_error(sc, spec.run["trials"], spec.run["mode"], spec.run["threads"],
                         keep_log=bool(spec.run.get("log_trials")))
    summary = res.summary()
    code = sc.code
    summary["rates"] = {s: {"r": code.r(s), "R": code.R(s), "lf": code.rows[s][0], "lg": code.rows[s][1]}
                        for s in spec.access.message_ids}
    rows = [[k, fmt(v)] for k, v in res.summary().items()]
    return summary, rows, res.log, 0


def _alpha_beta(spec: ExperimentSpec, code):
    given = spec.run.get("alpha_beta")
    if given is None:
        return ensemble_alpha_beta(code)
    return {s: (tuple(v[0]), tuple(v[1])) for s, v in given.items()}


def cmd_bounds(spec: ExperimentSpec):
    sc = spec.scenario()
    rep = evaluate_error_bound(sc, spec.run["epsilon"], _alpha_beta(spec, sc.code))
    rows = []
    ge = [{"group": k, "messages": _sorted(sub), "gamma": g} for (k, sub), g in rep.gamma_encoder.items()]
    gd = [{"decoder": j, "messages": _sorted(sub), "gamma": g} for (j, sub), g in rep.gamma_decoder.items()]
    for e in ge:
        rows.append(["gamma_encoder", f"{e['group']}:{','.join(e['messages'])}", fmt(e["gamma"]), ""])
    for e in gd:
        rows.append(["gamma_decoder", f"{e['decoder']}:{','.join(e['messages'])}", fmt(e["gamma"]), ""])
    te = {str(k): {"value": t.value, "exact": t.exact, "stderr": t.stderr} for k, t in rep.tail_encoder.items()}
    td = {j: {"value": t.value, "exact": t.exact, "stderr": t.stderr} for j, t in rep.tail_decoder.items()}
    for k, t in te.items():
        rows.append(["tail_encoder", k, fmt(t["value"]), t["exact"]])
    for j, t in td.items():
        rows.append(["tail_decoder", j, fmt(t["value"]), t["exact"]])
    for name, v in rep.terms.items():
        rows.append(["term", name, fmt(v), ""])
    rows.append(["rhs", "", fmt(rep.rhs), rep.tails_exact])
    payload = {"epsilon": rep.epsilon, "gamma_encoder": ge, "gamma_decoder": gd,
               "tail_encoder": te, "tail_decoder": td, "terms": dict(rep.terms),
               "rhs": rep.rhs, "all_positive": rep.all_positive}
    return payload, rows, (), 0


COMMAND_TABLE = {"verify": cmd_verify, "region": cmd_region, "simulate": cmd_simulate, "bounds": cmd_bounds}


def run(command: str, spec: ExperimentSpec) -> ResultRecord:
    if command not in COMMAND_TABLE:
        raise InputError(f"unknown command {command!r}")
    payload, rows, log, code = COMMAND_TABLE[command](spec)
    payload = json.loads(json.dumps(payload, default=float))
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return ResultRecord(config_hash(spec.raw), command, stamp, payload, tuple(rows), tuple(log), code)


def persist(record: ResultRecord, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, "result.json"), os.path.join(out_dir, "result.csv")]
    with open(paths[0], "w") as fh:
        json.dump(record.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS[record.command])
        for row in record.rows:
            w.writerow([fmt(x) for x in row])
    if record.log:
        paths.append(os.path.join(out_dir, "trials.log"))
        with open(paths[-1], "w") as fh:
            for entry in record.log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return paths
