import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crngnet.config import load_spec, validate_spec
from crngnet.errors import InputError
from crngnet.prob import build_joint_z
from crngnet.region import (Inequality, LinearSystem, Rv, build_constraints, channel_entropies,
                            describe, fourier_motzkin_project, lp_feasible, rv, source_entropies)
from crngnet.run import region_analysis, run

from support import binary_entropy, p2p_scenario

H01 = binary_entropy(0.1)


def p2p_system(channel, strict=True):
    sc = p2p_scenario(channel, 0.25, 0.5)
    a, sf = sc.access, sc.family
    return build_constraints(a, sf, source_entropies(build_joint_z(sc.source, sf), a, sf),
                             channel_entropies(sc.model, a), strict)


def test_p2p_has_three_rows():
    sys_ = p2p_system("bsc(0.1)")
    assert sys_.variables == ("R:1", "r:1")
    assert [r.rel for r in sys_.rows] == [">=", "<", ">"]
    assert sys_.rows[1].bound == pytest.approx(1.0)
    assert sys_.rows[2].bound == pytest.approx(H01, abs=1e-12)


def test_non_strict_variant():
    assert [r.rel for r in p2p_system("bsc(0.1)", strict=False).rows] == [">=", "<=", ">="]


def test_example2_row_counts():
    spec = load_spec("configs/example2.json")
    system, projected = region_analysis(spec)
    labels = [r.label for r in system.rows]
    assert sum(lab.startswith("R[") for lab in labels) == 3
    assert sum(lab.startswith("group") for lab in labels) == 3
    assert sum(lab.startswith("decoder 1") for lab in labels) == 3
    assert sum(lab.startswith("decoder 2") for lab in labels) == 3
    # noiseless joint channel: every decoder row has bound 0
    assert all(r.bound == pytest.approx(0.0, abs=1e-12) for r in system.rows if r.label.startswith("decoder"))
    bounds = {r.label: r.bound for r in system.rows if r.label.startswith("group")}
    assert sorted(bounds.values()) == pytest.approx(sorted([1.0, 1.0, H01]), abs=1e-12)


def test_missing_entropy_rejected():
    sc = p2p_scenario("bsc(0.1)", 0.25, 0.5)
    with pytest.raises(InputError, match="source entropy"):
        build_constraints(sc.access, sc.family, {}, {})


def test_lp_noiseless_examples():
    sys_ = p2p_system("noiseless(2)")
    res = lp_feasible(sys_, {"R:1": 0.9})
    assert res.feasible and 0 < res.assignment["r:1"] < 0.1
    assert not lp_feasible(sys_, {"R:1": 1.1}).feasible
    assert not lp_feasible(sys_, {"R:1": -0.1}).feasible


def test_lp_bsc_example():
    sys_ = p2p_system("bsc(0.1)")
    res = lp_feasible(sys_, {"R:1": 0.25})
    assert res.feasible and H01 < res.assignment["r:1"] < 0.75
    assert sys_.satisfied({"R:1": 0.25, **res.assignment})
    assert not lp_feasible(sys_, {"R:1": 0.6}).feasible


def test_lp_certificate_margin():
    sys_ = p2p_system("bsc(0.1)")
    res = lp_feasible(sys_, {"R:1": 0.0})
    x = sys_.vector({"R:1": 0.0, **res.assignment})
    for row in sys_.rows:
        assert row.slack(x) >= (0.5e-9 if row.strict else -1e-12)


def test_fm_p2p_projection():
    proj = fourier_motzkin_project(p2p_system("bsc(0.1)"), ["r:1"])
    assert proj.variables == ("R:1",)
    texts = {describe(r, proj.variables) for r in proj.rows}
    assert f"+1*R:1 < {1 - H01:.12g}" in texts
    assert "-1*R:1 <= 0" in texts


def test_fm_contradiction_kept():
    s = LinearSystem(("x", "y"), (Inequality((1.0, 0.0), "<=", 0.0), Inequality((1.0, 0.0), ">", 1.0)))
    proj = fourier_motzkin_project(s, ["x"])
    assert any(r.label == "infeasible" for r in proj.rows)
    assert not proj.satisfied({"y": 0.0})


def test_fm_example_small():
    # x + y <= 2, x >= 0, y >= 0  ->  y <= 2, y >= 0
    s = LinearSystem(("x", "y"), (Inequality((1.0, 1.0), "<=", 2.0), Inequality((1.0, 0.0), ">=", 0.0),
                                  Inequality((0.0, 1.0), ">=", 0.0)))
    proj = fourier_motzkin_project(s, ["x"])
    assert sorted(describe(r, proj.variables) for r in proj.rows) == ["+1*y <= 2", "-1*y <= 0"]
    with pytest.raises(InputError):
        fourier_motzkin_project(s, ["z"])


def test_example2_grid_fm_matches_lp():
    spec = load_spec("configs/example2.json")
    system, projected = region_analysis(spec)
    # endpoints of linspace are exact, so the grid point R = 1 sits on the boundary
    for R1, R2, R12 in itertools.product(np.linspace(0.0, 1.0, 21), repeat=3):
        fixed = {"R:1": R1, "R:2": R2, "R:12": R12}
        want = R1 < H01 and R2 < 1 and R12 < 1
        assert lp_feasible(system, fixed).feasible == want
        assert projected.satisfied(fixed) == want


def _margin(system, point):
    x = system.vector(point)
    return min((r.slack(x) for r in system.rows), default=math.inf)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_fm_projection_agrees_with_lp(seed):
    rng = np.random.default_rng(seed)
    rows = [Inequality(tuple(float(c) for c in rng.integers(-2, 3, size=3)), "<=", float(rng.integers(-1, 4)))
            for _ in range(int(rng.integers(2, 7)))]
    rows += [Inequality((0.0, 0.0, 1.0), "<=", 5.0), Inequality((0.0, 0.0, 1.0), ">=", -5.0)]
    system = LinearSystem(("a", "b", "c"), tuple(rows))
    proj = fourier_motzkin_project(system, ["c"])
    for _ in range(10):
        p = {"a": float(rng.uniform(-3, 3)), "b": float(rng.uniform(-3, 3))}
        m = _margin(proj, p)
        if abs(m) < 1e-6:
            continue
        assert lp_feasible(system, p).feasible == (m > 0)


def test_variable_helpers():
    assert Rv("12") == "R:12" and rv("12") == "r:12"
    with pytest.raises(InputError):
        Inequality((1.0,), "==", 0.0)
    with pytest.raises(InputError):
        LinearSystem(("x",), (Inequality((1.0, 2.0), "<=", 0.0),))


def test_boundary_point_is_in_closure_only():
    raw = json.loads(open("configs/noiseless_p2p.json").read())
    raw["run"] = {"command": "region", "points": [{"1": 1.0}, {"1": 0.5}]}
    pts = run("region", validate_spec(json.dumps(raw))).payload["points"]
    assert [(p["feasible"], p["closure_feasible"]) for p in pts] == [(False, True), (True, True)]
