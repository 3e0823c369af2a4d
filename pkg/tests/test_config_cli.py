import csv
import json
import pathlib

import pytest

from crngnet import cli
from crngnet.config import canonical_json, config_hash, load_spec, validate_spec
from crngnet.errors import InvariantError

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"


def p2p(**over):
    raw = json.loads((CONFIGS / "noiseless_p2p.json").read_text())
    for k, v in over.items():
        raw[k] = v
    return raw


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw, indent=2) if not isinstance(raw, str) else raw)
    return str(p)


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_parse(name):
    spec = load_spec(str(CONFIGS / name))
    assert spec.access.message_ids


def test_arc_to_unknown_encoder_is_one_error():
    text = """{
  "access": {
    "messages": ["1"],
    "encoders": ["1"],
    "arcs": [["1", "1"], ["1", "9"]]
  }
}"""
    errs = validate_spec(text)
    assert isinstance(errs, list) and len(errs) == 1
    assert errs[0].startswith("line 5:") and "9" in errs[0]


def test_kernel_row_not_summing_to_one():
    raw = json.loads((CONFIGS / "example2.json").read_text())
    raw["source"]["kernels"][0]["rows"][1] = [0.1, 0.8]
    errs = validate_spec(json.dumps(raw, indent=1))
    assert isinstance(errs, list) and len(errs) == 1 and "sum" in errs[0]


def test_example2_parses_with_kernel():
    spec = load_spec(str(CONFIGS / "example2.json"))
    k = spec.source.kernel(frozenset({"1"}))
    assert k.given == ("12",) and k.table[0].tolist() == [0.9, 0.1]


def test_bad_json_reports_line():
    errs = validate_spec('{\n  "access": [1,\n}')
    assert errs[0].startswith("line 3:")


def test_hash_is_canonical():
    raw = p2p()
    h = config_hash(raw)
    shuffled = json.loads(json.dumps(raw, sort_keys=True))
    assert config_hash(shuffled) == h
    raw2 = p2p()
    raw2["code"]["n"] = 12.0
    assert config_hash(raw2) == h
    raw3 = p2p()
    raw3["run"]["threads"] = 8
    assert config_hash(raw3) == h
    raw4 = p2p()
    raw4["run"]["trials"] = 501
    assert config_hash(raw4) != h
    assert canonical_json({"b": 1, "a": [1.0, 0.5]}) == '{"a":[1,0.5],"b":1}'


def test_cli_verify_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["verify", "--config", str(CONFIGS / "example3.json"), "--out", str(out)])
    assert code == 0
    res = json.loads((out / "result.json").read_text())
    assert res["command"] == "verify" and res["payload"]["ok"]
    assert res["payload"]["sets"]["I(s)"]["23"] == ["2", "3"]
    with open(out / "result.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["check", "passed", "detail"]


def test_cli_input_error_exit_code(tmp_path):
    bad = write(tmp_path, {"access": {"messages": ["1"], "encoders": [], "arcs": []}})
    assert cli.main(["verify", "--config", bad, "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["verify", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["simulate", "--config", str(CONFIGS / "noiseless_p2p.json"),
                     "--trials", "0", "--out", str(tmp_path / "o")]) == 2


def test_cli_resource_limit_exit_code(tmp_path):
    raw = p2p()
    raw["code"] = {"n": 30, "q": 2, "dims": {"1": {"lf": 0, "lg": 1}}}
    cfg = write(tmp_path, raw)
    assert cli.main(["simulate", "--config", cfg, "--trials", "1", "--out", str(tmp_path / "o")]) == 3


def test_cli_invariant_exit_code(tmp_path, monkeypatch):
    def boom(command, spec):
        raise InvariantError("group messages do not partition")
    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["verify", "--config", str(CONFIGS / "example1.json"),
                     "--out", str(tmp_path / "o")]) == 4


def test_cli_simulate_log_and_threads(tmp_path):
    raw = p2p()
    raw["run"]["log_trials"] = True
    cfg = write(tmp_path, raw)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--config", cfg, "--trials", "40", "--out", str(a)]) == 0
    assert cli.main(["simulate", "--config", cfg, "--trials", "40", "--threads", "3", "--out", str(b)]) == 0
    ra, rb = (json.loads((d / "result.json").read_text()) for d in (a, b))
    assert ra["config_hash"] == rb["config_hash"]
    assert ra["payload"]["errors"] == rb["payload"]["errors"]
    lines = (a / "trials.log").read_text().splitlines()
    assert len(lines) == 40 and json.loads(lines[0])["trial"] == 0
