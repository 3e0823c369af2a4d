import numpy as np
import pytest

from crngnet.access import sort_family
from crngnet.codec import (CodeConfig, DecoderFailure, EncoderFailure, Scenario, TrialOutcome,
                           decoder_crng, decoder_posterior, draw_code, encoder_crng_dist,
                           generate_encoder_inputs, rate_to_rows, redraw, run_trial,
                           simulate_error)
from crngnet.errors import InputError, ResourceLimitError
from crngnet.galois import FunctionPair, LinearMap, apply
from crngnet.prob import (ConditionalKernel, JointSourceSpec, channel_preset,
                          independent_uniform_source, input_map_preset)

from support import EXAMPLE3, P2P, p2p_scenario

SF = sort_family(P2P)


def lm(rows, n):
    return LinearMap(2, rows) if rows else LinearMap.zeros(0, n)


def fixed_p2p(channel, f, g, c, n=2, source=None):
    code = CodeConfig(n, 2, {"1": FunctionPair(lm(f, n), lm(g, n))},
                      {"1": np.array(c, dtype=np.int64)}, code_policy="fixed")
    source = source or independent_uniform_source(P2P, SF, 2)
    return Scenario(P2P, SF, source, {"1": input_map_preset("identity", P2P, "1", 2)},
                    channel_preset(channel, ["1"], ["1"]), code)


def block_probs(blocks, probs):
    return {tuple(b[0]): float(p) for b, p in zip(blocks, probs)}


def test_rate_to_rows():
    assert rate_to_rows(0.5, 12, 2) == 6
    assert rate_to_rows(0.25, 12, 2) == 3
    assert rate_to_rows(0.0, 12, 2) == 0
    with pytest.raises(InputError):
        rate_to_rows(-0.1, 12, 2)


def test_encoder_point_mass():
    sc = fixed_p2p("noiseless(2)", [[1, 1]], [[1, 0]], [0])
    d = encoder_crng_dist(SF, 0, {}, sc.code, {"1": np.array([1])}, sc.source)
    assert d.as_dict() == {((1, 1),): 1.0}


def test_encoder_empty_maps_is_source_law():
    sc = fixed_p2p("noiseless(2)", [], [], [])
    d = encoder_crng_dist(SF, 0, {}, sc.code, {"1": np.zeros(0, int)}, sc.source)
    assert len(d.probs) == 4 and np.allclose(d.probs, 0.25)


def test_encoder_nonuniform_source_restricted_to_coset():
    src = JointSourceSpec(("1",), 2, {SF.groups[0]: ConditionalKernel((), ("1",), [0.2, 0.8])})
    sc = fixed_p2p("noiseless(2)", [[1, 1]], [], [1], source=src)
    d = encoder_crng_dist(SF, 0, {}, sc.code, {"1": np.zeros(0, int)}, src)
    # (0,1) and (1,0) have equal mass under an iid law
    assert block_probs(d.blocks, d.probs) == pytest.approx({(0, 1): 0.5, (1, 0): 0.5})


def test_encoder_failures():
    sc = fixed_p2p("noiseless(2)", [[1, 1]], [[1, 1]], [0])
    assert encoder_crng_dist(SF, 0, {}, sc.code, {"1": np.array([1])}, sc.source) == EncoderFailure(0)
    src = JointSourceSpec(("1",), 2, {SF.groups[0]: ConditionalKernel((), ("1",), [1.0, 0.0])})
    sc = fixed_p2p("noiseless(2)", [[1, 1]], [[1, 0]], [0], source=src)
    assert encoder_crng_dist(SF, 0, {}, sc.code, {"1": np.array([1])}, src) == EncoderFailure(0)


def test_noiseless_decoding():
    sc = fixed_p2p("noiseless(2)", [[1, 1]], [[1, 0]], [1])
    _, blocks, probs = decoder_posterior("1", np.array([1, 0]), P2P, sc.code, sc.model)
    assert block_probs(blocks, probs) == {(1, 0): 1.0, (0, 1): 0.0}
    zhat, mhat = decoder_crng("1", np.array([1, 0]), P2P, sc.code, sc.model, np.random.default_rng(0))
    assert zhat["1"].tolist() == [1, 0] and mhat["1"].tolist() == [1]


def test_decoder_zero_mass():
    sc = fixed_p2p("noiseless(2)", [[1, 0]], [], [1])
    assert decoder_crng("1", np.array([0, 0]), P2P, sc.code, sc.model) == DecoderFailure("1")


def test_bsc_posterior_by_hand():
    sc = fixed_p2p("bsc(0.1)", [[1, 1]], [], [1])
    _, blocks, probs = decoder_posterior("1", np.array([0, 0]), P2P, sc.code, sc.model)
    assert block_probs(blocks, probs) == pytest.approx({(0, 1): 0.5, (1, 0): 0.5}, abs=1e-15)
    _, blocks, probs = decoder_posterior("1", np.array([0, 1]), P2P, sc.code, sc.model)
    assert block_probs(blocks, probs) == pytest.approx({(0, 1): 0.81 / 0.82, (1, 0): 0.01 / 0.82}, abs=1e-15)


def test_map_tie_breaks_lexicographically():
    sc = fixed_p2p("bsc(0.1)", [[1, 1]], [], [1])
    zhat, _ = decoder_crng("1", np.array([0, 0]), P2P, sc.code, sc.model, mode="map")
    assert zhat["1"].tolist() == [0, 1]
    with pytest.raises(InputError):
        decoder_crng("1", np.array([0, 0]), P2P, sc.code, sc.model, mode="ml")


def test_decoder_sampling_frequency():
    sc = fixed_p2p("bsc(0.1)", [[1, 1]], [], [1])
    rng = np.random.default_rng(123)
    draws = 4000
    hits = sum(decoder_crng("1", np.array([0, 1]), P2P, sc.code, sc.model, rng)[0]["1"].tolist() == [1, 0]
               for _ in range(draws))
    p = 0.01 / 0.82
    assert abs(hits / draws - p) <= 3 * np.sqrt(p * (1 - p) / draws)


def test_coset_guard():
    sc = fixed_p2p("noiseless(2)", [], [], [], n=24)
    with pytest.raises(ResourceLimitError):
        decoder_posterior("1", np.zeros(24, int), P2P, sc.code, sc.model)


def example3_scenario(seed=3):
    a = EXAMPLE3
    sf = sort_family(a)
    code = draw_code(a.message_ids, 4, 2, {s: (1, 1) for s in a.message_ids}, seed)
    inputs = {i: input_map_preset("sum", a, i, 2) for i in a.encoder_ids}
    # the decoder sees all three binary inputs
    return Scenario(a, sf, independent_uniform_source(a, sf, 2), inputs,
                    channel_preset("noiseless(2)", ["1", "2", "3"], ["1"]), code)


def test_example3_blocks_lie_in_cosets_and_are_shared():
    sc = example3_scenario()
    a = sc.access
    for trial in range(20):
        rng = np.random.default_rng(trial)
        msgs = {s: rng.integers(0, 2, size=1) for s in a.message_ids}
        enc = generate_encoder_inputs(a, sc.family, sc.code, sc.source, sc.inputs, msgs, trial)
        if not enc.ok:
            continue
        for s in a.message_ids:
            pair = sc.code.pairs[s]
            assert np.array_equal(apply(pair.f, enc.z[s]), sc.code.cosets[s])
            assert np.array_equal(apply(pair.g, enc.z[s]), msgs[s])
        for s in ("12", "23", "123"):
            readers = [i for i in a.encoder_ids if s in enc.views[i]]
            assert len(readers) >= 2
            for i in readers:
                assert np.array_equal(enc.views[i][s], enc.z[s])
        assert np.array_equal(enc.x["2"], (enc.z["12"] + enc.z["23"] + enc.z["123"]) % 2)


def test_draw_code_reproducible_and_redraw():
    rows = {"1": (3, 6)}
    a, b = draw_code(["1"], 12, 2, rows, 7), draw_code(["1"], 12, 2, rows, 7)
    assert a.pairs["1"] == b.pairs["1"] and np.array_equal(a.cosets["1"], b.cosets["1"])
    assert a.r("1") == 0.25 and a.R("1") == 0.5
    r0, r1 = redraw(a, 0), redraw(a, 1)
    assert r0.pairs["1"] != r1.pairs["1"]
    assert np.array_equal(r0.cosets["1"], a.cosets["1"])
    with pytest.raises(InputError):
        CodeConfig(2, 2, a.pairs, a.cosets)


def test_trials_are_deterministic():
    sc = p2p_scenario("bsc(0.1)", 0.25, 0.6)
    t1, t2 = run_trial(sc, 5), run_trial(sc, 5)
    assert t1.decoder_success == t2.decoder_success
    assert all(np.array_equal(t1.messages[s], t2.messages[s]) for s in t1.messages)
    s1 = simulate_error(sc, 60, threads=1)
    s4 = simulate_error(sc, 60, threads=4)
    assert s1.errors == s4.errors


def test_map_not_worse_than_stochastic():
    sc = p2p_scenario("bsc(0.1)", 0.25, 0.6)
    st_res = simulate_error(sc, 300, "stochastic")
    map_res = simulate_error(sc, 300, "map")
    assert map_res.p_hat <= st_res.p_hat + 3 * st_res.sigma


def test_useless_channel_fails():
    sc = p2p_scenario("bsc(0.5)", 0.5, 0.25, n=8)
    assert simulate_error(sc, 200).p_hat >= 0.9


def test_simulation_summary_and_log():
    sc = p2p_scenario("noiseless(2)", 0.5, 0.25)
    res = simulate_error(sc, 50, keep_log=True)
    s = res.summary()
    assert s["trials"] == 50 and s["ci_low"] <= s["p_hat"] <= s["ci_high"]
    assert len(res.log) == 50 and set(res.log[0]) == {"trial", "groups", "decoders"}
    with pytest.raises(InputError):
        simulate_error(sc, 0)


def test_log_record_marks_skipped_groups():
    o = TrialOutcome(3, {}, {}, 1, {"d": False})
    assert o.log_record(3) == {"trial": 3, "groups": ["ok", "fail", "skipped"], "decoders": {"d": 0}}
