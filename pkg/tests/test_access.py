import itertools

import pytest
from hypothesis import given, settings

from crngnet.access import (AccessStructure, encoders_of_message, is_linear_extension,
                            linear_extension, lower_closure, message_groups, messages_of_encoder,
                            sort_family, upper_closure, validate)
from crngnet.errors import InputError

from support import EXAMPLE1, EXAMPLE2, EXAMPLE3, access_structures

F = frozenset


def test_example1_sets():
    a = EXAMPLE1
    assert messages_of_encoder(a, "1") == {"1", "2", "12"}
    for s in ("1", "2", "12"):
        assert encoders_of_message(a, s) == {"1"}
    sf = sort_family(a)
    assert sf.groups == (F({"1"}),)
    assert sf.group_messages == (F({"1", "2", "12"}),)


def test_example2_sets():
    a = EXAMPLE2
    assert messages_of_encoder(a, "1") == {"1", "12"}
    assert messages_of_encoder(a, "2") == {"2", "12"}
    assert encoders_of_message(a, "12") == {"1", "2"}
    sf = sort_family(a)
    assert sf.groups == (F({"1", "2"}), F({"1"}), F({"2"}))
    assert sf.group_messages == (F({"12"}), F({"1"}), F({"2"}))


def test_example3_sets_and_order():
    a = EXAMPLE3
    assert messages_of_encoder(a, "2") == {"12", "23", "123"}
    assert messages_of_encoder(a, "3") == {"3", "23", "123"}
    assert encoders_of_message(a, "23") == {"2", "3"}
    sf = sort_family(a)
    assert sf.groups == (F({"1", "2", "3"}), F({"1", "2"}), F({"2", "3"}), F({"1"}), F({"3"}))
    assert sf.group_messages == (F({"123"}), F({"12"}), F({"23"}), F({"1"}), F({"3"}))


def test_example3_closures():
    sf = sort_family(EXAMPLE3)
    assert upper_closure(sf, 0) == F()
    assert upper_closure(sf, 1) == {"123"}
    assert upper_closure(sf, 3) == {"12", "123"}
    assert upper_closure(sf, 4) == {"23", "123"}
    assert lower_closure(sf, 0) == {"1", "3", "12", "23", "123"}
    assert lower_closure(sf, 1) == {"1", "12"}
    assert lower_closure(sf, 3) == {"1"}


def test_single_encoder_reads_everything():
    a = AccessStructure.build(["a", "b"], ["x"], [("a", "x"), ("b", "x")])
    sf = sort_family(a)
    assert sf.groups == (F({"x"}),)
    assert upper_closure(sf, 0) == F()


def test_closure_index_bounds():
    sf = sort_family(EXAMPLE2)
    with pytest.raises(IndexError):
        upper_closure(sf, 3)
    with pytest.raises(IndexError):
        lower_closure(sf, -1)


def test_bucket_sort_order():
    fam = [F({1}), F({1, 2, 3}), F({2, 3}), F({3}), F({1, 2})]
    assert linear_extension(fam, 3) == [F({1, 2, 3}), F({2, 3}), F({1, 2}), F({1}), F({3})]


def test_invalid_structures_rejected():
    with pytest.raises(InputError, match="unknown encoder"):
        AccessStructure.build(["1"], ["1"], [("1", "9")])
    with pytest.raises(InputError, match="no encoder arc"):
        AccessStructure.build(["1", "2"], ["1"], [("1", "1")])
    with pytest.raises(InputError, match="duplicate"):
        AccessStructure.build(["1", "1"], ["1"], [("1", "1")])
    with pytest.raises(InputError, match="demands no message"):
        AccessStructure.build(["1"], ["1"], [("1", "1")], ["d"], {"d": []})
    with pytest.raises(InputError, match="unknown message"):
        encoders_of_message(EXAMPLE1, "nope")


def test_order_override_must_be_linear_extension():
    groups = list(message_groups(EXAMPLE2))
    bad = [F({"1"}), F({"1", "2"}), F({"2"})]
    with pytest.raises(InputError):
        sort_family(EXAMPLE2, bad)
    with pytest.raises(InputError):
        sort_family(EXAMPLE2, groups[:2])


def test_validate_reports_broken_family():
    sf = sort_family(EXAMPLE3)
    broken = type(sf)(sf.groups[::-1], sf.group_messages[::-1], sf.upper_closure, sf.lower_closure)
    rep = validate(broken, EXAMPLE3)
    assert not rep.ok
    assert not rep["linear-extension"].passed
    assert rep["linear-extension"].witness


@settings(max_examples=200, deadline=None)
@given(access_structures())
def test_partition_and_closure_identities(a):
    sf = sort_family(a)
    rep = validate(sf, a)
    assert rep.ok, rep.failed()
    assert is_linear_extension(sf.groups)[0]


@settings(max_examples=60, deadline=None)
@given(access_structures(max_messages=5, max_encoders=3))
def test_upper_closure_independent_of_extension(a):
    base = sort_family(a)
    ref = {g: u for g, u in zip(base.groups, base.upper_closure)}
    for perm in itertools.islice(itertools.permutations(base.groups), 30):
        if not is_linear_extension(perm)[0]:
            continue
        alt = sort_family(a, perm)
        assert {g: u for g, u in zip(alt.groups, alt.upper_closure)} == ref
