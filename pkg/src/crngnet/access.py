"""Message access structures and the ordered family of encoder groups.

An access structure says which encoder reads which message.  Messages that
are read by exactly the same set of encoders form a *group*; the groups
partition the message set and are processed in an order where every strict
superset comes before its subsets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import InputError

@dataclass(frozen=True)
class AccessStructure:
    message_ids: tuple[str, ...]
    encoder_ids: tuple[str, ...]
    decoder_ids: tuple[str, ...]
    arcs: frozenset[tuple[str, str]]
    demands: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        for name, ids in (("message", self.message_ids), ("encoder", self.encoder_ids),
                          ("decoder", self.decoder_ids)):
            if len(set(ids)) != len(ids):
                raise InputError(f"duplicate {name} id in {list(ids)}")
        msgs, encs = set(self.message_ids), set(self.encoder_ids)
        for s, i in sorted(self.arcs):
            if s not in msgs:
                raise InputError(f"arc ({s}, {i}) references unknown message {s!r}")
            if i not in encs:
                raise InputError(f"arc ({s}, {i}) references unknown encoder {i!r}")
        reached = {s for s, _ in self.arcs}
        for s in self.message_ids:
            if s not in reached:
                raise InputError(f"message {s!r} has no encoder arc")
        for j, wanted in self.demands.items():
            if j not in self.decoder_ids:
                raise InputError(f"demand for unknown decoder {j!r}")
            if not wanted:
                raise InputError(f"decoder {j!r} demands no message")
            unknown = set(wanted) - msgs
            if unknown:
                raise InputError(f"decoder {j!r} demands unknown messages {sorted(unknown)}")
        for j in self.decoder_ids:
            if j not in self.demands:
                raise InputError(f"decoder {j!r} has no demand set")

    @classmethod
    def build(cls, messages: Iterable, encoders: Iterable, arcs: Iterable,
              decoders: Iterable = (), demands: Mapping | None = None) -> "AccessStructure":
        """Convenience constructor; labels are coerced to strings."""
        demands = demands or {}
        return cls(
            message_ids=tuple(str(s) for s in messages),
            encoder_ids=tuple(str(i) for i in encoders),
            decoder_ids=tuple(str(j) for j in decoders),
            arcs=frozenset((str(s), str(i)) for s, i in arcs),
            demands={str(j): frozenset(str(s) for s in d) for j, d in demands.items()},
        )

    @property
    def message_index(self) -> dict[str, int]:
        return {s: k for k, s in enumerate(self.message_ids)}

    def sort_messages(self, subset: Iterable[str]) -> tuple[str, ...]:
        """Order a message subset by declaration order."""
        sub = set(subset)
        return tuple(s for s in self.message_ids if s in sub)


def encoders_of_message(a: AccessStructure, s: str) -> frozenset[str]:
    if s not in a.message_ids:
        raise InputError(f"unknown message id {s!r}")
    return frozenset(i for (t, i) in a.arcs if t == s)


def messages_of_encoder(a: AccessStructure, i: str) -> frozenset[str]:
    if i not in a.encoder_ids:
        raise InputError(f"unknown encoder id {i!r}")
    return frozenset(s for (s, e) in a.arcs if e == i)


def message_groups(a: AccessStructure) -> dict[frozenset[str], frozenset[str]]:
    """Map each encoder set I' with S(I') nonempty to S(I').

    Keys appear in order of the first message (in declaration order) that
    lands in each group.
    """
    groups: dict[frozenset[str], set[str]] = {}
    for s in a.message_ids:
        groups.setdefault(encoders_of_message(a, s), set()).add(s)
    return {k: frozenset(v) for k, v in groups.items()}


def linear_extension(family: Sequence[frozenset], universe_size: int) -> list[frozenset]:
    """Order subsets so that every strict superset precedes its subsets.

    Bucket sort on cardinality: subsets are appended to their bucket in input
    order, then buckets 0..universe_size are each prepended to the output, so
    larger sets end up first.
    """
    buckets: list[list[frozenset]] = [[] for _ in range(universe_size + 1)]
    for member in family:
        if len(member) > universe_size:
            raise InputError(f"subset {sorted(member)} larger than universe size {universe_size}")
        buckets[len(member)].append(member)
    ordered: list[frozenset] = []
    for v in range(universe_size + 1):
        ordered = buckets[v] + ordered
    return ordered


def _upper_closures(groups: Sequence[frozenset], group_messages: Sequence[frozenset]):
    # double loop over the sorted list; only earlier groups can be strict supersets
    out = []
    for k, ik in enumerate(groups):
        acc: set[str] = set()
        for kp in range(k):
            if groups[kp] > ik:
                acc |= group_messages[kp]
        out.append(frozenset(acc))
    return out


def _lower_closures(groups: Sequence[frozenset], group_messages: Sequence[frozenset]):
    out = []
    for ik in groups:
        acc: set[str] = set()
        for other, msgs in zip(groups, group_messages):
            if other <= ik:
                acc |= msgs
        out.append(frozenset(acc))
    return out


@dataclass(frozen=True)
class SortedFamily:
    groups: tuple[frozenset[str], ...]
    group_messages: tuple[frozenset[str], ...]
    upper_closure: tuple[frozenset[str], ...]
    lower_closure: tuple[frozenset[str], ...]

    def __len__(self) -> int:
        return len(self.groups)

    def index_of(self, group: Iterable[str]) -> int:
        key = frozenset(group)
        try:
            return self.groups.index(key)
        except ValueError:
            raise InputError(f"{sorted(key)} is not a group of this family") from None

    def groups_of_encoder(self, i: str) -> list[int]:
        return [k for k, g in enumerate(self.groups) if i in g]


def sort_family(a: AccessStructure, order: Sequence[frozenset] | None = None) -> SortedFamily:
    """Build the sorted group family with both closures.

    ``order`` overrides the bucket-sort output; it must be a permutation of
    the groups (used to test order independence).
    """
    mg = message_groups(a)
    groups = list(order) if order is not None else linear_extension(list(mg), len(a.encoder_ids))
    if sorted(map(sorted, groups)) != sorted(map(sorted, mg)):
        raise InputError("order is not a permutation of the message groups")
    if order is not None and not is_linear_extension(groups)[0]:
        raise InputError("order puts a subset ahead of one of its strict supersets")
    msgs = [mg[g] for g in groups]
    return SortedFamily(
        groups=tuple(groups),
        group_messages=tuple(msgs),
        upper_closure=tuple(_upper_closures(groups, msgs)),
        lower_closure=tuple(_lower_closures(groups, msgs)),
    )


def _check_index(sf: SortedFamily, k: int):
    if not 0 <= k < len(sf.groups):
        raise IndexError(f"group index {k} out of range 0..{len(sf.groups) - 1}")


def upper_closure(sf: SortedFamily, k: int) -> frozenset[str]:
    """Messages of every strict-superset group of group ``k`` (0-based)."""
    _check_index(sf, k)
    return _upper_closures(sf.groups[:k + 1], sf.group_messages[:k + 1])[k]


def lower_closure(sf: SortedFamily, k: int) -> frozenset[str]:
    """Messages of every group contained in group ``k`` (itself included)."""
    _check_index(sf, k)
    ik = sf.groups[k]
    acc: set[str] = set()
    for g, msgs in zip(sf.groups, sf.group_messages):
        if g <= ik:
            acc |= msgs
    return frozenset(acc)


def is_linear_extension(groups: Sequence[frozenset]) -> tuple[bool, tuple[int, int] | None]:
    for k, ik in enumerate(groups):
        for kp, ikp in enumerate(groups):
            if ik < ikp and not kp < k:
                return False, (k, kp)
    return True, None


@dataclass(frozen=True)
class LemmaCheck:
    name: str
    passed: bool
    witness: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[LemmaCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[LemmaCheck]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> LemmaCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate(sf: SortedFamily, a: AccessStructure) -> ValidationReport:
    """Check the partition lemmas and closure identities exactly."""
    checks = []
    S = set(a.message_ids)
    gm = sf.group_messages

    union = set().union(*gm) if gm else set()
    w = ""
    if union != S:
        w = f"missing {sorted(S - union)}, extra {sorted(union - S)}"
    checks.append(LemmaCheck("union", not w, w))

    w = ""
    for k in range(len(gm)):
        for kp in range(k + 1, len(gm)):
            common = gm[k] & gm[kp]
            if common:
                w = f"groups {k} and {kp} share {sorted(common)}"
                break
        if w:
            break
    checks.append(LemmaCheck("disjoint", not w, w))

    w = ""
    for k, g in enumerate(sf.groups):
        if not g or not gm[k]:
            w = f"group {k} is empty"
            break
        wrong = {s for s in gm[k] if s in S and encoders_of_message(a, s) != g}
        if wrong:
            w = f"group {k} {sorted(g)} holds {sorted(wrong)} whose encoder set differs"
            break
    checks.append(LemmaCheck("group-definition", not w, w))

    ok, pair = is_linear_extension(sf.groups)
    w = "" if ok else f"I_{pair[0]} strictly inside I_{pair[1]} but listed first"
    checks.append(LemmaCheck("linear-extension", ok, w))

    w = ""
    for k in range(len(gm)):
        common = gm[k] & sf.upper_closure[k]
        if common:
            w = f"group {k}: {sorted(common)} in both S(I_k) and its upper closure"
            break
    checks.append(LemmaCheck("group-upper-disjoint", not w, w))

    w = ""
    for k, g in enumerate(sf.groups):
        inter = set(S)
        for i in g:
            inter &= messages_of_encoder(a, i) if i in a.encoder_ids else set()
        rhs = set(sf.upper_closure[k]) | set(gm[k])
        if inter != rhs:
            w = f"group {k}: common messages {sorted(inter)} != upper+own {sorted(rhs)}"
            break
    checks.append(LemmaCheck("common-messages", not w, w))

    w = ""
    for i in a.encoder_ids:
        acc = set()
        for k, g in enumerate(sf.groups):
            if i in g:
                acc |= gm[k]
        own = set(messages_of_encoder(a, i))
        if acc != own:
            w = f"encoder {i}: groups give {sorted(acc)} but S(i) = {sorted(own)}"
            break
    checks.append(LemmaCheck("encoder-union", not w, w))

    w = ""
    for k in range(len(gm)):
        for kp in range(k):
            clash = gm[kp] & sf.lower_closure[k]
            if clash:
                w = f"earlier group {kp} meets lower closure of group {k} in {sorted(clash)}"
                break
        if w:
            break
    checks.append(LemmaCheck("earlier-outside-lower", not w, w))

    return ValidationReport(tuple(checks))

