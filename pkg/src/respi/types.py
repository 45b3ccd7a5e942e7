"""Intersection types: strict, multiset, list, and tuple types, plus the
linear/unrestricted contexts and the initial-sublist relation on list types."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple


@dataclass(frozen=True)
class StrictType:
    def __str__(self) -> str:
        return print_strict(self)


@dataclass(frozen=True)
class Unit(StrictType):
    pass


@dataclass(frozen=True)
class Arrow(StrictType):
    domain: "TupleType"
    codomain: StrictType


@dataclass(frozen=True)
class MultisetType:
    """An intersection of strict types; the empty intersection is omega.

    The operator is commutative, associative and non-idempotent, so parts are
    stored as a sorted tuple with repetitions.
    """

    parts: Tuple[StrictType, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(sorted(self.parts, key=repr)))

    @property
    def is_omega(self) -> bool:
        return not self.parts

    def __str__(self) -> str:
        return print_multiset(self)


OMEGA = MultisetType(())


def power(sigma: StrictType, k: int) -> MultisetType:
    return MultisetType((sigma,) * k)


@dataclass(frozen=True)
class ListType:
    elems: Tuple[StrictType, ...]

    def __post_init__(self):
        if not self.elems:
            raise ValueError("list types are non-empty")

    def __str__(self) -> str:
        return print_list(self)


def list_concat(a: ListType, b: ListType) -> ListType:
    return ListType(a.elems + b.elems)


@dataclass(frozen=True)
class TupleType:
    lin: MultisetType
    unr: ListType

    def __str__(self) -> str:
        return f"({print_multiset(self.lin)}, {print_list(self.unr)})"


def prefix_rel(eta: ListType, eps: ListType) -> bool:
    """eta is an initial sublist of eps (inclusively at equal length)."""
    if len(eta.elems) > len(eps.elems):
        return False
    return all(a == b for a, b in zip(eta.elems, eps.elems))


# ---------------------------------------------------------------------------
# Contexts


class LinCtx:
    """Linear context: names to multisets of strict types.

    Repeated entries for one name are allowed and may be heterogeneous; an
    explicit omega entry is an empty list that only weakening can discharge.
    """

    def __init__(self, entries: Optional[Dict[str, List[StrictType]]] = None):
        self.entries: Dict[str, List[StrictType]] = {}
        if entries:
            for name, tys in entries.items():
                self.entries[name] = list(tys)

    @staticmethod
    def of(*pairs: Tuple[str, StrictType]) -> "LinCtx":
        ctx = LinCtx()
        for name, ty in pairs:
            ctx.add(name, ty)
        return ctx

    def add(self, name: str, ty: Optional[StrictType]) -> None:
        """Add one strict entry, or an explicit omega entry when ty is None."""
        slot = self.entries.setdefault(name, [])
        if ty is not None:
            slot.append(ty)

    def add_power(self, name: str, sigma: Optional[StrictType], k: int) -> None:
        if k == 0:
            self.add(name, None)
        else:
            for _ in range(k):
                self.add(name, sigma)

    def copy(self) -> "LinCtx":
        return LinCtx(self.entries)

    def domain(self):
        return set(self.entries)

    def key(self):
        return tuple(sorted((n, tuple(sorted(map(repr, tys)))) for n, tys in self.entries.items()))

    def __eq__(self, other) -> bool:
        return isinstance(other, LinCtx) and self.key() == other.key()

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __str__(self) -> str:
        parts = []
        for name in sorted(self.entries):
            tys = self.entries[name]
            if not tys:
                parts.append(f"{name}:w")
            else:
                parts.extend(f"{name}:{t}" for t in tys)
        return ", ".join(parts) if parts else "-"


class UnrCtx:
    """Unrestricted context: at most one list-type entry per name."""

    def __init__(self, entries: Optional[Dict[str, ListType]] = None):
        self.entries: Dict[str, ListType] = dict(entries or {})

    @staticmethod
    def of(*pairs: Tuple[str, ListType]) -> "UnrCtx":
        return UnrCtx(dict(pairs))

    def get(self, name: str) -> Optional[ListType]:
        return self.entries.get(name)

    def extended(self, name: str, eta: ListType) -> "UnrCtx":
        out = UnrCtx(self.entries)
        out.entries[name] = eta
        return out

    def key(self):
        return tuple(sorted((n, repr(t)) for n, t in self.entries.items()))

    def __eq__(self, other) -> bool:
        return isinstance(other, UnrCtx) and self.key() == other.key()

    def __str__(self) -> str:
        return ", ".join(f"{n}!:{t}" for n, t in sorted(self.entries.items())) or "-"


# ---------------------------------------------------------------------------
# Printing (type syntax: unit, w, &, <>, (pi, eta) -> tau)


def print_strict(t: StrictType) -> str:
    if isinstance(t, Unit):
        return "unit"
    if isinstance(t, Arrow):
        return f"{t.domain} -> {print_strict(t.codomain)}"
    raise TypeError(t)


def _atom(t: StrictType) -> str:
    return f"({print_strict(t)})" if isinstance(t, Arrow) else print_strict(t)


def print_multiset(p: MultisetType) -> str:
    if p.is_omega:
        return "w"
    return " & ".join(_atom(s) for s in p.parts)


def print_list(e: ListType) -> str:
    return " <> ".join(_atom(s) for s in e.elems)
