"""Small shared helpers: multisets of names and deterministic fresh-name supply."""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Tuple


def ms(names: Iterable[str] = ()) -> Counter:
    return Counter(names)


def ms_union(*parts: Counter) -> Counter:
    out: Counter = Counter()
    for p in parts:
        out.update(p)
    return out


def ms_remove_all(m: Counter, name: str) -> Counter:
    out = Counter(m)
    out.pop(name, None)
    return out


def ms_remove_one(m: Counter, name: str) -> Counter:
    out = Counter(m)
    if out[name] > 0:
        out[name] -= 1
        if out[name] == 0:
            del out[name]
    return out


def ms_tuple(m: Counter) -> Tuple[str, ...]:
    """Multiset as a sorted tuple with repetitions (canonical storage form)."""
    return tuple(sorted(m.elements()))


class NameSupply:
    """Deterministic fresh-name generator.

    Names are base strings with integer suffixes; a supply seeded with the
    names already used by a term never returns a clash.
    """

    def __init__(self, used: Iterable[str] = ()):
        self.used = set(used)
        self.counters: dict = {}

    def reserve(self, names: Iterable[str]) -> None:
        self.used.update(names)

    def fresh(self, base: str = "v") -> str:
        base = base.rstrip("0123456789") or "v"
        n = self.counters.get(base, 0)
        while True:
            n += 1
            cand = f"{base}{n}"
            if cand not in self.used:
                self.counters[base] = n
                self.used.add(cand)
                return cand
