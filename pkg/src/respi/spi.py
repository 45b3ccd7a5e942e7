"""Session-typed pi-calculus: processes, structural congruence, reduction,
session types with duality, and typechecking.

The congruence engine works on a canonical form: a sum of groups, each group a
restriction prefix over a sorted parallel multiset with scope maximally
extruded, restrictions distributed over sums, units erased, forwarders
symmetrized, and bound names renamed positionally. Reduction enumerates
redexes of canonical groups and re-canonicalizes.

Typing follows the linear-logic rules plus a binary cut for restrictions, a
server cut for replicated inputs, and an independent-composition (mix) split
for parallels, with the linear context divided by free-name usage.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple


# ---------------------------------------------------------------------------
# Session types


@dataclass(frozen=True)
class SessionType:
    def __str__(self) -> str:
        return print_stype(self)


@dataclass(frozen=True)
class Bot(SessionType):
    pass


@dataclass(frozen=True)
class One(SessionType):
    pass


@dataclass(frozen=True)
class Tensor(SessionType):
    left: SessionType
    right: SessionType


@dataclass(frozen=True)
class Parr(SessionType):
    left: SessionType
    right: SessionType


@dataclass(frozen=True)
class Plus(SessionType):
    branches: Tuple[Tuple[str, SessionType], ...]

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(sorted(self.branches)))

    def get(self, label: str) -> Optional[SessionType]:
        return dict(self.branches).get(label)


@dataclass(frozen=True)
class With(SessionType):
    branches: Tuple[Tuple[str, SessionType], ...]

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(sorted(self.branches)))

    def get(self, label: str) -> Optional[SessionType]:
        return dict(self.branches).get(label)


@dataclass(frozen=True)
class Bang(SessionType):
    body: SessionType


@dataclass(frozen=True)
class Query(SessionType):
    body: SessionType


@dataclass(frozen=True)
class AmpND(SessionType):
    """&A: a session that may produce a behaviour."""

    body: SessionType


@dataclass(frozen=True)
class PlusND(SessionType):
    """+A: a session that may consume a behaviour."""

    body: SessionType


def dual(a: SessionType) -> SessionType:
    if isinstance(a, One):
        return Bot()
    if isinstance(a, Bot):
        return One()
    if isinstance(a, Tensor):
        return Parr(dual(a.left), dual(a.right))
    if isinstance(a, Parr):
        return Tensor(dual(a.left), dual(a.right))
    if isinstance(a, Plus):
        return With(tuple((l, dual(t)) for l, t in a.branches))
    if isinstance(a, With):
        return Plus(tuple((l, dual(t)) for l, t in a.branches))
    if isinstance(a, Bang):
        return Query(dual(a.body))
    if isinstance(a, Query):
        return Bang(dual(a.body))
    if isinstance(a, AmpND):
        return PlusND(dual(a.body))
    if isinstance(a, PlusND):
        return AmpND(dual(a.body))
    raise TypeError(a)


def print_stype(a: SessionType) -> str:
    if isinstance(a, Bot):
        return "bot"
    if isinstance(a, One):
        return "1"
    if isinstance(a, Tensor):
        return f"({print_stype(a.left)} * {print_stype(a.right)})"
    if isinstance(a, Parr):
        return f"({print_stype(a.left)} @ {print_stype(a.right)})"
    if isinstance(a, Plus):
        inner = ", ".join(f"{l}: {print_stype(t)}" for l, t in a.branches)
        return "+{" + inner + "}"
    if isinstance(a, With):
        inner = ", ".join(f"{l}: {print_stype(t)}" for l, t in a.branches)
        return "&{" + inner + "}"
    if isinstance(a, Bang):
        return f"!{print_stype(a.body)}"
    if isinstance(a, Query):
        return f"?{print_stype(a.body)}"
    if isinstance(a, AmpND):
        return f"&{print_stype(a.body)}"
    if isinstance(a, PlusND):
        return f"+{print_stype(a.body)}"
    raise TypeError(a)


# ---------------------------------------------------------------------------
# Processes


@dataclass(frozen=True, eq=False)
class Process:
    def __str__(self) -> str:
        return print_proc(self)

    def __repr__(self) -> str:
        return print_proc(self)


@dataclass(frozen=True, eq=False)
class Nil(Process):
    pass


@dataclass(frozen=True, eq=False)
class OutB(Process):
    """Bound output: x!(y).P sends a fresh y."""

    chan: str
    fresh: str
    body: Process


@dataclass(frozen=True, eq=False)
class In(Process):
    chan: str
    bound: str
    body: Process


@dataclass(frozen=True, eq=False)
class Sel(Process):
    chan: str
    label: str
    body: Process


@dataclass(frozen=True, eq=False)
class Bra(Process):
    chan: str
    branches: Tuple[Tuple[str, Process], ...]

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(sorted(self.branches, key=lambda lp: lp[0])))


@dataclass(frozen=True, eq=False)
class CloseOut(Process):
    chan: str


@dataclass(frozen=True, eq=False)
class CloseIn(Process):
    chan: str
    body: Process


@dataclass(frozen=True, eq=False)
class Par(Process):
    parts: Tuple[Process, ...]


@dataclass(frozen=True, eq=False)
class Fwd(Process):
    left: str
    right: str


@dataclass(frozen=True, eq=False)
class Res(Process):
    name: str
    ann: Optional[SessionType]
    body: Process


@dataclass(frozen=True, eq=False)
class Serv(Process):
    """!x(y).P: a server spawning copies of P."""

    chan: str
    bound: str
    body: Process


@dataclass(frozen=True, eq=False)
class Req(Process):
    """x?(y).P: a client request connecting to a server."""

    chan: str
    fresh: str
    body: Process


@dataclass(frozen=True, eq=False)
class SomeOut(Process):
    chan: str
    body: Process


@dataclass(frozen=True, eq=False)
class NoneOut(Process):
    chan: str


@dataclass(frozen=True, eq=False)
class SomeIn(Process):
    chan: str
    deps: Tuple[str, ...]
    body: Process


@dataclass(frozen=True, eq=False)
class NDSum(Process):
    parts: Tuple[Process, ...]


@dataclass(frozen=True, eq=False)
class Tick(Process):
    """The observable success marker."""


def par(*parts: Process) -> Process:
    flat: List[Process] = []
    for p in parts:
        if isinstance(p, Par):
            flat.extend(p.parts)
        elif not isinstance(p, Nil):
            flat.append(p)
    if not flat:
        return Nil()
    if len(flat) == 1:
        return flat[0]
    return Par(tuple(flat))


def nd_sum(*parts: Process) -> Process:
    flat: List[Process] = []
    for p in parts:
        if isinstance(p, NDSum):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if len(flat) == 1:
        return flat[0]
    return NDSum(tuple(flat))


def fn(p: Process) -> Set[str]:
    if isinstance(p, (Nil, Tick)):
        return set()
    if isinstance(p, OutB):
        return {p.chan} | (fn(p.body) - {p.fresh})
    if isinstance(p, In):
        return {p.chan} | (fn(p.body) - {p.bound})
    if isinstance(p, Sel):
        return {p.chan} | fn(p.body)
    if isinstance(p, Bra):
        out = {p.chan}
        for _, q in p.branches:
            out |= fn(q)
        return out
    if isinstance(p, CloseOut):
        return {p.chan}
    if isinstance(p, CloseIn):
        return {p.chan} | fn(p.body)
    if isinstance(p, Par):
        out: Set[str] = set()
        for q in p.parts:
            out |= fn(q)
        return out
    if isinstance(p, Fwd):
        return {p.left, p.right}
    if isinstance(p, Res):
        return fn(p.body) - {p.name}
    if isinstance(p, Serv):
        return {p.chan} | (fn(p.body) - {p.bound})
    if isinstance(p, Req):
        return {p.chan} | (fn(p.body) - {p.fresh})
    if isinstance(p, SomeOut):
        return {p.chan} | fn(p.body)
    if isinstance(p, NoneOut):
        return {p.chan}
    if isinstance(p, SomeIn):
        return {p.chan} | set(p.deps) | fn(p.body)
    if isinstance(p, NDSum):
        out = set()
        for q in p.parts:
            out |= fn(q)
        return out
    raise TypeError(p)


def bound_names(p: Process) -> Set[str]:
    if isinstance(p, (Nil, Tick, CloseOut, NoneOut, Fwd)):
        return set()
    if isinstance(p, (OutB, Req)):
        return {p.fresh} | bound_names(p.body)
    if isinstance(p, (In, Serv)):
        return {p.bound} | bound_names(p.body)
    if isinstance(p, (Sel, CloseIn, SomeOut)):
        return bound_names(p.body)
    if isinstance(p, SomeIn):
        return bound_names(p.body)
    if isinstance(p, Bra):
        out: Set[str] = set()
        for _, q in p.branches:
            out |= bound_names(q)
        return out
    if isinstance(p, (Par, NDSum)):
        out = set()
        for q in p.parts:
            out |= bound_names(q)
        return out
    if isinstance(p, Res):
        return {p.name} | bound_names(p.body)
    raise TypeError(p)


def subst(p: Process, old: str, new: str) -> Process:
    """Capture-avoiding substitution of `new` for free `old`."""
    if old == new:
        return p
    if isinstance(p, (Nil, Tick)):
        return p
    if isinstance(p, OutB):
        ch = new if p.chan == old else p.chan
        if p.fresh == old:
            return OutB(ch, p.fresh, p.body)
        fresh, body = _avoid(p.fresh, p.body, new)
        return OutB(ch, fresh, subst(body, old, new))
    if isinstance(p, In):
        ch = new if p.chan == old else p.chan
        if p.bound == old:
            return In(ch, p.bound, p.body)
        b, body = _avoid(p.bound, p.body, new)
        return In(ch, b, subst(body, old, new))
    if isinstance(p, Sel):
        return Sel(new if p.chan == old else p.chan, p.label, subst(p.body, old, new))
    if isinstance(p, Bra):
        return Bra(new if p.chan == old else p.chan,
                   tuple((l, subst(q, old, new)) for l, q in p.branches))
    if isinstance(p, CloseOut):
        return CloseOut(new if p.chan == old else p.chan)
    if isinstance(p, CloseIn):
        return CloseIn(new if p.chan == old else p.chan, subst(p.body, old, new))
    if isinstance(p, Par):
        return Par(tuple(subst(q, old, new) for q in p.parts))
    if isinstance(p, Fwd):
        return Fwd(new if p.left == old else p.left, new if p.right == old else p.right)
    if isinstance(p, Res):
        if p.name == old:
            return p
        nm, body = _avoid(p.name, p.body, new)
        return Res(nm, p.ann, subst(body, old, new))
    if isinstance(p, Serv):
        ch = new if p.chan == old else p.chan
        if p.bound == old:
            return Serv(ch, p.bound, p.body)
        b, body = _avoid(p.bound, p.body, new)
        return Serv(ch, b, subst(body, old, new))
    if isinstance(p, Req):
        ch = new if p.chan == old else p.chan
        if p.fresh == old:
            return Req(ch, p.fresh, p.body)
        b, body = _avoid(p.fresh, p.body, new)
        return Req(ch, b, subst(body, old, new))
    if isinstance(p, SomeOut):
        return SomeOut(new if p.chan == old else p.chan, subst(p.body, old, new))
    if isinstance(p, NoneOut):
        return NoneOut(new if p.chan == old else p.chan)
    if isinstance(p, SomeIn):
        return SomeIn(new if p.chan == old else p.chan,
                      tuple(new if d == old else d for d in p.deps),
                      subst(p.body, old, new))
    if isinstance(p, NDSum):
        return NDSum(tuple(subst(q, old, new) for q in p.parts))
    raise TypeError(p)


_AVOID_COUNTER = itertools.count(1)


def _avoid(binder: str, body: Process, incoming: str) -> Tuple[str, Process]:
    if binder != incoming:
        return binder, body
    fresh = f"{binder}~{next(_AVOID_COUNTER)}"
    while fresh in fn(body) or fresh in bound_names(body):
        fresh = f"{binder}~{next(_AVOID_COUNTER)}"
    return fresh, subst(body, binder, fresh)


# ---------------------------------------------------------------------------
# Printing (the parser lives in respi.syntax)


def print_proc(p: Process) -> str:
    if isinstance(p, Nil):
        return "0"
    if isinstance(p, OutB):
        return f"{p.chan}!({p.fresh}). {_tail(p.body)}"
    if isinstance(p, In):
        return f"{p.chan}?({p.bound}). {_tail(p.body)}"
    if isinstance(p, Sel):
        return f"{p.chan}.{p.label}; {_tail(p.body)}"
    if isinstance(p, Bra):
        inner = ", ".join(f"{l}: {print_proc(q)}" for l, q in p.branches)
        return f"{p.chan}.case{{{inner}}}"
    if isinstance(p, CloseOut):
        return f"{p.chan}.close!"
    if isinstance(p, CloseIn):
        return f"{p.chan}.close; {_tail(p.body)}"
    if isinstance(p, Par):
        return " | ".join(_par_atom(q) for q in p.parts)
    if isinstance(p, Fwd):
        return f"fwd {p.left} {p.right}"
    if isinstance(p, Res):
        if p.ann is not None:
            return f"new {p.name}:{p.ann}. {_tail(p.body)}"
        return f"new {p.name}. {_tail(p.body)}"
    if isinstance(p, Serv):
        return f"srv {p.chan}({p.bound}). {_tail(p.body)}"
    if isinstance(p, Req):
        return f"req {p.chan}({p.fresh}). {_tail(p.body)}"
    if isinstance(p, SomeOut):
        return f"{p.chan}.some!; {_tail(p.body)}"
    if isinstance(p, NoneOut):
        return f"{p.chan}.none!"
    if isinstance(p, SomeIn):
        deps = ",".join(p.deps)
        return f"{p.chan}.some{{{deps}}}; {_tail(p.body)}"
    if isinstance(p, NDSum):
        return " (+) ".join(_sum_atom(q) for q in p.parts)
    if isinstance(p, Tick):
        return "ok"
    raise TypeError(p)


def _par_atom(p: Process) -> str:
    if isinstance(p, (Par, NDSum)):
        return f"({print_proc(p)})"
    return print_proc(p)


def _sum_atom(p: Process) -> str:
    if isinstance(p, NDSum):
        return f"({print_proc(p)})"
    return print_proc(p)


def _tail(p: Process) -> str:
    # prefix continuations extend as far right as possible; parallels and
    # sums must be bracketed
    if isinstance(p, (Par, NDSum)):
        return f"({print_proc(p)})"
    return print_proc(p)


# ---------------------------------------------------------------------------
# Structural congruence: canonical forms


def _norm(p: Process) -> Process:
    """Structural normalization (no renaming): flatten, erase units, extrude
    restrictions to group heads, distribute restrictions over sums."""
    if isinstance(p, (Nil, Tick, CloseOut, NoneOut)):
        return p
    if isinstance(p, Fwd):
        a, b = sorted((p.left, p.right))
        return Fwd(a, b)
    if isinstance(p, OutB):
        return OutB(p.chan, p.fresh, _norm(p.body))
    if isinstance(p, In):
        return In(p.chan, p.bound, _norm(p.body))
    if isinstance(p, Sel):
        return Sel(p.chan, p.label, _norm(p.body))
    if isinstance(p, Bra):
        return Bra(p.chan, tuple((l, _norm(q)) for l, q in p.branches))
    if isinstance(p, CloseIn):
        return CloseIn(p.chan, _norm(p.body))
    if isinstance(p, Serv):
        return Serv(p.chan, p.bound, _norm(p.body))
    if isinstance(p, Req):
        return Req(p.chan, p.fresh, _norm(p.body))
    if isinstance(p, SomeOut):
        return SomeOut(p.chan, _norm(p.body))
    if isinstance(p, SomeIn):
        return SomeIn(p.chan, tuple(sorted(p.deps)), _norm(p.body))
    if isinstance(p, NDSum):
        parts: List[Process] = []
        for q in p.parts:
            q = _norm(q)
            if isinstance(q, NDSum):
                parts.extend(q.parts)
            else:
                parts.append(q)
        if all(isinstance(q, Nil) for q in parts):
            return Nil()
        return NDSum(tuple(parts)) if len(parts) > 1 else parts[0]
    if isinstance(p, Par):
        parts = []
        restrictions: List[Tuple[str, Optional[SessionType]]] = []
        for q in p.parts:
            q = _norm(q)
            if isinstance(q, Par):
                parts.extend(q.parts)
            elif not isinstance(q, Nil):
                parts.append(q)
        # extrude restrictions, renaming apart
        changed = True
        while changed:
            changed = False
            for i, q in enumerate(parts):
                if isinstance(q, Res):
                    others_fn = set()
                    for j, r in enumerate(parts):
                        if j != i:
                            others_fn |= fn(r)
                    name, body = q.name, q.body
                    if name in others_fn:
                        fresh = f"{name}~{next(_AVOID_COUNTER)}"
                        while fresh in others_fn or fresh in fn(body) or fresh in bound_names(body):
                            fresh = f"{name}~{next(_AVOID_COUNTER)}"
                        body = subst(body, name, fresh)
                        name = fresh
                    restrictions.append((name, q.ann))
                    body = _norm(body)
                    new_parts = parts[:i] + parts[i + 1:]
                    if isinstance(body, Par):
                        new_parts.extend(body.parts)
                    elif not isinstance(body, Nil):
                        new_parts.append(body)
                    parts = new_parts
                    changed = True
                    break
        body = par(*parts)
        for name, ann in reversed(restrictions):
            body = _norm_res(name, ann, body)
        return body
    if isinstance(p, Res):
        return _norm_res(p.name, p.ann, _norm(p.body))
    raise TypeError(p)


def _norm_res(name: str, ann, body: Process) -> Process:
    if isinstance(body, Nil):
        return Nil()
    if name not in fn(body):
        return body
    if isinstance(body, NDSum):
        return _norm(NDSum(tuple(Res(name, ann, q) for q in body.parts)))
    if isinstance(body, Par):
        for i, q in enumerate(body.parts):
            if isinstance(q, NDSum):
                rest = body.parts[:i] + body.parts[i + 1:]
                return _norm(NDSum(tuple(Res(name, ann, par(*(rest + (alt,))))
                                         for alt in q.parts)))
    return Res(name, ann, body)


def _serialize(p: Process, env: Dict[str, str]) -> tuple:
    """Structure key; bound names positional, free names via env or literal."""
    def name(n: str) -> str:
        return env.get(n, n)

    if isinstance(p, Nil):
        return ("0",)
    if isinstance(p, Tick):
        return ("ok",)
    if isinstance(p, OutB):
        inner = dict(env)
        inner[p.fresh] = f"<{len(env)}>"
        return ("out", name(p.chan), _serialize(p.body, inner))
    if isinstance(p, In):
        inner = dict(env)
        inner[p.bound] = f"<{len(env)}>"
        return ("in", name(p.chan), _serialize(p.body, inner))
    if isinstance(p, Sel):
        return ("sel", name(p.chan), p.label, _serialize(p.body, env))
    if isinstance(p, Bra):
        return ("bra", name(p.chan),
                tuple((l, _serialize(q, env)) for l, q in p.branches))
    if isinstance(p, CloseOut):
        return ("clo", name(p.chan))
    if isinstance(p, CloseIn):
        return ("cli", name(p.chan), _serialize(p.body, env))
    if isinstance(p, Par):
        return ("par", tuple(sorted(_serialize(q, env) for q in p.parts)))
    if isinstance(p, Fwd):
        return ("fwd", tuple(sorted((name(p.left), name(p.right)))))
    if isinstance(p, Res):
        inner = dict(env)
        inner[p.name] = f"<{len(env)}>"
        return ("res", _serialize(p.body, inner))
    if isinstance(p, Serv):
        inner = dict(env)
        inner[p.bound] = f"<{len(env)}>"
        return ("srv", name(p.chan), _serialize(p.body, inner))
    if isinstance(p, Req):
        inner = dict(env)
        inner[p.fresh] = f"<{len(env)}>"
        return ("req", name(p.chan), _serialize(p.body, inner))
    if isinstance(p, SomeOut):
        return ("someo", name(p.chan), _serialize(p.body, env))
    if isinstance(p, NoneOut):
        return ("noneo", name(p.chan))
    if isinstance(p, SomeIn):
        return ("somei", name(p.chan), tuple(sorted(name(d) for d in p.deps)),
                _serialize(p.body, env))
    if isinstance(p, NDSum):
        return ("sum", tuple(sorted(_serialize(q, env) for q in p.parts)))
    raise TypeError(p)


def _sort_rename(p: Process, env: Dict[str, str], counter: List[int]) -> Process:
    """Deterministic pass: sort parallel/sum children and rename binders in
    traversal order."""
    def fresh() -> str:
        counter[0] += 1
        return f"n{counter[0]}"

    if isinstance(p, (Nil, Tick)):
        return p
    if isinstance(p, CloseOut):
        return CloseOut(env.get(p.chan, p.chan))
    if isinstance(p, NoneOut):
        return NoneOut(env.get(p.chan, p.chan))
    if isinstance(p, Fwd):
        a = env.get(p.left, p.left)
        b = env.get(p.right, p.right)
        a, b = sorted((a, b))
        return Fwd(a, b)
    if isinstance(p, OutB):
        nm = fresh()
        inner = dict(env)
        inner[p.fresh] = nm
        return OutB(env.get(p.chan, p.chan), nm, _sort_rename(p.body, inner, counter))
    if isinstance(p, In):
        nm = fresh()
        inner = dict(env)
        inner[p.bound] = nm
        return In(env.get(p.chan, p.chan), nm, _sort_rename(p.body, inner, counter))
    if isinstance(p, Sel):
        return Sel(env.get(p.chan, p.chan), p.label, _sort_rename(p.body, env, counter))
    if isinstance(p, Bra):
        return Bra(env.get(p.chan, p.chan),
                   tuple((l, _sort_rename(q, env, counter)) for l, q in p.branches))
    if isinstance(p, CloseIn):
        return CloseIn(env.get(p.chan, p.chan), _sort_rename(p.body, env, counter))
    if isinstance(p, Serv):
        nm = fresh()
        inner = dict(env)
        inner[p.bound] = nm
        return Serv(env.get(p.chan, p.chan), nm, _sort_rename(p.body, inner, counter))
    if isinstance(p, Req):
        nm = fresh()
        inner = dict(env)
        inner[p.fresh] = nm
        return Req(env.get(p.chan, p.chan), nm, _sort_rename(p.body, inner, counter))
    if isinstance(p, SomeOut):
        return SomeOut(env.get(p.chan, p.chan), _sort_rename(p.body, env, counter))
    if isinstance(p, SomeIn):
        return SomeIn(env.get(p.chan, p.chan),
                      tuple(sorted(env.get(d, d) for d in p.deps)),
                      _sort_rename(p.body, env, counter))
    if isinstance(p, Res):
        nm = fresh()
        inner = dict(env)
        inner[p.name] = nm
        return Res(nm, p.ann, _sort_rename(p.body, inner, counter))
    if isinstance(p, Par):
        parts = sorted(p.parts, key=lambda q: _serialize(q, env))
        return Par(tuple(_sort_rename(q, env, counter) for q in parts))
    if isinstance(p, NDSum):
        parts = sorted(p.parts, key=lambda q: _serialize(q, env))
        return NDSum(tuple(_sort_rename(q, env, counter) for q in parts))
    raise TypeError(p)


def canon(p: Process) -> Process:
    """A canonical representative of the structural-congruence class."""
    p = _norm(p)
    prev = None
    for _ in range(16):
        q = _sort_rename(p, {}, [0])
        key = _serialize(q, {})
        if key == prev:
            return q
        prev = key
        p = q
    return p


def canon_key(p: Process):
    return _serialize(canon(p), {})


def struct_eq(p: Process, q: Process) -> bool:
    return canon_key(p) == canon_key(q)


# ---------------------------------------------------------------------------
# Reduction


def _group_decompose(p: Process) -> Tuple[List[Tuple[str, Optional[SessionType]]], List[Process]]:
    names: List[Tuple[str, Optional[SessionType]]] = []
    while isinstance(p, Res):
        names.append((p.name, p.ann))
        p = p.body
    comps = list(p.parts) if isinstance(p, Par) else [p]
    return names, comps


def _group_rebuild(names, comps) -> Process:
    body = par(*comps)
    for name, ann in reversed(names):
        body = Res(name, ann, body)
    return body


def _strip_nd(ann: Optional[SessionType]) -> Optional[SessionType]:
    if isinstance(ann, (AmpND, PlusND)):
        return ann.body
    return None


def _comm_results(a: str, ann: Optional[SessionType], pi: Process, pj: Process
                  ) -> Optional[Tuple[List[Process], Optional[SessionType]]]:
    """Try to reduce components pi|pj on channel a. Returns (replacements,
    updated channel annotation) or None."""
    def oriented(out, inp):
        if isinstance(out, OutB) and isinstance(inp, In):
            y = out.fresh
            body_in = subst(inp.body, inp.bound, y) if inp.bound != y else inp.body
            sent = cont = None
            if isinstance(ann, Tensor):
                sent, cont = ann.left, ann.right
            elif isinstance(ann, Parr):
                sent, cont = dual(ann.left), dual(ann.right)
            return [Res(y, sent, par(out.body, body_in))], cont
        if isinstance(out, SomeOut) and isinstance(inp, SomeIn):
            return [out.body, inp.body], _strip_nd(ann)
        if isinstance(out, NoneOut) and isinstance(inp, SomeIn):
            return [NoneOut(w) for w in inp.deps], None
        if isinstance(out, CloseOut) and isinstance(inp, CloseIn):
            return [inp.body], None
        if isinstance(out, Sel) and isinstance(inp, Bra):
            chosen = dict(inp.branches).get(out.label)
            if chosen is None:
                return None
            new_ann = None
            if isinstance(ann, (Plus, With)):
                new_ann = ann.get(out.label)
            return [out.body, chosen], new_ann
        if isinstance(out, Req) and isinstance(inp, Serv):
            y = out.fresh
            copy = subst(inp.body, inp.bound, y) if inp.bound != y else inp.body
            inner = None
            if isinstance(ann, Bang):
                inner = ann.body
            elif isinstance(ann, Query):
                inner = dual(ann.body)
            return [inp, Res(y, inner, par(copy, out.body))], ann
        return None

    for out, inp in ((pi, pj), (pj, pi)):
        r = oriented(out, inp)
        if r is not None:
            return r
    return None


def _chan_of(p: Process) -> Optional[str]:
    if isinstance(p, (OutB, In, Sel, Bra, CloseOut, CloseIn, Serv, Req,
                      SomeOut, NoneOut, SomeIn)):
        return p.chan
    return None


def pi_step(p: Process, free_types: Optional[Dict[str, SessionType]] = None) -> List[Process]:
    """All one-step reducts modulo structural congruence (canonical forms).

    `free_types` supplies session types for free channels so that restriction
    annotations can be propagated to reduction-created restrictions.
    """
    p = canon(p)
    summands = list(p.parts) if isinstance(p, NDSum) else [p]
    results: List[Process] = []
    seen = set()

    def emit(idx: int, new_group: Process):
        parts = summands[:idx] + [new_group] + summands[idx + 1:]
        q = canon(nd_sum(*parts))
        key = _serialize(q, {})
        if key not in seen:
            seen.add(key)
            results.append(q)

    for idx, g in enumerate(summands):
        names, comps = _group_decompose(g)
        ann_of = dict(names)
        if free_types:
            for k, v in free_types.items():
                ann_of.setdefault(k, v)
        bound = {n for n, _ in names}
        # forwarder elimination: (new x)([x<->y] | P) -> P{y/x}
        for i, c in enumerate(comps):
            if isinstance(c, Fwd) and c.left != c.right:
                for a, b in ((c.left, c.right), (c.right, c.left)):
                    if a in bound:
                        rest = comps[:i] + comps[i + 1:]
                        rest = [subst(q, a, b) for q in rest]
                        names2 = [(n, an) for n, an in names if n != a]
                        emit(idx, _group_rebuild(names2, rest))
                        break
        # communication
        for i, j in itertools.combinations(range(len(comps)), 2):
            a = _chan_of(comps[i])
            if a is None or a != _chan_of(comps[j]):
                continue
            r = _comm_results(a, ann_of.get(a), comps[i], comps[j])
            if r is None:
                continue
            repl, new_ann = r
            rest = [c for k, c in enumerate(comps) if k not in (i, j)]
            names2 = [(n, new_ann if n == a else an) for n, an in names]
            emit(idx, _group_rebuild(names2, rest + repl))
    return results


def reachable(p: Process, max_steps: int, max_states: int = 20000,
              free_types: Optional[Dict[str, SessionType]] = None) -> Dict:
    """BFS over canonical forms; returns {canon_key: (process, depth)}."""
    p0 = canon(p)
    frontier = [p0]
    seen = {_serialize(p0, {}): (p0, 0)}
    depth = 0
    while frontier and depth < max_steps and len(seen) < max_states:
        depth += 1
        nxt = []
        for q in frontier:
            for r in pi_step(q, free_types):
                k = _serialize(r, {})
                if k not in seen:
                    seen[k] = (r, depth)
                    nxt.append(r)
        frontier = nxt
    return seen


def has_unguarded_tick(p: Process) -> bool:
    p = canon(p)
    summands = list(p.parts) if isinstance(p, NDSum) else [p]
    for g in summands:
        _, comps = _group_decompose(g)
        if any(isinstance(c, Tick) for c in comps):
            return True
    return False


def success_pi(p: Process, budget: int = 30) -> bool:
    """Does some reduct within the budget have an unguarded success marker?"""
    if has_unguarded_tick(p):
        return True
    for q, _ in reachable(p, budget).values():
        if has_unguarded_tick(q):
            return True
    return False


# ---------------------------------------------------------------------------
# Typechecking


class PiTypeError(Exception):
    pass


class MissingAnnotation(PiTypeError):
    pass


@dataclass(frozen=True)
class PiDeriv:
    rule: str
    subject: str
    children: Tuple["PiDeriv", ...] = ()

    def to_text(self, indent: int = 0) -> str:
        lines = [" " * indent + f"[{self.rule}] {self.subject}"]
        for c in self.children:
            lines.append(c.to_text(indent + 2))
        return "\n".join(lines)


def _amp_rooted(t: SessionType) -> bool:
    return isinstance(t, AmpND)


def _split_by_fn(comps: Sequence[Process], avail: Dict[str, SessionType]):
    """Assign every linear name to the unique component using it."""
    slices: List[Dict[str, SessionType]] = [{} for _ in comps]
    fns = [fn(c) for c in comps]
    tick_idx = next((i for i, c in enumerate(comps) if isinstance(c, Tick)), None)
    for name, ty in avail.items():
        users = [i for i, f in enumerate(fns) if name in f]
        if len(users) == 1:
            slices[users[0]][name] = ty
        elif len(users) == 0:
            if tick_idx is not None:
                slices[tick_idx][name] = ty
            else:
                raise PiTypeError(f"linear name {name} unused in composition")
        else:
            raise PiTypeError(f"linear name {name} used by several parallel components")
    return slices


class _PiChecker:
    def __init__(self, theta: Dict[str, SessionType]):
        self.theta0 = dict(theta)

    def check(self, p: Process, avail: Dict[str, SessionType],
              theta: Dict[str, SessionType]) -> PiDeriv:
        # ?-typed linear assignments move to the unrestricted zone eagerly
        moved = {n: t.body for n, t in avail.items() if isinstance(t, Query)}
        if moved:
            avail = {n: t for n, t in avail.items() if not isinstance(t, Query)}
            theta = {**theta, **moved}
        return self._check(p, avail, theta)

    def _take(self, avail, name) -> SessionType:
        if name not in avail:
            raise PiTypeError(f"no linear assignment for {name}")
        return avail.pop(name)

    def _check(self, p: Process, avail: Dict[str, SessionType],
               theta: Dict[str, SessionType]) -> PiDeriv:
        if isinstance(p, Nil):
            if avail:
                raise PiTypeError(f"inaction cannot consume {sorted(avail)}")
            return PiDeriv("T0", "0")
        if isinstance(p, Tick):
            return PiDeriv("Tok", "ok")
        if isinstance(p, Fwd):
            a = self._take(avail, p.left)
            b = self._take(avail, p.right)
            if avail:
                raise PiTypeError("forwarder leaves assignments unconsumed")
            if b != dual(a):
                raise PiTypeError(f"forwarder endpoints not dual: {a} vs {b}")
            return PiDeriv("Tid", str(p))
        if isinstance(p, CloseOut):
            t = self._take(avail, p.chan)
            if not isinstance(t, One) or avail:
                raise PiTypeError(f"{p.chan}.close! needs exactly {p.chan}:1")
            return PiDeriv("T1", str(p))
        if isinstance(p, CloseIn):
            t = self._take(avail, p.chan)
            if not isinstance(t, Bot):
                raise PiTypeError(f"{p.chan}.close expects bot, got {t}")
            d = self.check(p.body, avail, theta)
            return PiDeriv("Tbot", str(p), (d,))
        if isinstance(p, OutB):
            t = self._take(avail, p.chan)
            if not isinstance(t, Tensor):
                raise PiTypeError(f"bound output on {p.chan} expects a tensor, got {t}")
            comps = list(p.body.parts) if isinstance(p.body, Par) else [p.body]
            avail2 = dict(avail)
            avail2[p.fresh] = t.left
            avail2[p.chan] = t.right
            slices = _split_by_fn(comps, avail2)
            ds = tuple(self.check(c, s, theta) for c, s in zip(comps, slices))
            return PiDeriv("Ttensor", f"{p.chan}!({p.fresh})", ds)
        if isinstance(p, In):
            t = self._take(avail, p.chan)
            if not isinstance(t, Parr):
                raise PiTypeError(f"input on {p.chan} expects a par type, got {t}")
            avail[p.bound] = t.left
            avail[p.chan] = t.right
            d = self.check(p.body, avail, theta)
            return PiDeriv("Tparr", f"{p.chan}?({p.bound})", (d,))
        if isinstance(p, Sel):
            t = self._take(avail, p.chan)
            if not isinstance(t, Plus):
                raise PiTypeError(f"selection on {p.chan} expects an internal choice, got {t}")
            body_t = t.get(p.label)
            if body_t is None:
                raise PiTypeError(f"label {p.label} not offered by {t}")
            avail[p.chan] = body_t
            d = self.check(p.body, avail, theta)
            return PiDeriv("Tplus_i", f"{p.chan}.{p.label}", (d,))
        if isinstance(p, Bra):
            t = self._take(avail, p.chan)
            if not isinstance(t, With):
                raise PiTypeError(f"branching on {p.chan} expects an external choice, got {t}")
            if tuple(l for l, _ in p.branches) != tuple(l for l, _ in t.branches):
                raise PiTypeError(f"branch labels differ from {t}")
            ds = []
            for (l, q), (_, bt) in zip(p.branches, t.branches):
                sub = dict(avail)
                sub[p.chan] = bt
                ds.append(self.check(q, sub, theta))
            return PiDeriv("Twith", f"{p.chan}.case", tuple(ds))
        if isinstance(p, SomeOut):
            t = self._take(avail, p.chan)
            if not isinstance(t, AmpND):
                raise PiTypeError(f"{p.chan}.some! expects &A, got {t}")
            avail[p.chan] = t.body
            d = self.check(p.body, avail, theta)
            return PiDeriv("Tamp_d", f"{p.chan}.some!", (d,))
        if isinstance(p, NoneOut):
            t = self._take(avail, p.chan)
            if not isinstance(t, AmpND) or avail:
                raise PiTypeError(f"{p.chan}.none! needs exactly {p.chan}:&A")
            return PiDeriv("Tamp_none", str(p))
        if isinstance(p, SomeIn):
            t = self._take(avail, p.chan)
            if not isinstance(t, PlusND):
                raise PiTypeError(f"{p.chan}.some expects +A, got {t}")
            if set(avail) != set(p.deps):
                raise PiTypeError(f"dependency names {sorted(p.deps)} do not match "
                                  f"context {sorted(avail)}")
            bad = [n for n, a in avail.items() if not _amp_rooted(a)]
            if bad:
                raise PiTypeError(f"dependencies must have &-types: {bad}")
            avail[p.chan] = t.body
            d = self.check(p.body, avail, theta)
            return PiDeriv("Tplus_w", f"{p.chan}.some{{..}}", (d,))
        if isinstance(p, NDSum):
            bad = [n for n, a in avail.items() if not _amp_rooted(a)]
            if bad:
                raise PiTypeError(f"non-deterministic choice over non-& names: {bad}")
            ds = tuple(self.check(q, dict(avail), theta) for q in p.parts)
            return PiDeriv("Tplus_nd", "(+)", ds)
        if isinstance(p, Serv):
            t = self._take(avail, p.chan)
            if not isinstance(t, Bang):
                raise PiTypeError(f"server on {p.chan} expects !A, got {t}")
            if avail:
                raise PiTypeError("server body may use only its bound name")
            d = self.check(p.body, {p.bound: t.body}, theta)
            return PiDeriv("T!", f"srv {p.chan}", (d,))
        if isinstance(p, Req):
            if p.chan not in theta:
                raise PiTypeError(f"request on {p.chan} needs an unrestricted assignment")
            avail[p.fresh] = theta[p.chan]
            d = self.check(p.body, avail, theta)
            return PiDeriv("Tcopy", f"req {p.chan}", (d,))
        if isinstance(p, Res):
            return self._cut(p, avail, theta)
        if isinstance(p, Par):
            slices = _split_by_fn(p.parts, avail)
            ds = tuple(self.check(c, s, theta) for c, s in zip(p.parts, slices))
            return PiDeriv("Tmix", "|", ds)
        raise TypeError(p)

    def _cut(self, p: Res, avail, theta) -> PiDeriv:
        if p.ann is None:
            raise MissingAnnotation(f"restriction on {p.name} lacks a type annotation")
        comps = list(p.body.parts) if isinstance(p.body, Par) else [p.body]
        servers = [i for i, c in enumerate(comps)
                   if isinstance(c, Serv) and c.chan == p.name]
        if servers:
            # cut with a server: clients reach it through the unrestricted zone
            i = servers[0]
            ann = p.ann
            if isinstance(ann, Query):
                ann = dual(ann)
            if not isinstance(ann, Bang):
                raise PiTypeError(f"server cut on {p.name} needs a ! annotation, got {p.ann}")
            serv = comps[i]
            d1 = self.check(serv, {p.name: ann}, theta)
            rest = comps[:i] + comps[i + 1:]
            theta2 = {**theta, p.name: dual(ann.body)}
            slices = _split_by_fn(rest, avail)
            ds = tuple(self.check(c, s, theta2) for c, s in zip(rest, slices))
            return PiDeriv("Tcut!", f"new {p.name}", (d1,) + ds)
        users = [i for i, c in enumerate(comps) if p.name in fn(c)]
        if len(users) != 2:
            raise PiTypeError(f"restriction on {p.name} must cut exactly two components")
        for first_ty in (p.ann, dual(p.ann)):
            try:
                avail2 = dict(avail)
                slices = _split_by_fn(comps, avail2)
                slices[users[0]][p.name] = first_ty
                slices[users[1]][p.name] = dual(first_ty)
                ds = tuple(self.check(c, s, theta) for c, s in zip(comps, slices))
                return PiDeriv("Tcut", f"new {p.name}", ds)
            except PiTypeError:
                if first_ty == dual(p.ann):
                    raise
        raise PiTypeError("unreachable")


def pi_typecheck(p: Process, delta: Dict[str, SessionType],
                 theta: Dict[str, SessionType]) -> PiDeriv:
    """Check P |- delta; theta. Raises PiTypeError / MissingAnnotation."""
    checker = _PiChecker(theta)
    p = canon(p)
    summands = list(p.parts) if isinstance(p, NDSum) else [p]
    if len(summands) > 1:
        return checker.check(NDSum(tuple(summands)), dict(delta), dict(theta))
    return checker.check(summands[0], dict(delta), dict(theta))


def pi_typecheck_ok(p, delta, theta) -> bool:
    try:
        pi_typecheck(p, delta, theta)
        return True
    except PiTypeError:
        return False
