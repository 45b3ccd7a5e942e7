"""Resource lambda-calculus with linear and unrestricted bags, explicit failure,
and non-collapsing non-deterministic sums.

Terms are immutable. Type-annotation fields (``ann``/``res``) ride along on
nodes so they survive reduction, but they never participate in alpha-equality
or printing. Sums are kept as multiplicity-tagged multisets of terms, so a
``k!``-way permutation sum of one failure term costs one summand.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Iterator, List, Optional, Sequence, Tuple, Union

from .util import NameSupply, ms, ms_remove_all, ms_tuple, ms_union


class HeadMismatch(Exception):
    pass


class ArityMismatch(Exception):
    pass


# ---------------------------------------------------------------------------
# Syntax


@dataclass(frozen=True, eq=False)
class Term:
    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True, eq=False)
class LinVar(Term):
    name: str


@dataclass(frozen=True, eq=False)
class UnrVar(Term):
    name: str
    index: int  # 1-based position in the unrestricted zone

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("unrestricted index must be >= 1")


@dataclass(frozen=True, eq=False)
class Abs(Term):
    binder: str
    body: Term
    ann: Optional[tuple] = field(default=None, compare=False)  # (sigma|None, eta)


@dataclass(frozen=True, eq=False)
class App(Term):
    fun: Term
    arg: "Bag"
    res: Optional[object] = field(default=None, compare=False)  # result type


@dataclass(frozen=True, eq=False)
class ESub(Term):
    """Explicit substitution of a whole bag for a variable."""

    body: Term
    bag: "Bag"
    binder: str
    ann: Optional[tuple] = field(default=None, compare=False)  # (sigma|None, eta)
    res: Optional[object] = field(default=None, compare=False)


@dataclass(frozen=True, eq=False)
class Fail(Term):
    vars: Tuple[str, ...] = ()  # multiset, stored sorted
    ann: Optional[object] = field(default=None, compare=False)  # its type

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(sorted(self.vars)))


@dataclass(frozen=True, eq=False)
class Success(Term):
    """The observable success marker."""


@dataclass(frozen=True, eq=False)
class UnrSlot:
    pass


@dataclass(frozen=True, eq=False)
class Empty(UnrSlot):
    """An empty unrestricted slot (position-occupying)."""

    ann: Optional[object] = field(default=None, compare=False)  # arbitrary strict type


@dataclass(frozen=True, eq=False)
class Full(UnrSlot):
    term: Term


@dataclass(frozen=True, eq=False)
class Bag:
    lin: Tuple[Term, ...] = ()
    unr: Tuple[UnrSlot, ...] = ()

    def __str__(self) -> str:
        return print_bag(self)


def bag(lin: Sequence[Term] = (), unr: Sequence[UnrSlot] = ()) -> Bag:
    return Bag(tuple(lin), tuple(unr))


def size(b: Bag) -> int:
    """Number of linear elements; the unrestricted zone does not count."""
    return len(b.lin)


class Expression:
    """A non-empty, non-idempotent sum of terms (multiplicity-tagged)."""

    __slots__ = ("summands",)

    def __init__(self, summands: Sequence[Tuple[Term, int]]):
        merged: List[Tuple[Term, int]] = []
        for t, m in summands:
            if m <= 0:
                raise ValueError("multiplicities must be positive")
            for i, (u, n) in enumerate(merged):
                if alpha_eq(t, u):
                    merged[i] = (u, n + m)
                    break
            else:
                merged.append((t, m))
        if not merged:
            raise ValueError("expressions are never empty")
        self.summands: Tuple[Tuple[Term, int], ...] = tuple(merged)

    @staticmethod
    def of(*terms: Term) -> "Expression":
        return Expression([(t, 1) for t in terms])

    def terms(self) -> Iterator[Term]:
        for t, _ in self.summands:
            yield t

    def width(self) -> int:
        return sum(m for _, m in self.summands)

    def key(self):
        return tuple(sorted((alpha_key(t), m) for t, m in self.summands))

    def __eq__(self, other) -> bool:
        return isinstance(other, Expression) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __str__(self) -> str:
        parts = []
        for t, m in self.summands:
            parts.extend([print_term(t)] * m)
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"Expression({self})"


def expr_union(*exprs: Expression) -> Expression:
    parts: List[Tuple[Term, int]] = []
    for e in exprs:
        parts.extend(e.summands)
    return Expression(parts)


# ---------------------------------------------------------------------------
# Free variables and occurrence counting


def mlfv(m: Union[Term, Bag, UnrSlot, Expression]) -> Counter:
    """Multiset of free linear variables (binders remove all occurrences)."""
    if isinstance(m, LinVar):
        return ms([m.name])
    if isinstance(m, UnrVar):
        return ms()
    if isinstance(m, Abs):
        return ms_remove_all(mlfv(m.body), m.binder)
    if isinstance(m, App):
        return ms_union(mlfv(m.fun), mlfv(m.arg))
    if isinstance(m, ESub):
        return ms_union(ms_remove_all(mlfv(m.body), m.binder), mlfv(m.bag))
    if isinstance(m, Fail):
        return ms(m.vars)
    if isinstance(m, Success):
        return ms()
    if isinstance(m, Bag):
        out = ms()
        for t in m.lin:
            out = ms_union(out, mlfv(t))
        return out  # unrestricted zone contributes nothing
    if isinstance(m, Empty):
        return ms()
    if isinstance(m, Full):
        return ms()  # x[i] has no linear occurrences; a linear var inside is not wf
    if isinstance(m, Expression):
        out = ms()
        for t, mult in m.summands:
            for _ in range(mult):
                out = ms_union(out, mlfv(t))
        return out
    raise TypeError(m)


def count_occ(x: str, m: Union[Term, Bag]) -> int:
    """#(x, M): free linear occurrences of x."""
    return mlfv(m)[x]


@singledispatch
def free_names(m) -> set:
    """All free names, linear and unrestricted (base names), plus fail markers."""
    if isinstance(m, Expression):
        out = set()
        for t in m.terms():
            out |= free_names(t)
        return out
    raise TypeError(m)


@free_names.register
def _(m: LinVar):
    return {m.name}


@free_names.register
def _(m: UnrVar):
    return {m.name}


@free_names.register
def _(m: Abs):
    return free_names(m.body) - {m.binder}


@free_names.register
def _(m: App):
    return free_names(m.fun) | free_names(m.arg)


@free_names.register
def _(m: ESub):
    return (free_names(m.body) - {m.binder}) | free_names(m.bag)


@free_names.register
def _(m: Fail):
    return set(m.vars)


@free_names.register
def _(m: Success):
    return set()


@free_names.register
def _(m: Bag):
    out = set()
    for t in m.lin:
        out |= free_names(t)
    for s in m.unr:
        if isinstance(s, Full):
            out |= free_names(s.term)
    return out


@singledispatch
def all_names(m) -> set:
    """Every identifier occurring anywhere (free or bound); seeds fresh supplies."""
    if isinstance(m, Expression):
        out = set()
        for t in m.terms():
            out |= all_names(t)
        return out
    raise TypeError(m)


@all_names.register
def _(m: LinVar):
    return {m.name}


@all_names.register
def _(m: UnrVar):
    return {m.name}


@all_names.register
def _(m: Abs):
    return {m.binder} | all_names(m.body)


@all_names.register
def _(m: App):
    return all_names(m.fun) | all_names(m.arg)


@all_names.register
def _(m: ESub):
    return {m.binder} | all_names(m.body) | all_names(m.bag)


@all_names.register
def _(m: Fail):
    return set(m.vars)


@all_names.register
def _(m: Success):
    return set()


@all_names.register
def _(m: Bag):
    out = set()
    for t in m.lin:
        out |= all_names(t)
    for s in m.unr:
        if isinstance(s, Full):
            out |= all_names(s.term)
    return out


# ---------------------------------------------------------------------------
# Alpha machinery


def rename_free(m: Term, old: str, new: str) -> Term:
    """Rename every free occurrence of `old` (linear, unrestricted, fail marker)."""
    if isinstance(m, LinVar):
        return LinVar(new) if m.name == old else m
    if isinstance(m, UnrVar):
        return UnrVar(new, m.index) if m.name == old else m
    if isinstance(m, Abs):
        if m.binder == old:
            return m
        return Abs(m.binder, rename_free(m.body, old, new), m.ann)
    if isinstance(m, App):
        return App(rename_free(m.fun, old, new), rename_free_bag(m.arg, old, new), m.res)
    if isinstance(m, ESub):
        body = m.body if m.binder == old else rename_free(m.body, old, new)
        return ESub(body, rename_free_bag(m.bag, old, new), m.binder, m.ann, m.res)
    if isinstance(m, Fail):
        return Fail(tuple(new if v == old else v for v in m.vars), m.ann)
    if isinstance(m, Success):
        return m
    raise TypeError(m)


def rename_free_bag(b: Bag, old: str, new: str) -> Bag:
    lin = tuple(rename_free(t, old, new) for t in b.lin)
    unr = tuple(Full(rename_free(s.term, old, new)) if isinstance(s, Full) else s
                for s in b.unr)
    return Bag(lin, unr)


@singledispatch
def alpha_key(m, env: Optional[dict] = None, depth: int = 0):
    """Canonical hashable key; alpha-equivalent terms get equal keys."""
    raise TypeError(m)


@alpha_key.register
def _(m: LinVar, env=None, depth=0):
    env = env or {}
    return ("lv", env.get(m.name, m.name))


@alpha_key.register
def _(m: UnrVar, env=None, depth=0):
    env = env or {}
    return ("uv", env.get(m.name, m.name), m.index)


@alpha_key.register
def _(m: Abs, env=None, depth=0):
    inner = dict(env or {})
    inner[m.binder] = depth
    return ("abs", alpha_key(m.body, inner, depth + 1))


@alpha_key.register
def _(m: App, env=None, depth=0):
    return ("app", alpha_key(m.fun, env, depth), alpha_key(m.arg, env, depth))


@alpha_key.register
def _(m: ESub, env=None, depth=0):
    inner = dict(env or {})
    inner[m.binder] = depth
    return ("esub", alpha_key(m.body, inner, depth + 1), alpha_key(m.bag, env, depth))


@alpha_key.register
def _(m: Fail, env=None, depth=0):
    env = env or {}
    return ("fail", tuple(sorted(env.get(v, v) for v in m.vars)))


@alpha_key.register
def _(m: Success, env=None, depth=0):
    return ("ok",)


@alpha_key.register
def _(m: Bag, env=None, depth=0):
    return ("bag",
            tuple(alpha_key(t, env, depth) for t in m.lin),
            tuple(alpha_key(s, env, depth) for s in m.unr))


@alpha_key.register
def _(m: Empty, env=None, depth=0):
    return ("slot0",)


@alpha_key.register
def _(m: Full, env=None, depth=0):
    return ("slot", alpha_key(m.term, env, depth))


def alpha_eq(a, b) -> bool:
    return alpha_key(a) == alpha_key(b)


# ---------------------------------------------------------------------------
# Head machinery (Defs of head and head substitution)


def head(m: Term) -> Term:
    if isinstance(m, (LinVar, UnrVar, Abs, Fail, Success)):
        return m
    if isinstance(m, App):
        return head(m.fun)
    if isinstance(m, ESub):
        if count_occ(m.binder, m.body) == size(m.bag):
            return head(m.body)
        return Fail(())
    raise TypeError(m)


def _target_matches(h: Term, target: Term) -> bool:
    if isinstance(target, LinVar):
        return isinstance(h, LinVar) and h.name == target.name
    if isinstance(target, UnrVar):
        return isinstance(h, UnrVar) and h.name == target.name and h.index == target.index
    return False


def head_subst(m: Term, n: Term, target: Term, supply: Optional[NameSupply] = None) -> Term:
    """Replace the head occurrence of `target` (a LinVar or UnrVar) by `n`.

    Descends through applications and explicit substitutions; binders in the
    way are renamed apart when they would capture free names of `n`.
    """
    if not _target_matches(head(m), target):
        raise HeadMismatch(f"head of {m} is not {target}")
    if supply is None:
        supply = NameSupply(all_names(m) | free_names(n))
    return _head_subst(m, n, target, supply)


def _head_subst(m: Term, n: Term, target: Term, supply: NameSupply) -> Term:
    if _target_matches(m, target):
        return n
    if isinstance(m, App):
        return App(_head_subst(m.fun, n, target, supply), m.arg, m.res)
    if isinstance(m, ESub):
        body, binder = m.body, m.binder
        if binder in free_names(n):
            fresh = supply.fresh(binder)
            body = rename_free(body, binder, fresh)
            binder = fresh
        return ESub(_head_subst(body, n, target, supply), m.bag, binder, m.ann, m.res)
    raise HeadMismatch(f"cannot descend into {m}")


def rename_linear(m: Term, x: str, fresh: Sequence[str]) -> Term:
    """Replace the i-th free linear occurrence of x (fixed preorder traversal:
    function before argument, body before bag, fail markers in stored order)
    by fresh[i]. Unrestricted occurrences x[j] are untouched."""
    k = count_occ(x, m)
    if k != len(fresh):
        raise ArityMismatch(f"term has {k} linear occurrences of {x}, got {len(fresh)} names")
    out, rest = _rename_linear(m, x, list(fresh))
    assert not rest
    return out


def _rename_linear(m: Term, x: str, names: List[str]):
    if isinstance(m, LinVar):
        if m.name == x:
            return LinVar(names[0]), names[1:]
        return m, names
    if isinstance(m, (UnrVar, Success)):
        return m, names
    if isinstance(m, Abs):
        if m.binder == x:
            return m, names
        body, names = _rename_linear(m.body, x, names)
        return Abs(m.binder, body, m.ann), names
    if isinstance(m, App):
        fun, names = _rename_linear(m.fun, x, names)
        arg, names = _rename_linear_bag(m.arg, x, names)
        return App(fun, arg, m.res), names
    if isinstance(m, ESub):
        if m.binder == x:
            body = m.body
        else:
            body, names = _rename_linear(m.body, x, names)
        arg, names = _rename_linear_bag(m.bag, x, names)
        return ESub(body, arg, m.binder, m.ann, m.res), names
    if isinstance(m, Fail):
        out = []
        for v in m.vars:
            if v == x:
                out.append(names[0])
                names = names[1:]
            else:
                out.append(v)
        return Fail(tuple(out), m.ann), names
    raise TypeError(m)


def _rename_linear_bag(b: Bag, x: str, names: List[str]):
    lin = []
    for t in b.lin:
        t2, names = _rename_linear(t, x, names)
        lin.append(t2)
    return Bag(tuple(lin), b.unr), names  # unrestricted zone has no linear occurrences


# ---------------------------------------------------------------------------
# Reduction (the single-step relation; all redexes, with rule names)


def _ann_eta_elem(node_ann, i: int):
    """Transport hint: the i-th list-type component of an esub annotation."""
    if node_ann is None:
        return None
    eta = node_ann[1]
    try:
        return eta.elems[i - 1] if i <= len(eta.elems) else None
    except AttributeError:
        return None


def _mk_esub(body: Term, b: Bag, binder: str, ann=None, res=None) -> Term:
    """Build an explicit substitution, renaming the binder apart from the bag."""
    if binder in free_names(b):
        supply = NameSupply(all_names(body) | all_names(b))
        fresh = supply.fresh(binder)
        body = rename_free(body, binder, fresh)
        binder = fresh
    return ESub(body, b, binder, ann, res)


def term_step(m: Term) -> List[Tuple[str, Expression]]:
    """All one-step reducts of a term, innermost contexts enumerated first.

    Each reduct is a full Expression (sums arise from fetch and fail rules).
    """
    out: List[Tuple[str, Expression]] = []
    if isinstance(m, App):
        # evaluation context ([.])B
        for rule, e in term_step(m.fun):
            out.append((rule, Expression([(App(t, m.arg, m.res), mult)
                                          for t, mult in e.summands])))
        if isinstance(m.fun, Abs):
            out.append(("R:Beta",
                        Expression.of(_mk_esub(m.fun.body, m.arg, m.fun.binder,
                                               ann=m.fun.ann, res=m.res))))
        if isinstance(m.fun, Fail):
            ytil = ms_union(ms(m.fun.vars), mlfv(m.arg))
            mult = math.factorial(size(m.arg))
            out.append(("R:Cons1", Expression([(Fail(ms_tuple(ytil), m.res), mult)])))
        return out
    if isinstance(m, ESub):
        # evaluation context ([.])<<B/x>>
        for rule, e in term_step(m.body):
            out.append((rule, Expression([(ESub(t, m.bag, m.binder, m.ann, m.res), mult)
                                          for t, mult in e.summands])))
        body, b, x = m.body, m.bag, m.binder
        k = count_occ(x, body)
        if k != size(b):
            ytil = ms_union(ms_remove_all(mlfv(body), x), mlfv(b))
            mult = math.factorial(size(b))
            out.append(("R:Fail^l", Expression([(Fail(ms_tuple(ytil), m.res), mult)])))
            return out
        h = head(body)
        if isinstance(h, LinVar) and h.name == x and k >= 1:
            summands = []
            for i, n_i in enumerate(b.lin):
                rest = Bag(b.lin[:i] + b.lin[i + 1:], b.unr)
                summands.append((ESub(head_subst(body, n_i, h), rest, x, m.ann, m.res), 1))
            out.append(("R:Fetch^l", Expression(summands)))
        elif isinstance(h, UnrVar) and h.name == x:
            i = h.index
            if i <= len(b.unr):
                slot = b.unr[i - 1]
                if isinstance(slot, Full):
                    out.append(("R:Fetch^!",
                                Expression.of(ESub(head_subst(body, slot.term, h),
                                                   b, x, m.ann, m.res))))
                else:
                    failure = Fail((), _ann_eta_elem(m.ann, i))
                    out.append(("R:Fail^!",
                                Expression.of(ESub(head_subst(body, failure, h),
                                                   b, x, m.ann, m.res))))
        elif isinstance(body, Fail):
            # R:Cons2 (the size guard k == size(C) held above)
            ytil = ms_union(ms_remove_all(ms(body.vars), x), mlfv(b))
            mult = math.factorial(size(b))
            out.append(("R:Cons2", Expression([(Fail(ms_tuple(ytil), body.ann), mult)])))
        return out
    return out  # variables, abstractions, fail, success: no redex


def step(e: Expression) -> List[Tuple[str, Expression]]:
    """All one-step reducts of an expression (closure under sum contexts)."""
    out: List[Tuple[str, Expression]] = []
    seen = set()
    for idx, (t, mult) in enumerate(e.summands):
        rest = list(e.summands[:idx] + e.summands[idx + 1:])
        if mult > 1:
            rest.append((t, mult - 1))
        for rule, reduct in term_step(t):
            new = Expression(rest + list(reduct.summands)) if rest else reduct
            key = new.key()
            if key not in seen:
                seen.add(key)
                out.append((rule, new))
    return out


def step_set(e: Expression) -> List[Expression]:
    return [x for _, x in step(e)]


def is_normal(e: Expression) -> bool:
    return not step(e)


def reduce(e: Expression, budget: int) -> Tuple[Expression, int, bool]:
    """Iterate the leftmost-innermost enabled redex up to `budget` steps.

    Returns (final expression, steps used, reached-normal-form). The diamond
    property makes the reachable normal form independent of the policy.
    """
    steps = 0
    while steps < budget:
        options = step(e)
        if not options:
            return e, steps, True
        _, e = options[0]
        steps += 1
    return e, steps, not step(e)


def reduce_trace(e: Expression, budget: int) -> Tuple[List[Tuple[str, Expression]], bool]:
    """Like reduce, but keeps the (rule, expression) trace for display."""
    trace: List[Tuple[str, Expression]] = []
    while len(trace) < budget:
        options = step(e)
        if not options:
            return trace, True
        rule, e = options[0]
        trace.append((rule, e))
    return trace, not step(e)


# ---------------------------------------------------------------------------
# Canonical printing (parsers live in respi.syntax)


@singledispatch
def print_term(m) -> str:
    raise TypeError(m)


@print_term.register
def _(m: LinVar):
    return m.name


@print_term.register
def _(m: UnrVar):
    return f"{m.name}[{m.index}]"


@print_term.register
def _(m: Abs):
    return f"\\{m.binder}. {print_term(m.body)}"


@print_term.register
def _(m: App):
    return f"{_fun_str(m.fun)} {print_bag(m.arg)}"


@print_term.register
def _(m: ESub):
    return f"{_fun_str(m.body)} [{print_bag(m.bag)} / {m.binder}]"


@print_term.register
def _(m: Fail):
    return "fail{" + ",".join(m.vars) + "}"


@print_term.register
def _(m: Success):
    return "ok"


def _fun_str(m) -> str:
    # abstractions extend to the right; parenthesize them in prefix position
    return f"({print_term(m)})" if isinstance(m, Abs) else print_term(m)


def print_bag(b: Bag) -> str:
    lin = ", ".join(print_term(t) for t in b.lin)
    unr = ", ".join("_" if isinstance(s, Empty) else print_term(s.term) for s in b.unr)
    return f"[{lin}; {unr}]" if lin else f"[;{(' ' + unr) if unr else ''}]"
