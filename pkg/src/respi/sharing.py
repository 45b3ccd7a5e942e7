"""The sharing calculus: an intermediate language where every linear variable
occurs exactly once, bound-variable multiplicity is made explicit by a sharing
construct, and explicit substitutions split into linear and unrestricted forms.

Bags and expressions are reused from the source calculus (the containers are
shared; the elements here are sharing-calculus terms).
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Set, Tuple

from .util import NameSupply, ms, ms_remove_all, ms_remove_one, ms_tuple, ms_union
from .source import (Bag, Empty, Expression, Full, HeadMismatch, alpha_key,
                     all_names, free_names, print_bag, print_term, size)


class InvalidSTerm(Exception):
    pass


# ---------------------------------------------------------------------------
# Syntax


@dataclass(frozen=True, eq=False)
class STerm:
    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True, eq=False)
class SLinVar(STerm):
    name: str


@dataclass(frozen=True, eq=False)
class SUnrVar(STerm):
    name: str
    index: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("unrestricted index must be >= 1")


@dataclass(frozen=True, eq=False)
class Sharing(STerm):
    """M [x1,...,xk <- x]: k single-use copies of one linear variable."""

    body: STerm
    shared: Tuple[str, ...]
    var: str


@dataclass(frozen=True, eq=False)
class SAbs(STerm):
    """Abstractions bind through a sharing node on the bound variable."""

    binder: str
    body: Sharing
    ann: Optional[tuple] = field(default=None, compare=False)  # (sigma|None, eta)


@dataclass(frozen=True, eq=False)
class SApp(STerm):
    fun: STerm
    arg: Bag  # of STerms
    res: Optional[object] = field(default=None, compare=False)


@dataclass(frozen=True, eq=False)
class ShESub(STerm):
    """(M[xs <- x])<<B/x>>: a whole-bag substitution behind a sharing node."""

    sharing: Sharing
    bag: Bag
    ann: Optional[tuple] = field(default=None, compare=False)
    res: Optional[object] = field(default=None, compare=False)

    @property
    def binder(self) -> str:
        return self.sharing.var


@dataclass(frozen=True, eq=False)
class LinESub(STerm):
    """M <| N / x |>: explicit substitution of one term for one occurrence."""

    body: STerm
    subst: STerm
    var: str
    res: Optional[object] = field(default=None, compare=False)


@dataclass(frozen=True, eq=False)
class UnrESub(STerm):
    """M <| U / x! |>: explicit substitution of an unrestricted zone."""

    body: STerm
    slots: Tuple[object, ...]  # Empty | Full(STerm)
    var: str
    ann: Optional[object] = field(default=None, compare=False)  # eta (ListType)
    res: Optional[object] = field(default=None, compare=False)


@dataclass(frozen=True, eq=False)
class SFail(STerm):
    vars: Tuple[str, ...] = ()
    ann: Optional[object] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(sorted(self.vars)))


@dataclass(frozen=True, eq=False)
class SSuccess(STerm):
    pass


# ---------------------------------------------------------------------------
# Free linear variables (per the calculus' own free-variable table)


def llfv(m) -> Counter:
    if isinstance(m, SLinVar):
        return ms([m.name])
    if isinstance(m, SUnrVar):
        return ms()
    if isinstance(m, SAbs):
        return ms_remove_all(llfv(m.body), m.binder)
    if isinstance(m, SApp):
        return ms_union(llfv(m.fun), llfv_bag(m.arg))
    if isinstance(m, Sharing):
        out = llfv(m.body)
        for x in m.shared:
            out = ms_remove_all(out, x)
        out = ms_union(out, ms([m.var]))
        return out
    if isinstance(m, ShESub):
        return ms_union(ms_remove_all(llfv(m.sharing), m.binder), llfv_bag(m.bag))
    if isinstance(m, LinESub):
        # the table uses a plain union here; the substitution variable stays in
        return ms_union(llfv(m.body), llfv(m.subst))
    if isinstance(m, UnrESub):
        return llfv(m.body)
    if isinstance(m, SFail):
        return ms(m.vars)
    if isinstance(m, SSuccess):
        return ms()
    if isinstance(m, Expression):
        out = ms()
        for t, mult in m.summands:
            for _ in range(mult):
                out = ms_union(out, llfv(t))
        return out
    raise TypeError(m)


def llfv_bag(b: Bag) -> Counter:
    out = ms()
    for t in b.lin:
        out = ms_union(out, llfv(t))
    return out


def llfv_set(m) -> Set[str]:
    return set(llfv(m))


# ---------------------------------------------------------------------------
# Generic-function registrations (alpha keys, names, printing)


@alpha_key.register
def _(m: SLinVar, env=None, depth=0):
    env = env or {}
    return ("slv", env.get(m.name, m.name))


@alpha_key.register
def _(m: SUnrVar, env=None, depth=0):
    env = env or {}
    return ("suv", env.get(m.name, m.name), m.index)


@alpha_key.register
def _(m: Sharing, env=None, depth=0):
    env = env or {}
    inner = dict(env)
    for i, x in enumerate(m.shared):
        inner[x] = (depth, i)
    return ("share", len(m.shared), alpha_key(m.body, inner, depth + 1),
            env.get(m.var, m.var))


@alpha_key.register
def _(m: SAbs, env=None, depth=0):
    inner = dict(env or {})
    inner[m.binder] = depth
    return ("sabs", alpha_key(m.body, inner, depth + 1))


@alpha_key.register
def _(m: SApp, env=None, depth=0):
    return ("sapp", alpha_key(m.fun, env, depth), alpha_key(m.arg, env, depth))


@alpha_key.register
def _(m: ShESub, env=None, depth=0):
    inner = dict(env or {})
    inner[m.binder] = depth
    return ("shesub", alpha_key(m.sharing, inner, depth + 1), alpha_key(m.bag, env, depth))


@alpha_key.register
def _(m: LinESub, env=None, depth=0):
    inner = dict(env or {})
    inner[m.var] = depth
    return ("linsub", alpha_key(m.body, inner, depth + 1), alpha_key(m.subst, env, depth))


@alpha_key.register
def _(m: UnrESub, env=None, depth=0):
    inner = dict(env or {})
    inner[m.var] = depth
    return ("unrsub", alpha_key(m.body, inner, depth + 1),
            tuple(alpha_key(s, env, depth) for s in m.slots))


@alpha_key.register
def _(m: SFail, env=None, depth=0):
    env = env or {}
    return ("sfail", tuple(sorted(env.get(v, v) for v in m.vars)))


@alpha_key.register
def _(m: SSuccess, env=None, depth=0):
    return ("sok",)


@free_names.register
def _(m: SLinVar):
    return {m.name}


@free_names.register
def _(m: SUnrVar):
    return {m.name}


@free_names.register
def _(m: Sharing):
    return (free_names(m.body) - set(m.shared)) | {m.var}


@free_names.register
def _(m: SAbs):
    return free_names(m.body) - {m.binder}


@free_names.register
def _(m: SApp):
    return free_names(m.fun) | free_names(m.arg)


@free_names.register
def _(m: ShESub):
    return (free_names(m.sharing) - {m.binder}) | free_names(m.bag)


@free_names.register
def _(m: LinESub):
    return (free_names(m.body) - {m.var}) | free_names(m.subst)


@free_names.register
def _(m: UnrESub):
    out = free_names(m.body) - {m.var}
    for s in m.slots:
        if isinstance(s, Full):
            out |= free_names(s.term)
    return out


@free_names.register
def _(m: SFail):
    return set(m.vars)


@free_names.register
def _(m: SSuccess):
    return set()


@all_names.register
def _(m: SLinVar):
    return {m.name}


@all_names.register
def _(m: SUnrVar):
    return {m.name}


@all_names.register
def _(m: Sharing):
    return all_names(m.body) | set(m.shared) | {m.var}


@all_names.register
def _(m: SAbs):
    return all_names(m.body) | {m.binder}


@all_names.register
def _(m: SApp):
    return all_names(m.fun) | all_names(m.arg)


@all_names.register
def _(m: ShESub):
    return all_names(m.sharing) | all_names(m.bag) | {m.binder}


@all_names.register
def _(m: LinESub):
    return all_names(m.body) | all_names(m.subst) | {m.var}


@all_names.register
def _(m: UnrESub):
    out = all_names(m.body) | {m.var}
    for s in m.slots:
        if isinstance(s, Full):
            out |= all_names(s.term)
    return out


@all_names.register
def _(m: SFail):
    return set(m.vars)


@all_names.register
def _(m: SSuccess):
    return set()


@print_term.register
def _(m: SLinVar):
    return m.name


@print_term.register
def _(m: SUnrVar):
    return f"{m.name}[{m.index}]"


@print_term.register
def _(m: Sharing):
    names = ",".join(m.shared)
    sep = " " if names else ""
    return f"{_prefix(m.body)} [{names}{sep}<- {m.var}]"


@print_term.register
def _(m: SAbs):
    return f"\\{m.binder}. {print_term(m.body)}"


@print_term.register
def _(m: SApp):
    return f"{_prefix(m.fun)} {print_bag(m.arg)}"


@print_term.register
def _(m: ShESub):
    return f"{print_term(m.sharing)} [{print_bag(m.bag)} / {m.binder}]"


@print_term.register
def _(m: LinESub):
    return f"{_prefix(m.body)} <| {print_term(m.subst)} / {m.var} |>"


@print_term.register
def _(m: UnrESub):
    slots = ", ".join("_" if isinstance(s, Empty) else print_term(s.term) for s in m.slots)
    sep = " " if slots else ""
    return f"{_prefix(m.body)} <| {slots}{sep}/ {m.var}! |>"


@print_term.register
def _(m: SFail):
    return "fail{" + ",".join(m.vars) + "}"


@print_term.register
def _(m: SSuccess):
    return "ok"


def _prefix(m) -> str:
    return f"({print_term(m)})" if isinstance(m, SAbs) else print_term(m)


# ---------------------------------------------------------------------------
# Validity


def _sharing_vars(m) -> Set[str]:
    """Names used as sharing variables anywhere in m (with a free occurrence)."""
    out: Set[str] = set()
    if isinstance(m, Sharing):
        out.add(m.var)
        out |= _sharing_vars(m.body)
    elif isinstance(m, SAbs):
        out |= _sharing_vars(m.body)
    elif isinstance(m, SApp):
        out |= _sharing_vars(m.fun) | _sharing_vars_bag(m.arg)
    elif isinstance(m, ShESub):
        out |= _sharing_vars(m.sharing) | _sharing_vars_bag(m.bag)
    elif isinstance(m, LinESub):
        out |= _sharing_vars(m.body) | _sharing_vars(m.subst)
    elif isinstance(m, UnrESub):
        out |= _sharing_vars(m.body)
        for s in m.slots:
            if isinstance(s, Full):
                out |= _sharing_vars(s.term)
    return out


def _sharing_vars_bag(b: Bag) -> Set[str]:
    out: Set[str] = set()
    for t in b.lin:
        out |= _sharing_vars(t)
    for s in b.unr:
        if isinstance(s, Full):
            out |= _sharing_vars(s.term)
    return out


def _linsub_vars(m) -> Set[str]:
    out: Set[str] = set()
    if isinstance(m, LinESub):
        out.add(m.var)
        out |= _linsub_vars(m.body) | _linsub_vars(m.subst)
    elif isinstance(m, Sharing):
        out |= _linsub_vars(m.body)
    elif isinstance(m, SAbs):
        out |= _linsub_vars(m.body)
    elif isinstance(m, SApp):
        out |= _linsub_vars(m.fun)
        for t in m.arg.lin:
            out |= _linsub_vars(t)
    elif isinstance(m, ShESub):
        out |= _linsub_vars(m.sharing)
        for t in m.bag.lin:
            out |= _linsub_vars(t)
    elif isinstance(m, UnrESub):
        out |= _linsub_vars(m.body)
    return out


def _unrsub_vars(m) -> Set[str]:
    out: Set[str] = set()
    if isinstance(m, UnrESub):
        out.add(m.var)
        out |= _unrsub_vars(m.body)
    elif isinstance(m, (Sharing, SAbs)):
        out |= _unrsub_vars(m.body)
    elif isinstance(m, SApp):
        out |= _unrsub_vars(m.fun)
        for t in m.arg.lin:
            out |= _unrsub_vars(t)
    elif isinstance(m, ShESub):
        out |= _unrsub_vars(m.sharing)
        for t in m.bag.lin:
            out |= _unrsub_vars(t)
    elif isinstance(m, LinESub):
        out |= _unrsub_vars(m.body) | _unrsub_vars(m.subst)
    return out


def validate(m) -> None:
    """Enforce the structural invariants of the calculus; raises InvalidSTerm.

    - sharing: each shared name occurs free exactly once in the body and is
      not itself a sharing variable there;
    - linear esub: the variable occurs in the body, is not a sharing variable,
      and is not the variable of another linear esub in the body;
    - unrestricted esub: the variable is not rebound by an inner one.
    """
    if isinstance(m, Sharing):
        if len(set(m.shared)) != len(m.shared):
            raise InvalidSTerm(f"duplicate shared names in {m}")
        body_llfv = llfv(m.body)
        shvars = _sharing_vars(m.body)
        for x in m.shared:
            if body_llfv[x] != 1:
                raise InvalidSTerm(f"{x} occurs {body_llfv[x]} times in body of {m}")
            if x in shvars:
                raise InvalidSTerm(f"shared name {x} is a sharing variable in {m}")
        validate(m.body)
    elif isinstance(m, SAbs):
        if m.body.var != m.binder:
            raise InvalidSTerm("abstraction body must share its own binder")
        validate(m.body)
    elif isinstance(m, SApp):
        validate(m.fun)
        validate_bag(m.arg)
    elif isinstance(m, ShESub):
        validate(m.sharing)
        validate_bag(m.bag)
    elif isinstance(m, LinESub):
        if llfv(m.body)[m.var] < 1:
            raise InvalidSTerm(f"{m.var} does not occur in body of {m}")
        if m.var in _sharing_vars(m.body):
            raise InvalidSTerm(f"{m.var} is a sharing variable in body of {m}")
        if m.var in _linsub_vars(m.body):
            raise InvalidSTerm(f"{m.var} rebound by an inner linear esub in {m}")
        validate(m.body)
        validate(m.subst)
    elif isinstance(m, UnrESub):
        if m.var in _unrsub_vars(m.body):
            raise InvalidSTerm(f"{m.var}! rebound by an inner unrestricted esub in {m}")
        validate(m.body)
        for s in m.slots:
            if isinstance(s, Full):
                validate(s.term)
    elif isinstance(m, (SLinVar, SUnrVar, SFail, SSuccess)):
        pass
    elif isinstance(m, Expression):
        for t in m.terms():
            validate(t)
    else:
        raise TypeError(m)


def validate_bag(b: Bag) -> None:
    for t in b.lin:
        validate(t)
    for s in b.unr:
        if isinstance(s, Full):
            validate(s.term)


def sharing(body: STerm, shared: Sequence[str], var: str) -> Sharing:
    node = Sharing(body, tuple(shared), var)
    validate(node)
    return node


def lin_esub(body: STerm, subst: STerm, var: str, res=None) -> LinESub:
    node = LinESub(body, subst, var, res)
    validate(node)
    return node


def unr_esub(body: STerm, slots: Sequence[object], var: str, ann=None, res=None) -> UnrESub:
    node = UnrESub(body, tuple(slots), var, ann, res)
    validate(node)
    return node


# ---------------------------------------------------------------------------
# Renaming and head machinery


def rename_free_s(m, old: str, new: str):
    """Rename free occurrences of a name (variables, fails, sharing vars)."""
    if isinstance(m, SLinVar):
        return SLinVar(new) if m.name == old else m
    if isinstance(m, SUnrVar):
        return SUnrVar(new, m.index) if m.name == old else m
    if isinstance(m, Sharing):
        if old in m.shared:
            return m
        return Sharing(rename_free_s(m.body, old, new),
                       m.shared, new if m.var == old else m.var)
    if isinstance(m, SAbs):
        if m.binder == old:
            return m
        return SAbs(m.binder, rename_free_s(m.body, old, new), m.ann)
    if isinstance(m, SApp):
        return SApp(rename_free_s(m.fun, old, new), rename_bag_s(m.arg, old, new), m.res)
    if isinstance(m, ShESub):
        sh = m.sharing if m.binder == old else rename_free_s(m.sharing, old, new)
        return ShESub(sh, rename_bag_s(m.bag, old, new), m.ann, m.res)
    if isinstance(m, LinESub):
        body = m.body if m.var == old else rename_free_s(m.body, old, new)
        return LinESub(body, rename_free_s(m.subst, old, new), m.var, m.res)
    if isinstance(m, UnrESub):
        body = m.body if m.var == old else rename_free_s(m.body, old, new)
        slots = tuple(Full(rename_free_s(s.term, old, new)) if isinstance(s, Full) else s
                      for s in m.slots)
        return UnrESub(body, slots, m.var, m.ann, m.res)
    if isinstance(m, SFail):
        return SFail(tuple(new if v == old else v for v in m.vars), m.ann)
    if isinstance(m, SSuccess):
        return m
    raise TypeError(m)


def rename_bag_s(b: Bag, old: str, new: str) -> Bag:
    lin = tuple(rename_free_s(t, old, new) for t in b.lin)
    unr = tuple(Full(rename_free_s(s.term, old, new)) if isinstance(s, Full) else s
                for s in b.unr)
    return Bag(lin, unr)


def head_s(m: STerm) -> STerm:
    """Head of a sharing-calculus term; a loaded sharing+esub is its own head."""
    if isinstance(m, (SLinVar, SUnrVar, SAbs, SFail, SSuccess, ShESub)):
        return m
    if isinstance(m, SApp):
        return head_s(m.fun)
    if isinstance(m, (LinESub, UnrESub)):
        return head_s(m.body)
    if isinstance(m, Sharing):
        h = head_s(m.body)
        if isinstance(h, SLinVar) and h.name in m.shared:
            return SLinVar(m.var)
        return h
    raise TypeError(m)


def _starget(h, target) -> bool:
    if isinstance(target, SLinVar):
        return isinstance(h, SLinVar) and h.name == target.name
    if isinstance(target, SUnrVar):
        return (isinstance(h, SUnrVar) and h.name == target.name
                and h.index == target.index)
    return False


def headlin_subst(m: STerm, n: STerm, target: STerm,
                  supply: Optional[NameSupply] = None) -> STerm:
    """Linear substitution of n for the head variable of m (a variable node)."""
    if not _starget(head_s(m), target):
        raise HeadMismatch(f"head of {m} is not {target}")
    if supply is None:
        supply = NameSupply(all_names(m) | free_names(n))
    return _headlin(m, n, target, supply)


def _headlin(m, n, target, supply: NameSupply):
    if _starget(m, target):
        return n
    nfree = free_names(n)
    if isinstance(m, SApp):
        return SApp(_headlin(m.fun, n, target, supply), m.arg, m.res)
    if isinstance(m, LinESub):
        body, var = m.body, m.var
        if var in nfree:
            fresh = supply.fresh(var)
            body = rename_free_s(body, var, fresh)
            var = fresh
        return LinESub(_headlin(body, n, target, supply), m.subst, var, m.res)
    if isinstance(m, UnrESub):
        body, var = m.body, m.var
        if var in nfree:
            fresh = supply.fresh(var)
            body = rename_free_s(body, var, fresh)
            var = fresh
        return UnrESub(_headlin(body, n, target, supply), m.slots, var, m.ann, m.res)
    if isinstance(m, Sharing):
        body, shared = m.body, list(m.shared)
        for i, x in enumerate(shared):
            if x in nfree:
                fresh = supply.fresh(x)
                body = rename_free_s(body, x, fresh)
                shared[i] = fresh
        return Sharing(_headlin(body, n, target, supply), tuple(shared), m.var)
    if isinstance(m, ShESub):
        sh, binder = m.sharing, m.binder
        if binder in nfree:
            fresh = supply.fresh(binder)
            sh = rename_free_s(sh, binder, fresh)
        return ShESub(_headlin(sh, n, target, supply), m.bag, m.ann, m.res)
    raise HeadMismatch(f"cannot descend into {m}")


# ---------------------------------------------------------------------------
# Reduction


def _eta_elem(ann, i: int):
    if ann is None:
        return None
    try:
        return ann.elems[i - 1] if i <= len(ann.elems) else None
    except AttributeError:
        return None


def term_step_s(m: STerm) -> List[Tuple[str, Expression]]:
    """All one-step reducts; evaluation contexts enumerated before root rules."""
    out: List[Tuple[str, Expression]] = []

    def lift(rule, e, rebuild):
        out.append((rule, Expression([(rebuild(t), mult) for t, mult in e.summands])))

    if isinstance(m, SApp):
        for rule, e in term_step_s(m.fun):
            lift(rule, e, lambda t: SApp(t, m.arg, m.res))
        if isinstance(m.fun, SAbs):
            out.append(("RS:Beta",
                        Expression.of(ShESub(m.fun.body, m.arg,
                                             ann=m.fun.ann, res=m.res))))
        if isinstance(m.fun, SFail):
            ytil = ms_union(ms(m.fun.vars), llfv_bag(m.arg))
            mult = math.factorial(size(m.arg))
            out.append(("RS:Cons1", Expression([(SFail(ms_tuple(ytil), m.res), mult)])))
        return out

    if isinstance(m, Sharing):
        for rule, e in term_step_s(m.body):
            lift(rule, e, lambda t: Sharing(t, m.shared, m.var))
        return out

    if isinstance(m, ShESub):
        sh, b = m.sharing, m.bag
        k = len(sh.shared)
        # reduction under the substitution is only allowed with no shares and
        # an empty linear bag (the dedicated evaluation context)
        if k == 0 and size(b) == 0:
            for rule, e in term_step_s(sh.body):
                lift(rule, e, lambda t: ShESub(Sharing(t, (), sh.var), b, m.ann, m.res))
        if k != size(b):
            ytil = ms_union(_llfv_minus(sh.body, sh.shared), llfv_bag(b))
            mult = math.factorial(size(b))
            out.append(("RS:Fail^l", Expression([(SFail(ms_tuple(ytil), m.res), mult)])))
            return out
        if isinstance(sh.body, SFail):
            # RS:Cons2 (size guard k == size(C) holds here)
            ytil = ms(sh.body.vars)
            for x in sh.shared:
                ytil = ms_remove_one(ytil, x)
            ytil = ms_union(ytil, llfv_bag(b))
            mult = math.factorial(size(b))
            out.append(("RS:Cons2", Expression([(SFail(ms_tuple(ytil), sh.body.ann), mult)])))
            return out
        # RS:Ex-Sub: distribute over all permutations of the linear bag
        eta = m.ann[1] if m.ann else None
        summands = []
        for perm in itertools.permutations(range(k)):
            t: STerm = sh.body
            for pos, xi in zip(perm, sh.shared):
                t = LinESub(t, b.lin[pos], xi)
            t = UnrESub(t, b.unr, sh.var, ann=eta, res=m.res)
            summands.append((t, 1))
        out.append(("RS:Ex-Sub", Expression(summands)))
        return out

    if isinstance(m, LinESub):
        for rule, e in term_step_s(m.body):
            lift(rule, e, lambda t: LinESub(t, m.subst, m.var, m.res))
        h = head_s(m.body)
        if isinstance(h, SLinVar) and h.name == m.var:
            out.append(("RS:Fetch^l",
                        Expression.of(headlin_subst(m.body, m.subst, h))))
        elif isinstance(m.body, SFail) and m.var in m.body.vars:
            ytil = ms_union(ms_remove_one(ms(m.body.vars), m.var), llfv(m.subst))
            out.append(("RS:Cons3", Expression.of(SFail(ms_tuple(ytil), m.body.ann))))
        return out

    if isinstance(m, UnrESub):
        for rule, e in term_step_s(m.body):
            lift(rule, e, lambda t: UnrESub(t, m.slots, m.var, m.ann, m.res))
        h = head_s(m.body)
        if isinstance(h, SUnrVar) and h.name == m.var and h.index <= len(m.slots):
            slot = m.slots[h.index - 1]
            if isinstance(slot, Full):
                out.append(("RS:Fetch^!",
                            Expression.of(UnrESub(headlin_subst(m.body, slot.term, h),
                                                  m.slots, m.var, m.ann, m.res))))
            else:
                failure = SFail((), _eta_elem(m.ann, h.index))
                out.append(("RS:Fail^!",
                            Expression.of(UnrESub(headlin_subst(m.body, failure, h),
                                                  m.slots, m.var, m.ann, m.res))))
        elif isinstance(m.body, SFail):
            out.append(("RS:Cons4", Expression.of(m.body)))
        return out

    return out  # variables, abstractions, fail, success


def _llfv_minus(body, shared) -> Counter:
    out = llfv(body)
    for x in shared:
        out = ms_remove_all(out, x)
    return out


def step_s(e: Expression) -> List[Tuple[str, Expression]]:
    out: List[Tuple[str, Expression]] = []
    seen = set()
    for idx, (t, mult) in enumerate(e.summands):
        rest = list(e.summands[:idx] + e.summands[idx + 1:])
        if mult > 1:
            rest.append((t, mult - 1))
        for rule, reduct in term_step_s(t):
            new = Expression(rest + list(reduct.summands)) if rest else reduct
            key = new.key()
            if key not in seen:
                seen.add(key)
                out.append((rule, new))
    return out


def step_s_set(e: Expression) -> List[Expression]:
    return [x for _, x in step_s(e)]


def reduce_s(e: Expression, budget: int) -> Tuple[Expression, int, bool]:
    steps = 0
    while steps < budget:
        options = step_s(e)
        if not options:
            return e, steps, True
        _, e = options[0]
        steps += 1
    return e, steps, not step_s(e)


# ---------------------------------------------------------------------------
# Precongruence


def _preceq_neighbors(m) -> List[STerm]:
    """One rewrite, at the root, of the precongruence identities.

    Oriented identities go left-to-right; the two symmetric ones both ways.
    """
    out: List[STerm] = []
    # M <| U / x! |>  =>  M  when x unused
    if isinstance(m, UnrESub) and m.var not in free_names(m.body):
        out.append(m.body)
    # (M B) <| N / x |>  =>  (M <| N / x |>) B  when x not free in B
    if isinstance(m, LinESub) and isinstance(m.body, SApp):
        app = m.body
        if m.var not in set(llfv_bag(app.arg)) and m.var in free_names(app.fun):
            out.append(SApp(LinESub(app.fun, m.subst, m.var), app.arg, app.res))
    # stacked sharing-esubs commute when independent
    if isinstance(m, ShESub) and isinstance(m.sharing.body, ShESub):
        outer, inner = m, m.sharing.body
        if (not (set(outer.sharing.shared) & free_names(inner.bag))
                and outer.binder not in free_names(inner.bag)
                and not (set(inner.sharing.shared) & free_names(outer.bag))
                and inner.binder not in free_names(outer.bag)):
            pushed = ShESub(Sharing(inner.sharing.body, outer.sharing.shared,
                                    outer.sharing.var), outer.bag, outer.ann, outer.res)
            swapped = ShESub(Sharing(pushed, inner.sharing.shared, inner.sharing.var),
                             inner.bag, inner.ann, inner.res)
            out.append(swapped)
    # (M A)[xs <- x]<<B/x>>  <=>  (M[xs <- x]<<B/x>>) A   (both ways)
    if isinstance(m, ShESub) and isinstance(m.sharing.body, SApp):
        app = m.sharing.body
        if not (set(m.sharing.shared) & set(llfv_bag(app.arg))) \
                and m.binder not in free_names(app.arg):
            out.append(SApp(ShESub(Sharing(app.fun, m.sharing.shared, m.sharing.var),
                                   m.bag, m.ann, m.res), app.arg, app.res))
    if isinstance(m, SApp) and isinstance(m.fun, ShESub):
        sub = m.fun
        if not (set(sub.sharing.shared) & set(llfv_bag(m.arg))) \
                and sub.binder not in free_names(m.arg):
            out.append(ShESub(Sharing(SApp(sub.sharing.body, m.arg, m.res),
                                      sub.sharing.shared, sub.sharing.var),
                              sub.bag, sub.ann, sub.res))
    # adjacent linear esubs commute when independent (both ways by symmetry)
    if isinstance(m, LinESub) and isinstance(m.body, LinESub):
        outer, inner = m, m.body
        if outer.var not in free_names(inner.subst) \
                and inner.var not in free_names(outer.subst) \
                and outer.var in free_names(inner.body):
            out.append(LinESub(LinESub(inner.body, outer.subst, outer.var),
                               inner.subst, inner.var, inner.res))
    return out


def _preceq_all_positions(m) -> List[STerm]:
    """Root rewrites plus congruence closure under the evaluation contexts."""
    results = []
    for cand in _preceq_neighbors(m):
        try:
            validate(cand)
        except InvalidSTerm:
            continue
        results.append(cand)
    if isinstance(m, SApp):
        results += [SApp(t, m.arg, m.res) for t in _preceq_all_positions(m.fun)]
    elif isinstance(m, LinESub):
        results += [LinESub(t, m.subst, m.var, m.res) for t in _preceq_all_positions(m.body)]
    elif isinstance(m, UnrESub):
        results += [UnrESub(t, m.slots, m.var, m.ann, m.res)
                    for t in _preceq_all_positions(m.body)]
    elif isinstance(m, Sharing):
        results += [Sharing(t, m.shared, m.var) for t in _preceq_all_positions(m.body)]
    elif isinstance(m, ShESub):
        if not m.sharing.shared and size(m.bag) == 0:
            results += [ShESub(Sharing(t, (), m.sharing.var), m.bag, m.ann, m.res)
                        for t in _preceq_all_positions(m.sharing.body)]
    return results


def preceq_closure(m: STerm, budget: int = 200) -> Set:
    """Alpha-keys of terms reachable from m under the precongruence."""
    seen = {alpha_key(m): m}
    frontier = [m]
    while frontier and len(seen) < budget:
        t = frontier.pop()
        for nxt in _preceq_all_positions(t):
            k = alpha_key(nxt)
            if k not in seen:
                seen[k] = nxt
                frontier.append(nxt)
    return set(seen)


def preceq(m, n, budget: int = 200) -> bool:
    """Bounded test of the precongruence between terms or expressions.

    Sound; complete only within the rewrite budget.
    """
    if isinstance(m, Expression) and isinstance(n, Expression):
        if m.width() != n.width():
            return False
        # every summand of n must be reached by a distinct summand of m
        remaining = [(t, mult) for t, mult in n.summands]
        for t, mult in m.summands:
            closure = preceq_closure(t, budget)
            for i, (u, um) in enumerate(remaining):
                if alpha_key(u) in closure and um >= mult:
                    remaining[i] = (u, um - mult)
                    break
            else:
                return False
        return all(um == 0 for _, um in remaining)
    return alpha_key(n) in preceq_closure(m, budget)
