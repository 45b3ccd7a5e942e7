"""First translation stage: from the source calculus into the sharing
calculus. Bound (and, in the open variant, free) linear variables with n
occurrences become n fresh single-use variables coordinated by a sharing
construct; explicit substitutions whose bag matches the occurrence count are
expanded eagerly into permutation sums of linear substitution chains.

Unrestricted zones are translated recursively (the worked examples and the
correctness proofs use the recursive form even where the defining equations
read as the identity).
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import itertools

from . import sharing as shr
from . import source as src
from .source import Bag, Empty, Expression, Full
from .types import LinCtx, MultisetType, UnrCtx
from .util import NameSupply


class NotClosed(Exception):
    pass


class ContextMismatch(Exception):
    pass


class EncodeError(Exception):
    pass


def _fresh_names(base: str, n: int, supply: NameSupply) -> List[str]:
    """Per-binder scheme base1..basen, falling back to the supply on clashes."""
    out = []
    for i in range(1, n + 1):
        cand = f"{base}{i}"
        if cand in supply.used:
            cand = supply.fresh(base)
        else:
            supply.used.add(cand)
        out.append(cand)
    return out


def _lift(e: Expression, wrap) -> Expression:
    return Expression([(wrap(t), m) for t, m in e.summands])


def _one(e: Expression):
    """The unique summand of a singleton encoding, or an error."""
    if len(e.summands) == 1 and e.summands[0][1] == 1:
        return e.summands[0][0]
    raise EncodeError("a permutation sum arose under a construct that cannot "
                      "distribute it (bag element or binder body)")


def _enc(m: src.Term, supply: NameSupply) -> Expression:
    if isinstance(m, src.LinVar):
        return Expression.of(shr.SLinVar(m.name))
    if isinstance(m, src.UnrVar):
        return Expression.of(shr.SUnrVar(m.name, m.index))
    if isinstance(m, src.Fail):
        return Expression.of(shr.SFail(m.vars, m.ann))
    if isinstance(m, src.Success):
        return Expression.of(shr.SSuccess())
    if isinstance(m, src.Abs):
        n = src.count_occ(m.binder, m.body)
        fresh = _fresh_names(m.binder, n, supply)
        body = src.rename_linear(m.body, m.binder, fresh)
        inner = _one(_enc(body, supply))
        return Expression.of(
            shr.SAbs(m.binder, shr.Sharing(inner, tuple(fresh), m.binder), m.ann))
    if isinstance(m, src.App):
        fun = _enc(m.fun, supply)
        arg = _enc_bag(m.arg, supply)
        return _lift(fun, lambda t: shr.SApp(t, arg, m.res))
    if isinstance(m, src.ESub):
        k = src.count_occ(m.binder, m.body)
        c, u = m.bag.lin, m.bag.unr
        eta = m.ann[1] if m.ann else None
        if k == len(c):
            fresh = _fresh_names(m.binder, k, supply)
            body = src.rename_linear(m.body, m.binder, fresh)
            inner = _one(_enc(body, supply))
            elems = [_one(_enc(t, supply)) for t in c]
            slots = _enc_slots(u, supply)
            summands = []
            for pi in itertools.permutations(range(k)):
                t: shr.STerm = inner
                for pos, xi in zip(pi, fresh):
                    t = shr.LinESub(t, elems[pos], xi)
                t = shr.UnrESub(t, slots, m.binder, ann=eta, res=m.res)
                summands.append((t, 1))
            return Expression(summands)
        fresh = _fresh_names(m.binder, k, supply)
        body = src.rename_linear(m.body, m.binder, fresh)
        inner = _one(_enc(body, supply))
        bag2 = Bag(tuple(_one(_enc(t, supply)) for t in c), _enc_slots(u, supply))
        return Expression.of(
            shr.ShESub(shr.Sharing(inner, tuple(fresh), m.binder), bag2, m.ann, m.res))
    raise TypeError(m)


def _enc_slots(slots, supply: NameSupply):
    out = []
    for s in slots:
        if isinstance(s, Empty):
            out.append(s)
        else:
            out.append(Full(_one(_enc(s.term, supply))))
    return tuple(out)


def _enc_bag(b: Bag, supply: NameSupply) -> Bag:
    return Bag(tuple(_one(_enc(t, supply)) for t in b.lin), _enc_slots(b.unr, supply))


def encode_closed(m, supply: Optional[NameSupply] = None):
    """Translate a linearly closed term (or bag, or expression)."""
    if supply is None:
        supply = NameSupply(src.all_names(m))
    if isinstance(m, Bag):
        if src.mlfv(m):
            raise NotClosed(f"bag has free linear variables: {sorted(src.mlfv(m))}")
        return _enc_bag(m, supply)
    if isinstance(m, Expression):
        if src.mlfv(m):
            raise NotClosed(f"expression has free linear variables: {sorted(src.mlfv(m))}")
        parts = []
        for t, mult in m.summands:
            e = _enc(t, supply)
            parts.extend((u, mm * mult) for u, mm in e.summands)
        return Expression(parts)
    if src.mlfv(m):
        raise NotClosed(f"term has free linear variables: {sorted(src.mlfv(m))}")
    e = _enc(m, supply)
    return _one(e) if len(e.summands) == 1 and e.summands[0][1] == 1 else e


def encode_open(m, theta: UnrCtx, gamma: LinCtx):
    """Translate an open term: free linear variables become shared variables.

    The linear context must list exactly the free linear variables with
    matching multiplicities and, per variable, one homogeneous type.
    """
    if isinstance(m, Expression):
        parts = []
        for t, mult in m.summands:
            e = encode_open(t, theta, gamma)
            if isinstance(e, Expression):
                parts.extend((u, mm * mult) for u, mm in e.summands)
            else:
                parts.append((e, mult))
        return Expression(parts)
    occ = src.mlfv(m)
    names = sorted(gamma.entries)
    if set(names) != set(occ):
        raise ContextMismatch(f"context domain {names} differs from free "
                              f"linear variables {sorted(occ)}")
    supply = NameSupply(src.all_names(m))
    term = m
    groups: List[Tuple[str, Tuple[str, ...]]] = []
    for x in names:
        tys = gamma.entries[x]
        if len(tys) != occ[x]:
            raise ContextMismatch(f"{x}: {len(tys)} assignment(s) for {occ[x]} occurrence(s)")
        if len(set(map(repr, tys))) > 1:
            raise ContextMismatch(f"{x}: sharing requires a homogeneous type")
        fresh = _fresh_names(x, occ[x], supply)
        term = src.rename_linear(term, x, fresh)
        groups.append((x, tuple(fresh)))
    enc = _enc(term, supply)
    if len(enc.summands) != 1 or enc.summands[0][1] != 1:
        raise EncodeError("open encoding of a permutation sum is not supported")
    out = enc.summands[0][0]
    for x, fresh in groups:
        out = shr.Sharing(out, fresh, x)
    return out


def encode_ctx(gamma: LinCtx) -> Dict[str, MultisetType]:
    """Collapse repeated linear assignments into multiset entries."""
    out: Dict[str, MultisetType] = {}
    for name, tys in gamma.entries.items():
        out[name] = MultisetType(tuple(tys))
    return out


def ctx_as_linctx(collapsed: Dict[str, MultisetType]) -> LinCtx:
    ctx = LinCtx()
    for name, pi in collapsed.items():
        ctx.add_power(name, pi.parts[0] if pi.parts else None, len(pi.parts))
    return ctx
