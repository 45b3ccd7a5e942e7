"""Second translation stage: from the sharing calculus into session-typed
processes. Unrestricted zones become servers spawning one copy per indexed
occurrence; linear bags become chained handshakes with failure triggers;
sums map to non-deterministic process choice.

Restrictions introduced by the translation carry session-type annotations
synthesized from the well-formedness derivation of the source, choosing
the padding parameters so that both sides of every cut meet at one type even
when linear multiplicities disagree.
"""

from __future__ import annotations

import itertools
from typing import Dict, List, Optional, Tuple

from . import sharing as shr
from . import spi
from . import source as src
from .source import Bag, Empty, Expression, Full
from .sharing import llfv
from .types import Arrow, ListType, LinCtx, MultisetType, StrictType, TupleType, Unit, UnrCtx
from .util import NameSupply
from .wellformed import Derivation, _Checker, _Avail


class InvalidSource(Exception):
    pass


def lin_chan(x: str) -> str:
    return x + "^l"


def srv_chan(x: str) -> str:
    return x + "^s"


# ---------------------------------------------------------------------------
# Type translation


def encode_strict(t: StrictType) -> spi.SessionType:
    if isinstance(t, Unit):
        return spi.AmpND(spi.One())
    if isinstance(t, Arrow):
        pi = t.domain.lin
        sigma = pi.parts[0] if pi.parts else Unit()
        tup = encode_tuple(t.domain, (sigma, 0))
        return spi.AmpND(spi.Parr(spi.dual(tup), encode_strict(t.codomain)))
    raise TypeError(t)


def encode_list(eta: ListType) -> spi.SessionType:
    return spi.With(tuple((f"l{i + 1}", encode_strict(s))
                          for i, s in enumerate(eta.elems)))


def encode_multiset(pi: MultisetType, param: Tuple[StrictType, int]) -> spi.SessionType:
    """Linear-zone protocol: one handshake layer per element, padded by the
    parameter so that mismatched multiplicities still meet at a single type."""
    sigma_p, i = param
    layers = list(pi.parts) + [sigma_p] * i
    out: spi.SessionType = spi.PlusND(spi.Parr(spi.AmpND(spi.One()),
                                               spi.PlusND(spi.AmpND(spi.One()))))
    for s in reversed(layers):
        out = spi.PlusND(spi.Parr(
            spi.AmpND(spi.One()),
            spi.PlusND(spi.AmpND(spi.Tensor(spi.PlusND(encode_strict(s)), out)))))
    return out


def encode_tuple(t: TupleType, param: Tuple[StrictType, int]) -> spi.SessionType:
    return spi.PlusND(spi.Tensor(encode_multiset(t.lin, param),
                                 spi.Tensor(spi.Bang(encode_list(t.unr)), spi.One())))


def encode_type(t, param: Optional[Tuple[StrictType, int]] = None) -> spi.SessionType:
    """Translate any of the four type sorts; multiset/tuple need a parameter."""
    if isinstance(t, MultisetType):
        return encode_multiset(t, param or (Unit(), 0))
    if isinstance(t, TupleType):
        return encode_tuple(t, param or (Unit(), 0))
    if isinstance(t, ListType):
        return encode_list(t)
    return encode_strict(t)


def padded_bag_type(sigma: Optional[StrictType], j: int, k: int,
                    eps: ListType) -> spi.SessionType:
    """The meeting type for a cut between an arrow expecting j linear copies
    and a bag carrying k, following the larger of the two."""
    base = sigma if sigma is not None else Unit()
    pi = MultisetType((base,) * k)
    return encode_tuple(TupleType(pi, eps), (base, max(j, k) - k))


def encode_contexts(gamma: LinCtx, theta: UnrCtx,
                    shared_vars: Optional[set] = None
                    ) -> Tuple[Dict[str, spi.SessionType], Dict[str, spi.SessionType]]:
    """Session-typed contexts for a judgment.

    Entries whose variable is the sharing variable of a free sharing node (or
    that carry several assignments) map to the linear channel of the variable
    at the dual of the multiset translation; single plain entries map to the
    variable itself at a nondeterministically-available dual type.
    """
    shared_vars = shared_vars or set()
    delta: Dict[str, spi.SessionType] = {}
    for name, tys in gamma.entries.items():
        if name in shared_vars or len(tys) != 1:
            pi = MultisetType(tuple(tys))
            delta[lin_chan(name)] = spi.dual(encode_multiset(pi, (tys[0] if tys else Unit(), 0)))
        else:
            delta[name] = spi.AmpND(spi.dual(encode_strict(tys[0])))
    theta_pi = {srv_chan(n): spi.dual(encode_list(eta))
                for n, eta in theta.entries.items()}
    return delta, theta_pi


# ---------------------------------------------------------------------------
# Channel naming for free linear variables


def free_shared_vars(m) -> set:
    """Free linear variables that occur as sharing variables."""
    out = set()
    if isinstance(m, shr.Sharing):
        out |= {m.var} | (free_shared_vars(m.body) - set(m.shared))
    elif isinstance(m, shr.SAbs):
        out |= free_shared_vars(m.body) - {m.binder}
    elif isinstance(m, shr.SApp):
        out |= free_shared_vars(m.fun)
        for t in m.arg.lin:
            out |= free_shared_vars(t)
    elif isinstance(m, shr.ShESub):
        out |= (free_shared_vars(m.sharing) - {m.binder})
        for t in m.bag.lin:
            out |= free_shared_vars(t)
    elif isinstance(m, shr.LinESub):
        out |= (free_shared_vars(m.body) - {m.var}) | free_shared_vars(m.subst)
    elif isinstance(m, shr.UnrESub):
        out |= free_shared_vars(m.body)
    elif isinstance(m, Expression):
        for t in m.terms():
            out |= free_shared_vars(t)
    return out


def _chan(m, x: str) -> str:
    """Channel name of a free linear variable in the scope of m."""
    return lin_chan(x) if x in free_shared_vars(m) else x


def scope_lin_free(m) -> set:
    """Free linear variables with substitution binders respected.

    Dependency lists must name exactly the channels in scope, so unlike the
    calculus' own free-variable table this removes the variable of an
    explicit linear substitution from its body."""
    if isinstance(m, shr.SLinVar):
        return {m.name}
    if isinstance(m, (shr.SUnrVar, shr.SSuccess)):
        return set()
    if isinstance(m, shr.SAbs):
        return scope_lin_free(m.body) - {m.binder}
    if isinstance(m, shr.SApp):
        return scope_lin_free(m.fun) | _scope_bag(m.arg)
    if isinstance(m, shr.Sharing):
        return (scope_lin_free(m.body) - set(m.shared)) | {m.var}
    if isinstance(m, shr.ShESub):
        return (scope_lin_free(m.sharing) - {m.binder}) | _scope_bag(m.bag)
    if isinstance(m, shr.LinESub):
        return (scope_lin_free(m.body) - {m.var}) | scope_lin_free(m.subst)
    if isinstance(m, shr.UnrESub):
        return scope_lin_free(m.body)
    if isinstance(m, shr.SFail):
        return set(m.vars)
    if isinstance(m, Expression):
        out = set()
        for t in m.terms():
            out |= scope_lin_free(t)
        return out
    raise TypeError(m)


def _scope_bag(b: Bag) -> set:
    out = set()
    for t in b.lin:
        out |= scope_lin_free(t)
    return out


def _dep_chans(m, extra: Tuple[str, ...] = ()) -> Tuple[str, ...]:
    names = sorted(scope_lin_free(m))
    return tuple(extra) + tuple(_chan(m, x) for x in names)


def _dep_chans_bag(b: Bag, extra: Tuple[str, ...] = ()) -> Tuple[str, ...]:
    seen = []
    for t in b.lin:
        for x in sorted(scope_lin_free(t)):
            c = _chan(t, x)
            if c not in seen:
                seen.append(c)
    return tuple(extra) + tuple(seen)


# ---------------------------------------------------------------------------
# Term translation


class PiEncoder:
    def __init__(self, supply: NameSupply):
        self.supply = supply

    # derivations ride along to give cut annotations; None disables them

    def expression(self, e: Expression, u: str, deriv: Optional[Derivation]) -> spi.Process:
        parts: List[spi.Process] = []
        if deriv is None or deriv.rule != "F:sum":
            pairs = [(t, mult, deriv) for t, mult in e.summands]
        else:
            # sum derivations are left-nested, one per distinct summand
            ds = _flatten_sum(deriv, len(e.summands))
            pairs = [(t, mult, d) for (t, mult), d in zip(e.summands, ds)]
        for t, mult, d in pairs:
            for _ in range(mult):
                parts.append(self.term(t, u, d))
        return spi.nd_sum(*parts)

    def term(self, m, u: str, deriv: Optional[Derivation]) -> spi.Process:
        if isinstance(m, shr.SLinVar):
            return spi.SomeOut(m.name, spi.Fwd(m.name, u))
        if isinstance(m, shr.SUnrVar):
            xi = self.supply.fresh("x")
            return spi.Req(srv_chan(m.name), xi,
                           spi.Sel(xi, f"l{m.index}", spi.Fwd(xi, u)))
        if isinstance(m, shr.SFail):
            parts = [spi.NoneOut(u)] + [spi.NoneOut(v) for v in m.vars]
            return spi.par(*parts)
        if isinstance(m, shr.SSuccess):
            return spi.Tick()
        if isinstance(m, shr.SAbs):
            body_d = deriv.children[0] if deriv else None
            x = m.binder
            inner = self.term(m.body, u, body_d)
            return spi.SomeOut(u, spi.In(u, x, spi.SomeOut(
                x, spi.In(x, lin_chan(x), spi.In(x, srv_chan(x),
                                                 spi.CloseIn(x, inner))))))
        if isinstance(m, shr.SApp):
            return self._app(m, u, deriv)
        if isinstance(m, shr.ShESub):
            return self._shesub(m, u, deriv)
        if isinstance(m, shr.LinESub):
            body_d, subst_d = (deriv.children if deriv else (None, None))
            sigma = subst_d.ty if subst_d else None
            ann = spi.AmpND(spi.dual(encode_strict(sigma))) if sigma is not None else None
            body = self.term(m.body, u, body_d)
            subst = spi.SomeIn(m.var, _dep_chans(m.subst), self.term(m.subst, m.var, subst_d))
            return spi.Res(m.var, ann, spi.par(body, subst))
        if isinstance(m, shr.UnrESub):
            body_d = deriv.children[0] if deriv else None
            slot_ds = list(deriv.children[1:]) if deriv else [None] * len(m.slots)
            eps = ListType(tuple(d.ty for d in slot_ds)) if deriv else None
            ann = spi.Bang(encode_list(eps)) if eps is not None else None
            s = srv_chan(m.var)
            xi = self.supply.fresh("x")
            server = spi.Serv(s, xi, self.unr_zone(m.slots, xi, slot_ds))
            return spi.Res(s, ann, spi.par(self.term(m.body, u, body_d), server))
        if isinstance(m, shr.Sharing):
            return self._sharing(m, u, deriv)
        raise TypeError(m)

    def _app(self, m: shr.SApp, u: str, deriv) -> spi.Process:
        fun_d, bag_d = (deriv.children if deriv else (None, None))
        ann = None
        if deriv:
            arrow = fun_d.ty
            bag_ty = bag_d.ty
            sigma = arrow.domain.lin.parts[0] if arrow.domain.lin.parts else (
                bag_ty.lin.parts[0] if bag_ty.lin.parts else None)
            tbag = padded_bag_type(sigma, len(arrow.domain.lin.parts),
                                   len(bag_ty.lin.parts), bag_ty.unr)
            ann = spi.AmpND(spi.Parr(spi.dual(tbag), encode_strict(arrow.codomain)))
        parts = []
        elem_ds = _bag_elem_derivs(bag_d, len(m.arg.lin)) if deriv else [None] * len(m.arg.lin)
        slot_ds = _bag_slot_derivs(bag_d, len(m.arg.lin)) if deriv else [None] * len(m.arg.unr)
        for perm in itertools.permutations(range(len(m.arg.lin))):
            v = self.supply.fresh("v")
            x = self.supply.fresh("x")
            fun = self.term(m.fun, v, fun_d)
            bag = self.bag(Bag(tuple(m.arg.lin[i] for i in perm), m.arg.unr), x,
                           [elem_ds[i] for i in perm], slot_ds)
            deps = _dep_chans_bag(m.arg, (u,))
            client = spi.SomeIn(v, deps, spi.OutB(v, x, spi.par(spi.Fwd(v, u), bag)))
            parts.append(spi.Res(v, ann, spi.par(fun, client)))
        return spi.nd_sum(*parts)

    def _shesub(self, m: shr.ShESub, u: str, deriv) -> spi.Process:
        sh_d, bag_d = (deriv.children if deriv else (None, None))
        ann = None
        if deriv:
            bag_ty = bag_d.ty
            sigma = m.ann[0] if m.ann else (bag_ty.lin.parts[0] if bag_ty.lin.parts else None)
            tbag = padded_bag_type(sigma, len(m.sharing.shared),
                                   len(bag_ty.lin.parts), bag_ty.unr)
            ann = spi.dual(tbag)
        k = len(m.bag.lin)
        elem_ds = _bag_elem_derivs(bag_d, k) if deriv else [None] * k
        slot_ds = _bag_slot_derivs(bag_d, k) if deriv else [None] * len(m.bag.unr)
        parts = []
        x = m.binder
        for perm in itertools.permutations(range(k)):
            receiver = spi.SomeOut(x, spi.In(x, lin_chan(x), spi.In(
                x, srv_chan(x), spi.CloseIn(x, self.term(m.sharing, u, sh_d)))))
            bag = self.bag(Bag(tuple(m.bag.lin[i] for i in perm), m.bag.unr), x,
                           [elem_ds[i] for i in perm], slot_ds)
            parts.append(spi.Res(x, ann, spi.par(receiver, bag)))
        return spi.nd_sum(*parts)

    def _sharing(self, m: shr.Sharing, u: str, deriv) -> spi.Process:
        body_d = deriv.children[0] if deriv else None
        xl = lin_chan(m.var)
        if not m.shared:
            yi = self.supply.fresh("y")
            deps = _dep_chans(m.body, (u,))
            inner = spi.SomeIn(yi, deps, spi.CloseIn(yi, self.term(m.body, u, body_d)))
            return spi.SomeOut(xl, spi.OutB(xl, yi, spi.par(inner, spi.NoneOut(xl))))
        # one receive per shared variable, then the empty-sharing closing round
        def chain(idx: int) -> spi.Process:
            if idx == len(m.shared):
                yi = self.supply.fresh("y")
                deps = _dep_chans(m.body, (u,))
                inner = spi.SomeIn(yi, deps, spi.CloseIn(yi, self.term(m.body, u, body_d)))
                return spi.SomeOut(xl, spi.OutB(xl, yi, spi.par(inner, spi.NoneOut(xl))))
            yi = self.supply.fresh("y")
            remaining = set(m.shared[idx:])
            names = sorted(set(llfv(m.body)) - remaining)
            deps = (u,) + tuple(_chan(m.body, n) for n in names)
            cont = spi.SomeOut(xl, spi.SomeIn(xl, deps, spi.In(xl, m.shared[idx],
                                                               chain(idx + 1))))
            trigger = spi.SomeIn(yi, (), spi.CloseIn(yi, spi.Nil()))
            return spi.SomeOut(xl, spi.OutB(xl, yi, spi.par(trigger, cont)))
        return chain(0)

    def bag(self, b: Bag, x: str, elem_ds, slot_ds) -> spi.Process:
        xl, xs = lin_chan(x), srv_chan(x)
        xi = self.supply.fresh("x")
        server = spi.Serv(xs, xi, self.unr_zone(b.unr, xi, slot_ds))
        lin = self.lin_bag(list(b.lin), xl, list(elem_ds))
        deps = _dep_chans_bag(b)
        return spi.SomeIn(x, deps, spi.OutB(x, xl, spi.par(
            lin, spi.OutB(x, xs, spi.par(server, spi.CloseOut(x))))))

    def lin_bag(self, elems: List, xl: str, elem_ds: List) -> spi.Process:
        if not elems:
            yn = self.supply.fresh("y")
            return spi.SomeIn(xl, (), spi.In(xl, yn, spi.par(
                spi.SomeOut(yn, spi.CloseOut(yn)),
                spi.SomeIn(xl, (), spi.NoneOut(xl)))))
        head, tail = elems[0], elems[1:]
        d, ds = elem_ds[0], elem_ds[1:]
        yi = self.supply.fresh("y")
        xi = self.supply.fresh("x")
        whole = Bag(tuple(elems), ())
        deps = _dep_chans_bag(whole)
        elem = spi.SomeIn(xi, _dep_chans(head), self.term(head, xi, d))
        return spi.SomeIn(xl, deps, spi.In(xl, yi, spi.SomeIn(
            xl, (yi,) + deps, spi.SomeOut(xl, spi.OutB(
                xl, xi, spi.par(elem, self.lin_bag(tail, xl, ds), spi.NoneOut(yi)))))))

    def unr_zone(self, slots, x: str, slot_ds) -> spi.Process:
        branches = tuple((f"l{i + 1}", self.slot(s, x, d))
                         for i, (s, d) in enumerate(zip(slots, slot_ds)))
        return spi.Bra(x, branches)

    def slot(self, s, x: str, d) -> spi.Process:
        if isinstance(s, Empty):
            return spi.NoneOut(x)
        inner_d = d.children[0] if d is not None and d.children else None
        return self.term(s.term, x, inner_d)


def _flatten_sum(deriv: Derivation, n: int) -> List[Derivation]:
    if deriv.rule != "F:sum":
        return [deriv] * n
    out = [deriv]
    while out[0].rule == "F:sum":
        first = out.pop(0)
        out = list(first.children) + out
    return out


def _bag_elem_derivs(bag_d: Derivation, k: int) -> List[Derivation]:
    return list(bag_d.children[:k])


def _bag_slot_derivs(bag_d: Derivation, k: int) -> List[Derivation]:
    return list(bag_d.children[k:])


# ---------------------------------------------------------------------------
# Public API


def encode_term_pi(m, u: str = "u", deriv: Optional[Derivation] = None,
                   supply: Optional[NameSupply] = None) -> spi.Process:
    """Translate a sharing-calculus term or expression to a process.

    Without a derivation, restrictions are emitted unannotated (the result
    reduces but does not typecheck).
    """
    if supply is None:
        names = src.all_names(m) if not isinstance(m, Expression) else src.all_names(m)
        supply = NameSupply(set(names) | {u})
    enc = PiEncoder(supply)
    if isinstance(m, Expression):
        return enc.expression(m, u, deriv)
    return enc.term(m, u, deriv)


def encode_judgment(theta: UnrCtx, gamma: LinCtx, m, tau: StrictType,
                    u: str = "u"):
    """Check the judgment, translate the subject, and return the typed triple
    (process, linear context, unrestricted context) ready for typechecking."""
    checker = _Checker(theta)
    e = m if isinstance(m, Expression) else Expression.of(m)
    deriv, elaborated = checker.check_expression(e, gamma, tau)
    proc = encode_term_pi(elaborated, u, deriv)
    shared = free_shared_vars(elaborated)
    delta, theta_pi = encode_contexts(gamma, theta, shared)
    delta[u] = encode_strict(tau)
    return proc, delta, theta_pi
