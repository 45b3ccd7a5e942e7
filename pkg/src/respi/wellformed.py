"""Well-formedness checking for both calculi.

This is a checker, not an inference engine: abstraction binders, empty
unrestricted slots, and failure terms carry annotations (embedded on the
nodes, or applied from a path-keyed table). Context splitting is done by
threading: a subterm checks against the full linear context, consumes
assignments at variable and failure leaves, and the remainder flows on.
Explicit omega entries are discharged by implicit weakening.

A successful check returns a derivation tree plus an elaborated copy of the
subject in which every node carries its annotation and result type; reduction
transports those, which is what the subject-reduction suites rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from . import source as src
from . import sharing as shr
from .source import Bag, Empty, Expression, Full
from .types import (Arrow, ListType, LinCtx, MultisetType, OMEGA, StrictType,
                    TupleType, Unit, UnrCtx, power, prefix_rel)


class WfFailure(Exception):
    """Base class for checking failures."""


class UnknownAnnotation(WfFailure):
    pass


class RuleViolation(WfFailure):
    def __init__(self, rule: str, reason: str):
        super().__init__(f"{rule}: {reason}")
        self.rule = rule
        self.reason = reason


@dataclass(frozen=True)
class Derivation:
    rule: str
    theta: UnrCtx
    gamma: Tuple[Tuple[str, Optional[StrictType]], ...]  # consumed entries
    subject: str
    ty: object
    children: Tuple["Derivation", ...] = ()

    def judgment(self) -> str:
        gamma = ", ".join(f"{n}:{'w' if t is None else t}" for n, t in self.gamma) or "-"
        return f"{self.theta} ; {gamma} |= {self.subject} : {self.ty}"

    def to_text(self, indent: int = 0) -> str:
        lines = [" " * indent + f"[{self.rule}] {self.judgment()}"]
        for c in self.children:
            lines.append(c.to_text(indent + 2))
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "judgment": self.judgment(),
            "children": [c.to_json() for c in self.children],
        }


class _Avail:
    """Mutable view of a linear context with consumption tracking."""

    def __init__(self, gamma: LinCtx):
        self.entries: Dict[str, List[StrictType]] = {n: list(ts) for n, ts in gamma.entries.items()}
        self.omega: Dict[str, int] = {n: 1 for n, ts in gamma.entries.items() if not ts}
        for n in list(self.entries):
            if not self.entries[n]:
                del self.entries[n]

    def push(self, name: str, sigma: Optional[StrictType], k: int):
        """Introduce a local binder; returns a token for pop()."""
        saved = (self.entries.pop(name, None), self.omega.pop(name, None))
        if k == 0:
            self.omega[name] = 1
        else:
            self.entries[name] = [sigma] * k
        return (name, saved)

    def pop(self, token) -> None:
        name, (saved_e, saved_o) = token
        leftover = self.entries.pop(name, [])
        self.omega.pop(name, None)
        if leftover:
            raise RuleViolation("linear", f"unused linear assignment(s) for {name}")
        if saved_e is not None:
            self.entries[name] = saved_e
        if saved_o is not None:
            self.omega[name] = saved_o

    def shadowed(self, name: str) -> bool:
        return name in self.entries or name in self.omega

    def take(self, name: str, want: Optional[StrictType] = None,
             prefer_arrow: bool = False) -> StrictType:
        tys = self.entries.get(name)
        if not tys:
            raise RuleViolation("F:var^l", f"no linear assignment for {name}")
        if want is not None:
            for i, t in enumerate(tys):
                if t == want:
                    tys.pop(i)
                    if not tys:
                        del self.entries[name]
                    return t
            raise RuleViolation("F:var^l", f"{name} has no assignment of type {want}")
        cands = tys
        if prefer_arrow:
            arrows = [t for t in tys if isinstance(t, Arrow)]
            if len(set(map(repr, arrows))) == 1:
                cands = arrows
        if len(set(map(repr, cands))) > 1:
            raise UnknownAnnotation(f"ambiguous type for {name}; annotate or disambiguate")
        t = cands[0]
        tys.remove(t)
        if not tys:
            del self.entries[name]
        return t

    def take_fail(self, names: Sequence[str]) -> List[Tuple[str, Optional[StrictType]]]:
        """Consume assignments matching the multiset of a failure marker."""
        from collections import Counter
        need = Counter(names)
        got: List[Tuple[str, Optional[StrictType]]] = []
        for name, k in need.items():
            tys = self.entries.get(name, [])
            if len(tys) < k:
                raise RuleViolation("F:fail", f"dom(Gamma) lacks {k} assignment(s) for {name}")
            for _ in range(k):
                got.append((name, tys.pop(0)))
            if not tys:
                self.entries.pop(name, None)
        return got

    def assert_clear(self, where: str) -> None:
        if self.entries:
            leftovers = ", ".join(sorted(self.entries))
            raise RuleViolation(where, f"unconsumed linear assignment(s): {leftovers}")


def _ann_pair(ann, what: str) -> Tuple[Optional[StrictType], ListType]:
    if ann is None:
        raise UnknownAnnotation(f"{what} needs a (sigma, eta) annotation")
    sigma, eta = ann
    if not isinstance(eta, ListType):
        raise UnknownAnnotation(f"{what}: second annotation component must be a list type")
    return sigma, eta


def _gamma_of(consumed) -> Tuple[Tuple[str, Optional[StrictType]], ...]:
    return tuple(consumed)


# ---------------------------------------------------------------------------
# The checker, parameterized by calculus-specific node handling


class _Checker:
    def __init__(self, theta: UnrCtx, strict: bool = False):
        self.theta0 = theta
        self.strict = strict

    # -- entry points ------------------------------------------------------

    def check_expression(self, e: Expression, gamma: LinCtx, expected: StrictType):
        derivs = []
        rebuilt = []
        first = None
        for t, mult in e.summands:
            avail = _Avail(gamma)
            ty, d, t2, consumed = self.term(t, self.theta0, avail, expected)
            avail.assert_clear("judgment")
            if first is None:
                first = sorted(consumed, key=repr)
            elif sorted(consumed, key=repr) != first:
                raise RuleViolation("F:sum", "summands consume different contexts")
            derivs.append(d)
            rebuilt.append((t2, mult))
        out = Expression(rebuilt)
        if len(derivs) == 1:
            return derivs[0], out
        root = derivs[0]
        for d in derivs[1:]:
            root = Derivation("F:sum", self.theta0, root.gamma,
                              f"{root.subject} + {d.subject}", expected, (root, d))
        return root, out

    # -- terms ---------------------------------------------------------------

    def term(self, m, theta: UnrCtx, avail: _Avail, expected: Optional[StrictType]):
        """Returns (type, derivation, elaborated term, consumed entries)."""
        ty, d, m2, consumed = self._term(m, theta, avail, expected)
        if expected is not None and ty != expected:
            raise RuleViolation("check", f"{d.subject} has type {ty}, expected {expected}")
        return ty, d, m2, consumed

    def _term(self, m, theta, avail, expected):
        if isinstance(m, (src.LinVar, shr.SLinVar)):
            ty = avail.take(m.name, want=expected)
            d = Derivation("F:var^l", theta, ((m.name, ty),), str(m), ty)
            return ty, d, m, [(m.name, ty)]

        if isinstance(m, (src.UnrVar, shr.SUnrVar)):
            eta = theta.get(m.name)
            if eta is None:
                raise RuleViolation("F:var^!", f"{m.name}! not in unrestricted context")
            if m.index > len(eta.elems):
                raise RuleViolation("F:var^!", f"{m.name}! has no component {m.index}")
            ty = eta.elems[m.index - 1]
            d = Derivation("F:var^!", theta, (), str(m), ty)
            return ty, d, m, []

        if isinstance(m, (src.Fail, shr.SFail)):
            if self.strict:
                raise RuleViolation("strict", "failure term rejected in strict mode")
            ty = expected if expected is not None else m.ann
            if ty is None:
                raise UnknownAnnotation("failure term needs a type annotation")
            consumed = avail.take_fail(m.vars)
            d = Derivation("F:fail", theta, _gamma_of(consumed), str(m), ty)
            m2 = type(m)(m.vars, ty)
            return ty, d, m2, consumed

        if isinstance(m, (src.Success, shr.SSuccess)):
            ty = expected if expected is not None else Unit()
            d = Derivation("F:ok", theta, (), str(m), ty)
            return ty, d, m, []

        if isinstance(m, src.Abs):
            return self._abs(m, theta, avail, expected)
        if isinstance(m, shr.SAbs):
            return self._sabs(m, theta, avail, expected)
        if isinstance(m, (src.App, shr.SApp)):
            return self._app(m, theta, avail, expected)
        if isinstance(m, src.ESub):
            return self._esub(m, theta, avail)
        if isinstance(m, shr.Sharing):
            return self._sharing(m, theta, avail, expected)
        if isinstance(m, shr.ShESub):
            return self._shesub(m, theta, avail)
        if isinstance(m, shr.LinESub):
            return self._linesub(m, theta, avail, expected)
        if isinstance(m, shr.UnrESub):
            return self._unresub(m, theta, avail, expected)
        raise TypeError(m)

    def _binder_ann(self, m, expected):
        """(sigma, eta) for a binder, from the annotation or the expected arrow."""
        if m.ann is not None:
            return _ann_pair(m.ann, "abstraction")
        if isinstance(expected, Arrow):
            pi = expected.domain.lin
            sigma = pi.parts[0] if pi.parts else None
            return sigma, expected.domain.unr
        raise UnknownAnnotation("abstraction needs a (sigma, eta) annotation")

    def _abs(self, m: src.Abs, theta, avail, expected):
        sigma, eta = self._binder_ann(m, expected)
        k = src.count_occ(m.binder, m.body)
        if k > 0 and sigma is None:
            raise UnknownAnnotation(f"binder {m.binder} occurs linearly; annotation needs sigma")
        if avail.shadowed(m.binder):
            raise RuleViolation("F:abs", f"binder {m.binder} already in linear context")
        theta2 = theta.extended(m.binder, eta)
        token = avail.push(m.binder, sigma, k)
        ty, d, body2, consumed = self.term(m.body, theta2, avail, None)
        avail.pop(token)
        consumed = [(n, t) for n, t in consumed if n != m.binder]
        arrow = Arrow(TupleType(power(sigma, k) if k else OMEGA, eta), ty)
        m2 = src.Abs(m.binder, body2, (sigma, eta))
        d2 = Derivation("F:abs", theta, _gamma_of(consumed), str(m), arrow, (d,))
        return arrow, d2, m2, consumed

    def _sabs(self, m: shr.SAbs, theta, avail, expected):
        sigma, eta = self._binder_ann(m, expected)
        k = len(m.body.shared)
        if k > 0 and sigma is None:
            raise UnknownAnnotation(f"binder {m.binder} is shared; annotation needs sigma")
        if avail.shadowed(m.binder):
            raise RuleViolation("FS:abs-sh", f"binder {m.binder} already in linear context")
        theta2 = theta.extended(m.binder, eta)
        token = avail.push(m.binder, sigma, k)
        ty, d, body2, consumed = self.term(m.body, theta2, avail, None)
        avail.pop(token)
        consumed = [(n, t) for n, t in consumed if n != m.binder]
        arrow = Arrow(TupleType(power(sigma, k) if k else OMEGA, eta), ty)
        m2 = shr.SAbs(m.binder, body2, (sigma, eta))
        d2 = Derivation("FS:abs-sh", theta, _gamma_of(consumed), str(m), arrow, (d,))
        return arrow, d2, m2, consumed

    def _app(self, m, theta, avail, expected):
        is_src = isinstance(m, src.App)
        fun_ty, fun_d, fun2, c1 = self._fun_position(m.fun, theta, avail)
        if not isinstance(fun_ty, Arrow):
            raise RuleViolation("F:app", f"function position has non-arrow type {fun_ty}")
        (bag_ty, bag_d, bag2, c2) = self.bag(m.arg, theta, avail)
        self._tuple_compat("F:app", fun_ty.domain, bag_ty)
        ty = fun_ty.codomain
        rule = "F:app" if is_src else "FS:app"
        ctor = src.App if is_src else shr.SApp
        m2 = ctor(fun2, bag2, ty)
        d = Derivation(rule, theta, _gamma_of(c1 + c2), str(m), ty, (fun_d, bag_d))
        return ty, d, m2, c1 + c2

    def _fun_position(self, f, theta, avail):
        if isinstance(f, (src.LinVar, shr.SLinVar)):
            ty = avail.take(f.name, prefer_arrow=True)
            d = Derivation("F:var^l", theta, ((f.name, ty),), str(f), ty)
            return ty, d, f, [(f.name, ty)]
        return self._term(f, theta, avail, None)

    def _tuple_compat(self, rule: str, dom: TupleType, bag_ty: TupleType) -> None:
        j, k = len(dom.lin.parts), len(bag_ty.lin.parts)
        if self.strict and j != k:
            raise RuleViolation("strict", f"{rule}: sizes {j} and {k} differ")
        if j > 0 and k > 0 and dom.lin.parts[0] != bag_ty.lin.parts[0]:
            raise RuleViolation(rule, f"linear base types differ: "
                                      f"{dom.lin.parts[0]} vs {bag_ty.lin.parts[0]}")
        if not prefix_rel(dom.unr, bag_ty.unr):
            raise RuleViolation(rule, f"{dom.unr} is not an initial sublist of {bag_ty.unr}")

    def _esub(self, m: src.ESub, theta, avail):
        sigma, eta = _ann_pair(m.ann, "explicit substitution")
        j = src.count_occ(m.binder, m.body)
        if j > 0 and sigma is None:
            raise UnknownAnnotation("explicit substitution needs sigma in its annotation")
        if avail.shadowed(m.binder):
            raise RuleViolation("F:ex-sub", f"binder {m.binder} already in linear context")
        theta2 = theta.extended(m.binder, eta)
        token = avail.push(m.binder, sigma, j)
        ty, d1, body2, c1 = self.term(m.body, theta2, avail, None)
        avail.pop(token)
        c1 = [(n, t) for n, t in c1 if n != m.binder]
        bag_ty, d2, bag2, c2 = self.bag(m.bag, theta, avail)
        dom = TupleType(power(sigma, j) if j else OMEGA, eta)
        self._tuple_compat("F:ex-sub", dom, bag_ty)
        m2 = src.ESub(body2, bag2, m.binder, (sigma, eta), ty)
        d = Derivation("F:ex-sub", theta, _gamma_of(c1 + c2), str(m), ty, (d1, d2))
        return ty, d, m2, c1 + c2

    def _sharing(self, m: shr.Sharing, theta, avail, expected):
        k = len(m.shared)
        if k == 0:
            # FS:weak -- discharges an explicit omega entry for the variable
            if m.var not in avail.omega:
                raise RuleViolation("FS:weak", f"no omega assignment for {m.var}")
            del avail.omega[m.var]
            ty, d, body2, consumed = self.term(m.body, theta, avail, expected)
            m2 = shr.Sharing(body2, (), m.var)
            entry = [(m.var, None)]
            d2 = Derivation("FS:weak", theta, _gamma_of(consumed + entry), str(m), ty, (d,))
            return ty, d2, m2, consumed + entry
        tys = avail.entries.get(m.var, [])
        if len(tys) < k:
            raise RuleViolation("FS:share", f"{m.var} has {len(tys)} assignment(s), needs {k}")
        if len(set(map(repr, tys[:k]))) > 1:
            raise RuleViolation("FS:share", f"heterogeneous assignments for {m.var}")
        sigma = tys[0]
        for _ in range(k):
            avail.take(m.var, want=sigma)
        tokens = [avail.push(x, sigma, 1) for x in m.shared]
        ty, d, body2, consumed = self.term(m.body, theta, avail, expected)
        for token in reversed(tokens):
            avail.pop(token)
        consumed = [(n, t) for n, t in consumed if n not in set(m.shared)]
        entries = [(m.var, sigma)] * k
        m2 = shr.Sharing(body2, m.shared, m.var)
        d2 = Derivation("FS:share", theta, _gamma_of(consumed + entries), str(m), ty, (d,))
        return ty, d2, m2, consumed + entries

    def _shesub(self, m: shr.ShESub, theta, avail):
        sigma, eta = _ann_pair(m.ann, "sharing substitution")
        j = len(m.sharing.shared)
        if j > 0 and sigma is None:
            raise UnknownAnnotation("sharing substitution needs sigma in its annotation")
        x = m.binder
        if avail.shadowed(x):
            raise RuleViolation("FS:Esub", f"binder {x} already in linear context")
        theta2 = theta.extended(x, eta)
        token = avail.push(x, sigma, j)
        ty, d1, sh2, c1 = self.term(m.sharing, theta2, avail, None)
        avail.pop(token)
        c1 = [(n, t) for n, t in c1 if n != x]
        bag_ty, d2, bag2, c2 = self.bag(m.bag, theta, avail)
        dom = TupleType(power(sigma, j) if j else OMEGA, eta)
        self._tuple_compat("FS:Esub", dom, bag_ty)
        m2 = shr.ShESub(sh2, bag2, (sigma, eta), ty)
        d = Derivation("FS:Esub", theta, _gamma_of(c1 + c2), str(m), ty, (d1, d2))
        return ty, d, m2, c1 + c2

    def _linesub(self, m: shr.LinESub, theta, avail, expected):
        sigma, d2, subst2, c2 = self._term(m.subst, theta, avail, None)
        if avail.shadowed(m.var):
            raise RuleViolation("FS:Esub^l", f"binder {m.var} already in linear context")
        token = avail.push(m.var, sigma, 1)
        ty, d1, body2, c1 = self.term(m.body, theta, avail, expected)
        avail.pop(token)
        c1 = [(n, t) for n, t in c1 if n != m.var]
        m2 = shr.LinESub(body2, subst2, m.var, ty)
        d = Derivation("FS:Esub^l", theta, _gamma_of(c1 + c2), str(m), ty, (d1, d2))
        return ty, d, m2, c1 + c2

    def _unresub(self, m: shr.UnrESub, theta, avail, expected):
        if m.ann is None:
            raise UnknownAnnotation("unrestricted substitution needs an eta annotation")
        eta = m.ann
        if avail.shadowed(m.var) or theta.get(m.var) is not None:
            pass  # shadowing of unrestricted names is harmless under renaming
        theta2 = theta.extended(m.var, eta)
        ty, d1, body2, c1 = self.term(m.body, theta2, avail, expected)
        eps, d2, slots2 = self.unr_zone(m.slots, theta)
        if not prefix_rel(eta, eps):
            raise RuleViolation("FS:Esub^!", f"{eta} is not an initial sublist of {eps}")
        m2 = shr.UnrESub(body2, slots2, m.var, eta, ty)
        d = Derivation("FS:Esub^!", theta, _gamma_of(c1), str(m), ty, (d1,) + d2)
        return ty, d, m2, c1

    # -- bags ----------------------------------------------------------------

    def bag(self, b: Bag, theta, avail):
        """Returns (TupleType, derivation, elaborated bag, consumed)."""
        consumed = []
        elem_tys: List[StrictType] = []
        elem_ds: List[Derivation] = []
        lin2: List = []
        sigma: Optional[StrictType] = None
        for t in b.lin:
            ty, d, t2, c = self.term(t, theta, avail, sigma)
            if sigma is None:
                sigma = ty
            elem_tys.append(ty)
            elem_ds.append(d)
            lin2.append(t2)
            consumed.extend(c)
        eps, slot_ds, unr2 = self.unr_zone(b.unr, theta)
        pi = MultisetType(tuple(elem_tys))
        ty = TupleType(pi, eps)
        b2 = Bag(tuple(lin2), unr2)
        d = Derivation("F:bag", theta, _gamma_of(consumed), str(b), ty,
                       tuple(elem_ds) + slot_ds)
        return ty, d, b2, consumed

    def unr_zone(self, slots, theta):
        """Type the unrestricted zone: a non-empty list of slots."""
        if not slots:
            raise RuleViolation("F:bag", "unrestricted zone must have at least one slot")
        tys: List[StrictType] = []
        ds: List[Derivation] = []
        out: List = []
        for s in slots:
            if isinstance(s, Empty):
                if s.ann is None:
                    raise UnknownAnnotation("empty unrestricted slot needs a type annotation")
                tys.append(s.ann)
                ds.append(Derivation("F:1^!", theta, (), "_", s.ann))
                out.append(s)
            else:
                sub = _Avail(LinCtx())
                ty, d, t2, c = self.term(s.term, theta, sub, None)
                sub.assert_clear("F:bag^!")
                tys.append(ty)
                ds.append(Derivation("F:bag^!", theta, (), str(s.term), ty, (d,)))
                out.append(Full(t2))
        return ListType(tuple(tys)), tuple(ds), tuple(out)


# ---------------------------------------------------------------------------
# Public API


def apply_annotations(m, table: Dict[str, object], path: Tuple[int, ...] = ()):
    """Attach a path-keyed annotation table onto a term's nodes.

    Paths are dot-joined child indexes; children are ordered as: abstraction
    [body]; application [fun, bag]; substitutions [body, bag-or-subst]; bags
    list linear elements then unrestricted slots.
    """
    key = ".".join(map(str, path))
    ann = table.get(key)
    if isinstance(m, src.Abs):
        return src.Abs(m.binder, apply_annotations(m.body, table, path + (0,)),
                       ann if ann is not None else m.ann)
    if isinstance(m, src.App):
        return src.App(apply_annotations(m.fun, table, path + (0,)),
                       apply_annotations(m.arg, table, path + (1,)), m.res)
    if isinstance(m, src.ESub):
        return src.ESub(apply_annotations(m.body, table, path + (0,)),
                        apply_annotations(m.bag, table, path + (1,)),
                        m.binder, ann if ann is not None else m.ann, m.res)
    if isinstance(m, src.Fail):
        return src.Fail(m.vars, ann if ann is not None else m.ann)
    if isinstance(m, Bag):
        lin = tuple(apply_annotations(t, table, path + (i,)) for i, t in enumerate(m.lin))
        unr = []
        for i, s in enumerate(m.unr):
            p = path + (len(m.lin) + i,)
            if isinstance(s, Empty):
                a = table.get(".".join(map(str, p)))
                unr.append(Empty(a if a is not None else s.ann))
            else:
                unr.append(Full(apply_annotations(s.term, table, p)))
        return Bag(lin, tuple(unr))
    return m


def wf_check_src(theta: UnrCtx, gamma: LinCtx, e, tau: StrictType,
                 ann: Optional[Dict[str, object]] = None,
                 strict: bool = False) -> Derivation:
    """Check a source expression; returns the derivation or raises WfFailure."""
    d, _ = _check(theta, gamma, e, tau, ann, strict)
    return d


def wf_check_shar(theta: UnrCtx, gamma: LinCtx, e, tau: StrictType,
                  ann: Optional[Dict[str, object]] = None,
                  strict: bool = False) -> Derivation:
    """Check a sharing-calculus expression; same contract as wf_check_src."""
    d, _ = _check(theta, gamma, e, tau, ann, strict)
    return d


def elaborate(theta: UnrCtx, gamma: LinCtx, e, tau: StrictType,
              ann: Optional[Dict[str, object]] = None):
    """Check and return a copy of the subject with every node type-decorated."""
    _, e2 = _check(theta, gamma, e, tau, ann, strict=False)
    return e2


def _check(theta, gamma, e, tau, ann, strict):
    checker = _Checker(theta, strict=strict)
    if not isinstance(e, Expression):
        e = Expression.of(e)
    if ann:
        e = Expression([(apply_annotations(t, ann), m) for t, m in e.summands])
    return checker.check_expression(e, gamma, tau)


def is_wf(theta, gamma, e, tau, ann=None, strict=False) -> bool:
    try:
        _check(theta, gamma, e, tau, ann, strict)
        return True
    except WfFailure:
        return False
