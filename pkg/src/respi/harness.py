"""Empirical verification of the metatheory: the diamond property, subject
reduction, translation type preservation, operational completeness and
soundness, and success sensitivity. Every check is bounded and reports
refutations separately from budget exhaustion; reports are reproducible from
the seed and the budgets alone.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import sharing as shr
from . import source as src
from . import spi
from .source import Abs, App, Bag, Empty, ESub, Expression, Fail, Full, LinVar, Success, UnrVar
from .pienc import encode_judgment, encode_term_pi
from .shareenc import encode_closed
from .types import (Arrow, ListType, LinCtx, MultisetType, OMEGA, StrictType,
                    TupleType, Unit, UnrCtx)
from .wellformed import WfFailure, _Checker, wf_check_shar, wf_check_src


@dataclass
class Report:
    prop: str
    checked: int = 0
    violations: List[str] = field(default_factory=list)
    inconclusive: int = 0
    notes: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def merge(self, other: "Report") -> None:
        self.checked += other.checked
        self.violations.extend(other.violations)
        self.inconclusive += other.inconclusive
        self.notes.extend(other.notes)

    def to_text(self) -> str:
        status = "ok" if self.ok else "REFUTED"
        line = (f"{self.prop}: {status} ({self.checked} checked, "
                f"{len(self.violations)} violations, {self.inconclusive} inconclusive)")
        return "\n".join([line] + [f"  ! {v}" for v in self.violations[:20]])

    def to_json(self) -> dict:
        return {"property": self.prop, "ok": self.ok, "checked": self.checked,
                "violations": self.violations, "inconclusive": self.inconclusive,
                "notes": self.notes}


def _step_fn(e: Expression):
    head_term = e.summands[0][0]
    return shr.step_s if isinstance(head_term, shr.STerm) else src.step


# ---------------------------------------------------------------------------
# Diamond


def diamond_check(e: Expression, depth: int = 2) -> Report:
    """Any two distinct one-step reducts rejoin in one step; checked at every
    expression reachable within depth-2 steps."""
    rep = Report("diamond")
    stepper = _step_fn(e)
    frontier = [e]
    seen = {e.key()}
    for _ in range(max(depth - 1, 1)):
        nxt = []
        for cur in frontier:
            reducts = [x for _, x in stepper(cur)]
            rep.checked += 1
            for i in range(len(reducts)):
                for j in range(i + 1, len(reducts)):
                    a, b = reducts[i], reducts[j]
                    if a == b:
                        continue
                    succ_a = {x.key() for _, x in stepper(a)}
                    succ_b = {x.key() for _, x in stepper(b)}
                    if not (succ_a & succ_b):
                        rep.violations.append(f"no join for reducts of {cur}")
            for r in reducts:
                if r.key() not in seen:
                    seen.add(r.key())
                    nxt.append(r)
        frontier = nxt
    return rep


# ---------------------------------------------------------------------------
# Subject reduction


def sr_check(theta: UnrCtx, gamma: LinCtx, e: Expression, tau: StrictType,
             ann: Optional[dict] = None, budget: int = 6) -> Report:
    """Every expression along every reduction path re-checks at the same
    judgment, with annotations transported through the steps."""
    rep = Report("sr")
    checker = _Checker(theta)
    if not isinstance(e, Expression):
        e = Expression.of(e)
    try:
        _, e0 = checker.check_expression(e, gamma, tau)
    except WfFailure as ex:
        rep.violations.append(f"initial judgment fails: {ex}")
        return rep
    stepper = _step_fn(e0)
    frontier = [e0]
    seen = {e0.key()}
    for _ in range(budget):
        nxt = []
        for cur in frontier:
            for rule, red in stepper(cur):
                rep.checked += 1
                try:
                    checker.check_expression(red, gamma, tau)
                except WfFailure as ex:
                    rep.violations.append(f"{rule} broke the judgment on {red}: {ex}")
                    continue
                if red.key() not in seen:
                    seen.add(red.key())
                    nxt.append(red)
        frontier = nxt
    return rep


# ---------------------------------------------------------------------------
# Operational completeness / soundness for the process translation


def completeness_check(n: Expression, budget: int = 30, max_states: int = 6000) -> Report:
    """Each single step of a closed sharing-calculus expression is matched by
    the process translation up to structural congruence."""
    rep = Report("complete")
    p0 = encode_term_pi(n)
    for rule, m in shr.step_s(n):
        rep.checked += 1
        target = spi.canon_key(encode_term_pi(m))
        if spi.canon_key(p0) == target:
            continue
        found = False
        frontier = [spi.canon(p0)]
        seen = {spi.canon_key(p0)}
        for _ in range(budget):
            nxt = []
            for q in frontier:
                for r in spi.pi_step(q):
                    k = spi._serialize(r, {})
                    if k in seen:
                        continue
                    seen.add(k)
                    if k == target:
                        found = True
                        break
                    nxt.append(r)
                if found:
                    break
            if found or len(seen) > max_states:
                break
            frontier = nxt
        if not found:
            rep.inconclusive += 1
            rep.notes.append(f"budget exhausted matching {rule} step of {n}")
    return rep


def soundness_check(n: Expression, probe_steps: int = 5, budget: int = 30,
                    rng: Optional[random.Random] = None,
                    max_states: int = 6000) -> Report:
    """A random process reduct of the translation can always rejoin the
    translation of some reduct (modulo the precongruence) of the source."""
    rep = Report("sound")
    rng = rng or random.Random(0)
    p0 = spi.canon(encode_term_pi(n))
    q = p0
    for _ in range(rng.randrange(probe_steps + 1)):
        opts = spi.pi_step(q)
        if not opts:
            break
        q = opts[rng.randrange(len(opts))]
    rep.checked += 1
    # lambda-side targets: reducts under reduction interleaved with the
    # precongruence, a few steps deep
    targets = set()
    lam_seen = {n.key()}
    frontier = [n]
    for _ in range(probe_steps + 2):
        nxt = []
        for cur in frontier:
            targets.add(spi.canon_key(encode_term_pi(cur)))
            for variant in _preceq_variants(cur):
                targets.add(spi.canon_key(encode_term_pi(variant)))
            for _, red in shr.step_s(cur):
                if red.key() not in lam_seen:
                    lam_seen.add(red.key())
                    nxt.append(red)
        frontier = nxt
    for cur in frontier:
        targets.add(spi.canon_key(encode_term_pi(cur)))
    if spi.canon_key(q) in targets:
        return rep
    frontier = [q]
    seen = {spi.canon_key(q)}
    for _ in range(budget):
        nxt = []
        for r in frontier:
            for s in spi.pi_step(r):
                k = spi._serialize(s, {})
                if k in seen:
                    continue
                seen.add(k)
                if k in targets:
                    return rep
                nxt.append(s)
        if len(seen) > max_states:
            break
        frontier = nxt
    rep.inconclusive += 1
    rep.notes.append(f"no rejoin found from probe of {n}")
    return rep


def _preceq_variants(e: Expression, budget: int = 40) -> List[Expression]:
    variants: List[Expression] = []
    for idx, (t, mult) in enumerate(e.summands):
        seen = {shr.alpha_key(t): t}
        stack = [t]
        while stack and len(seen) < budget:
            cur = stack.pop()
            for nxt in shr._preceq_all_positions(cur):
                k = shr.alpha_key(nxt)
                if k not in seen:
                    seen[k] = nxt
                    stack.append(nxt)
        for k, term in seen.items():
            if k == shr.alpha_key(t):
                continue
            rest = list(e.summands[:idx] + e.summands[idx + 1:])
            if mult > 1:
                rest.append((t, mult - 1))
            variants.append(Expression(rest + [(term, 1)]))
    return variants


# ---------------------------------------------------------------------------
# Success sensitivity


def _expr_success(e: Expression, stepper, budget: int) -> Tuple[bool, bool]:
    """(success, conclusive): reachability of a success-headed summand."""
    def headed(cur: Expression) -> bool:
        for t in cur.terms():
            h = shr.head_s(t) if isinstance(t, shr.STerm) else src.head(t)
            if isinstance(h, (src.Success, shr.SSuccess)):
                return True
            if isinstance(t, shr.STerm):
                for k, variant in _closure_terms(t, 40).items():
                    hv = shr.head_s(variant)
                    if isinstance(hv, shr.SSuccess):
                        return True
        return False

    frontier = [e]
    seen = {e.key()}
    if headed(e):
        return True, True
    for _ in range(budget):
        nxt = []
        for cur in frontier:
            for _, red in stepper(cur):
                if red.key() in seen:
                    continue
                seen.add(red.key())
                if headed(red):
                    return True, True
                nxt.append(red)
        frontier = nxt
        if not frontier:
            return False, True  # space exhausted: conclusively unsuccessful
    return False, False


def _closure_terms(t, budget: int) -> Dict:
    seen = {shr.alpha_key(t): t}
    stack = [t]
    while stack and len(seen) < budget:
        cur = stack.pop()
        for nxt in shr._preceq_all_positions(cur):
            k = shr.alpha_key(nxt)
            if k not in seen:
                seen[k] = nxt
                stack.append(nxt)
    return seen


def success_sensitivity_check(e: Expression, budget_lambda: int = 20,
                              budget_pi: int = 30) -> Report:
    """Source-side and process-side success verdicts agree (bounded; budget
    exhaustion on either side is inconclusive, never a failure)."""
    rep = Report("success")
    rep.checked += 1
    lam_ok, lam_concl = _expr_success(e, _step_fn(e), budget_lambda)
    shar = encode_closed(e)
    if not isinstance(shar, Expression):
        shar = Expression.of(shar)
    p = encode_term_pi(shar)
    pi_ok = spi.success_pi(p, budget_pi)
    pi_concl = pi_ok or _pi_space_exhausted(p, budget_pi)
    if lam_concl and pi_concl:
        if lam_ok != pi_ok:
            rep.violations.append(f"success disagreement on {e}: "
                                  f"lambda={lam_ok}, pi={pi_ok}")
    else:
        rep.inconclusive += 1
    return rep


def _pi_space_exhausted(p: spi.Process, budget: int, max_states: int = 4000) -> bool:
    frontier = [spi.canon(p)]
    seen = {spi.canon_key(p)}
    for _ in range(budget):
        nxt = []
        for q in frontier:
            for r in spi.pi_step(q):
                k = spi._serialize(r, {})
                if k not in seen:
                    seen.add(k)
                    nxt.append(r)
        if not nxt:
            return True
        if len(seen) > max_states:
            return False
        frontier = nxt
    return False


# ---------------------------------------------------------------------------
# Corpus


@dataclass
class CorpusItem:
    name: str
    term: object  # Term or Expression
    theta: Optional[UnrCtx] = None
    gamma: Optional[LinCtx] = None
    tau: Optional[StrictType] = None

    @property
    def typed(self) -> bool:
        return self.tau is not None

    def expression(self) -> Expression:
        return self.term if isinstance(self.term, Expression) else Expression.of(self.term)


U = Unit()
ETA_U = ListType((U,))
ID_TY = Arrow(TupleType(MultisetType((U,)), ETA_U), U)  # type of \y.y


def _id_term(v: str = "y") -> Abs:
    return Abs(v, LinVar(v), ann=(U, ETA_U))


def fixtures() -> List[CorpusItem]:
    """The named examples, instantiated with concrete closed resources."""
    N = _id_term("y")
    N2 = _id_term("w")
    Z = _id_term("z")
    slotN = Full(N)
    out: List[CorpusItem] = []

    def typed(name, term, tau):
        out.append(CorpusItem(name, term, UnrCtx(), LinCtx(), tau))

    def untyped(name, term):
        out.append(CorpusItem(name, term))

    eta_id = ListType((ID_TY,))
    typed("m1", App(Abs("x", LinVar("x"), ann=(ID_TY, eta_id)),
                    Bag((N,), (Full(Z),))), ID_TY)
    typed("m2", App(Abs("x", LinVar("x"), ann=(ID_TY, eta_id)),
                    Bag((N, N2), (Full(Z),))), ID_TY)
    typed("m3", App(Abs("x", UnrVar("x", 1), ann=(None, ETA_U)),
                    Bag((N,), (Empty(U),))), U)
    typed("m4", App(Abs("x", UnrVar("x", 1), ann=(None, eta_id)),
                    Bag((), (slotN, Full(Z)))), ID_TY)
    typed("m5", App(Abs("x", UnrVar("x", 1), ann=(None, eta_id)),
                    Bag((), (Empty(ID_TY), Full(Z)))), ID_TY)
    typed("m6", App(Abs("x", UnrVar("x", 2), ann=(None, ListType((ID_TY, ID_TY)))),
                    Bag((), (slotN, Full(Z)))), ID_TY)

    delta1 = Abs("x", App(LinVar("x"), Bag((LinVar("x"),), (Empty(),))))
    untyped("delta1", delta1)
    untyped("delta1_self", App(delta1, Bag((delta1,), (Empty(),))))
    delta3 = Abs("x", App(UnrVar("x", 1), Bag((), (Full(UnrVar("x", 1)), Full(UnrVar("x", 1))))))
    untyped("delta3", delta3)
    delta4 = Abs("x", App(UnrVar("x", 1), Bag((LinVar("x"),), (Empty(),))))
    untyped("delta4", delta4)
    delta5 = Abs("x", App(UnrVar("x", 2), Bag((), (Full(UnrVar("x", 1)), Full(UnrVar("x", 2))))))
    untyped("delta5", delta5)
    delta6 = Abs("x", App(UnrVar("x", 1), Bag((), (Full(UnrVar("x", 1)), Full(UnrVar("x", 2))))))
    untyped("delta6", delta6)

    eta7 = ListType((U, Arrow(TupleType(OMEGA, ListType((U, U))), U)))
    delta7 = Abs("x", App(UnrVar("x", 2), Bag((), (Full(UnrVar("x", 1)), Full(UnrVar("x", 1))))),
                 ann=(None, eta7))
    typed("delta7", delta7, Arrow(TupleType(OMEGA, eta7), U))

    untyped("omega5", App(delta5, Bag((), (Full(delta5), Full(delta5)))))
    untyped("omega56", App(delta5, Bag((), (Full(delta5), Full(delta6)))))
    untyped("omega65", App(delta6, Bag((), (Full(delta5), Full(delta6)))))
    d7p = Abs("x", App(UnrVar("x", 2), Bag((), (Full(UnrVar("x", 1)), Full(UnrVar("x", 1))))))
    untyped("omega7", App(d7p, Bag((), (Full(d7p), Full(d7p)))))

    typed("fail0", Fail((), U), U)
    typed("fail_abs", Abs("x", Fail(("x",), U), ann=(U, ETA_U)),
          Arrow(TupleType(MultisetType((U,)), ETA_U), U))
    typed("ok0", Success(), U)
    typed("ok_app", App(Abs("x", Success(), ann=(None, ETA_U)),
                        Bag((), (Empty(U),))), U)
    ok_ty = Arrow(TupleType(OMEGA, ETA_U), U)  # \y.ok discards its resource
    typed("ok_id", App(Abs("x", LinVar("x"), ann=(ok_ty, eta_id)),
                       Bag((Abs("y", Success(), ann=(None, ETA_U)),), (Full(Z),))),
          ok_ty)
    return out


class CorpusGen:
    """Deterministic seeded generator of annotated well-formed closed terms."""

    def __init__(self, max_depth: int = 4, max_bag: int = 3, seed: int = 0):
        if max_bag > 4:
            raise ValueError("bag sizes above 4 explode the permutation sums")
        self.max_depth = max_depth
        self.max_bag = max_bag
        self.rng = random.Random(seed)
        self.counter = 0

    def _name(self) -> str:
        self.counter += 1
        return f"v{self.counter}"

    def value(self, depth: int) -> Tuple[src.Term, StrictType]:
        """A closed well-formed term of arrow type."""
        if depth <= 0 or self.rng.random() < 0.4:
            v = self._name()
            return Abs(v, LinVar(v), ann=(U, ETA_U)), ID_TY
        return self.app_term(depth)

    def app_term(self, depth: int) -> Tuple[src.Term, StrictType]:
        kind = self.rng.randrange(4)
        x = self._name()
        if kind == 0:
            # linear identity-like application, occurrence count may mismatch
            arg, aty = self.value(depth - 1)
            k = self.rng.randrange(0, self.max_bag + 1)
            elems = tuple(arg for _ in range(k))  # one type, so the bag stays homogeneous
            fun = Abs(x, LinVar(x), ann=(aty, ListType((aty,))))
            bag = Bag(elems, (Full(self.value(depth - 1)[0]),))
            return App(fun, bag), aty
        if kind == 1:
            # unrestricted projection
            n = self.rng.randrange(1, 3)
            i = self.rng.randrange(1, n + 1)
            slots = []
            slot_tys = []
            for _ in range(n):
                if self.rng.random() < 0.3:
                    slots.append(Empty(ID_TY))
                    slot_tys.append(ID_TY)
                else:
                    v, vt = self.value(depth - 1)
                    slots.append(Full(v))
                    slot_tys.append(vt)
            eta = ListType(tuple(slot_tys))
            fun = Abs(x, UnrVar(x, i), ann=(None, eta))
            return App(fun, Bag((), tuple(slots))), slot_tys[i - 1]
        if kind == 2:
            # discard: constant function, bag size may mismatch zero occurrences
            body, bty = self.value(depth - 1)
            k = self.rng.randrange(0, self.max_bag)
            arg, aty = self.value(depth - 1)
            fun = Abs(x, body, ann=(aty if k else None, ListType((aty,))))
            bag = Bag(tuple(arg for _ in range(k)), (Full(arg),))
            return App(fun, bag), bty
        # explicit substitution written directly
        body, bty = self.value(depth - 1)
        k = self.rng.randrange(0, self.max_bag)
        arg, aty = self.value(depth - 1)
        sub = ESub(body, Bag(tuple(arg for _ in range(k)), (Full(arg),)), x,
                   ann=(aty if k else None, ListType((aty,))))
        return sub, bty

    def items(self, count: int) -> List[CorpusItem]:
        out = []
        for i in range(count):
            t, ty = self.value(self.max_depth)
            out.append(CorpusItem(f"gen{i}", t, UnrCtx(), LinCtx(), ty))
        return out


def corpus_gen(max_depth: int = 4, max_bag: int = 3, seed: int = 0,
               count: int = 200, with_fixtures: bool = True) -> List[CorpusItem]:
    items = fixtures() if with_fixtures else []
    gen = CorpusGen(max_depth, max_bag, seed)
    items.extend(gen.items(count))
    return items


def typed_items(items: Sequence[CorpusItem]) -> List[CorpusItem]:
    return [it for it in items if it.typed]
