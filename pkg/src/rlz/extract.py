"""Proof size, input matching, and typing derivations from good realizers.

The reconstruction mirrors the completeness argument: peel the arrows and
quantifiers of the goal by applying fresh variables, insist on a
variable-headed neutral at atomic goals, match its inputs against the
head's type and recurse on the arguments.  The derivation is assembled for
the eta-long reconstruction and then contracted back to the beta-normal
form by dropping the variables that were only introduced for expansion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .reduction import FuelExhausted
from .syntax import (
    EMPTY_CTX, App, Arrow, Eig, ForAll, KindCtx, Lam, Level, Metaterm, RlzError, TApp,
    TVar, TyApp, TyLam, Type, Var, all_names, alpha_key, canon, free_names, fresh_name,
    is_pure, is_type, nf_type, print_term, print_type, spine, strip_annotations,
    substitute, type_size, type_spine,
)
from .typecheck import TypingDerivation, _node, explain
from .verify import DEFAULT_FUEL, realizes

Input = object  # a Metaterm (term input) or a Type (type input)
InputSeq = Sequence[Input]


class NotRealizer(RlzError):
    """The verifier does not accept the candidate."""


class NotPure(RlzError):
    pass


class NotNormal(RlzError):
    pass


class InternalContradiction(RlzError):
    """Reached a state the completeness argument rules out; an engine bug."""


# -- input matching ----------------------------------------------------------

@dataclass(frozen=True)
class MatchResult:
    arg_types: tuple
    residual: Type


def match_inputs(level: Level, a: Type, inputs: InputSeq) -> Optional[MatchResult]:
    """The matching relation: term inputs consume arrows, type inputs instantiate foralls."""
    norm = nf_type if level is Level.FOMEGA else (lambda t: t)
    cur = norm(a)
    out = []
    for i in inputs:
        if is_type(i):
            if not isinstance(cur, ForAll):
                return None
            out.append(i)
            cur = norm(substitute(cur.body, {cur.binder: i}))
        else:
            if not isinstance(cur, Arrow):
                return None
            out.append(cur.dom)
            cur = cur.cod
    return MatchResult(tuple(out), cur)


# -- beta normalization ------------------------------------------------------

class Budget:
    """A fuel counter shared by every sub-computation of one extraction."""

    def __init__(self, fuel: int):
        self.left = fuel

    def take(self, n: int = 1) -> None:
        self.left -= n
        if self.left < 0:
            raise FuelExhausted("fuel exhausted")


def beta_normalize(m: Metaterm, fuel: int = DEFAULT_FUEL, level: Level = Level.F,
                   budget: Optional[Budget] = None) -> Metaterm:
    """Normal-order beta normalization of a pure metaterm.

    Pseudo-redexes (a term abstraction given a type, or a type abstraction
    given a term) do not reduce and are left in place.
    """
    if not is_pure(m):
        raise NotPure(f"not a pure term: {print_term(m)}")
    budget = budget or Budget(fuel)
    m = strip_annotations(m)
    if level is Level.FOMEGA:
        m = canon(m)

    def whnf(t):
        head, args = spine(t)
        while args:
            first = args[0]
            if isinstance(head, Lam) and not is_type(first):
                budget.take()
                head = substitute(head.body, {head.binder: first}, level)
            elif isinstance(head, TyLam) and is_type(first):
                budget.take()
                head = substitute(head.body, {head.binder: first}, level)
            else:
                break
            args = args[1:]
            h2, more = spine(head)
            head, args = h2, more + args
        return head, args

    def nf(t):
        head, args = whnf(t)
        if isinstance(head, Lam):
            head = Lam(head.binder, nf(head.body))
        elif isinstance(head, TyLam):
            head = TyLam(head.binder, head.kind, nf(head.body))
        out = head
        for a in args:
            out = TyApp(out, a) if is_type(a) else App(out, nf(a))
        return out

    return nf(m)


def is_normal(m: Metaterm) -> bool:
    """No beta redex anywhere; pseudo-redexes are allowed."""
    if isinstance(m, Var):
        return True
    if isinstance(m, (Lam, TyLam)):
        return is_normal(m.body)
    if isinstance(m, App):
        return not isinstance(m.fun, Lam) and is_normal(m.fun) and is_normal(m.arg)
    if isinstance(m, TyApp):
        return not isinstance(m.fun, TyLam) and is_normal(m.fun)
    return False


# -- proof size --------------------------------------------------------------

def _env_names(env: Mapping[str, Type]) -> set:
    out: set = set()
    for b in env.values():
        _, tv, eg = free_names(b)
        out |= tv | eg
    return out


def proof_size(level: Level, env: Mapping[str, Type], nf: Metaterm, a: Type) -> int:
    """The size measure driving the completeness recursion."""
    if not is_pure(nf):
        raise NotPure(print_term(nf))
    nf = strip_annotations(nf)
    if not is_normal(nf):
        raise NotNormal(print_term(nf))
    norm = nf_type if level is Level.FOMEGA else (lambda t: t)
    return _sig(level, dict(env), nf, norm(a), norm)


def _sig(level, env, n, a, norm) -> int:
    if isinstance(n, Lam):
        if not isinstance(a, Arrow):
            return 0
        env2 = dict(env)
        env2.pop(n.binder, None)
        env2[n.binder] = a.dom
        return _sig(level, env2, n.body, a.cod, norm)
    if isinstance(n, TyLam):
        if not isinstance(a, ForAll):
            return 0
        t = fresh_name(n.binder, _env_names(env) | free_names(n)[1] | free_names(a)[1])
        body = substitute(n.body, {n.binder: TVar(t)})
        return _sig(level, env, body, norm(substitute(a.body, {a.binder: TVar(t)})), norm)
    head, inputs = spine(n)
    if not isinstance(head, Var) or head.name not in env:
        return 0
    m = match_inputs(level, env[head.name], inputs)
    if m is None:
        return 0
    total = min(type_size(a), type_size(m.residual))
    for i, b in zip(inputs, m.arg_types):
        if not is_type(i):
            total += _sig(level, env, i, b, norm)
    return total


# -- reconstruction ----------------------------------------------------------

@dataclass(frozen=True)
class ExtractResult:
    normal_form: Metaterm
    derivation: TypingDerivation
    eta_long: Metaterm
    proof_size: int

    def to_json(self) -> dict:
        return {"normal_form": print_term(self.normal_form),
                "derivation": self.derivation.to_json(),
                "proof_size": self.proof_size,
                "eta_long": print_term(self.eta_long)}


def _drop_var(d: TypingDerivation, x: str) -> TypingDerivation:
    """Remove ``x`` from every environment of ``d``; ``x`` must be unused."""
    if d.rule == "Var" and d.term.name == x:
        raise InternalContradiction(f"expansion variable {x} is used")
    env = tuple((k, v) for k, v in d.env if k != x)
    prem = tuple(_drop_var(p, x) for p in d.premises)
    return TypingDerivation(d.level, d.rule, d.ctx, env, d.term, d.type, prem, d.side)


def _drop_tvar(d: TypingDerivation, t: str) -> TypingDerivation:
    def ctx_without(c: KindCtx) -> KindCtx:
        return KindCtx(tuple(e for e in c.tvars if e[0] != t), c.eigs)
    prem = tuple(_drop_tvar(p, t) for p in d.premises)
    return TypingDerivation(d.level, d.rule, ctx_without(d.ctx), d.env, d.term, d.type,
                            prem, d.side)


def _peel(d: TypingDerivation, rule: str) -> TypingDerivation:
    while d.rule == "Conv":
        d = d.premises[0]
    if d.rule != rule:
        raise InternalContradiction(f"expected {rule}, found {d.rule}")
    return d.premises[0]


class _Recon:
    def __init__(self, level: Level, budget: Budget):
        self.level = level
        self.budget = budget

    def norm(self, a: Type) -> Type:
        return nf_type(a) if self.level is Level.FOMEGA else a

    def teq(self, a: Type, b: Type) -> bool:
        return alpha_key(self.norm(a)) == alpha_key(self.norm(b))

    def conv(self, d: TypingDerivation, a: Type) -> TypingDerivation:
        if alpha_key(d.type) == alpha_key(a):
            return d
        if self.level is Level.FOMEGA and self.teq(d.type, a):
            return _node(self.level, "Conv", d.ctx, d.env_dict, d.term, a, [d])
        raise InternalContradiction(f"{print_type(d.type)} is not {print_type(a)}")

    def avoid(self, ctx, env, n, a) -> set:
        return ctx.names() | _env_names(env) | set(env) | all_names(n) | all_names(a)

    def run(self, ctx: KindCtx, env: dict, n: Metaterm, a: Type):
        """Returns a derivation of ``env |- n : a`` and the eta-long form of ``n``."""
        lv = self.level
        a = self.norm(a)
        if isinstance(a, Arrow):
            if isinstance(n, Lam):
                env2 = dict(env)
                env2.pop(n.binder, None)
                env2[n.binder] = a.dom
                body, eta = self.run(ctx, env2, n.body, a.cod)
                return (_node(lv, "AbsIntro", ctx, env, n, a, [body]), Lam(n.binder, eta))
            if isinstance(n, TyLam):
                raise InternalContradiction("type abstraction realizes an implication")
            x = fresh_name("x", self.avoid(ctx, env, n, a))
            env2 = dict(env)
            env2[x] = a.dom
            d, eta = self.run(ctx, env2, App(n, Var(x)), a.cod)
            d = self.conv(_drop_var(_peel(d, "AppElim"), x), a)
            return d, Lam(x, eta)
        if isinstance(a, ForAll):
            if lv is Level.ST:
                raise InternalContradiction("quantifier at ST")
            t = fresh_name(a.binder, self.avoid(ctx, env, n, a))
            ctx2 = ctx.extend_tvar(t, a.kind)
            body_a = self.norm(substitute(a.body, {a.binder: TVar(t)}))
            if isinstance(n, TyLam):
                if n.kind != a.kind:
                    raise InternalContradiction("kind annotation mismatch")
                body_n = substitute(n.body, {n.binder: TVar(t)}, lv)
                body, eta = self.run(ctx2, env, body_n, body_a)
                d = _node(lv, "AllIntro", ctx, env, n, a, [body], fresh=t)
                return d, TyLam(t, n.kind, eta)
            if isinstance(n, Lam):
                raise InternalContradiction("abstraction realizes a quantifier")
            d, eta = self.run(ctx2, env, TyApp(n, TVar(t)), body_a)
            d = self.conv(_drop_tvar(_peel(d, "AllElim"), t), a)
            return d, TyLam(t, a.kind, eta)
        return self.atomic(ctx, env, n, a)

    def atomic(self, ctx, env, n, a):
        lv = self.level
        head, _ = type_spine(a)
        if not isinstance(head, (Eig, TVar)):
            raise InternalContradiction(f"goal {print_type(a)} is not atomic")
        h, inputs = spine(n)
        if not isinstance(h, Var):
            raise InternalContradiction(f"{print_term(n)} is not variable-headed")
        if h.name not in env:
            raise InternalContradiction(f"head {h.name} is not in the environment")
        m = match_inputs(lv, env[h.name], inputs)
        if m is None or not self.teq(m.residual, a):
            raise InternalContradiction(f"{print_term(n)} does not match {print_type(a)}")
        d = _node(lv, "Var", ctx, env, h, env[h.name])
        cur = h
        eta = h
        for i, b in zip(inputs, m.arg_types):
            if is_type(i):
                f = d
                ft = self.norm(f.type)
                f = self.conv(f, ft)
                cur = TyApp(cur, i)
                raw = substitute(ft.body, {ft.binder: i})
                d = _node(lv, "AllElim", ctx, env, cur, raw, [f])
                if lv is Level.FOMEGA and alpha_key(nf_type(raw)) != alpha_key(raw):
                    d = _node(lv, "Conv", ctx, env, cur, nf_type(raw), [d])
                eta = TyApp(eta, i)
                continue
            v = realizes(lv, ctx, env, b, i, fuel=max(self.budget.left, 0), close=True)
            self.budget.take(v.steps)
            if v.exhausted:
                raise FuelExhausted("fuel exhausted verifying an argument")
            if not v.realized:
                raise InternalContradiction(f"argument {print_term(i)} does not realize"
                                            f" {print_type(b)}")
            x, ex = self.run(ctx, env, i, b)
            f = self.conv(d, self.norm(d.type))
            cur = App(cur, i)
            d = _node(lv, "AppElim", ctx, env, cur, f.type.cod, [f, x])
            eta = App(eta, ex)
        return self.conv(d, a), eta


def extract(level: Level, ctx: KindCtx, env: Mapping[str, Type], a: Type, m: Metaterm,
            fuel: int = DEFAULT_FUEL) -> ExtractResult:
    """Reconstruct a typing derivation for the beta-normal form of a good realizer."""
    if not is_pure(m):
        raise NotPure(f"not a pure term: {print_term(m)}")
    m = strip_annotations(m)
    env = dict(env)
    if level is Level.FOMEGA:
        a = nf_type(a)
        env = {k: nf_type(v) for k, v in env.items()}
    budget = Budget(fuel)
    v = realizes(level, ctx, env, a, m, fuel, close=True)
    budget.take(v.steps)
    if v.exhausted:
        raise FuelExhausted("fuel exhausted while verifying")
    if not v.realized:
        raise NotRealizer(f"verification is stuck at {print_term(v.final)}")
    nf = beta_normalize(m, level=level, budget=budget)
    d, eta = _Recon(level, budget).run(ctx, env, nf, a)
    problem = explain(d)
    if problem is not None:
        raise InternalContradiction(f"reconstructed derivation is invalid: {problem}")
    return ExtractResult(nf, d, eta, proof_size(level, env, nf, a))
