"""Kinding and bidirectional type checking with re-validating derivations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .syntax import (
    EMPTY_CTX, PROP, Ann, App, Arrow, Base, Eig, ForAll, Fresh, Gen, Guard,
    KArrow, Kind, KindCtx, Lam, Level, Metaterm, Prop, RlzError, TApp, TLam,
    TVar, TyApp, TyLam, Type, Var, Verif, alpha_key, canon, env_to_json,
    fresh_name, free_names, is_pure, nf_type, print_kind, print_term,
    print_type, strip_annotations, substitute, type_free,
)


class KindError(RlzError):
    pass


class UnboundName(KindError):
    pass


class KindMismatch(KindError):
    pass


class NotSynthesizable(RlzError):
    pass


class UnboundVariable(RlzError):
    pass


class ArgMismatch(RlzError):
    pass


# -- kinding -----------------------------------------------------------------

def kind_of(ctx: KindCtx, a: Type) -> Kind:
    """The unique kind of ``a`` under ``ctx``."""
    if isinstance(a, TVar):
        k = ctx.tvar_kind(a.name)
        if k is None:
            raise UnboundName(f"unbound type variable {a.name}")
        return k
    if isinstance(a, Eig):
        k = ctx.eig_kind(a.name)
        if k is None:
            raise UnboundName(f"unbound eigenvariable #{a.name}")
        return k
    if isinstance(a, Arrow):
        for part in (a.dom, a.cod):
            if kind_of(ctx, part) != PROP:
                raise KindMismatch(f"{print_type(part)} is not a proposition")
        return PROP
    if isinstance(a, ForAll):
        if kind_of(ctx.extend_tvar(a.binder, a.kind), a.body) != PROP:
            raise KindMismatch(f"body of {print_type(a)} is not a proposition")
        return PROP
    if isinstance(a, TLam):
        return KArrow(a.kind, kind_of(ctx.extend_tvar(a.binder, a.kind), a.body))
    fk = kind_of(ctx, a.fun)
    if not isinstance(fk, KArrow):
        raise KindMismatch(f"{print_type(a.fun)} of kind {print_kind(fk)} cannot be applied")
    ak = kind_of(ctx, a.arg)
    if ak != fk.dom:
        raise KindMismatch(f"{print_type(a.arg)} has kind {print_kind(ak)},"
                           f" expected {print_kind(fk.dom)}")
    return fk.cod


def is_prop(ctx: KindCtx, a: Type) -> bool:
    try:
        return kind_of(ctx, a) == PROP
    except KindError:
        return False


def well_kinded(ctx: KindCtx, m: Metaterm) -> bool:
    """Embedded generator/verifier types are propositions; type arguments kind-check."""
    try:
        _wk(ctx, m)
        return True
    except KindError:
        return False


def _wk(ctx: KindCtx, m: Metaterm) -> None:
    if isinstance(m, (Gen, Verif)):
        if kind_of(ctx, m.ty) != PROP:
            raise KindMismatch(f"{print_type(m.ty)} is not a proposition")
    if isinstance(m, TyApp):
        kind_of(ctx, m.arg)
    if isinstance(m, (Lam,)):
        _wk(ctx, m.body)
    elif isinstance(m, TyLam):
        _wk(ctx.extend_tvar(m.binder, m.kind), m.body)
    elif isinstance(m, Fresh):
        _wk(ctx.extend_eig(m.eig, m.kind), m.body)
    elif isinstance(m, App):
        _wk(ctx, m.fun)
        _wk(ctx, m.arg)
    elif isinstance(m, Guard):
        _wk(ctx, m.cond)
        _wk(ctx, m.then)
    elif isinstance(m, (TyApp,)):
        _wk(ctx, m.fun)
    elif isinstance(m, Verif):
        _wk(ctx, m.arg)
    elif isinstance(m, Ann):
        _wk(ctx, m.term)


def env_well_formed(ctx: KindCtx, env: dict, level: Level = Level.FOMEGA) -> bool:
    """Every assigned type is a proposition (always true below FOmega)."""
    if level is not Level.FOMEGA:
        return True
    for a in env.values():
        if kind_of(ctx, a) != PROP:
            return False
    return True


def default_ctx(ctx: KindCtx, *objs) -> KindCtx:
    """Declare as propositions the free names of ``objs`` missing from ``ctx``."""
    for o in objs:
        if isinstance(o, dict):
            vals = list(o.values())
        else:
            vals = [o]
        for v in vals:
            _, tv, eg = free_names(v)
            for e in sorted(eg):
                if ctx.eig_kind(e) is None:
                    ctx = ctx.extend_eig(e, PROP)
            for t in sorted(tv):
                if ctx.tvar_kind(t) is None:
                    ctx = ctx.extend_tvar(t, PROP)
    return ctx


# -- derivations -------------------------------------------------------------

RULES = ("Var", "AbsIntro", "AppElim", "AllIntro", "AllElim", "Conv")


@dataclass(frozen=True)
class TypingDerivation:
    level: Level
    rule: str
    ctx: KindCtx
    env: tuple  # ordered (name, Type) pairs
    term: Metaterm
    type: Type
    premises: tuple = ()
    side: tuple = ()  # (key, value) pairs, e.g. ("fresh", "a'")

    @property
    def env_dict(self) -> dict:
        return dict(self.env)

    def side_dict(self) -> dict:
        return dict(self.side)

    def size(self) -> int:
        return 1 + sum(p.size() for p in self.premises)

    def to_json(self) -> dict:
        out = {"rule": self.rule, "ctx": self.ctx.to_json(), "env": env_to_json(self.env_dict),
               "term": print_term(self.term), "type": print_type(self.type),
               "premises": [p.to_json() for p in self.premises]}
        if self.side:
            out["side"] = {k: str(v) for k, v in self.side}
        return out


def _node(level, rule, ctx, env, term, ty, premises=(), **side) -> TypingDerivation:
    return TypingDerivation(level, rule, ctx, tuple(env.items()), term, ty,
                            tuple(premises), tuple(sorted(side.items())))


@dataclass(frozen=True)
class Ok:
    derivation: TypingDerivation

    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class Fail:
    path: tuple
    reason: str

    def __bool__(self) -> bool:
        return False


CheckResult = Union[Ok, Fail]


class _CheckFailure(RlzError):
    def __init__(self, path, reason):
        super().__init__(reason)
        self.path = tuple(path)
        self.reason = reason


def _teq(level: Level, a: Type, b: Type) -> bool:
    return alpha_key(a) == alpha_key(b)


def _norm(level: Level, a: Type) -> Type:
    return nf_type(a) if level is Level.FOMEGA else a


def _env_tfree(env: dict) -> set:
    out: set = set()
    for a in env.values():
        tv, eg = type_free(a)
        out |= tv | eg
    return out


class _Checker:
    def __init__(self, level: Level):
        self.level = level

    def conv(self, d: TypingDerivation, target: Type, path) -> TypingDerivation:
        """Insert a conversion when ``d``'s type equals ``target`` only up to beta."""
        if _teq(self.level, d.type, target):
            return d
        if self.level is Level.FOMEGA and alpha_key(nf_type(d.type)) == alpha_key(nf_type(target)):
            return _node(self.level, "Conv", d.ctx, d.env_dict, d.term, target, [d])
        raise _CheckFailure(path, f"type mismatch: {print_type(d.type)} vs {print_type(target)}")

    def check(self, ctx, env, t, a, path=()) -> TypingDerivation:
        lv = self.level
        na = _norm(lv, a)
        if isinstance(t, Ann):
            d = self.check(ctx, env, t.term, _norm(lv, t.ty), path + ("ann",))
            return self.conv(d, a, path)
        if isinstance(t, Lam):
            if not isinstance(na, Arrow):
                raise _CheckFailure(path, f"abstraction checked against {print_type(a)}")
            env2 = {k: v for k, v in env.items() if k != t.binder}
            env2[t.binder] = na.dom
            body = self.check(ctx, env2, t.body, na.cod, path + (0,))
            d = _node(lv, "AbsIntro", ctx, env, strip_annotations(t), na, [body])
            return self.conv(d, a, path)
        if isinstance(t, TyLam):
            if lv is Level.ST:
                raise _CheckFailure(path, "type abstraction at ST")
            if not isinstance(na, ForAll) or na.kind != t.kind:
                raise _CheckFailure(path, f"type abstraction checked against {print_type(a)}")
            avoid = _env_tfree(env) | ctx.names() | free_names(t)[1] | free_names(na)[1]
            fresh = fresh_name(t.binder, avoid)
            ctx2 = ctx.extend_tvar(fresh, t.kind)
            body_t = substitute(t.body, {t.binder: TVar(fresh)}, lv)
            body_a = substitute(na.body, {na.binder: TVar(fresh)}, lv)
            body = self.check(ctx2, env, body_t, body_a, path + (0,))
            d = _node(lv, "AllIntro", ctx, env, strip_annotations(t), na, [body], fresh=fresh)
            return self.conv(d, a, path)
        d = self.synth(ctx, env, t, path)
        return self.conv(d, a, path)

    def synth(self, ctx, env, t, path=()) -> TypingDerivation:
        lv = self.level
        if isinstance(t, Var):
            if t.name not in env:
                raise _CheckFailure(path, f"unbound variable {t.name}")
            return _node(lv, "Var", ctx, env, t, env[t.name])
        if isinstance(t, Ann):
            return self.check(ctx, env, t.term, _norm(lv, t.ty), path + ("ann",))
        if isinstance(t, App):
            f = self.synth(ctx, env, t.fun, path + (0,))
            ft = _norm(lv, f.type)
            if not isinstance(ft, Arrow):
                raise _CheckFailure(path, f"applying a term of type {print_type(f.type)}")
            f = self.conv(f, ft, path)
            x = self.check(ctx, env, t.arg, ft.dom, path + (1,))
            return _node(lv, "AppElim", ctx, env, strip_annotations(t), ft.cod, [f, x])
        if isinstance(t, TyApp):
            if lv is Level.ST:
                raise _CheckFailure(path, "type application at ST")
            f = self.synth(ctx, env, t.fun, path + (0,))
            ft = _norm(lv, f.type)
            if not isinstance(ft, ForAll):
                raise _CheckFailure(path, f"instantiating a term of type {print_type(f.type)}")
            f = self.conv(f, ft, path)
            if lv is Level.FOMEGA:
                try:
                    k = kind_of(ctx, t.arg)
                except KindError as e:
                    raise _CheckFailure(path, str(e)) from None
                if k != ft.kind:
                    raise _CheckFailure(path, f"type argument of kind {print_kind(k)},"
                                              f" expected {print_kind(ft.kind)}")
            raw = substitute(ft.body, {ft.binder: t.arg})
            d = _node(lv, "AllElim", ctx, env, strip_annotations(t), raw, [f])
            if lv is Level.FOMEGA and alpha_key(nf_type(raw)) != alpha_key(raw):
                d = _node(lv, "Conv", ctx, env, d.term, nf_type(raw), [d])
            return d
        if isinstance(t, (Lam, TyLam)):
            raise _CheckFailure(path, "cannot synthesize a type for an unannotated abstraction")
        raise _CheckFailure(path, f"not a pure term: {print_term(t)}")


def check(level: Level, ctx: KindCtx, env: dict, t: Metaterm, a: Type) -> CheckResult:
    """Check ``t`` against ``a``; the derivation subject has annotations removed."""
    if not is_pure(t):
        return Fail((), "term is not pure")
    if level is Level.FOMEGA:
        try:
            if kind_of(ctx, a) != PROP:
                return Fail((), f"{print_type(a)} is not a proposition")
            if not env_well_formed(ctx, env):
                return Fail((), "environment is not well-formed")
        except KindError as e:
            return Fail((), str(e))
        t = canon(t)
        env = {k: nf_type(v) for k, v in env.items()}
    try:
        d = _Checker(level).check(ctx, dict(env), t, a)
    except _CheckFailure as e:
        return Fail(e.path, e.reason)
    return Ok(d)


def synth(level: Level, ctx: KindCtx, env: dict, t: Metaterm) -> tuple[Type, TypingDerivation]:
    """Synthesize the type of a neutral spine."""
    if level is Level.FOMEGA:
        t = canon(t)
    head = t
    while isinstance(head, (App, TyApp)):
        head = head.fun
    if isinstance(head, Var) and head.name not in env:
        raise UnboundVariable(head.name)
    if isinstance(head, (Lam, TyLam)):
        raise NotSynthesizable("unannotated redex head")
    try:
        d = _Checker(level).synth(ctx, dict(env), t)
    except _CheckFailure as e:
        raise ArgMismatch(f"{e.reason} at {e.path}") from None
    return d.type, d


# -- re-validation -----------------------------------------------------------

class InvalidDerivation(RlzError):
    pass


def validate(d: TypingDerivation) -> bool:
    try:
        _validate(d)
        return True
    except InvalidDerivation:
        return False


def explain(d: TypingDerivation) -> Optional[str]:
    """None if ``d`` validates, else the first violated condition."""
    try:
        _validate(d)
        return None
    except InvalidDerivation as e:
        return str(e)


def _req(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidDerivation(msg)


def _same_term(a: Metaterm, b: Metaterm) -> bool:
    return alpha_key(a) == alpha_key(b)


def _validate(d: TypingDerivation) -> None:
    lv = d.level
    env = d.env_dict
    teq = lambda a, b: alpha_key(a) == alpha_key(b)
    _req(is_pure(d.term) and not _has_ann(d.term), f"{d.rule}: subject is not pure")
    if lv is Level.FOMEGA and d.rule != "Conv":
        _req(is_prop(d.ctx, d.type), f"{d.rule}: conclusion type is not a proposition")
    for p in d.premises:
        _req(p.level is lv, "premise at a different level")
        _validate(p)
    r = d.rule
    if r == "Var":
        _req(not d.premises, "Var has no premises")
        _req(isinstance(d.term, Var) and d.term.name in env, "Var: variable not in environment")
        _req(teq(env[d.term.name], d.type), "Var: type differs from the environment")
    elif r == "AbsIntro":
        _req(len(d.premises) == 1 and isinstance(d.term, Lam), "AbsIntro: shape")
        (p,) = d.premises
        _req(isinstance(d.type, Arrow), "AbsIntro: type is not an arrow")
        expected = {k: v for k, v in env.items() if k != d.term.binder}
        expected[d.term.binder] = d.type.dom
        _req(_env_eq(p.env_dict, expected), "AbsIntro: premise environment")
        _req(p.ctx == d.ctx, "AbsIntro: kind context changed")
        _req(_same_term(p.term, d.term.body), "AbsIntro: premise subject")
        _req(teq(p.type, d.type.cod), "AbsIntro: premise type")
    elif r == "AppElim":
        _req(len(d.premises) == 2 and isinstance(d.term, App), "AppElim: shape")
        f, x = d.premises
        _req(isinstance(f.type, Arrow), "AppElim: function type is not an arrow")
        _req(_same_term(f.term, d.term.fun) and _same_term(x.term, d.term.arg), "AppElim: subjects")
        _req(teq(f.type.dom, x.type) and teq(f.type.cod, d.type), "AppElim: types")
        for p in (f, x):
            _req(_env_eq(p.env_dict, env) and p.ctx == d.ctx, "AppElim: contexts")
    elif r == "AllIntro":
        _req(lv is not Level.ST, "AllIntro at ST")
        _req(len(d.premises) == 1 and isinstance(d.term, TyLam), "AllIntro: shape")
        _req(isinstance(d.type, ForAll), "AllIntro: type is not a quantifier")
        (p,) = d.premises
        fresh = d.side_dict().get("fresh")
        _req(fresh is not None, "AllIntro: missing fresh name")
        _req(fresh not in _env_tfree(env), "AllIntro: variable free in the environment")
        _req(d.term.kind == d.type.kind, "AllIntro: kind annotation mismatch")
        _req(p.ctx == d.ctx.extend_tvar(fresh, d.type.kind), "AllIntro: premise kind context")
        _req(_env_eq(p.env_dict, env), "AllIntro: premise environment")
        _req(_same_term(p.term, substitute(d.term.body, {d.term.binder: TVar(fresh)}, lv)),
             "AllIntro: premise subject")
        _req(teq(p.type, substitute(d.type.body, {d.type.binder: TVar(fresh)}, lv)),
             "AllIntro: premise type")
    elif r == "AllElim":
        _req(lv is not Level.ST, "AllElim at ST")
        _req(len(d.premises) == 1 and isinstance(d.term, TyApp), "AllElim: shape")
        (p,) = d.premises
        _req(isinstance(p.type, ForAll), "AllElim: premise type is not a quantifier")
        _req(_same_term(p.term, d.term.fun), "AllElim: premise subject")
        _req(_env_eq(p.env_dict, env) and p.ctx == d.ctx, "AllElim: contexts")
        if lv is Level.FOMEGA:
            try:
                _req(kind_of(d.ctx, d.term.arg) == p.type.kind, "AllElim: argument kind")
            except KindError as e:
                raise InvalidDerivation(f"AllElim: {e}") from None
        _req(teq(d.type, substitute(p.type.body, {p.type.binder: d.term.arg})),
             "AllElim: conclusion is not the instance")
    elif r == "Conv":
        _req(lv is Level.FOMEGA, "Conv outside FOmega")
        _req(len(d.premises) == 1, "Conv: shape")
        (p,) = d.premises
        _req(_same_term(p.term, d.term) and _env_eq(p.env_dict, env) and p.ctx == d.ctx,
             "Conv: premise judgment")
        _req(is_prop(d.ctx, d.type) and is_prop(d.ctx, p.type), "Conv: types are not propositions")
        _req(teq(nf_type(p.type), nf_type(d.type)), "Conv: types are not beta-equal")
    else:
        raise InvalidDerivation(f"unknown rule {r}")


def _has_ann(m) -> bool:
    return strip_annotations(m) != m


def _env_eq(a: dict, b: dict) -> bool:
    return a.keys() == b.keys() and all(alpha_key(a[k]) == alpha_key(b[k]) for k in a)
