"""Rewrite rules, reduction strategies and simultaneous reduction."""

from __future__ import annotations

import enum
import itertools
import json
import random
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .syntax import (
    EMPTY_CTX, PROP, STAR, App, Arrow, Eig, ForAll, Fresh, Gen, Guard, KindCtx,
    Lam, Level, LevelError, Metaterm, RlzError, Star, TVar, TyApp, TyLam, Var,
    Verif, alpha_key, all_names, canon, free_eigs, print_term, substitute,
    type_spine,
)


class RuleTag(str, enum.Enum):
    Beta = "Beta"
    TyBeta = "TyBeta"
    GuardStar = "GuardStar"
    VerifEig = "VerifEig"
    GenImp = "GenImp"
    VerifImp = "VerifImp"
    GenAll = "GenAll"
    VerifAll = "VerifAll"
    FreshDrop = "FreshDrop"
    StExpand = "StExpand"

    def __str__(self) -> str:
        return self.value


class Outcome(str, enum.Enum):
    Normal = "Normal"
    StarReached = "StarReached"
    FuelExhausted = "FuelExhausted"

    def __str__(self) -> str:
        return self.value


Path = tuple


def path_str(path: Path) -> str:
    return "root" if not path else ".".join(map(str, path))


def parse_path(text: str) -> Path:
    return () if text in ("", "root") else tuple(int(p) for p in text.split("."))


@dataclass(frozen=True)
class Step:
    rule: RuleTag
    position: Path
    before: Metaterm
    after: Metaterm


@dataclass
class Trace:
    level: Level
    start: Metaterm
    strategy: str = "wh"
    fuel: int = 0
    steps: list = field(default_factory=list)
    outcome: Outcome = Outcome.Normal

    @property
    def final(self) -> Metaterm:
        return self.steps[-1].after if self.steps else self.start

    @property
    def contractions(self) -> int:
        """Number of recorded steps that contracted a redex."""
        return sum(1 for s in self.steps if s.rule is not RuleTag.StExpand)

    def jsonl(self) -> Iterator[str]:
        yield json.dumps({"level": self.level.value, "strategy": self.strategy,
                          "fuel": self.fuel})
        for i, s in enumerate(self.steps):
            yield json.dumps({"step": i, "rule": s.rule.value,
                              "pos": path_str(s.position), "term": print_term(s.after)})
        yield json.dumps({"outcome": self.outcome.value})


class FuelExhausted(RlzError):
    pass


# -- ST elaboration ----------------------------------------------------------

def expand_st(m: Metaterm) -> Metaterm:
    """Unfold generators and verifiers at compound ST types."""
    if isinstance(m, Gen):
        return _gen_st(m.ty)
    if isinstance(m, Verif):
        return _ver_st(m.ty, expand_st(m.arg))
    if isinstance(m, Lam):
        return Lam(m.binder, expand_st(m.body))
    if isinstance(m, App):
        return App(expand_st(m.fun), expand_st(m.arg))
    if isinstance(m, Guard):
        return Guard(expand_st(m.cond), expand_st(m.then))
    if isinstance(m, (Var, Star)):
        return m
    raise LevelError(f"{type(m).__name__} is not available at ST")


def _gen_st(t) -> Metaterm:
    if isinstance(t, Eig):
        return Gen(t)
    if isinstance(t, Arrow):
        return Lam("x", Guard(_ver_st(t.dom, Var("x")), _gen_st(t.cod)))
    raise LevelError("ST types use only eigenvariables and arrows")


def _ver_st(t, m: Metaterm) -> Metaterm:
    if isinstance(t, Eig):
        return Verif(t, m)
    if isinstance(t, Arrow):
        return _ver_st(t.cod, App(m, _gen_st(t.dom)))
    raise LevelError("ST types use only eigenvariables and arrows")


def is_st_core(m: Metaterm) -> bool:
    if isinstance(m, (Gen, Verif)) and not isinstance(m.ty, Eig):
        return False
    if isinstance(m, (Lam,)):
        return is_st_core(m.body)
    if isinstance(m, App):
        return is_st_core(m.fun) and is_st_core(m.arg)
    if isinstance(m, Guard):
        return is_st_core(m.cond) and is_st_core(m.then)
    if isinstance(m, Verif):
        return is_st_core(m.arg)
    return isinstance(m, (Var, Star, Gen))


# -- rules -------------------------------------------------------------------

def _eig_headed(t) -> bool:
    return isinstance(type_spine(t)[0], Eig)


def _kind_ok(ctx: KindCtx, ty, kind) -> bool:
    from .typecheck import KindError, kind_of
    try:
        return kind_of(ctx, ty) == kind
    except KindError:
        return False


def match_rule(level: Level, m: Metaterm, ctx: KindCtx = EMPTY_CTX) -> Optional[RuleTag]:
    """The rule whose left-hand side matches ``m`` at the root, if any."""
    if isinstance(m, App) and isinstance(m.fun, Lam):
        return RuleTag.Beta
    if isinstance(m, Guard) and isinstance(m.cond, Star):
        return RuleTag.GuardStar
    if isinstance(m, Verif):
        if isinstance(m.arg, Gen) and _eig_headed(m.ty) \
                and alpha_key(m.ty) == alpha_key(m.arg.ty):
            return RuleTag.VerifEig
        if level is Level.ST:
            return None
        if isinstance(m.ty, Arrow):
            return RuleTag.VerifImp
        if isinstance(m.ty, ForAll):
            return RuleTag.VerifAll
        return None
    if level is Level.ST:
        return None
    if isinstance(m, TyApp) and isinstance(m.fun, TyLam):
        if level is Level.FOMEGA and not _kind_ok(ctx, m.arg, m.fun.kind):
            return None
        return RuleTag.TyBeta
    if isinstance(m, Gen):
        if isinstance(m.ty, Arrow):
            return RuleTag.GenImp
        if isinstance(m.ty, ForAll):
            return RuleTag.GenAll
        return None
    if isinstance(m, Fresh) and m.eig not in free_eigs(m.body):
        return RuleTag.FreshDrop
    return None


def contract(level: Level, m: Metaterm, rule: RuleTag, ctx: KindCtx = EMPTY_CTX,
             avoid: frozenset = frozenset()) -> Metaterm:
    """Contract the root redex ``m`` with ``rule``.

    ``avoid`` lists names that a fresh eigenvariable must not take (the names
    of the whole term being reduced, so the supply stays deterministic).
    """
    if rule is RuleTag.Beta:
        return substitute(m.fun.body, {m.fun.binder: m.arg}, level)
    if rule is RuleTag.TyBeta:
        return substitute(m.fun.body, {m.fun.binder: m.arg}, level)
    if rule is RuleTag.GuardStar:
        return m.then
    if rule is RuleTag.VerifEig:
        return STAR
    if rule is RuleTag.GenImp:
        a, b = m.ty.dom, m.ty.cod
        return Lam("x", Guard(Verif(a, Var("x")), Gen(b)))
    if rule is RuleTag.VerifImp:
        return Verif(m.ty.cod, App(m.arg, Gen(m.ty.dom)))
    if rule is RuleTag.GenAll:
        return TyLam(m.ty.binder, m.ty.kind, Gen(m.ty.body))
    if rule is RuleTag.VerifAll:
        g = ctx.fresh_eig(avoid | all_names(m))
        body = substitute(m.ty.body, {m.ty.binder: Eig(g)}, level)
        return Fresh(g, m.ty.kind, Verif(body, TyApp(m.arg, Eig(g))))
    if rule is RuleTag.FreshDrop:
        return m.body
    raise ValueError(f"cannot contract {rule}")


def children(m: Metaterm, ctx: KindCtx) -> list:
    """(index, child, child context) for every metaterm child of ``m``."""
    if isinstance(m, App):
        return [(0, m.fun, ctx), (1, m.arg, ctx)]
    if isinstance(m, TyApp):
        return [(0, m.fun, ctx)]
    if isinstance(m, Lam):
        return [(0, m.body, ctx)]
    if isinstance(m, TyLam):
        return [(0, m.body, ctx.extend_tvar(m.binder, m.kind))]
    if isinstance(m, Fresh):
        return [(0, m.body, ctx.extend_eig(m.eig, m.kind))]
    if isinstance(m, Guard):
        return [(0, m.cond, ctx), (1, m.then, ctx)]
    if isinstance(m, Verif):
        return [(0, m.arg, ctx)]
    return []


def replace_child(m: Metaterm, i: int, c: Metaterm) -> Metaterm:
    if isinstance(m, App):
        return App(c, m.arg) if i == 0 else App(m.fun, c)
    if isinstance(m, TyApp):
        return TyApp(c, m.arg)
    if isinstance(m, Lam):
        return Lam(m.binder, c)
    if isinstance(m, TyLam):
        return TyLam(m.binder, m.kind, c)
    if isinstance(m, Fresh):
        return Fresh(m.eig, m.kind, c)
    if isinstance(m, Guard):
        return Guard(c, m.then) if i == 0 else Guard(m.cond, c)
    if isinstance(m, Verif):
        return Verif(m.ty, c)
    raise ValueError(f"{type(m).__name__} has no child {i}")


def subterm(m: Metaterm, path: Path, ctx: KindCtx = EMPTY_CTX):
    """The subterm at ``path`` and the kind context reaching it."""
    for i in path:
        for j, c, cctx in children(m, ctx):
            if j == i:
                m, ctx = c, cctx
                break
        else:
            raise ValueError(f"invalid position {path_str(path)}")
    return m, ctx


def apply_at(level: Level, m: Metaterm, path: Path, ctx: KindCtx = EMPTY_CTX) -> Step:
    """Contract the redex at ``path``; raises ValueError if there is none."""
    avoid = frozenset(all_names(m))

    def go(t, p, c):
        if not p:
            rule = match_rule(level, t, c)
            if rule is None:
                raise ValueError("no redex at the given position")
            return rule, contract(level, t, rule, c, avoid)
        for j, child, cctx in children(t, c):
            if j == p[0]:
                rule, new = go(child, p[1:], cctx)
                return rule, replace_child(t, j, new)
        raise ValueError(f"invalid position {path_str(path)}")

    rule, after = go(m, tuple(path), ctx)
    return Step(rule, tuple(path), m, after)


# -- weak head ---------------------------------------------------------------

def _wh_child(level: Level, m: Metaterm, ctx: KindCtx):
    """The unique child of ``m`` lying in a weak-head context, if any."""
    if isinstance(m, (App, TyApp)):
        return m.fun, ctx
    if isinstance(m, Guard):
        return m.cond, ctx
    if isinstance(m, Verif):
        return m.arg, ctx
    if isinstance(m, Fresh) and level is not Level.ST:
        return m.body, ctx.extend_eig(m.eig, m.kind)
    return None


def wh_redexes(level: Level, m: Metaterm, ctx: KindCtx = EMPTY_CTX) -> list:
    """All (position, rule) pairs on the weak-head spine, outermost first."""
    out = []
    path: tuple = ()
    while True:
        rule = match_rule(level, m, ctx)
        if rule is not None:
            out.append((path, rule))
        nxt = _wh_child(level, m, ctx)
        if nxt is None:
            return out
        m, ctx = nxt
        path = path + (0,)


def wh_choose(redexes: list):
    """Innermost spine redex first, except that a nu-drop fires as soon as met."""
    if not redexes:
        return None
    for pos, rule in redexes:
        if rule is RuleTag.FreshDrop:
            return pos, rule
    return redexes[-1]


def wh_step(level: Level, m: Metaterm, ctx: KindCtx = EMPTY_CTX) -> Optional[Step]:
    chosen = wh_choose(wh_redexes(level, m, ctx))
    if chosen is None:
        return None
    return apply_at(level, m, chosen[0], ctx)


def is_wh_position(m: Metaterm, path: Path, level: Level = Level.F) -> bool:
    """Whether ``path`` follows the weak-head spine of ``m``."""
    for i in path:
        if i != 0 or _wh_child(level, m, EMPTY_CTX) is None:
            return False
        m = _wh_child(level, m, EMPTY_CTX)[0]
    return True


# -- full reduction ----------------------------------------------------------

def enumerate_redexes(level: Level, m: Metaterm, ctx: KindCtx = EMPTY_CTX) -> list:
    """Every redex under arbitrary contexts, in pre-order (leftmost-outermost first)."""
    out = []

    def go(t, path, c):
        rule = match_rule(level, t, c)
        if rule is not None:
            out.append((path, rule))
        for j, child, cctx in children(t, c):
            go(child, path + (j,), cctx)

    go(m, (), ctx)
    return out


STRATEGIES = ("wh", "lo", "random")


def reduce(level: Level, m: Metaterm, strategy: str = "wh", fuel: int = 1_000_000,
           seed: int = 0, ctx: KindCtx = EMPTY_CTX) -> Trace:
    """Iterate a strategy until star, a normal form, or fuel exhaustion.

    ``strategy`` is ``"wh"`` (weak head), ``"lo"`` (leftmost-outermost) or
    ``"random"`` (uniform among all redexes, seeded).  At ST a surface term is
    first elaborated; that elaboration is recorded as a StExpand step and costs
    no fuel.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    rng = random.Random(seed)
    trace = Trace(level, m, strategy, fuel)
    if level is Level.ST and not is_st_core(m):
        core = expand_st(m)
        trace.steps.append(Step(RuleTag.StExpand, (), m, core))
        m = core
    elif level is Level.FOMEGA:
        m = canon(m)
        trace.start = m
    used = 0
    while True:
        if isinstance(m, Star):
            trace.outcome = Outcome.StarReached
            return trace
        if strategy == "wh":
            chosen = wh_choose(wh_redexes(level, m, ctx))
        else:
            redexes = enumerate_redexes(level, m, ctx)
            if not redexes:
                chosen = None
            elif strategy == "lo":
                chosen = redexes[0]
            else:
                chosen = rng.choice(redexes)
        if chosen is None:
            trace.outcome = Outcome.Normal
            return trace
        if used >= fuel:
            trace.outcome = Outcome.FuelExhausted
            return trace
        step = apply_at(level, m, chosen[0], ctx)
        trace.steps.append(step)
        used += 1
        m = step.after


def validate_step(level: Level, step: Step, ctx: KindCtx = EMPTY_CTX) -> bool:
    """Re-apply the recorded rule at the recorded position."""
    if step.rule is RuleTag.StExpand:
        return step.position == () and alpha_key(expand_st(step.before)) == alpha_key(step.after)
    try:
        again = apply_at(level, step.before, step.position, ctx)
    except ValueError:
        return False
    return again.rule is step.rule and alpha_key(again.after) == alpha_key(step.after)


def validate_trace(trace: Trace) -> bool:
    prev = trace.start
    for s in trace.steps:
        if alpha_key(s.before) != alpha_key(prev) or not validate_step(trace.level, s):
            return False
        prev = s.after
    if trace.outcome is Outcome.StarReached:
        return isinstance(prev, Star)
    return True


# -- simultaneous reduction --------------------------------------------------

def _fresh_for(*xs) -> str:
    avoid: set = set()
    for x in xs:
        avoid |= all_names(x)
    return KindCtx().fresh_eig(avoid)


def _v_all(m: Verif, arg: Metaterm) -> Metaterm:
    g = _fresh_for(m.ty, m.arg, arg)
    body = substitute(m.ty.body, {m.ty.binder: Eig(g)})
    return Fresh(g, m.ty.kind, Verif(body, TyApp(arg, Eig(g))))


def complete_development(level: Level, m: Metaterm) -> Metaterm:
    """Contract every redex present in ``m`` at once, ignoring created ones."""
    if level is not Level.F:
        raise LevelError("complete development is defined at level F")
    return _cd(m)


def _cd(m: Metaterm) -> Metaterm:
    if isinstance(m, (Var, Star)):
        return m
    if isinstance(m, Gen):
        if isinstance(m.ty, Arrow):
            return contract(Level.F, m, RuleTag.GenImp)
        if isinstance(m.ty, ForAll):
            return contract(Level.F, m, RuleTag.GenAll)
        return m
    if isinstance(m, Lam):
        return Lam(m.binder, _cd(m.body))
    if isinstance(m, TyLam):
        return TyLam(m.binder, m.kind, _cd(m.body))
    if isinstance(m, App):
        if isinstance(m.fun, Lam):
            return substitute(_cd(m.fun.body), {m.fun.binder: _cd(m.arg)})
        return App(_cd(m.fun), _cd(m.arg))
    if isinstance(m, TyApp):
        if isinstance(m.fun, TyLam):
            return substitute(_cd(m.fun.body), {m.fun.binder: m.arg})
        return TyApp(_cd(m.fun), m.arg)
    if isinstance(m, Guard):
        if isinstance(m.cond, Star):
            return _cd(m.then)
        return Guard(_cd(m.cond), _cd(m.then))
    if isinstance(m, Verif):
        rule = match_rule(Level.F, m)
        if rule is RuleTag.VerifEig:
            return STAR
        if rule is RuleTag.VerifImp:
            return Verif(m.ty.cod, App(_cd(m.arg), Gen(m.ty.dom)))
        if rule is RuleTag.VerifAll:
            return _v_all(m, _cd(m.arg))
        return Verif(m.ty, _cd(m.arg))
    if isinstance(m, Fresh):
        if m.eig not in free_eigs(m.body):
            return _cd(m.body)
        return Fresh(m.eig, m.kind, _cd(m.body))
    raise TypeError(f"not a metaterm: {m!r}")


class TooManyReducts(RlzError):
    pass


def par_reducts(m: Metaterm, limit: int = 50_000) -> dict:
    """All N with m => N (simultaneous reduction at F), keyed by alpha key."""
    memo: dict = {}

    def add(out, t):
        out.setdefault(alpha_key(t), t)
        if len(out) > limit:
            raise TooManyReducts(f"more than {limit} simultaneous reducts")

    def go(t) -> list:
        key = alpha_key(t)
        if key in memo:
            return memo[key]
        out: dict = {}
        if isinstance(t, (Var, Star)):
            add(out, t)
        elif isinstance(t, Gen):
            add(out, t)
            if isinstance(t.ty, (Arrow, ForAll)):
                add(out, _cd(t))
        elif isinstance(t, Lam):
            for b in go(t.body):
                add(out, Lam(t.binder, b))
        elif isinstance(t, TyLam):
            for b in go(t.body):
                add(out, TyLam(t.binder, t.kind, b))
        elif isinstance(t, App):
            fs, xs = go(t.fun), go(t.arg)
            for f, x in itertools.product(fs, xs):
                add(out, App(f, x))
            if isinstance(t.fun, Lam):
                for b, x in itertools.product(go(t.fun.body), xs):
                    add(out, substitute(b, {t.fun.binder: x}))
        elif isinstance(t, TyApp):
            for f in go(t.fun):
                add(out, TyApp(f, t.arg))
            if isinstance(t.fun, TyLam):
                for b in go(t.fun.body):
                    add(out, substitute(b, {t.fun.binder: t.arg}))
        elif isinstance(t, Guard):
            ts = go(t.then)
            for c, n in itertools.product(go(t.cond), ts):
                add(out, Guard(c, n))
            if isinstance(t.cond, Star):
                for n in ts:
                    add(out, n)
        elif isinstance(t, Verif):
            xs = go(t.arg)
            rule = match_rule(Level.F, t)
            for x in xs:
                add(out, Verif(t.ty, x))
                if rule is RuleTag.VerifImp:
                    add(out, Verif(t.ty.cod, App(x, Gen(t.ty.dom))))
                elif rule is RuleTag.VerifAll:
                    add(out, _v_all(t, x))
            if rule is RuleTag.VerifEig:
                add(out, STAR)
        elif isinstance(t, Fresh):
            bs = go(t.body)
            for b in bs:
                add(out, Fresh(t.eig, t.kind, b))
            if t.eig not in free_eigs(t.body):
                for b in bs:
                    add(out, b)
        else:
            raise TypeError(f"not a metaterm: {t!r}")
        result = list(out.values())
        memo[key] = result
        return result

    return {alpha_key(t): t for t in go(m)}


def par_reduces(m: Metaterm, n: Metaterm, limit: int = 50_000) -> bool:
    """Decide m => n by enumerating the simultaneous reducts of m."""
    return alpha_key(n) in par_reducts(m, limit)


def one_step_reducts(level: Level, m: Metaterm) -> list:
    return [apply_at(level, m, pos) for pos, _ in enumerate_redexes(level, m)]


def wh_reducts(level: Level, m: Metaterm) -> list:
    """Every single weak-head step from ``m`` (all spine redexes)."""
    return [apply_at(level, m, pos) for pos, _ in wh_redexes(level, m)]
