"""Command line, corpus, random generators and property suites."""

from __future__ import annotations

import argparse
import itertools
import json
import os
import random
import sys
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

from . import extract as ex
from . import intersect as it
from .reduction import (
    FuelExhausted, Outcome, TooManyReducts, children, complete_development, enumerate_redexes,
    expand_st, one_step_reducts, par_reduces, reduce, replace_child, wh_reducts, wh_redexes,
)
from .syntax import (
    EMPTY_CTX, PROP, STAR, App, Ann, Arrow, Base, Eig, ForAll, Fresh, Gen, Guard, KArrow,
    KindCtx, Lam, Level, ParseError, RlzError, Star, TApp, TLam, TVar, TyApp, TyLam, Var,
    Verif, alpha_eq, alpha_key, canon, env_to_json, free_names, fresh_name, nf_type,
    parse, parse_env, parse_kindctx_entries, parse_term, parse_type, pretty, print_kind,
    print_term, print_type, strip_annotations, substitute, term_size, type_eq, type_spine,
)
from .typecheck import Fail, Ok, check, default_ctx, explain
from .verify import (
    DEFAULT_FUEL, OpenTypeError, PreconditionViolated, apply_subst, correctness_check,
    gen_subst, realizes, universality_check,
)

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_FUEL = 0, 1, 2, 3

K = Base("k")
PRED = KArrow(K, PROP)
PROP_EIGS = ("a", "b", "c")
#: Eigenvariables every generated FOmega judgment may mention.
FW_CTX = KindCtx.from_entries([("#a", PROP), ("#b", PROP), ("#c", PROP),
                               ("#A", K), ("#B", K), ("#p", PRED)])


class GenerationExhausted(RlzError):
    """No derivation was found within the bounds; retry with another seed."""


class UnknownSuite(RlzError):
    pass


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    max_depth: int = 4
    level: Level = Level.ST
    env_size: int = 2
    fuel: int = 10_000


def base_ctx(level: Level) -> KindCtx:
    return FW_CTX if level is Level.FOMEGA else EMPTY_CTX


# -- types -------------------------------------------------------------------

class _Types:
    """Random propositions, optionally mentioning type variables in scope."""

    def __init__(self, rng: random.Random, level: Level):
        self.rng = rng
        self.level = level

    def norm(self, t):
        return nf_type(t) if self.level is Level.FOMEGA else t

    def _of_kind(self, scope, kind) -> list:
        out = [TVar(n) for n, k in scope if k == kind]
        if self.level is Level.FOMEGA:
            out += [Eig(n) for n, k in FW_CTX.eigs if k == kind]
        elif kind == PROP:
            out += [Eig(n) for n in PROP_EIGS]
        return out

    def leaf(self, scope, eigs=()):
        props = self._of_kind(scope, PROP) + [Eig(n) for n, k in eigs if k == PROP]
        if self.level is Level.FOMEGA and self.rng.random() < 0.3:
            heads = self._of_kind(scope, PRED)
            args = self._of_kind(scope, K)
            return TApp(self.rng.choice(heads), self.rng.choice(args))
        return self.rng.choice(props)

    def of_kind(self, kind, depth: int, scope=(), eigs=()):
        if kind == PROP:
            return self.prop(depth, scope, eigs)
        if kind == K:
            return self.rng.choice(self._of_kind(scope, K))
        if kind == PRED:
            c = fresh_name("u", {n for n, _ in scope})
            return TLam(c, K, self.prop(depth, scope + ((c, K),), eigs))
        raise ValueError(f"no generator for kind {print_kind(kind)}")

    def prop(self, depth: int, scope=(), eigs=()):
        """A proposition of at most ``depth`` connectives."""
        rng = self.rng
        if depth <= 0 or rng.random() < 0.25:
            return self.leaf(scope, eigs)
        roll = rng.random()
        if self.level is Level.ST or roll < 0.6:
            return Arrow(self.prop(depth - 1, scope, eigs), self.prop(depth - 1, scope, eigs))
        if self.level is Level.FOMEGA and roll > 0.9:
            # a type-level redex; normalization removes it
            c = fresh_name("u", {n for n, _ in scope})
            body = self.prop(depth - 1, scope + ((c, K),), eigs)
            return TApp(TLam(c, K, body), rng.choice(self._of_kind(scope, K)))
        kind = PROP
        if self.level is Level.FOMEGA:
            kind = rng.choice((PROP, PROP, K, PRED))
        base = {PROP: "c", K: "u", PRED: "P"}[kind]
        name = fresh_name(base, {n for n, _ in scope})
        return ForAll(name, kind, self.prop(depth - 1, scope + ((name, kind),), eigs))


def gen_type(cfg: GenConfig, depth: Optional[int] = None):
    """A closed proposition at ``cfg.level`` (normalized at FOmega)."""
    rng = random.Random(cfg.seed)
    tg = _Types(rng, cfg.level)
    return tg.norm(tg.prop(cfg.max_depth if depth is None else depth))


# -- well-typed terms --------------------------------------------------------

class _Stuck(Exception):
    pass


def _target(t):
    while isinstance(t, Arrow):
        t = t.cod
    return type_spine(t)[0]


class _Terms:
    """Goal-directed construction of derivable judgments, top-down."""

    def __init__(self, rng: random.Random, level: Level, env: dict, env_cap: int):
        self.rng = rng
        self.level = level
        self.types = _Types(rng, level)
        self.env = env
        self.env_cap = env_cap
        self.taken: set = set(env)

    def teq(self, a, b) -> bool:
        return type_eq(self.level, a, b)

    def fresh(self, base: str) -> str:
        n = fresh_name(base, self.taken)
        self.taken.add(n)
        return n

    def instantiate(self, b: ForAll, goal, scope):
        tail = _target(b.body)
        aim = isinstance(tail, TVar) and tail.name == b.binder and self.rng.random() < 0.8
        if b.kind == PROP:
            return goal if aim else self.types.prop(1, scope)
        if b.kind == PRED:
            c = fresh_name("u", {n for n, _ in scope} | free_names(goal)[1])
            return TLam(c, K, goal if aim else self.types.prop(1, scope))
        return self.types.of_kind(b.kind, 1, scope)

    def plan(self, ty, goal, scope) -> Optional[list]:
        """Inputs that take a hypothesis of type ``ty`` to ``goal``."""
        inputs: list = []
        for _ in range(12):
            if self.teq(ty, goal):
                return inputs
            if isinstance(ty, Arrow):
                inputs.append(("term", ty.dom))
                ty = ty.cod
            elif isinstance(ty, ForAll):
                arg = self.instantiate(ty, goal, scope)
                inputs.append(("type", arg))
                ty = self.types.norm(substitute(ty.body, {ty.binder: arg}))
            else:
                return None
        return None

    def term(self, goal, local: list, scope: tuple, depth: int):
        goal = self.types.norm(goal)
        rng = self.rng
        intro = isinstance(goal, (Arrow, ForAll))
        if intro and (depth > 0 and rng.random() < 0.85):
            return self.intro(goal, local, scope, depth)
        hyps = list(reversed(local)) + list(self.env.items())
        plans = []
        for x, b in hyps:
            p = self.plan(b, goal, scope)
            if p is not None and (depth > 0 or not any(k == "term" for k, _ in p)):
                plans.append((x, p))
        if depth >= 2 and rng.random() < 0.25:
            return self.redex(goal, local, scope, depth)
        if plans:
            x, p = rng.choice(plans)
            out = Var(x)
            for kind, arg in p:
                if kind == "type":
                    out = TyApp(out, arg)
                else:
                    out = App(out, self.term(arg, local, scope, depth - 1))
            return out
        if intro:
            return self.intro(goal, local, scope, depth)
        if depth > 0 and rng.random() < 0.7:
            return self.assume_arrow(goal, local, scope, depth)
        return self.assume(goal)

    def intro(self, goal, local, scope, depth):
        if isinstance(goal, Arrow):
            x = self.fresh(self.rng.choice("xyzfgh"))
            body = self.term(goal.cod, local + [(x, goal.dom)], scope, depth - 1)
            return Lam(x, body)
        names = {n for n, _ in scope} | free_names(goal)[1]
        t = fresh_name(goal.binder, names)
        body = substitute(goal.body, {goal.binder: TVar(t)})
        return TyLam(t, goal.kind, self.term(body, local, scope + ((t, goal.kind),), depth - 1))

    def redex(self, goal, local, scope, depth):
        """An annotated beta redex ``((\\x. t) : B -> goal) u``."""
        b = self.types.norm(self.types.prop(1, scope))
        x = self.fresh("r")
        fun = Lam(x, self.term(goal, local + [(x, b)], scope, depth - 2))
        return App(Ann(fun, Arrow(b, goal)), self.term(b, local, scope, depth - 2))

    def assume_arrow(self, goal, local, scope, depth):
        """Assume ``v : B -> goal`` and prove ``B``."""
        b = self.types.norm(self.types.prop(self.rng.randint(0, 2)))
        v = self.assume(Arrow(b, goal))
        return App(v, self.term(b, local, scope, depth - 1))

    def assume(self, goal):
        if free_names(goal)[1] or len(self.env) >= self.env_cap:
            raise _Stuck
        v = self.fresh("v")
        self.env[v] = goal
        return Var(v)


def gen_typed_term(cfg: GenConfig, env: Optional[dict] = None, goal=None, attempts: int = 40):
    """A derivable judgment ``(ctx, env, term, type)`` at ``cfg.level``.

    ``env`` and ``goal`` fix parts of the judgment; by default both are drawn
    at random.  The term may contain annotated redexes ``(t : A)``.
    """
    rng = random.Random(cfg.seed)
    lv = cfg.level
    ctx = base_ctx(lv)
    for _ in range(attempts):
        types = _Types(rng, lv)
        if env is None:
            e = {f"h{i}": types.norm(types.prop(rng.randint(0, 2)))
                 for i in range(rng.randint(0, cfg.env_size))}
        else:
            e = dict(env)
        if goal is not None:
            g = goal
        elif e and (cfg.max_depth == 0 or rng.random() < 0.2):
            g = rng.choice(list(e.values()))
        else:
            g = types.norm(types.prop(rng.randint(1, 3)))
        gen = _Terms(rng, lv, e, len(e) + cfg.env_size + 2)
        try:
            t = gen.term(g, [], (), cfg.max_depth)
        except _Stuck:
            continue
        res = check(lv, ctx, gen.env, t, g)
        if not isinstance(res, Ok):
            raise RlzError(f"generator bug: {print_term(t)} : {print_type(g)} fails: {res.reason}")
        return ctx, gen.env, t, g
    raise GenerationExhausted(f"no judgment within depth {cfg.max_depth} (seed {cfg.seed})")


# -- arbitrary metaterms -----------------------------------------------------

class _Meta:
    def __init__(self, rng: random.Random, level: Level):
        self.rng = rng
        self.level = level
        self.types = _Types(rng, level)

    def ty(self, scope, eigs):
        if self.level is Level.ST:
            return self.types.prop(self.rng.randint(0, 2))
        return self.types.norm(self.types.prop(self.rng.randint(0, 2), scope, eigs))

    def leaf(self, vars_, scope, eigs):
        r = self.rng.random()
        if r < 0.3:
            return STAR
        if r < 0.75:
            return Var(self.rng.choice(list(vars_) + ["x", "y"]))
        return Gen(self.ty(scope, eigs))

    def build(self, depth, vars_=(), scope=(), eigs=()):
        rng = self.rng
        if depth <= 0 or rng.random() < 0.2:
            return self.leaf(vars_, scope, eigs)
        d = depth - 1
        forms = ["lam", "app", "app", "seq", "ver", "gen"]
        if self.level is not Level.ST:
            forms += ["tlam", "tapp", "nu"]
        f = rng.choice(forms)
        if f == "lam":
            x = rng.choice("xyz")
            return Lam(x, self.build(d, tuple(vars_) + (x,), scope, eigs))
        if f == "app":
            return App(self.build(d, vars_, scope, eigs), self.build(d, vars_, scope, eigs))
        if f == "seq":
            return Guard(self.build(d, vars_, scope, eigs), self.build(d, vars_, scope, eigs))
        if f == "ver":
            return Verif(self.ty(scope, eigs), self.build(d, vars_, scope, eigs))
        if f == "gen":
            return Gen(self.ty(scope, eigs))
        kind = rng.choice((PROP, PROP, K)) if self.level is Level.FOMEGA else PROP
        if f == "tlam":
            c = rng.choice("cd")
            return TyLam(c, kind, self.build(d, vars_, scope + ((c, kind),), eigs))
        if f == "tapp":
            return TyApp(self.build(d, vars_, scope, eigs), self.ty(scope, eigs))
        e = fresh_name("e", {n for n, _ in eigs})
        return Fresh(e, kind, self.build(d, vars_, scope, eigs + ((e, kind),)))

    def pure_closed(self, depth, vars_=()):
        rng = self.rng
        if vars_ and (depth <= 0 or rng.random() < 0.25):
            return Var(rng.choice(vars_))
        if not vars_ or depth <= 0 or rng.random() < 0.4:
            x = fresh_name("x", set(vars_))
            return Lam(x, self.pure_closed(max(depth - 1, 0), vars_ + (x,)))
        return App(self.pure_closed(depth - 1, vars_), self.pure_closed(depth - 1, vars_))


def gen_metaterm(cfg: GenConfig):
    """An arbitrary metaterm at ``cfg.level``, possibly impure and open."""
    return _Meta(random.Random(cfg.seed), cfg.level).build(cfg.max_depth)


def gen_pure_closed(cfg: GenConfig):
    """A closed term built from variables, abstractions and applications."""
    return _Meta(random.Random(cfg.seed), cfg.level).pure_closed(cfg.max_depth)


def _wh_frame(rng: random.Random, m, level: Level):
    """Wrap ``m`` in one weak-head context frame."""
    tg = _Types(rng, level)
    forms = ["ver_imp", "app", "seq", "ver_eig"]
    if level is not Level.ST:
        forms += ["ver_all", "nu", "tapp"]
    f = rng.choice(forms)
    if f == "ver_imp":
        return Verif(Arrow(tg.prop(1), tg.prop(1)), m)
    if f == "ver_eig":
        return Verif(Eig(rng.choice(PROP_EIGS)), m)
    if f == "ver_all":
        return Verif(ForAll("c", PROP, Arrow(TVar("c"), tg.prop(1))), m)
    if f == "app":
        return App(m, _Meta(rng, level).build(1))
    if f == "seq":
        return Guard(m, _Meta(rng, level).build(1))
    if f == "tapp":
        return TyApp(m, tg.prop(1))
    return Fresh("e", PROP, Verif(Eig("e"), m) if rng.random() < 0.5 else m)


def _inner_redex(rng: random.Random, level: Level):
    meta = _Meta(rng, level)
    tg = _Types(rng, level)
    forms = ["beta", "seq", "ver_eig"]
    if level is not Level.ST:
        forms += ["tybeta", "gen_imp", "gen_all"]
    f = rng.choice(forms)
    if f == "beta":
        return App(Lam("x", meta.build(2, ("x",))), meta.build(1))
    if f == "seq":
        return Guard(STAR, meta.build(2))
    if f == "ver_eig":
        a = Eig(rng.choice(PROP_EIGS))
        return Verif(a, Gen(a))
    if f == "tybeta":
        return TyApp(TyLam("c", PROP, meta.build(2, (), (("c", PROP),))), tg.prop(1))
    if f == "gen_imp":
        return Gen(Arrow(tg.prop(1), tg.prop(1)))
    return Gen(ForAll("c", PROP, Arrow(TVar("c"), tg.prop(1))))


def gen_multi_redex(cfg: GenConfig, tries: int = 200):
    """A metaterm exposing at least two weak-head redexes."""
    rng = random.Random(cfg.seed)
    for _ in range(tries):
        m = _inner_redex(rng, cfg.level)
        for _ in range(rng.randint(1, max(1, cfg.max_depth))):
            m = _wh_frame(rng, m, cfg.level)
        if len(wh_redexes(cfg.level, m)) >= 2:
            return m
    raise GenerationExhausted("no metaterm with two weak-head redexes")


def gen_star_candidate(cfg: GenConfig):
    """A metaterm likely to reach star: a verifier applied to a closed typed term."""
    rng = random.Random(cfg.seed)
    pick = rng.random()
    if pick < 0.75:
        _, env, t, a = gen_typed_term(replace(cfg, seed=rng.getrandbits(32)))
        return Verif(a, apply_subst(strip_annotations(t), gen_subst(env)))
    if pick < 0.9:
        return gen_multi_redex(replace(cfg, seed=rng.getrandbits(32)))
    return gen_metaterm(replace(cfg, seed=rng.getrandbits(32)))


# -- shrinking ---------------------------------------------------------------

def _positions(m, path=()) -> Iterator[tuple]:
    yield path, m
    for j, c, _ in children(m, EMPTY_CTX):
        yield from _positions(c, path + (j,))


def _replace_at(m, path, new):
    if not path:
        return new
    j = path[0]
    kids = {i: c for i, c, _ in children(m, EMPTY_CTX)}
    return replace_child(m, j, _replace_at(kids[j], path[1:], new))


def shrink(m, fails: Callable, rounds: int = 200):
    """Greedily replace subterms by star, a variable or a child while ``fails`` holds."""
    for _ in range(rounds):
        for path, sub in _positions(m):
            cands = [STAR, Var("x")] + [c for _, c, _ in children(sub, EMPTY_CTX)]
            better = None
            for c in cands:
                new = _replace_at(m, path, c)
                if term_size(new) >= term_size(m):
                    continue
                try:
                    if fails(new):
                        better = new
                        break
                except Exception:
                    continue
            if better is not None:
                m = better
                break
        else:
            return m
    return m


# -- suites ------------------------------------------------------------------

@dataclass
class CaseResult:
    status: str  # pass | fail | inconclusive | skip
    detail: str = ""
    subject: object = None
    fails: Optional[Callable] = None


@dataclass
class SuiteReport:
    name: str
    level: Level
    passed: int = 0
    failed: int = 0
    inconclusive: int = 0
    skipped: int = 0
    first_failing_seed: Optional[int] = None
    counterexample: Optional[str] = None
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.failed == 0

    @property
    def total(self) -> int:
        return self.passed + self.failed + self.inconclusive

    def summary(self) -> str:
        s = (f"{self.name} [{self.level.value}]: {self.passed} pass, {self.failed} fail,"
             f" {self.inconclusive} inconclusive ({self.seconds:.1f}s)")
        if self.first_failing_seed is not None:
            s += f"; first failing seed {self.first_failing_seed}"
        if self.counterexample:
            s += f"; counterexample {self.counterexample}"
        return s

    def to_json(self) -> dict:
        return {"suite": self.name, "level": self.level.value, "pass": self.passed,
                "fail": self.failed, "inconclusive": self.inconclusive,
                "skipped": self.skipped, "first_failing_seed": self.first_failing_seed,
                "counterexample": self.counterexample, "failures": self.failures[:10]}


def _case_determinism(cfg: GenConfig) -> CaseResult:
    m = gen_metaterm(cfg)
    lv = cfg.level

    def bad(t):
        core = expand_st(t) if lv is Level.ST else t
        return len(wh_redexes(lv, core)) > 1

    if bad(m):
        return CaseResult("fail", "more than one weak-head redex", m, bad)
    return CaseResult("pass")


def _joins(lv: Level, p, q) -> bool:
    def closure(t):
        return {alpha_key(t)} | {alpha_key(s.after) for s in wh_reducts(lv, t)}
    return bool(closure(p) & closure(q))


def _case_subcommutativity(cfg: GenConfig) -> CaseResult:
    lv = cfg.level
    m = gen_multi_redex(cfg)

    def bad(t):
        steps = wh_reducts(lv, t)
        return any(not _joins(lv, s1.after, s2.after)
                   for s1, s2 in itertools.combinations(steps, 2))

    if bad(m):
        return CaseResult("fail", "a weak-head step pair does not join", m, bad)
    return CaseResult("pass")


def _case_diamond(cfg: GenConfig) -> CaseResult:
    lv = cfg.level
    rng = random.Random(cfg.seed)
    sub = replace(cfg, seed=rng.getrandbits(32), max_depth=min(cfg.max_depth, 4))
    m = gen_multi_redex(sub) if rng.random() < 0.5 else gen_metaterm(sub)

    def bad(t):
        cd = complete_development(lv, t)
        return not all(par_reduces(s.after, cd) for s in one_step_reducts(lv, t))

    try:
        if bad(m):
            return CaseResult("fail", "a one-step reduct does not reach the development", m, bad)
    except TooManyReducts:
        return CaseResult("inconclusive", "too many simultaneous reducts")
    return CaseResult("pass")


def _random_run(cfg: GenConfig):
    m = gen_star_candidate(cfg)
    if cfg.level is Level.ST:
        m = expand_st(m)
    run = reduce(cfg.level, m, "random", cfg.fuel, seed=cfg.seed)
    return m, run


def _case_standardization(cfg: GenConfig) -> CaseResult:
    lv = cfg.level
    m, run = _random_run(cfg)
    if run.outcome is not Outcome.StarReached:
        return CaseResult("skip")

    def bad(t):
        r = reduce(lv, t, "random", cfg.fuel, seed=cfg.seed)
        if r.outcome is not Outcome.StarReached:
            return False
        return reduce(lv, t, "wh", 4 * cfg.fuel).outcome is not Outcome.StarReached

    if bad(m):
        return CaseResult("fail", "weak head does not reach star within 4 fuel", m, bad)
    return CaseResult("pass")


def _witness(lv: Level, m, fuel: int, seed: int) -> Optional[str]:
    """None when the intersection witness for ``m`` checks out, else the problem."""
    run = reduce(lv, m, "random", fuel, seed=seed)
    if run.outcome is not Outcome.StarReached:
        return None
    d = it.derive_from_trace(run)
    problem = it.explain_lderiv(d)
    if problem is not None:
        return f"derived witness is invalid: {problem}"
    if not alpha_eq(d.subject, m):
        return "witness subject differs from the metaterm"
    wh = reduce(lv, m, "wh", 4 * fuel)
    sizes, last = it.replay_weak_head(d, wh)
    if any(b >= a for a, b in zip(sizes, sizes[1:])):
        return f"sizes do not strictly decrease: {sizes}"
    if last.rule != "LStarIntro":
        return f"replay ends at {last.rule}"
    return None


def _case_intersection(cfg: GenConfig) -> CaseResult:
    lv = cfg.level
    m, run = _random_run(cfg)
    if run.outcome is not Outcome.StarReached:
        return CaseResult("skip")
    try:
        problem = _witness(lv, m, cfg.fuel, cfg.seed)
    except RlzError as e:
        problem = f"{type(e).__name__}: {e}"
    if problem is not None:
        return CaseResult("fail", problem, m, lambda t: _witness(lv, t, cfg.fuel, cfg.seed) is not None)
    return CaseResult("pass")


def _find_redex_nodes(d) -> Iterator:
    if d.rule == "Lapp" and d.premises[0].rule == "Llam":
        yield d
    for p in d.premises:
        yield from _find_redex_nodes(p)


def _case_weighted_substitution(cfg: GenConfig) -> CaseResult:
    lv = cfg.level
    m, run = _random_run(cfg)
    if run.outcome is not Outcome.StarReached:
        return CaseResult("skip")
    try:
        d = it.derive_from_trace(run)
    except it.InvalidDerivation:
        return CaseResult("skip", "no valid witness to draw an instance from")
    for node in _find_redex_nodes(d):
        lam, psi = node.premises
        phi, x = lam.premises[0], node.subject.fun.binder
        if x in free_names(psi.subject)[0]:
            continue
        out = it.subst_lderiv(phi, psi, x)
        want = phi.size() - len(psi.ltype) + psi.size()
        if it.explain_lderiv(out) is not None:
            return CaseResult("fail", "substituted derivation is invalid", m)
        if not alpha_eq(out.subject, substitute(phi.subject, {x: psi.subject}, lv)):
            return CaseResult("fail", "substituted derivation has the wrong subject", m)
        if out.size() != want:
            return CaseResult("fail", f"size {out.size()} differs from {want}", m)
        return CaseResult("pass")
    return CaseResult("skip")


def _case_soundness(cfg: GenConfig) -> CaseResult:
    lv = cfg.level
    ctx, env, t, a = gen_typed_term(cfg)
    v = realizes(lv, ctx, env, a, strip_annotations(t), cfg.fuel)
    if v.realized:
        return CaseResult("pass")
    if v.exhausted:
        return CaseResult("inconclusive", "fuel exhausted")

    def bad(s):
        return isinstance(check(lv, ctx, env, s, a), Ok) and \
            realizes(lv, ctx, env, a, strip_annotations(s), cfg.fuel).stuck

    return CaseResult("fail", f"{print_term(t)} : {print_type(a)} is stuck at"
                      f" {print_term(v.final)}", t, bad)


def _case_consistency(cfg: GenConfig) -> CaseResult:
    lv = cfg.level
    m = gen_pure_closed(cfg)
    a = Eig("a")
    v = realizes(lv, base_ctx(lv), {}, a, m, cfg.fuel)
    if v.realized:
        return CaseResult("fail", f"{print_term(m)} realizes #a", m,
                          lambda t: realizes(lv, base_ctx(lv), {}, a, t, cfg.fuel).realized)
    return CaseResult("pass", "fuel exhausted" if v.exhausted else "")


def _case_correctness(cfg: GenConfig) -> CaseResult:
    a = gen_type(cfg, random.Random(cfg.seed).randint(0, cfg.max_depth))
    v = correctness_check(cfg.level, a, cfg.fuel, base_ctx(cfg.level))
    if v.realized:
        return CaseResult("pass")
    if v.exhausted:
        return CaseResult("inconclusive", "fuel exhausted")
    return CaseResult("fail", f"gen({print_type(a)}) is stuck at {print_term(v.final)}", a)


def _case_universality(cfg: GenConfig) -> CaseResult:
    rng = random.Random(cfg.seed)
    lv = Level.ST
    sub = replace(cfg, level=lv, seed=rng.getrandbits(32))
    _, env, t, a = gen_typed_term(sub)
    sigma = {}
    for x, b in env.items():
        _, denv, s, _ = gen_typed_term(replace(sub, seed=rng.getrandbits(32)), goal=b)
        sigma[x] = apply_subst(strip_annotations(s), gen_subst(denv, lv), lv)
    m = Verif(a, strip_annotations(t))
    try:
        res = universality_check(env, sigma, m, cfg.fuel)
    except PreconditionViolated as e:
        return CaseResult("fail", f"precondition: {e}", m)
    if res.status == "Confirmed":
        return CaseResult("pass")
    if res.status == "Inconclusive":
        return CaseResult("inconclusive", res.details)
    return CaseResult("fail", f"m{{sigma}} is stuck at {res.details}", m)


def _case_extraction(cfg: GenConfig) -> CaseResult:
    lv = cfg.level
    ctx, env, t, a = gen_typed_term(cfg)
    m = strip_annotations(t)
    try:
        res = ex.extract(lv, ctx, env, a, m, cfg.fuel)
    except FuelExhausted:
        return CaseResult("inconclusive", "fuel exhausted")
    except RlzError as e:
        return CaseResult("fail", f"{type(e).__name__}: {e}", m)
    d = res.derivation
    problem = explain(d)
    if problem is not None:
        return CaseResult("fail", f"invalid derivation: {problem}", m)
    nf = ex.beta_normalize(m, level=lv)
    if not alpha_eq(canon(d.term), canon(nf)):
        return CaseResult("fail", f"subject {print_term(d.term)} is not {print_term(nf)}", m)
    if not type_eq(lv, d.type, a):
        return CaseResult("fail", f"type {print_type(d.type)} is not {print_type(a)}", m)
    return CaseResult("pass")


CASES: dict = {
    "determinism": (_case_determinism, Level.ST),
    "subcommutativity": (_case_subcommutativity, Level.F),
    "diamond": (_case_diamond, Level.F),
    "standardization": (_case_standardization, Level.F),
    "soundness": (_case_soundness, None),
    "consistency": (_case_consistency, Level.ST),
    "universality": (_case_universality, Level.ST),
    "extraction": (_case_extraction, None),
    "intersection": (_case_intersection, Level.F),
    "correctness": (_case_correctness, None),
    "weighted-substitution": (_case_weighted_substitution, Level.F),
}
SUITES = tuple(CASES) + ("specification",)


def suite_level(name: str, requested: Level) -> Level:
    """The level a suite runs at: fixed for the rewriting suites, else ``requested``."""
    if name == "specification":
        return Level.ST
    if name not in CASES:
        raise UnknownSuite(name)
    return CASES[name][1] or requested


def case_seed(seed: int, i: int) -> int:
    return seed * 1_000_003 + i


def run_suite(name: str, cfg: GenConfig, cases: int, max_attempts: Optional[int] = None,
              shrink_failures: bool = True) -> SuiteReport:
    """Run ``cases`` counted instances of a property and aggregate the outcomes.

    Instances whose generator gives up, or which do not satisfy the suite's
    premise (for example a random run that misses star), are skipped and do
    not count towards ``cases``.
    """
    if name == "specification":
        return specification_suite(cfg, cfg.max_depth)
    if name not in CASES:
        raise UnknownSuite(f"unknown suite {name!r}; expected one of {', '.join(SUITES)}")
    fn = CASES[name][0]
    lv = suite_level(name, cfg.level)
    report = SuiteReport(name, lv)
    start = time.perf_counter()
    limit = max_attempts if max_attempts is not None else 20 * cases + 100
    i = 0
    while report.total < cases and i < limit:
        seed = case_seed(cfg.seed, i)
        i += 1
        try:
            res = fn(replace(cfg, seed=seed, level=lv))
        except GenerationExhausted:
            report.skipped += 1
            continue
        except RlzError as e:
            res = CaseResult("fail", f"{type(e).__name__}: {e}")
        if res.status == "pass":
            report.passed += 1
        elif res.status == "inconclusive":
            report.inconclusive += 1
        elif res.status == "skip":
            report.skipped += 1
        else:
            report.failed += 1
            report.failures.append({"seed": seed, "detail": res.detail})
            if report.first_failing_seed is None:
                report.first_failing_seed = seed
                subject = res.subject
                if subject is not None and res.fails is not None and shrink_failures:
                    subject = shrink(subject, res.fails)
                if subject is not None:
                    report.counterexample = pretty(subject)
    report.seconds = time.perf_counter() - start
    return report


# -- exhaustive specification check ------------------------------------------

def normal_terms(depth: int, scope: tuple = ()) -> Iterator:
    """Every beta-normal term over ``scope`` nested at most ``depth`` deep.

    Variables have depth 0; each abstraction or application adds 1.  Binders
    are named ``x0, x1, ...`` by nesting level, so each alpha class appears once.
    """
    if depth < 0:
        return
    yield from _neutrals(depth, scope)
    if depth >= 1:
        x = f"x{len(scope)}"
        for body in normal_terms(depth - 1, scope + (x,)):
            yield Lam(x, body)


def _neutrals(depth: int, scope: tuple) -> Iterator:
    for v in scope:
        yield Var(v)
    if depth >= 1:
        for f in _neutrals(depth - 1, scope):
            for a in normal_terms(depth - 1, scope):
                yield App(f, a)


def specification_suite(cfg: GenConfig, depth: int = 4) -> SuiteReport:
    """The only closed normal realizer of #a -> #a up to ``depth`` is the identity."""
    report = SuiteReport("specification", Level.ST)
    start = time.perf_counter()
    a = Arrow(Eig("a"), Eig("a"))
    ident = Lam("x", Var("x"))
    for i, m in enumerate(normal_terms(depth)):
        v = realizes(Level.ST, EMPTY_CTX, {}, a, m, cfg.fuel)
        if v.exhausted:
            report.inconclusive += 1
        elif v.realized != alpha_eq(m, ident):
            report.failed += 1
            report.failures.append({"seed": i, "detail": print_term(m)})
            if report.first_failing_seed is None:
                report.first_failing_seed = i
                report.counterexample = print_term(m)
        else:
            report.passed += 1
    report.seconds = time.perf_counter() - start
    return report


# -- corpus ------------------------------------------------------------------

EXPECTATIONS = ("realized", "stuck", "typecheck-ok", "typecheck-fail")


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    level: Level
    env: dict
    kindctx: KindCtx
    type: object
    term: object
    expected: str
    source: str = ""


def parse_corpus_entry(text: str, source: str = "") -> CorpusEntry:
    """Read ``key: value`` header lines; ``--`` starts a comment line."""
    fields: dict = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("--"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ParseError(0, "'key: value'", line)
        fields[key.strip()] = value.strip()
    missing = [k for k in ("name", "level", "type", "term", "expect") if k not in fields]
    if missing:
        raise ParseError(0, f"fields {', '.join(missing)}", source or text)
    lv = Level.parse(fields["level"])
    expected = fields["expect"].lower()
    if expected not in EXPECTATIONS:
        raise ParseError(0, f"one of {', '.join(EXPECTATIONS)}", expected)
    ctx = KindCtx.from_entries(parse_kindctx_entries(fields.get("ctx", "")))
    return CorpusEntry(fields["name"], lv, parse_env(fields.get("env", ""), lv), ctx,
                       parse_type(fields["type"], lv), parse_term(fields["term"], lv),
                       expected, source)


def corpus_dir() -> Path:
    return Path(str(resources.files("rlz") / "corpus"))


def load_corpus(directory: Optional[Path] = None) -> list:
    directory = Path(directory) if directory is not None else corpus_dir()
    return [parse_corpus_entry(p.read_text(), p.name) for p in sorted(directory.glob("*.rlz"))]


def check_entry(entry: CorpusEntry, fuel: int = DEFAULT_FUEL) -> tuple[bool, str]:
    """Re-run the operation an entry refers to; returns (as expected, observed)."""
    ctx = default_ctx(entry.kindctx, entry.type, entry.env)
    if entry.expected.startswith("typecheck"):
        res = check(entry.level, ctx, entry.env, entry.term, entry.type)
        observed = "typecheck-ok" if isinstance(res, Ok) else "typecheck-fail"
    else:
        v = realizes(entry.level, ctx, entry.env, entry.type, strip_annotations(entry.term), fuel)
        observed = {"realized": "realized", "stuck": "stuck", "fuel": "fuel"}[v.kind]
    return observed == entry.expected, observed


# -- command line ------------------------------------------------------------

def _default_fuel() -> int:
    raw = os.environ.get("RLZ_FUEL")
    try:
        return int(raw) if raw else DEFAULT_FUEL
    except ValueError:
        return DEFAULT_FUEL


def _common(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--calculus", choices=("st", "f", "fw"), default=d("st"),
                   help="calculus level (default st)")
    p.add_argument("--fuel", type=int, default=d(None),
                   help="step budget (default $RLZ_FUEL or 1000000)")
    p.add_argument("--seed", type=int, default=d(0), help="random seed")
    p.add_argument("--json", action="store_true", default=d(False), help="JSON output")
    p.add_argument("--trace", metavar="PATH", default=d(None),
                   help="write the reduction trace as JSON lines")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="rlz", description=__doc__)
    _common(top, suppress=False)
    sub = top.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _common(p, suppress=True)
        return p

    def judgment(p, term_required=True):
        p.add_argument("--type", required=True, help="the proposition")
        p.add_argument("--term", required=term_required, help="the candidate term")
        p.add_argument("--env", default="", help="typing environment 'x : A, y : B'")
        p.add_argument("--ctx", default="", help="kinds, e.g. '#A : @k, #p : @k -> Prop'")

    p = cmd("parse", "parse and pretty-print a term, type or kind")
    p.add_argument("text")
    p.add_argument("--sort", choices=("term", "type", "kind"), default="term")
    p = cmd("reduce", "reduce a metaterm")
    p.add_argument("term")
    p.add_argument("--strategy", choices=("wh", "lo", "random"), default="wh")
    p.add_argument("--ctx", default="")
    judgment(cmd("verify", "does a term realize a proposition?"))
    judgment(cmd("check", "type-check a term"))
    judgment(cmd("extract", "reconstruct a typing derivation from a realizer"))
    p = cmd("gen", "print generated terms")
    p.add_argument("--kind", choices=("typed", "metaterm", "type", "pure"), default="typed")
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--env-size", type=int, default=2)
    p.add_argument("--count", type=int, default=1)
    p = cmd("suite", "run a property suite")
    p.add_argument("name", choices=SUITES)
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--env-size", type=int, default=2)
    p = cmd("corpus", "re-check the corpus of worked examples")
    p.add_argument("--dir", default=None, help="corpus directory (default: bundled)")
    return top


class _Out:
    def __init__(self, as_json: bool, stream=None):
        self.as_json = as_json
        self.stream = stream or sys.stdout

    def emit(self, text: str, data: dict) -> None:
        if self.as_json:
            print(json.dumps(data), file=self.stream)
        else:
            print(text, file=self.stream)


def _write_trace(path: Optional[str], lines: Iterable[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")


def _judgment(args, lv: Level):
    ctx = KindCtx.from_entries(parse_kindctx_entries(args.ctx))
    env = parse_env(args.env, lv)
    a = parse_type(args.type, lv)
    m = parse_term(args.term, lv) if args.term is not None else None
    return default_ctx(ctx, a, env), env, a, m


def _cmd_parse(args, lv, out) -> int:
    x = parse(args.text, args.sort, lv)
    out.emit(pretty(x), {"sort": args.sort, "printed": pretty(x)})
    return EXIT_OK


def _cmd_reduce(args, lv, out) -> int:
    ctx = KindCtx.from_entries(parse_kindctx_entries(args.ctx))
    m = parse_term(args.term, lv)
    tr = reduce(lv, m, args.strategy, args.fuel, seed=args.seed, ctx=ctx)
    _write_trace(args.trace, tr.jsonl())
    out.emit(f"{tr.outcome.value} after {tr.contractions} steps: {print_term(tr.final)}",
             {"outcome": tr.outcome.value, "steps": tr.contractions,
              "final": print_term(tr.final)})
    return EXIT_FUEL if tr.outcome is Outcome.FuelExhausted else EXIT_OK


def _cmd_verify(args, lv, out) -> int:
    ctx, env, a, m = _judgment(args, lv)
    v = realizes(lv, ctx, env, a, m, args.fuel)
    _write_trace(args.trace, v.jsonl())
    text = {"realized": "realized", "stuck": f"stuck: {print_term(v.final)}",
            "fuel": "fuel exhausted"}[v.kind]
    out.emit(f"{text} ({v.steps} steps)",
             {"verdict": v.kind, "steps": v.steps, "final": print_term(v.final)})
    return {"realized": EXIT_OK, "stuck": EXIT_NEGATIVE, "fuel": EXIT_FUEL}[v.kind]


def _cmd_check(args, lv, out) -> int:
    ctx, env, a, m = _judgment(args, lv)
    res = check(lv, ctx, env, m, a)
    if isinstance(res, Fail):
        path = ".".join(map(str, res.path)) or "root"
        out.emit(f"ill-typed at {path}: {res.reason}",
                 {"result": "fail", "path": path, "reason": res.reason})
        return EXIT_NEGATIVE
    out.emit(f"ok: {print_term(m)} : {print_type(a)}",
             {"result": "ok", "derivation": res.derivation.to_json()})
    return EXIT_OK


def _cmd_extract(args, lv, out) -> int:
    ctx, env, a, m = _judgment(args, lv)
    try:
        res = ex.extract(lv, ctx, env, a, m, args.fuel)
    except (ex.NotRealizer, ex.NotPure) as e:
        out.emit(f"{type(e).__name__}: {e}", {"result": type(e).__name__, "reason": str(e)})
        return EXIT_NEGATIVE
    out.emit(f"{print_term(res.normal_form)} : {print_type(a)}"
             f" (derivation of {res.derivation.size()} nodes, proof size {res.proof_size})",
             {"result": "ok", **res.to_json()})
    return EXIT_OK


def _cmd_gen(args, lv, out) -> int:
    for k in range(args.count):
        cfg = GenConfig(args.seed + k, args.depth, lv, args.env_size, args.fuel)
        if args.kind == "typed":
            _, env, t, a = gen_typed_term(cfg)
            out.emit(f"{', '.join(f'{x} : {print_type(b)}' for x, b in env.items())}"
                     f" |- {print_term(t)} : {print_type(a)}",
                     {"env": env_to_json(env), "term": print_term(t), "type": print_type(a)})
        elif args.kind == "type":
            a = gen_type(cfg)
            out.emit(print_type(a), {"type": print_type(a)})
        else:
            m = gen_metaterm(cfg) if args.kind == "metaterm" else gen_pure_closed(cfg)
            out.emit(print_term(m), {"term": print_term(m)})
    return EXIT_OK


def _cmd_suite(args, lv, out) -> int:
    cfg = GenConfig(args.seed, args.depth, lv, args.env_size,
                    args.fuel if args.fuel_given else 10_000)
    rep = run_suite(args.name, cfg, args.cases)
    data = rep.to_json()
    data.pop("seconds", None)
    out.emit(rep.summary(), data)
    return EXIT_OK if rep.ok else EXIT_NEGATIVE


def _cmd_corpus(args, lv, out) -> int:
    entries = load_corpus(Path(args.dir) if args.dir else None)
    bad = 0
    for e in entries:
        ok, observed = check_entry(e, args.fuel)
        bad += not ok
        out.emit(f"{'ok  ' if ok else 'FAIL'} {e.name} [{e.level.value}]: expected {e.expected},"
                 f" got {observed}",
                 {"name": e.name, "level": e.level.value, "expected": e.expected,
                  "observed": observed, "ok": ok})
    return EXIT_OK if bad == 0 else EXIT_NEGATIVE


COMMANDS = {"parse": _cmd_parse, "reduce": _cmd_reduce, "verify": _cmd_verify,
            "check": _cmd_check, "extract": _cmd_extract, "gen": _cmd_gen,
            "suite": _cmd_suite, "corpus": _cmd_corpus}


def main(argv: Optional[list] = None) -> int:
    """Entry point of the ``rlz`` command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    args.fuel_given = args.fuel is not None
    if args.fuel is None:
        args.fuel = _default_fuel()
    out = _Out(args.json)
    try:
        lv = Level.parse(args.calculus)
        return COMMANDS[args.command](args, lv, out)
    except OpenTypeError as e:
        print(f"rlz: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FuelExhausted as e:
        print(f"rlz: fuel exhausted: {e}", file=sys.stderr)
        return EXIT_FUEL
    except (ParseError, UnknownSuite) as e:
        print(f"rlz: {e}", file=sys.stderr)
        return EXIT_USAGE
    except RlzError as e:
        print(f"rlz: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"rlz: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
