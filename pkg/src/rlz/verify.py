"""Running verifiers against candidate realizers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional

from .reduction import Outcome, Trace, expand_st, reduce
from .syntax import (
    EMPTY_CTX, PROP, Eig, Gen, KindCtx, Level, Metaterm, RlzError, Star, Type, Var,
    Verif, canon, check_level, free_names, fresh_name, print_term, subst_eig,
    substitute,
)
from .typecheck import KindError, KindMismatch, env_well_formed, kind_of

DEFAULT_FUEL = 1_000_000


class OpenTypeError(RlzError):
    """The proposition or environment mentions free type variables."""


class PreconditionViolated(RlzError):
    pass


@dataclass(frozen=True)
class Verdict:
    """Outcome of a verification run: ``realized``, ``stuck`` or ``fuel``."""
    kind: str
    trace: Trace

    @property
    def realized(self) -> bool:
        return self.kind == "realized"

    @property
    def stuck(self) -> bool:
        return self.kind == "stuck"

    @property
    def exhausted(self) -> bool:
        return self.kind == "fuel"

    @property
    def final(self) -> Metaterm:
        return self.trace.final

    @property
    def steps(self) -> int:
        return self.trace.contractions

    def jsonl(self) -> Iterator[str]:
        yield from self.trace.jsonl()
        yield json.dumps({"verdict": self.kind, "steps": self.steps})


def classify(trace: Trace) -> Verdict:
    if trace.outcome is Outcome.StarReached:
        return Verdict("realized", trace)
    if trace.outcome is Outcome.FuelExhausted:
        return Verdict("fuel", trace)
    return Verdict("stuck", trace)


def gen_subst(env: Mapping[str, Type], level: Level = Level.F) -> dict:
    """The generative substitution: each x:A becomes gen(A)."""
    out = {}
    for x, a in env.items():
        g = Gen(a)
        out[x] = expand_st(g) if level is Level.ST else g
    return out


def apply_subst(m: Metaterm, sigma: Mapping[str, Metaterm], level: Level = Level.F) -> Metaterm:
    return substitute(m, dict(sigma), level)


def close_type_vars(ctx: KindCtx, env: Mapping[str, Type], a: Type, m: Optional[Metaterm] = None):
    """Replace free type variables by fresh eigenvariables of the same kind.

    Returns the new context, environment, type, metaterm and the mapping
    from eigenvariable names back to the original type variables.
    """
    tvs: set = set(free_names(a)[1])
    taken: set = set(free_names(a)[2]) | ctx.names()
    for b in env.values():
        _, tv, eg = free_names(b)
        tvs |= tv
        taken |= eg
    if m is not None:
        _, tv, eg = free_names(m)
        tvs |= tv
        taken |= eg
    back = {}
    theta = {}
    for t in sorted(tvs):
        e = fresh_name(t, taken)
        taken.add(e)
        ctx = ctx.extend_eig(e, ctx.tvar_kind(t) or PROP)
        theta[t] = Eig(e)
        back[e] = t
    env2 = {x: substitute(b, theta) for x, b in env.items()}
    a2 = substitute(a, theta)
    m2 = substitute(m, theta) if m is not None else None
    return ctx, env2, a2, m2, back


def _prepare(level: Level, ctx: KindCtx, env: Mapping[str, Type], a: Type, m: Metaterm):
    check_level(a, level)
    check_level(m, level)
    for b in env.values():
        check_level(b, level)
    if level is Level.FOMEGA:
        if kind_of(ctx, a) != PROP:
            raise KindMismatch("the verified type is not a proposition")
        if not env_well_formed(ctx, dict(env)):
            raise KindMismatch("the environment is not well-formed")


def run_verifier(level: Level, a: Type, m: Metaterm, fuel: int = DEFAULT_FUEL,
                 ctx: KindCtx = EMPTY_CTX) -> Verdict:
    """Weak-head reduce ``ver(a, m)`` and classify the outcome."""
    goal = Verif(a, m)
    if level is Level.ST:
        goal = expand_st(goal)
    elif level is Level.FOMEGA:
        goal = canon(goal)
    return classify(reduce(level, goal, "wh", fuel, ctx=ctx))


def realizes(level: Level, ctx: KindCtx, env: Mapping[str, Type], a: Type, m: Metaterm,
             fuel: int = DEFAULT_FUEL, close: bool = False) -> Verdict:
    """Does ``m`` realize ``a`` under ``env``?  Builds ver(a, m{env}) and runs it.

    Free type variables are rejected unless ``close`` is set, in which case
    they are replaced by fresh eigenvariables first.
    """
    _prepare(level, ctx, env, a, m)
    if any(free_names(t)[1] for t in [a, m, *env.values()]):
        if not close:
            raise OpenTypeError("free type variables; pass close=True to replace them"
                                " by fresh eigenvariables")
        ctx, env, a, m, _ = close_type_vars(ctx, env, a, m)
    return run_verifier(level, a, apply_subst(m, gen_subst(env, level), level), fuel, ctx)


def correctness_check(level: Level, a: Type, fuel: int = DEFAULT_FUEL,
                      ctx: KindCtx = EMPTY_CTX) -> Verdict:
    """Run ver(a, gen(a)); Realized for every closed proposition."""
    check_level(a, level)
    return run_verifier(level, a, Gen(a), fuel, ctx)


@dataclass(frozen=True)
class UniversalityResult:
    status: str  # Confirmed | CounterexampleCandidate | Inconclusive
    details: str = ""


def universality_check(env: Mapping[str, Type], sigma: Mapping[str, Metaterm], m: Metaterm,
                       fuel: int = DEFAULT_FUEL) -> UniversalityResult:
    """Check that m{sigma} reaches star when m{env} does and env is compatible with sigma."""
    lv = Level.ST
    for x, a in env.items():
        v = run_verifier(lv, a, sigma.get(x, Var(x)), fuel)
        if v.exhausted:
            return UniversalityResult("Inconclusive", f"compatibility of {x} ran out of fuel")
        if not v.realized:
            raise PreconditionViolated(f"sigma({x}) does not realize its type;"
                                       f" stuck at {print_term(v.final)}")
    generic = expand_st(apply_subst(m, gen_subst(env, lv)))
    t = reduce(lv, generic, "wh", fuel)
    if t.outcome is Outcome.FuelExhausted:
        return UniversalityResult("Inconclusive", "m{env} ran out of fuel")
    if t.outcome is not Outcome.StarReached:
        raise PreconditionViolated(f"m{{env}} is stuck at {print_term(t.final)}")
    sig = {x: expand_st(v) for x, v in sigma.items()}
    t = reduce(lv, expand_st(apply_subst(expand_st(m), sig)), "wh", fuel)
    if t.outcome is Outcome.StarReached:
        return UniversalityResult("Confirmed")
    if t.outcome is Outcome.FuelExhausted:
        return UniversalityResult("Inconclusive", "m{sigma} ran out of fuel")
    return UniversalityResult("CounterexampleCandidate", print_term(t.final))
