"""Non-idempotent intersection types for second-order metaterms.

Derivations here are witnesses: their size strictly drops along weak-head
reduction, and subject expansion pulls a derivation of ``star`` back along
any reduction sequence.  Together these turn a full reduction to ``star``
into a terminating weak-head one.

Multisets are sorted tuples under a fixed order on linear types; linear
environments are dicts from variables to such tuples with empty entries
omitted.  Subjects are compared up to alpha-equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .reduction import (
    Outcome, RuleTag, Step, Trace, apply_at, enumerate_redexes, validate_step,
)
from .syntax import (
    App, Arrow, Eig, ForAll, Fresh, Gen, Guard, Lam, Level, Metaterm, RlzError, Star,
    TVar, TyApp, TyLam, Type, Var, Verif, all_names, alpha_key, free_eigs, free_names,
    fresh_name, print_term, print_type, rename_var, subst_eig, substitute,
)

F = Level.F


class InvalidDerivation(RlzError):
    pass


class PreconditionViolated(RlzError):
    pass


class NotWeakHead(RlzError):
    pass


class SubjectMismatch(RlzError):
    pass


class InvalidTrace(RlzError):
    pass


# -- linear types ------------------------------------------------------------

class LinType:
    """Base class; equality and ordering go through a canonical key."""
    __slots__ = ()

    @property
    def key(self) -> str:
        return self._key

    def __eq__(self, other) -> bool:
        return isinstance(other, LinType) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __lt__(self, other: "LinType") -> bool:
        return self.key < other.key

    def __repr__(self) -> str:
        return f"<{print_ltype(self)}>"


class LStar(LinType):
    __slots__ = ("_key",)

    def __init__(self):
        self._key = "*"


class LGen(LinType):
    __slots__ = ("eig", "_key")

    def __init__(self, eig: str):
        self.eig = eig
        self._key = f"g({eig})"


class LArrow(LinType):
    __slots__ = ("dom", "cod", "_key")

    def __init__(self, dom: Iterable[LinType], cod: LinType):
        self.dom = msort(dom)
        self.cod = cod
        self._key = "[" + ",".join(t.key for t in self.dom) + "]>" + cod.key


class LForAll(LinType):
    __slots__ = ("arg", "body", "_key")

    def __init__(self, arg: Type, body: LinType):
        self.arg = arg
        self.body = body
        self._key = f"{alpha_key(arg)!r}@" + body.key


def msort(ts: Iterable[LinType]) -> tuple:
    return tuple(sorted(ts, key=lambda t: t.key))


def print_ltype(t) -> str:
    if isinstance(t, tuple):
        return "[" + ", ".join(print_ltype(x) for x in t) + "]"
    if isinstance(t, LStar):
        return "star"
    if isinstance(t, LGen):
        return f"gen(#{t.eig})"
    if isinstance(t, LArrow):
        return f"{print_ltype(t.dom)} -o {print_ltype(t.cod)}"
    return f"({print_type(t.arg)}) @ {print_ltype(t.body)}"


def ltype_eigs(t) -> set:
    if isinstance(t, tuple):
        return set().union(*(ltype_eigs(x) for x in t)) if t else set()
    if isinstance(t, LGen):
        return {t.eig}
    if isinstance(t, LArrow):
        return ltype_eigs(t.dom) | ltype_eigs(t.cod)
    if isinstance(t, LForAll):
        return free_eigs(t.arg) | ltype_eigs(t.body)
    return set()


def rename_ltype_eig(t, old: str, new: str):
    if isinstance(t, tuple):
        return msort(rename_ltype_eig(x, old, new) for x in t)
    if isinstance(t, LGen):
        return LGen(new) if t.eig == old else t
    if isinstance(t, LArrow):
        return LArrow(rename_ltype_eig(t.dom, old, new), rename_ltype_eig(t.cod, old, new))
    if isinstance(t, LForAll):
        return LForAll(subst_eig(t.arg, {old: Eig(new)}), rename_ltype_eig(t.body, old, new))
    return t


def env_sum(*envs: dict) -> dict:
    out: dict = {}
    for e in envs:
        for x, m in e.items():
            out[x] = out.get(x, ()) + tuple(m)
    return {x: msort(m) for x, m in out.items() if m}


# -- derivations -------------------------------------------------------------

LRULES = ("Lvar", "Llam", "Lapp", "Llamt", "Lappt", "LStarIntro", "LGuard", "LNu",
          "LVerEig", "LVerImp", "LVerAll", "LGenEig", "LGenImp", "LGenAll", "Lmulti")


@dataclass(frozen=True, eq=False)
class LinDerivation:
    rule: str
    env: dict
    subject: Metaterm
    ltype: object  # LinType, or a sorted tuple of them for Lmulti
    premises: tuple = field(default=())

    def size(self) -> int:
        own = 0 if self.rule == "Lmulti" else 1
        return own + sum(p.size() for p in self.premises)

    def to_json(self) -> dict:
        return {"rule": self.rule,
                "env": {x: [print_ltype(t) for t in m] for x, m in self.env.items()},
                "term": print_term(self.subject),
                "linear_type": print_ltype(self.ltype),
                "premises": [p.to_json() for p in self.premises]}


def _env_of(rule: str, subject, ltype, premises) -> dict:
    if rule == "Lvar":
        return {subject.name: (ltype,)}
    if rule == "Llam":
        return {x: m for x, m in premises[0].env.items() if x != subject.binder}
    return env_sum(*(p.env for p in premises))


def mk(rule: str, subject: Metaterm, ltype, premises=()) -> LinDerivation:
    """Build a node, computing its environment from the premises."""
    premises = tuple(premises)
    if rule == "Lmulti":
        ltype = msort(ltype)
    return LinDerivation(rule, _env_of(rule, subject, ltype, premises), subject, ltype, premises)


def lvar(x: str, t: LinType) -> LinDerivation:
    return mk("Lvar", Var(x), t)


def lstar() -> LinDerivation:
    return mk("LStarIntro", Star(), LStar())


def lmulti(subject: Metaterm, premises) -> LinDerivation:
    premises = tuple(premises)
    return mk("Lmulti", subject, [p.ltype for p in premises], premises)


# -- checking ----------------------------------------------------------------

def _aeq(a, b) -> bool:
    return alpha_key(a) == alpha_key(b)


def _req(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidDerivation(msg)


def explain_lderiv(d: LinDerivation) -> Optional[str]:
    """None when ``d`` is valid, otherwise the first violated condition."""
    try:
        _check(d)
        return None
    except InvalidDerivation as e:
        return str(e)


def check_lderiv(d: LinDerivation) -> bool:
    return explain_lderiv(d) is None


def _nprem(d: LinDerivation, n: int) -> None:
    _req(len(d.premises) == n, f"{d.rule}: expected {n} premises")


def _check(d: LinDerivation) -> None:
    r, s, t, ps = d.rule, d.subject, d.ltype, d.premises
    _req(r in LRULES, f"unknown rule {r}")
    _req(all(m for m in d.env.values()), f"{r}: empty multiset in the environment")
    _req(all(tuple(m) == msort(m) for m in d.env.values()), f"{r}: unsorted multiset")
    if r == "Lmulti":
        _req(isinstance(t, tuple), "Lmulti: type is not a multiset")
    else:
        _req(isinstance(t, LinType), f"{r}: type is not a linear type")
    for p in ps:
        _check(p)
    for i, p in enumerate(ps):
        want_multi = (r == "Lapp" and i == 1)
        _req((p.rule == "Lmulti") == want_multi, f"{r}: premise {i} has the wrong form")
    _req(d.env == _env_of(r, s, t, ps), f"{r}: environment does not match the premises")
    if r == "Lvar":
        _nprem(d, 0)
        _req(isinstance(s, Var), "Lvar: subject is not a variable")
    elif r == "Llam":
        _nprem(d, 1)
        (p,) = ps
        _req(isinstance(s, Lam) and isinstance(t, LArrow), "Llam: shape")
        _req(_aeq(p.subject, s.body), "Llam: premise subject")
        _req(p.env.get(s.binder, ()) == t.dom, "Llam: binder multiset")
        _req(p.ltype == t.cod, "Llam: premise type")
    elif r == "Lapp":
        _nprem(d, 2)
        f, m = ps
        _req(isinstance(s, App), "Lapp: shape")
        _req(isinstance(f.ltype, LArrow) and f.ltype.dom == m.ltype and f.ltype.cod == t,
             "Lapp: types")
        _req(_aeq(f.subject, s.fun) and _aeq(m.subject, s.arg), "Lapp: subjects")
    elif r == "Llamt":
        _nprem(d, 1)
        (p,) = ps
        _req(isinstance(s, TyLam) and isinstance(t, LForAll), "Llamt: shape")
        _req(_aeq(p.subject, substitute(s.body, {s.binder: t.arg})), "Llamt: premise subject")
        _req(p.ltype == t.body, "Llamt: premise type")
    elif r == "Lappt":
        _nprem(d, 1)
        (p,) = ps
        _req(isinstance(s, TyApp) and isinstance(p.ltype, LForAll), "Lappt: shape")
        _req(_aeq(p.ltype.arg, s.arg) and p.ltype.body == t, "Lappt: types")
        _req(_aeq(p.subject, s.fun), "Lappt: premise subject")
    elif r == "LStarIntro":
        _nprem(d, 0)
        _req(isinstance(s, Star) and isinstance(t, LStar), "LStarIntro: shape")
    elif r == "LGuard":
        _nprem(d, 2)
        c, n = ps
        _req(isinstance(s, Guard) and isinstance(c.ltype, LStar), "LGuard: shape")
        _req(_aeq(c.subject, s.cond) and _aeq(n.subject, s.then), "LGuard: subjects")
        _req(n.ltype == t, "LGuard: type")
    elif r == "LNu":
        _nprem(d, 1)
        (p,) = ps
        _req(isinstance(s, Fresh), "LNu: shape")
        _req(_aeq(p.subject, s.body) and p.ltype == t, "LNu: premise")
        env_eigs = set().union(*(ltype_eigs(m) for m in d.env.values())) if d.env else set()
        _req(s.eig not in env_eigs | ltype_eigs(t), "LNu: eigenvariable escapes")
    elif r == "LVerEig":
        _nprem(d, 1)
        (p,) = ps
        _req(isinstance(s, Verif) and isinstance(s.ty, Eig) and isinstance(t, LStar),
             "LVerEig: shape")
        _req(_aeq(p.subject, s.arg) and p.ltype == LGen(s.ty.name), "LVerEig: premise")
    elif r == "LVerImp":
        _nprem(d, 1)
        (p,) = ps
        _req(isinstance(s, Verif) and isinstance(s.ty, Arrow) and isinstance(t, LStar),
             "LVerImp: shape")
        want = Verif(s.ty.cod, App(s.arg, Gen(s.ty.dom)))
        _req(_aeq(p.subject, want) and isinstance(p.ltype, LStar), "LVerImp: premise")
    elif r == "LVerAll":
        _nprem(d, 1)
        (p,) = ps
        _req(isinstance(s, Verif) and isinstance(s.ty, ForAll) and isinstance(t, LStar),
             "LVerAll: shape")
        _req(isinstance(p.subject, Fresh) and isinstance(p.ltype, LStar), "LVerAll: premise shape")
        b = p.subject.eig
        _req(b not in free_eigs(s), "LVerAll: eigenvariable is not fresh")
        want = Fresh(b, s.ty.kind, Verif(substitute(s.ty.body, {s.ty.binder: Eig(b)}),
                                         TyApp(s.arg, Eig(b))))
        _req(_aeq(p.subject, want), "LVerAll: premise subject")
    elif r == "LGenEig":
        _nprem(d, 0)
        _req(isinstance(s, Gen) and isinstance(s.ty, Eig) and t == LGen(s.ty.name),
             "LGenEig: shape")
    elif r == "LGenImp":
        _nprem(d, 1)
        (p,) = ps
        _req(isinstance(s, Gen) and isinstance(s.ty, Arrow), "LGenImp: shape")
        _req(isinstance(p.subject, Lam) and p.ltype == t, "LGenImp: premise")
        x = p.subject.binder
        _req(_aeq(p.subject, Lam(x, Guard(Verif(s.ty.dom, Var(x)), Gen(s.ty.cod)))),
             "LGenImp: premise subject")
    elif r == "LGenAll":
        _nprem(d, 1)
        (p,) = ps
        _req(isinstance(s, Gen) and isinstance(s.ty, ForAll), "LGenAll: shape")
        want = TyLam(s.ty.binder, s.ty.kind, Gen(s.ty.body))
        _req(_aeq(p.subject, want) and p.ltype == t, "LGenAll: premise")
    elif r == "Lmulti":
        _req(all(_aeq(p.subject, s) for p in ps), "Lmulti: premise subjects")
        _req(msort(p.ltype for p in ps) == t, "Lmulti: multiset")


def lderiv_size(d: LinDerivation, check: bool = True) -> int:
    """Number of rule instances, not counting Lmulti."""
    if check:
        problem = explain_lderiv(d)
        if problem is not None:
            raise InvalidDerivation(problem)
    return d.size()


# -- renaming and fresh names ------------------------------------------------

class _Supply:
    def __init__(self, *objs):
        self.taken: set = set()
        for o in objs:
            self.taken |= all_names(o)

    def fresh(self, base: str) -> str:
        n = fresh_name(base.rstrip("'"), self.taken)
        self.taken.add(n)
        return n


def _rename_eig(d: LinDerivation, old: str, new: str, sup: _Supply) -> LinDerivation:
    """Rename the free eigenvariable ``old`` to ``new`` (``new`` assumed fresh)."""
    s = d.subject
    if isinstance(s, Fresh) and d.rule == "LNu":
        if s.eig == old:
            return d
        if s.eig == new and old in free_eigs(s.body):
            d = _rebind_nu(d, sup.fresh(new), sup)
            s = d.subject
    prem = tuple(_rename_eig(p, old, new, sup) for p in d.premises)
    subject = subst_eig(s, {old: Eig(new)})
    return mk(d.rule, subject, rename_ltype_eig(d.ltype, old, new), prem)


def _rebind_nu(d: LinDerivation, new: str, sup: _Supply) -> LinDerivation:
    """Alpha-rename the binder of an LNu node."""
    s = d.subject
    (p,) = d.premises
    p2 = _rename_eig(p, s.eig, new, sup)
    return mk("LNu", Fresh(new, s.kind, subst_eig(s.body, {s.eig: Eig(new)})), d.ltype, [p2])


def _dsubst(d: LinDerivation, x: Optional[str], n: Optional[Metaterm], pool: Optional[dict],
            ren: dict, sup: _Supply) -> LinDerivation:
    """Substitute pooled derivations of ``n`` for the Lvar leaves of ``x``, and
    apply the variable renaming ``ren`` everywhere."""
    fv = free_names(d.subject)[0]
    active = x is not None and x in fv
    ren = {k: v for k, v in ren.items() if k in fv}
    if not active and not ren:
        return d
    s = d.subject
    if d.rule == "Lvar":
        if active:
            bucket = pool.get(d.ltype.key)
            if not bucket:
                raise PreconditionViolated("multiset of the argument does not cover the uses")
            return bucket.pop(0)
        return lvar(ren[s.name], d.ltype)
    if d.rule == "Llam":
        y = s.binder
        ren2 = {k: v for k, v in ren.items() if k != y}
        x2 = None if y == x else x
        danger = set(ren2.values())
        if x2 is not None and n is not None:
            danger |= free_names(n)[0]
        if y in danger:
            z = sup.fresh(y)
            ren2[y] = z
        (p,) = d.premises
        p2 = _dsubst(p, x2, n, pool, ren2, sup)
        b = ren2.get(y, y)
        return mk("Llam", Lam(b, p2.subject), d.ltype, [p2])
    if d.rule == "LNu" and active and s.eig in free_eigs(n):
        d = _rebind_nu(d, sup.fresh(s.eig), sup)
        s = d.subject
    prem = tuple(_dsubst(p, x, n, pool, ren, sup) for p in d.premises)
    sigma = {k: Var(v) for k, v in ren.items()}
    if active:
        sigma[x] = n
    return mk(d.rule, substitute(s, sigma), d.ltype, prem)


def _rename_var(d: LinDerivation, old: str, new: str, sup: _Supply) -> LinDerivation:
    return _dsubst(d, None, None, None, {old: new}, sup)


def _names(*ds: LinDerivation) -> set:
    out: set = set()
    for d in ds:
        out |= all_names(d.subject)
        out |= set(d.env)
    return out


# -- weighted substitution ---------------------------------------------------

def subst_lderiv(phi: LinDerivation, psi: LinDerivation, x: str) -> LinDerivation:
    """From E, x:M |- M : T and F |- N : M build E+F |- M[x:=N] : T.

    The size of the result is size(phi) - |M| + size(psi).
    """
    if psi.rule != "Lmulti":
        raise PreconditionViolated("the argument derivation must be an Lmulti node")
    if phi.rule == "Lmulti":
        raise PreconditionViolated("the main derivation must type a single linear type")
    for d in (phi, psi):
        problem = explain_lderiv(d)
        if problem is not None:
            raise PreconditionViolated(f"invalid input derivation: {problem}")
    if x in free_names(psi.subject)[0]:
        raise PreconditionViolated(f"{x} is free in the substituted term")
    if phi.env.get(x, ()) != psi.ltype:
        raise PreconditionViolated(f"multiset of {x} differs from the argument's")
    sup = _Supply(phi.subject, psi.subject)
    sup.taken |= set(phi.env) | set(psi.env)
    return _subst_core(phi, x, psi, sup)


def _subst_core(phi, x, psi, sup) -> LinDerivation:
    pool: dict = {}
    for p in psi.premises:
        pool.setdefault(p.ltype.key, []).append(p)
    out = _dsubst(phi, x, psi.subject, pool, {}, sup)
    if any(pool.values()):
        raise PreconditionViolated("argument derivations left unused")
    return out


# -- weak-head subject reduction ---------------------------------------------

def wh_step_lderiv(d: LinDerivation, step: Step) -> LinDerivation:
    """Transport ``d`` along a weak-head step; the result is strictly smaller."""
    if step.rule is RuleTag.StExpand:
        raise NotWeakHead("elaboration is not a reduction step")
    if not _aeq(d.subject, step.before):
        raise SubjectMismatch("the step does not start at the derivation's subject")
    sup = _Supply(d.subject, step.before)
    out = _wh(d, tuple(step.position), step.rule, sup)
    if not _aeq(out.subject, step.after):
        raise SubjectMismatch("the transported derivation has an unexpected subject")
    return out


def _wh(d, path, rule, sup) -> LinDerivation:
    if not path:
        return _wh_root(d, rule, sup)
    if path[0] != 0:
        raise NotWeakHead("position leaves the weak-head spine")
    rest = path[1:]
    r, s = d.rule, d.subject
    if r == "Lapp":
        f, m = d.premises
        f2 = _wh(f, rest, rule, sup)
        return mk(r, App(f2.subject, s.arg), d.ltype, [f2, m])
    if r == "Lappt":
        p2 = _wh(d.premises[0], rest, rule, sup)
        return mk(r, TyApp(p2.subject, s.arg), d.ltype, [p2])
    if r == "LGuard":
        c, n = d.premises
        c2 = _wh(c, rest, rule, sup)
        return mk(r, Guard(c2.subject, s.then), d.ltype, [c2, n])
    if r == "LNu":
        p2 = _wh(d.premises[0], rest, rule, sup)
        return mk(r, Fresh(s.eig, s.kind, p2.subject), d.ltype, [p2])
    if r == "LVerEig":
        p2 = _wh(d.premises[0], rest, rule, sup)
        return mk(r, Verif(s.ty, p2.subject), d.ltype, [p2])
    if r == "LVerImp":
        p2 = _wh(d.premises[0], (0, 0) + rest, rule, sup)
        return mk(r, Verif(s.ty, p2.subject.arg.fun), d.ltype, [p2])
    if r == "LVerAll":
        p2 = _wh(d.premises[0], (0, 0, 0) + rest, rule, sup)
        return mk(r, Verif(s.ty, p2.subject.body.arg.fun), d.ltype, [p2])
    raise NotWeakHead(f"no weak-head position below {r}")


_ROOT = {
    "LVerImp": RuleTag.VerifImp, "LVerAll": RuleTag.VerifAll,
    "LGenImp": RuleTag.GenImp, "LGenAll": RuleTag.GenAll,
}


def _wh_root(d, rule, sup) -> LinDerivation:
    r = d.rule
    if r == "Lapp" and rule is RuleTag.Beta:
        lam, m = d.premises
        if lam.rule != "Llam":
            raise SubjectMismatch("Beta step without an abstraction")
        (q,) = lam.premises
        x = lam.subject.binder
        if x in free_names(m.subject)[0]:
            z = sup.fresh(x)
            q = _rename_var(q, x, z, sup)
            x = z
        return _subst_core(q, x, m, sup)
    if r == "Lappt" and rule is RuleTag.TyBeta:
        (lt,) = d.premises
        if lt.rule != "Llamt":
            raise SubjectMismatch("TyBeta step without a type abstraction")
        return lt.premises[0]
    if r == "LGuard" and rule is RuleTag.GuardStar:
        c, n = d.premises
        if c.rule != "LStarIntro":
            raise SubjectMismatch("GuardStar step without star")
        return n
    if r == "LVerEig" and rule is RuleTag.VerifEig:
        if d.premises[0].rule != "LGenEig":
            raise SubjectMismatch("VerifEig step without a generator")
        return lstar()
    if r == "LNu" and rule is RuleTag.FreshDrop:
        if d.subject.eig in free_eigs(d.subject.body):
            raise SubjectMismatch("FreshDrop on a used eigenvariable")
        return d.premises[0]
    if _ROOT.get(r) is rule:
        return d.premises[0]
    raise NotWeakHead(f"{rule} does not fire at the root of an {r} node")


# -- anti-substitution and subject expansion ---------------------------------

def _anti(phi: LinDerivation, q: Metaterm, x: str, n: Metaterm, sup: _Supply):
    """Split a derivation of q[x:=n] into one of q (with x typed) and the
    derivations of the occurrences of n."""
    if isinstance(q, Var) and q.name == x:
        return lvar(x, phi.ltype), [phi]
    if x not in free_names(q)[0]:
        return phi, []
    r = phi.rule
    if isinstance(q, App) and r == "Lapp":
        f, m = phi.premises
        f2, c1 = _anti(f, q.fun, x, n, sup)
        parts = [_anti(p, q.arg, x, n, sup) for p in m.premises]
        m2 = mk("Lmulti", q.arg, m.ltype, [p for p, _ in parts])
        return mk(r, App(f2.subject, q.arg), phi.ltype, [f2, m2]), \
            c1 + [c for _, cs in parts for c in cs]
    if isinstance(q, Lam) and r == "Llam":
        z = sup.fresh(q.binder)
        p = _rename_var(phi.premises[0], phi.subject.binder, z, sup)
        p2, cs = _anti(p, rename_var(q.body, q.binder, z), x, n, sup)
        return mk(r, Lam(z, p2.subject), phi.ltype, [p2]), cs
    if isinstance(q, TyLam) and r == "Llamt":
        if q.binder in free_names(n)[1]:
            b = sup.fresh(q.binder)
            q = TyLam(b, q.kind, substitute(q.body, {q.binder: TVar(b)}))
        body = substitute(q.body, {q.binder: phi.ltype.arg})
        p2, cs = _anti(phi.premises[0], body, x, n, sup)
        return mk(r, q, phi.ltype, [p2]), cs
    if isinstance(q, TyApp) and r == "Lappt":
        p2, cs = _anti(phi.premises[0], q.fun, x, n, sup)
        return mk(r, TyApp(p2.subject, q.arg), phi.ltype, [p2]), cs
    if isinstance(q, Guard) and r == "LGuard":
        c, t = phi.premises
        c2, cs1 = _anti(c, q.cond, x, n, sup)
        t2, cs2 = _anti(t, q.then, x, n, sup)
        return mk(r, Guard(c2.subject, t2.subject), phi.ltype, [c2, t2]), cs1 + cs2
    if isinstance(q, Fresh) and r == "LNu":
        c = sup.fresh(q.eig)
        p = _rename_eig(phi.premises[0], phi.subject.eig, c, sup)
        p2, cs = _anti(p, subst_eig(q.body, {q.eig: Eig(c)}), x, n, sup)
        return mk(r, Fresh(c, q.kind, p2.subject), phi.ltype, [p2]), cs
    if isinstance(q, Verif):
        (p,) = phi.premises
        if r == "LVerEig":
            p2, cs = _anti(p, q.arg, x, n, sup)
            return mk(r, Verif(q.ty, p2.subject), phi.ltype, [p2]), cs
        if r == "LVerImp":
            p2, cs = _anti(p, Verif(q.ty.cod, App(q.arg, Gen(q.ty.dom))), x, n, sup)
            return mk(r, Verif(q.ty, p2.subject.arg.fun), phi.ltype, [p2]), cs
        if r == "LVerAll":
            b = p.subject.eig
            inner = Fresh(b, q.ty.kind, Verif(substitute(q.ty.body, {q.ty.binder: Eig(b)}),
                                              TyApp(q.arg, Eig(b))))
            p2, cs = _anti(p, inner, x, n, sup)
            return mk(r, Verif(q.ty, p2.subject.body.arg.fun), phi.ltype, [p2]), cs
    raise SubjectMismatch(f"cannot split {r} against {print_term(q)}")


def expand_lderiv(d: LinDerivation, step: Step) -> LinDerivation:
    """Pull a derivation of the step's reduct back to its source (any context)."""
    if step.rule is RuleTag.StExpand:
        raise SubjectMismatch("elaboration steps must be unfolded first")
    if not _aeq(d.subject, step.after):
        raise SubjectMismatch("the step does not end at the derivation's subject")
    if not validate_step(F, step):
        raise SubjectMismatch("the step does not re-validate")
    sup = _Supply(d.subject, step.before)
    return _exp(d, step.before, tuple(step.position), step.rule, sup)


def _exp(d, before, path, rule, sup) -> LinDerivation:
    if not path:
        return _exp_root(d, before, rule, sup)
    i, rest = path[0], path[1:]
    r = d.rule
    b = before
    if isinstance(b, App) and r == "Lapp":
        f, m = d.premises
        if i == 0:
            f2 = _exp(f, b.fun, rest, rule, sup)
            return mk(r, App(f2.subject, b.arg), d.ltype, [f2, m])
        m2 = mk("Lmulti", b.arg, m.ltype, [_exp(p, b.arg, rest, rule, sup) for p in m.premises])
        return mk(r, App(f.subject, b.arg), d.ltype, [f, m2])
    if isinstance(b, Lam) and r == "Llam":
        z = sup.fresh(b.binder)
        p = _rename_var(d.premises[0], d.subject.binder, z, sup)
        p2 = _exp(p, rename_var(b.body, b.binder, z), rest, rule, sup)
        return mk(r, Lam(z, p2.subject), d.ltype, [p2])
    if isinstance(b, TyLam) and r == "Llamt":
        p2 = _exp(d.premises[0], substitute(b.body, {b.binder: d.ltype.arg}), rest, rule, sup)
        return mk(r, b, d.ltype, [p2])
    if isinstance(b, TyApp) and r == "Lappt":
        p2 = _exp(d.premises[0], b.fun, rest, rule, sup)
        return mk(r, TyApp(p2.subject, b.arg), d.ltype, [p2])
    if isinstance(b, Guard) and r == "LGuard":
        c, t = d.premises
        if i == 0:
            c = _exp(c, b.cond, rest, rule, sup)
        else:
            t = _exp(t, b.then, rest, rule, sup)
        return mk(r, Guard(c.subject, t.subject), d.ltype, [c, t])
    if isinstance(b, Fresh) and r == "LNu":
        c = sup.fresh(b.eig)
        p = _rename_eig(d.premises[0], d.subject.eig, c, sup)
        p2 = _exp(p, subst_eig(b.body, {b.eig: Eig(c)}), rest, rule, sup)
        return mk(r, Fresh(c, b.kind, p2.subject), d.ltype, [p2])
    if isinstance(b, Verif):
        (p,) = d.premises
        if r == "LVerEig":
            p2 = _exp(p, b.arg, rest, rule, sup)
            return mk(r, Verif(b.ty, p2.subject), d.ltype, [p2])
        if r == "LVerImp":
            p2 = _exp(p, Verif(b.ty.cod, App(b.arg, Gen(b.ty.dom))), (0, 0) + rest, rule, sup)
            return mk(r, Verif(b.ty, p2.subject.arg.fun), d.ltype, [p2])
        if r == "LVerAll":
            if p.subject.eig in free_eigs(b):
                p = _rebind_nu(p, sup.fresh(p.subject.eig), sup)
            e = p.subject.eig
            inner = Fresh(e, b.ty.kind, Verif(substitute(b.ty.body, {b.ty.binder: Eig(e)}),
                                              TyApp(b.arg, Eig(e))))
            p2 = _exp(p, inner, (0, 0, 0) + rest, rule, sup)
            return mk(r, Verif(b.ty, p2.subject.body.arg.fun), d.ltype, [p2])
    raise SubjectMismatch(f"{r} does not fit {print_term(before)}")


def _exp_root(d, before, rule, sup) -> LinDerivation:
    t = d.ltype
    if rule is RuleTag.Beta:
        lam, n = before.fun, before.arg
        x0 = sup.fresh(lam.binder)
        q = rename_var(lam.body, lam.binder, x0)
        phi, coll = _anti(d, q, x0, n, sup)
        psi = lmulti(n, coll)
        if phi.env.get(x0, ()) != psi.ltype:
            raise SubjectMismatch("anti-substitution lost an occurrence")
        l = mk("Llam", Lam(x0, phi.subject), LArrow(psi.ltype, t), [phi])
        return mk("Lapp", App(l.subject, n), t, [l, psi])
    if rule is RuleTag.TyBeta:
        lt = mk("Llamt", before.fun, LForAll(before.arg, t), [d])
        return mk("Lappt", before, t, [lt])
    if rule is RuleTag.GuardStar:
        return mk("LGuard", before, t, [lstar(), d])
    if rule is RuleTag.VerifEig:
        if d.rule != "LStarIntro":
            raise SubjectMismatch("star must be typed by the axiom")
        g = mk("LGenEig", before.arg, LGen(before.ty.name))
        return mk("LVerEig", before, LStar(), [g])
    if rule is RuleTag.VerifImp:
        return mk("LVerImp", before, t, [d])
    if rule is RuleTag.VerifAll:
        return mk("LVerAll", before, t, [d])
    if rule is RuleTag.GenImp:
        return mk("LGenImp", before, t, [d])
    if rule is RuleTag.GenAll:
        return mk("LGenAll", before, t, [d])
    if rule is RuleTag.FreshDrop:
        used = ltype_eigs(t).union(*(ltype_eigs(m) for m in d.env.values()))
        b = before
        if b.eig in used:
            b = Fresh(sup.fresh(b.eig), b.kind, b.body)
        return mk("LNu", b, t, [d])
    raise SubjectMismatch(f"cannot expand {rule}")


# -- traces ------------------------------------------------------------------

def unfold_elaboration(before: Metaterm, after: Metaterm, limit: int = 100_000) -> list:
    """Replay an ST elaboration as GenImp/VerifImp steps of the F calculus."""
    steps = []
    cur = before
    while not _aeq(cur, after):
        cands = [p for p, r in enumerate_redexes(F, cur) if r in (RuleTag.GenImp, RuleTag.VerifImp)]
        if not cands or len(steps) >= limit:
            raise InvalidTrace("elaboration step cannot be replayed")
        s = apply_at(F, cur, cands[0])
        steps.append(s)
        cur = s.after
    return steps


def core_steps(trace: Trace) -> list:
    out = []
    for s in trace.steps:
        if s.rule is RuleTag.StExpand:
            out.extend(unfold_elaboration(s.before, s.after))
        else:
            out.append(s)
    return out


def derive_from_trace(trace: Trace) -> LinDerivation:
    """A derivation of |- M0 : star for the start of a trace that reaches star."""
    if trace.level is Level.FOMEGA:
        raise InvalidTrace("witnesses are built for ST and F traces only")
    if trace.outcome is not Outcome.StarReached or not isinstance(trace.final, Star):
        raise InvalidTrace("the trace does not reach star")
    prev = trace.start
    for s in trace.steps:
        if not _aeq(s.before, prev):
            raise InvalidTrace("steps do not chain")
        prev = s.after
    d = lstar()
    for s in reversed(core_steps(trace)):
        d = expand_lderiv(d, s)
    if not _aeq(d.subject, trace.start):
        raise InvalidTrace("expansion did not reach the initial term")
    problem = explain_lderiv(d)
    if problem is not None:
        raise InvalidDerivation(f"subject expansion leaves the system: {problem}")
    return d


def replay_weak_head(d: LinDerivation, trace: Trace) -> tuple[list, LinDerivation]:
    """Push ``d`` along a weak-head trace; returns the sizes seen and the last derivation."""
    sizes = [d.size()]
    for s in core_steps(trace):
        d = wh_step_lderiv(d, s)
        sizes.append(d.size())
    return sizes, d
