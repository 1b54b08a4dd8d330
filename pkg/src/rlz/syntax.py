"""Kinds, types and metaterms for the three calculus levels.

Terms are immutable named trees.  Alpha-equivalence is decided by comparing
nameless keys (:func:`alpha_key`), so binder names are only representatives.
At level FOmega every embedded type is kept in type-beta-normal form.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union


class RlzError(Exception):
    """Base class for every error raised by the engine."""


class ParseError(RlzError):
    def __init__(self, position: int, expected: str, text: str = ""):
        self.position = position
        self.expected = expected
        near = text[position:position + 12] if text else ""
        super().__init__(f"parse error at {position}: expected {expected}"
                         + (f" near {near!r}" if near else ""))


class LevelError(RlzError):
    """A construct is not available at the requested level."""


class SortError(RlzError):
    """A substitution mixes sorts (terms for type variables and so on)."""


class Level(enum.Enum):
    ST = "st"
    F = "f"
    FOMEGA = "fw"

    @classmethod
    def parse(cls, text: str) -> "Level":
        aliases = {"st": cls.ST, "f": cls.F, "fw": cls.FOMEGA, "fomega": cls.FOMEGA}
        try:
            return aliases[text.lower()]
        except KeyError:
            raise LevelError(f"unknown level {text!r}") from None


# -- kinds -------------------------------------------------------------------

@dataclass(frozen=True)
class Prop:
    def __str__(self) -> str:
        return print_kind(self)


@dataclass(frozen=True)
class Base:
    name: str

    def __str__(self) -> str:
        return print_kind(self)


@dataclass(frozen=True)
class KArrow:
    dom: "Kind"
    cod: "Kind"

    def __str__(self) -> str:
        return print_kind(self)


Kind = Union[Prop, Base, KArrow]
PROP = Prop()


# -- types -------------------------------------------------------------------

@dataclass(frozen=True)
class TVar:
    name: str

    def __str__(self) -> str:
        return print_type(self)


@dataclass(frozen=True)
class Eig:
    """Eigenvariable: a constant type symbol, written ``#name``."""
    name: str

    def __str__(self) -> str:
        return print_type(self)


@dataclass(frozen=True)
class Arrow:
    dom: "Type"
    cod: "Type"

    def __str__(self) -> str:
        return print_type(self)


@dataclass(frozen=True)
class ForAll:
    binder: str
    kind: Kind
    body: "Type"

    def __str__(self) -> str:
        return print_type(self)


@dataclass(frozen=True)
class TLam:
    binder: str
    kind: Kind
    body: "Type"

    def __str__(self) -> str:
        return print_type(self)


@dataclass(frozen=True)
class TApp:
    fun: "Type"
    arg: "Type"

    def __str__(self) -> str:
        return print_type(self)


Type = Union[TVar, Eig, Arrow, ForAll, TLam, TApp]
TYPE_CLASSES = (TVar, Eig, Arrow, ForAll, TLam, TApp)


# -- metaterms ---------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True)
class Lam:
    binder: str
    body: "Metaterm"

    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True)
class App:
    fun: "Metaterm"
    arg: "Metaterm"

    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True)
class TyLam:
    binder: str
    kind: Kind
    body: "Metaterm"

    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True)
class TyApp:
    fun: "Metaterm"
    arg: Type

    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True)
class Star:
    def __str__(self) -> str:
        return "star"


@dataclass(frozen=True)
class Guard:
    cond: "Metaterm"
    then: "Metaterm"

    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True)
class Gen:
    ty: Type

    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True)
class Verif:
    ty: Type
    arg: "Metaterm"

    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True)
class Fresh:
    """The nu binder; binds an eigenvariable (stored without the ``#``)."""
    eig: str
    kind: Kind
    body: "Metaterm"

    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True)
class Ann:
    """Surface annotation ``(t : A)``; only the type checker looks at it."""
    term: "Metaterm"
    ty: Type

    def __str__(self) -> str:
        return print_term(self)


Metaterm = Union[Var, Lam, App, TyLam, TyApp, Star, Guard, Gen, Verif, Fresh, Ann]
TERM_CLASSES = (Var, Lam, App, TyLam, TyApp, Star, Guard, Gen, Verif, Fresh, Ann)
STAR = Star()

TypeEnv = dict  # ordered map: variable name -> Type


def is_type(x) -> bool:
    return isinstance(x, TYPE_CLASSES)


def is_term(x) -> bool:
    return isinstance(x, TERM_CLASSES)


def is_pure(m: Metaterm) -> bool:
    """Pure metaterms use only variables, abstractions and applications."""
    stack = [m]
    while stack:
        t = stack.pop()
        if isinstance(t, Var):
            continue
        if isinstance(t, (Lam, TyLam)):
            stack.append(t.body)
        elif isinstance(t, App):
            stack.extend((t.fun, t.arg))
        elif isinstance(t, TyApp):
            stack.append(t.fun)
        elif isinstance(t, Ann):
            stack.append(t.term)
        else:
            return False
    return True


def strip_annotations(m: Metaterm) -> Metaterm:
    if isinstance(m, Ann):
        return strip_annotations(m.term)
    if isinstance(m, Lam):
        return Lam(m.binder, strip_annotations(m.body))
    if isinstance(m, TyLam):
        return TyLam(m.binder, m.kind, strip_annotations(m.body))
    if isinstance(m, App):
        return App(strip_annotations(m.fun), strip_annotations(m.arg))
    if isinstance(m, TyApp):
        return TyApp(strip_annotations(m.fun), m.arg)
    if isinstance(m, Guard):
        return Guard(strip_annotations(m.cond), strip_annotations(m.then))
    if isinstance(m, Verif):
        return Verif(m.ty, strip_annotations(m.arg))
    if isinstance(m, Fresh):
        return Fresh(m.eig, m.kind, strip_annotations(m.body))
    return m


def arrows(*tys: Type) -> Type:
    """``arrows(A, B, C)`` is ``A -> B -> C``."""
    out = tys[-1]
    for t in reversed(tys[:-1]):
        out = Arrow(t, out)
    return out


def apps(head: Metaterm, *args) -> Metaterm:
    """Left-nested application; type arguments become type applications."""
    for a in args:
        head = TyApp(head, a) if is_type(a) else App(head, a)
    return head


def spine(m: Metaterm) -> tuple[Metaterm, list]:
    """Split ``h I1 ... In`` into the head and its inputs (terms or types)."""
    inputs = []
    while isinstance(m, (App, TyApp)):
        inputs.append(m.arg)
        m = m.fun
    inputs.reverse()
    return m, inputs


def type_spine(t: Type) -> tuple[Type, list[Type]]:
    args = []
    while isinstance(t, TApp):
        args.append(t.arg)
        t = t.fun
    args.reverse()
    return t, args


# -- free names --------------------------------------------------------------

def type_free(t: Type) -> tuple[set, set]:
    """Free type variables and eigenvariables of a type."""
    tv: set = set()
    eg: set = set()

    def go(t, bound):
        if isinstance(t, TVar):
            if t.name not in bound:
                tv.add(t.name)
        elif isinstance(t, Eig):
            eg.add(t.name)
        elif isinstance(t, Arrow):
            go(t.dom, bound)
            go(t.cod, bound)
        elif isinstance(t, (ForAll, TLam)):
            go(t.body, bound | {t.binder})
        elif isinstance(t, TApp):
            go(t.fun, bound)
            go(t.arg, bound)

    go(t, frozenset())
    return tv, eg


def free_names(x) -> tuple[set, set, set]:
    """(term variables, type variables, eigenvariables) free in ``x``."""
    if is_type(x):
        tv, eg = type_free(x)
        return set(), tv, eg
    fv: set = set()
    tv: set = set()
    eg: set = set()

    def ty(t, btv, beg):
        a, b = type_free(t)
        tv.update(a - btv)
        eg.update(b - beg)

    def go(m, bv, btv, beg):
        if isinstance(m, Var):
            if m.name not in bv:
                fv.add(m.name)
        elif isinstance(m, Lam):
            go(m.body, bv | {m.binder}, btv, beg)
        elif isinstance(m, App):
            go(m.fun, bv, btv, beg)
            go(m.arg, bv, btv, beg)
        elif isinstance(m, TyLam):
            go(m.body, bv, btv | {m.binder}, beg)
        elif isinstance(m, TyApp):
            go(m.fun, bv, btv, beg)
            ty(m.arg, btv, beg)
        elif isinstance(m, Guard):
            go(m.cond, bv, btv, beg)
            go(m.then, bv, btv, beg)
        elif isinstance(m, Gen):
            ty(m.ty, btv, beg)
        elif isinstance(m, Verif):
            ty(m.ty, btv, beg)
            go(m.arg, bv, btv, beg)
        elif isinstance(m, Fresh):
            go(m.body, bv, btv, beg | {m.eig})
        elif isinstance(m, Ann):
            go(m.term, bv, btv, beg)
            ty(m.ty, btv, beg)

    go(x, frozenset(), frozenset(), frozenset())
    return fv, tv, eg


def free_vars(m: Metaterm) -> set:
    return free_names(m)[0]


def free_eigs(x) -> set:
    return free_names(x)[2]


def all_names(x) -> set:
    """Every name occurring anywhere in ``x``, bound or free (all sorts)."""
    out: set = set()
    stack = [x]
    while stack:
        t = stack.pop()
        if isinstance(t, (Var, TVar, Eig)):
            out.add(t.name)
        elif isinstance(t, (Lam, TyLam, ForAll, TLam)):
            out.add(t.binder)
            stack.append(t.body)
        elif isinstance(t, Fresh):
            out.add(t.eig)
            stack.append(t.body)
        elif isinstance(t, (App, TyApp, TApp)):
            stack.extend((t.fun, t.arg))
        elif isinstance(t, Arrow):
            stack.extend((t.dom, t.cod))
        elif isinstance(t, Guard):
            stack.extend((t.cond, t.then))
        elif isinstance(t, Gen):
            stack.append(t.ty)
        elif isinstance(t, (Verif, Ann)):
            stack.extend((t.ty, t.arg if isinstance(t, Verif) else t.term))
    return out


def fresh_name(base: str, avoid: Iterable[str]) -> str:
    """``base`` with primes appended until it avoids ``avoid``."""
    avoid = set(avoid)
    name = base
    while name in avoid:
        name += "'"
    return name


# -- substitution ------------------------------------------------------------

def _values_free(vals) -> tuple[set, set, set]:
    fv: set = set()
    tv: set = set()
    eg: set = set()
    for v in vals:
        a, b, c = free_names(v)
        fv |= a
        tv |= b
        eg |= c
    return fv, tv, eg


def _subst(x, tm: dict, ty: dict, eg: dict):
    """Parallel capture-avoiding substitution over the three namespaces.

    ``tm`` maps term variables to metaterms, ``ty`` type variables to types and
    ``eg`` eigenvariables to types (used only for renaming and for turning
    eigenvariables back into type variables).
    """
    if not (tm or ty or eg):
        return x
    if isinstance(x, Var):
        return tm.get(x.name, x)
    if isinstance(x, TVar):
        return ty.get(x.name, x)
    if isinstance(x, Eig):
        return eg.get(x.name, x)
    if isinstance(x, Arrow):
        return Arrow(_subst(x.dom, tm, ty, eg), _subst(x.cod, tm, ty, eg))
    if isinstance(x, TApp):
        return TApp(_subst(x.fun, tm, ty, eg), _subst(x.arg, tm, ty, eg))
    if isinstance(x, (ForAll, TLam)):
        ty2 = {k: v for k, v in ty.items() if k != x.binder}
        eg2 = dict(eg)
        binder, body = _avoid_tvar(x.binder, x.body, ty2, eg2, {})
        return type(x)(binder, x.kind, _subst(body, {}, ty2, eg2))
    if isinstance(x, App):
        return App(_subst(x.fun, tm, ty, eg), _subst(x.arg, tm, ty, eg))
    if isinstance(x, TyApp):
        return TyApp(_subst(x.fun, tm, ty, eg), _subst(x.arg, tm, ty, eg))
    if isinstance(x, Lam):
        tm2 = {k: v for k, v in tm.items() if k != x.binder}
        fv_body = free_names(x.body)[0]
        relevant = [v for k, v in tm2.items() if k in fv_body]
        binder, body = x.binder, x.body
        if relevant and binder in _values_free(relevant)[0]:
            new = fresh_name(binder, _values_free(relevant)[0] | fv_body | set(tm2))
            body = _subst(body, {binder: Var(new)}, {}, {})
            binder = new
        return Lam(binder, _subst(body, tm2, ty, eg))
    if isinstance(x, TyLam):
        ty2 = {k: v for k, v in ty.items() if k != x.binder}
        binder, body = _avoid_tvar(x.binder, x.body, ty2, eg, tm)
        return TyLam(binder, x.kind, _subst(body, tm, ty2, eg))
    if isinstance(x, Guard):
        return Guard(_subst(x.cond, tm, ty, eg), _subst(x.then, tm, ty, eg))
    if isinstance(x, Gen):
        return Gen(_subst(x.ty, tm, ty, eg))
    if isinstance(x, Verif):
        return Verif(_subst(x.ty, tm, ty, eg), _subst(x.arg, tm, ty, eg))
    if isinstance(x, Fresh):
        eg2 = {k: v for k, v in eg.items() if k != x.eig}
        _, _, feg = free_names(x.body)
        feg.discard(x.eig)
        vals = [v for k, v in tm.items()] + list(ty.values()) + [
            v for k, v in eg2.items() if k in feg]
        captured = _values_free(vals)[2]
        eig, body = x.eig, x.body
        if eig in captured:
            new = _fresh_eig_name(eig, captured | all_names(x.body) | set(eg2))
            body = _subst(body, {}, {}, {eig: Eig(new)})
            eig = new
        return Fresh(eig, x.kind, _subst(body, tm, ty, eg2))
    if isinstance(x, Ann):
        return Ann(_subst(x.term, tm, ty, eg), _subst(x.ty, tm, ty, eg))
    return x  # Star, kinds


def _avoid_tvar(binder, body, ty, eg, tm):
    """Rename a type binder if a substituted value would capture it."""
    _, ftv, _ = free_names(body)
    vals = [v for k, v in ty.items() if k in ftv] + list(eg.values()) + list(tm.values())
    if not vals:
        return binder, body
    captured = _values_free(vals)[1]
    if binder not in captured:
        return binder, body
    new = fresh_name(binder, captured | all_names(body) | set(ty))
    return new, _subst(body, {}, {binder: TVar(new)}, {})


def _fresh_eig_name(base: str, avoid: set) -> str:
    return fresh_name(base, avoid)


def substitute(target, binding: Mapping[str, object], level: Level | None = None):
    """Capture-avoiding parallel substitution.

    Keys bound to metaterms replace term variables; keys bound to types replace
    type variables.  At FOmega the embedded types are renormalized.
    """
    tm, ty = {}, {}
    for k, v in binding.items():
        if is_term(v):
            if is_type(target):
                raise SortError(f"cannot substitute a term for {k} inside a type")
            tm[k] = v
        elif is_type(v):
            ty[k] = v
        else:
            raise SortError(f"binding for {k} is neither a term nor a type")
    out = _subst(target, tm, ty, {})
    if level is Level.FOMEGA:
        out = canon(out)
    return out


def subst_eig(target, binding: Mapping[str, Type]):
    """Replace free eigenvariables by types (renaming and closing/opening)."""
    return _subst(target, {}, {}, dict(binding))


def rename_var(m: Metaterm, old: str, new: str) -> Metaterm:
    return _subst(m, {old: Var(new)}, {}, {})


# -- type normalization (FOmega canonical forms) -----------------------------

class NormalizationError(RlzError):
    pass


def nf_type(t: Type, budget: int = 100000) -> Type:
    """Type-beta-normal form; the budget guards against ill-kinded input."""
    counter = [budget]

    def go(t):
        if isinstance(t, (TVar, Eig)):
            return t
        if isinstance(t, Arrow):
            return Arrow(go(t.dom), go(t.cod))
        if isinstance(t, (ForAll, TLam)):
            return type(t)(t.binder, t.kind, go(t.body))
        f = go(t.fun)
        a = go(t.arg)
        if isinstance(f, TLam):
            counter[0] -= 1
            if counter[0] < 0:
                raise NormalizationError("type normalization budget exhausted")
            return go(_subst(f.body, {}, {f.binder: a}, {}))
        return TApp(f, a)

    return go(t)


def canon(x):
    """Normalize every type embedded in ``x`` (identity at ST and F)."""
    if is_type(x):
        return nf_type(x)
    if isinstance(x, Lam):
        return Lam(x.binder, canon(x.body))
    if isinstance(x, App):
        return App(canon(x.fun), canon(x.arg))
    if isinstance(x, TyLam):
        return TyLam(x.binder, x.kind, canon(x.body))
    if isinstance(x, TyApp):
        return TyApp(canon(x.fun), nf_type(x.arg))
    if isinstance(x, Guard):
        return Guard(canon(x.cond), canon(x.then))
    if isinstance(x, Gen):
        return Gen(nf_type(x.ty))
    if isinstance(x, Verif):
        return Verif(nf_type(x.ty), canon(x.arg))
    if isinstance(x, Fresh):
        return Fresh(x.eig, x.kind, canon(x.body))
    if isinstance(x, Ann):
        return Ann(canon(x.term), nf_type(x.ty))
    return x


# -- alpha-equivalence -------------------------------------------------------

def _kind_key(k: Kind):
    if isinstance(k, Prop):
        return "P"
    if isinstance(k, Base):
        return ("B", k.name)
    return ("K", _kind_key(k.dom), _kind_key(k.cod))


def _idx(stack: tuple, name: str):
    for i in range(len(stack) - 1, -1, -1):
        if stack[i] == name:
            return len(stack) - 1 - i
    return None


def _type_key(t: Type, tvs: tuple, egs: tuple):
    if isinstance(t, TVar):
        i = _idx(tvs, t.name)
        return ("t", i) if i is not None else ("T", t.name)
    if isinstance(t, Eig):
        i = _idx(egs, t.name)
        return ("e", i) if i is not None else ("E", t.name)
    if isinstance(t, Arrow):
        return ("->", _type_key(t.dom, tvs, egs), _type_key(t.cod, tvs, egs))
    if isinstance(t, ForAll):
        return ("A", _kind_key(t.kind), _type_key(t.body, tvs + (t.binder,), egs))
    if isinstance(t, TLam):
        return ("L", _kind_key(t.kind), _type_key(t.body, tvs + (t.binder,), egs))
    return ("@", _type_key(t.fun, tvs, egs), _type_key(t.arg, tvs, egs))


def _term_key(m, vs: tuple, tvs: tuple, egs: tuple):
    if isinstance(m, Var):
        i = _idx(vs, m.name)
        return ("v", i) if i is not None else ("V", m.name)
    if isinstance(m, Lam):
        return ("lam", _term_key(m.body, vs + (m.binder,), tvs, egs))
    if isinstance(m, App):
        return ("app", _term_key(m.fun, vs, tvs, egs), _term_key(m.arg, vs, tvs, egs))
    if isinstance(m, TyLam):
        return ("tlam", _kind_key(m.kind), _term_key(m.body, vs, tvs + (m.binder,), egs))
    if isinstance(m, TyApp):
        return ("tapp", _term_key(m.fun, vs, tvs, egs), _type_key(m.arg, tvs, egs))
    if isinstance(m, Star):
        return ("star",)
    if isinstance(m, Guard):
        return ("seq", _term_key(m.cond, vs, tvs, egs), _term_key(m.then, vs, tvs, egs))
    if isinstance(m, Gen):
        return ("gen", _type_key(m.ty, tvs, egs))
    if isinstance(m, Verif):
        return ("ver", _type_key(m.ty, tvs, egs), _term_key(m.arg, vs, tvs, egs))
    if isinstance(m, Fresh):
        return ("nu", _kind_key(m.kind), _term_key(m.body, vs, tvs, egs + (m.eig,)))
    if isinstance(m, Ann):
        return ("ann", _term_key(m.term, vs, tvs, egs), _type_key(m.ty, tvs, egs))
    raise TypeError(f"not a metaterm: {m!r}")


def alpha_key(x):
    """A nameless key; two ASTs are alpha-equivalent iff their keys are equal."""
    if is_type(x):
        return _type_key(x, (), ())
    if is_term(x):
        return _term_key(x, (), (), ())
    return _kind_key(x)


def alpha_eq(x, y) -> bool:
    return alpha_key(x) == alpha_key(y)


def type_eq(level: Level, a: Type, b: Type) -> bool:
    if level is Level.FOMEGA:
        return alpha_key(nf_type(a)) == alpha_key(nf_type(b))
    return alpha_key(a) == alpha_key(b)


def equiv(level: Level, lhs: Metaterm, rhs: Metaterm) -> bool:
    """Alpha-equivalence at ST/F; tau-equivalence at FOmega."""
    if level is Level.FOMEGA:
        return alpha_key(canon(lhs)) == alpha_key(canon(rhs))
    return alpha_key(lhs) == alpha_key(rhs)


def type_size(t: Type) -> int:
    if isinstance(t, Arrow):
        return 1 + type_size(t.dom) + type_size(t.cod)
    if isinstance(t, (ForAll, TLam)):
        return 1 + type_size(t.body)
    if isinstance(t, TApp):
        return type_size(t.fun) + type_size(t.arg)
    return 1


def term_size(m) -> int:
    if isinstance(m, (Lam, TyLam, Fresh)):
        return 1 + term_size(m.body)
    if isinstance(m, (App, Guard)):
        a, b = (m.fun, m.arg) if isinstance(m, App) else (m.cond, m.then)
        return 1 + term_size(a) + term_size(b)
    if isinstance(m, TyApp):
        return 1 + term_size(m.fun)
    if isinstance(m, Verif):
        return 1 + term_size(m.arg)
    if isinstance(m, Ann):
        return term_size(m.term)
    return 1


# -- level checks ------------------------------------------------------------

def check_level(x, level: Level) -> None:
    """Raise LevelError if ``x`` uses a construct unavailable at ``level``."""
    if is_type(x):
        _check_type_level(x, level)
        return
    stack = [x]
    while stack:
        m = stack.pop()
        if isinstance(m, (TyLam, TyApp, Fresh)) and level is Level.ST:
            raise LevelError(f"{type(m).__name__} is not available at ST")
        if isinstance(m, (TyLam, Fresh)) and level is Level.F and m.kind != PROP:
            raise LevelError("kind annotations are not available at F")
        if isinstance(m, (Lam, TyLam, Fresh)):
            stack.append(m.body)
        elif isinstance(m, App):
            stack.extend((m.fun, m.arg))
        elif isinstance(m, TyApp):
            _check_type_level(m.arg, level)
            stack.append(m.fun)
        elif isinstance(m, Guard):
            stack.extend((m.cond, m.then))
        elif isinstance(m, Gen):
            _check_type_level(m.ty, level)
        elif isinstance(m, Verif):
            _check_type_level(m.ty, level)
            stack.append(m.arg)
        elif isinstance(m, Ann):
            _check_type_level(m.ty, level)
            stack.append(m.term)


def _check_type_level(t: Type, level: Level) -> None:
    if level is Level.FOMEGA:
        return
    if isinstance(t, (TLam, TApp)):
        raise LevelError("type-level lambda and application need FOmega")
    if level is Level.ST and isinstance(t, (TVar, ForAll)):
        raise LevelError("ST types use only eigenvariables and arrows")
    if isinstance(t, ForAll):
        if t.kind != PROP:
            raise LevelError("kind annotations are not available at F")
        _check_type_level(t.body, level)
    elif isinstance(t, Arrow):
        _check_type_level(t.dom, level)
        _check_type_level(t.cod, level)


# -- printing ----------------------------------------------------------------

def print_kind(k: Kind, nested: bool = False) -> str:
    if isinstance(k, Prop):
        return "Prop"
    if isinstance(k, Base):
        return "@" + k.name
    s = f"{print_kind(k.dom, True)} -> {print_kind(k.cod)}"
    return f"({s})" if nested else s


def _kann(k: Kind) -> str:
    return "" if isinstance(k, Prop) else ":" + print_kind(k)


def print_type(t: Type, prec: int = 0) -> str:
    if isinstance(t, TVar):
        return t.name
    if isinstance(t, Eig):
        return "#" + t.name
    if isinstance(t, Arrow):
        s = f"{print_type(t.dom, 1)} -> {print_type(t.cod, 0)}"
        return f"({s})" if prec >= 1 else s
    if isinstance(t, ForAll):
        s = f"forall {t.binder}{_kann(t.kind)}. {print_type(t.body, 0)}"
        return f"({s})" if prec >= 1 else s
    if isinstance(t, TLam):
        s = f"\\{t.binder}:{print_kind(t.kind)}. {print_type(t.body, 0)}"
        return f"({s})" if prec >= 1 else s
    s = f"{print_type(t.fun, 1)} {print_type(t.arg, 2)}"
    return f"({s})" if prec >= 2 else s


def print_term(m: Metaterm, prec: int = 0) -> str:
    if isinstance(m, Var):
        return m.name
    if isinstance(m, Star):
        return "star"
    if isinstance(m, Lam):
        s = f"\\{m.binder}. {print_term(m.body)}"
        return f"({s})" if prec >= 1 else s
    if isinstance(m, TyLam):
        s = f"/\\{m.binder}{_kann(m.kind)}. {print_term(m.body)}"
        return f"({s})" if prec >= 1 else s
    if isinstance(m, Fresh):
        s = f"nu #{m.eig}{_kann(m.kind)}. {print_term(m.body)}"
        return f"({s})" if prec >= 1 else s
    if isinstance(m, App):
        s = f"{print_term(m.fun, 1)} {print_term(m.arg, 2)}"
        return f"({s})" if prec >= 2 else s
    if isinstance(m, TyApp):
        s = f"{print_term(m.fun, 1)} [{print_type(m.arg)}]"
        return f"({s})" if prec >= 2 else s
    if isinstance(m, Guard):
        return f"seq({print_term(m.cond)}, {print_term(m.then)})"
    if isinstance(m, Gen):
        return f"gen({print_type(m.ty)})"
    if isinstance(m, Verif):
        return f"ver({print_type(m.ty)}, {print_term(m.arg)})"
    if isinstance(m, Ann):
        return f"({print_term(m.term)} : {print_type(m.ty)})"
    raise TypeError(f"not a metaterm: {m!r}")


def pretty(x) -> str:
    """Print any kind, type or metaterm."""
    if is_type(x):
        return print_type(x)
    if is_term(x):
        return print_term(x)
    return print_kind(x)


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+|--[^\n]*)
  | (?P<arrow>->)
  | (?P<tlam>/\\)
  | (?P<sym>[\\.()\[\],:])
  | (?P<eig>\#[A-Za-z_][A-Za-z0-9_']*)
  | (?P<base>@[A-Za-z_][A-Za-z0-9_']*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
""", re.VERBOSE)

KEYWORDS = {"star", "seq", "gen", "ver", "nu", "forall", "Prop"}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(pos, "a token", text)
        kind = m.lastgroup
        if kind != "ws":
            val = m.group(kind)
            if kind == "ident" and val in KEYWORDS:
                kind = val
            elif kind in ("arrow", "tlam", "sym"):
                kind = val
            out.append((kind, val, pos))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, level: Level):
        self.text = text
        self.level = level
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, k: int = 0) -> str:
        return self.toks[min(self.i + k, len(self.toks) - 1)][0]

    def fail(self, expected: str):
        raise ParseError(self.toks[self.i][2], expected, self.text)

    def take(self, kind: str) -> str:
        if self.peek() != kind:
            self.fail(repr(kind))
        val = self.toks[self.i][1]
        self.i += 1
        return val

    def accept(self, kind: str) -> bool:
        if self.peek() == kind:
            self.i += 1
            return True
        return False

    def done(self):
        if self.peek() != "eof":
            self.fail("end of input")

    # kinds
    def kind(self) -> Kind:
        dom = self.kind_atom()
        if self.accept("->"):
            return KArrow(dom, self.kind())
        return dom

    def kind_atom(self) -> Kind:
        if self.accept("Prop"):
            return PROP
        if self.peek() == "base":
            return Base(self.take("base")[1:])
        if self.accept("("):
            k = self.kind()
            self.take(")")
            return k
        self.fail("a kind")

    def opt_kind(self) -> Kind:
        if self.accept(":"):
            if self.level is not Level.FOMEGA:
                raise LevelError("kind annotations need FOmega")
            return self.kind()
        return PROP

    # types
    def type(self) -> Type:
        if self.peek() == "forall":
            self.i += 1
            if self.level is Level.ST:
                raise LevelError("forall is not available at ST")
            a = self.take("ident")
            k = self.opt_kind()
            self.take(".")
            return ForAll(a, k, self.type())
        if self.peek() == "\\":
            self.i += 1
            if self.level is not Level.FOMEGA:
                raise LevelError("type-level lambda needs FOmega")
            a = self.take("ident")
            self.take(":")
            k = self.kind()
            self.take(".")
            return TLam(a, k, self.type())
        dom = self.type_app()
        if self.accept("->"):
            return Arrow(dom, self.type())
        return dom

    def type_app(self) -> Type:
        t = self.type_atom()
        while self.peek() in ("ident", "eig", "("):
            if self.level is not Level.FOMEGA:
                self.fail("'->' (type application needs FOmega)")
            t = TApp(t, self.type_atom())
        return t

    def type_atom(self) -> Type:
        tok = self.peek()
        if tok == "ident":
            if self.level is Level.ST:
                raise LevelError("type variables are not available at ST")
            return TVar(self.take("ident"))
        if tok == "eig":
            return Eig(self.take("eig")[1:])
        if self.accept("("):
            t = self.type()
            self.take(")")
            return t
        self.fail("a type")

    # terms
    def term(self) -> Metaterm:
        tok = self.peek()
        if tok in ("\\", "/\\", "nu"):
            return self.binder()
        t = self.term_atom()
        while True:
            tok = self.peek()
            if tok in ("ident", "star", "seq", "gen", "ver", "("):
                t = App(t, self.term_atom())
            elif tok == "[":
                if self.level is Level.ST:
                    raise LevelError("type application is not available at ST")
                self.i += 1
                a = self.type()
                self.take("]")
                t = TyApp(t, a)
            elif tok in ("\\", "/\\", "nu"):
                return App(t, self.binder())
            else:
                return t

    def binder(self) -> Metaterm:
        if self.accept("\\"):
            x = self.take("ident")
            self.take(".")
            return Lam(x, self.term())
        if self.accept("/\\"):
            if self.level is Level.ST:
                raise LevelError("type abstraction is not available at ST")
            a = self.take("ident")
            k = self.opt_kind()
            self.take(".")
            return TyLam(a, k, self.term())
        self.take("nu")
        if self.level is Level.ST:
            raise LevelError("nu is not available at ST")
        e = self.take("eig")[1:]
        k = self.opt_kind()
        self.take(".")
        return Fresh(e, k, self.term())

    def term_atom(self) -> Metaterm:
        tok = self.peek()
        if tok == "ident":
            return Var(self.take("ident"))
        if self.accept("star"):
            return STAR
        if self.accept("seq"):
            self.take("(")
            a = self.term()
            self.take(",")
            b = self.term()
            self.take(")")
            return Guard(a, b)
        if self.accept("gen"):
            self.take("(")
            a = self.type()
            self.take(")")
            return Gen(a)
        if self.accept("ver"):
            self.take("(")
            a = self.type()
            self.take(",")
            m = self.term()
            self.take(")")
            return Verif(a, m)
        if self.accept("("):
            m = self.term()
            if self.accept(":"):
                a = self.type()
                self.take(")")
                return Ann(m, a)
            self.take(")")
            return m
        self.fail("a term")


def parse(text: str, sort: str = "term", level: Level = Level.F):
    """Parse a kind, type or term; FOmega types come back normalized."""
    p = _Parser(text, level)
    if sort == "kind":
        if level is not Level.FOMEGA:
            raise LevelError("kinds need FOmega")
        out = p.kind()
    elif sort == "type":
        out = p.type()
    elif sort == "term":
        out = p.term()
    else:
        raise ValueError(f"unknown sort {sort!r}")
    p.done()
    if level is Level.FOMEGA and sort != "kind":
        out = canon(out)
    return out


def parse_type(text: str, level: Level = Level.F) -> Type:
    return parse(text, "type", level)


def parse_term(text: str, level: Level = Level.F) -> Metaterm:
    return parse(text, "term", level)


def parse_env(text: str, level: Level = Level.F) -> dict:
    """Parse ``x : A, y : B`` into an ordered environment."""
    env: dict = {}
    text = text.strip()
    if not text:
        return env
    for part in _split_top(text):
        name, _, ty = part.partition(":")
        name = name.strip()
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_']*", name) or not ty.strip():
            raise ParseError(0, "'name : type'", part)
        env[name] = parse_type(ty, level)
    return env


def parse_kindctx_entries(text: str) -> list[tuple[str, Kind]]:
    """Parse ``#p : K -> Prop, a : @k`` into (name, kind) pairs."""
    out = []
    text = text.strip()
    if not text:
        return out
    for part in _split_top(text):
        name, _, k = part.partition(":")
        out.append((name.strip(), parse(k, "kind", Level.FOMEGA)))
    return out


def _split_top(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p for p in parts if p.strip()]


# -- kind contexts -----------------------------------------------------------

@dataclass(frozen=True)
class KindCtx:
    """Kinds of the type variables and eigenvariables in scope (Xi).

    Immutable; ``extend_*`` return a new context.  Eigenvariables not listed
    are treated as propositions, which is the only kind at ST and F.
    """
    tvars: tuple = ()
    eigs: tuple = ()

    def tvar_kind(self, name: str):
        for n, k in reversed(self.tvars):
            if n == name:
                return k
        return None

    def eig_kind(self, name: str):
        for n, k in reversed(self.eigs):
            if n == name:
                return k
        return None

    def extend_tvar(self, name: str, kind: Kind = PROP) -> "KindCtx":
        return KindCtx(self.tvars + ((name, kind),), self.eigs)

    def extend_eig(self, name: str, kind: Kind = PROP) -> "KindCtx":
        return KindCtx(self.tvars, self.eigs + ((name, kind),))

    def names(self) -> set:
        return {n for n, _ in self.tvars} | {n for n, _ in self.eigs}

    def fresh_eig(self, avoid: Iterable[str] = ()) -> str:
        """First name of the supply ``g0, g1, ...`` not in scope nor in ``avoid``."""
        taken = self.names() | set(avoid)
        i = 0
        while f"g{i}" in taken:
            i += 1
        return f"g{i}"

    @classmethod
    def from_entries(cls, entries) -> "KindCtx":
        ctx = cls()
        for name, kind in entries:
            if name.startswith("#"):
                ctx = ctx.extend_eig(name[1:], kind)
            else:
                ctx = ctx.extend_tvar(name, kind)
        return ctx

    def to_json(self) -> dict:
        out = {n: print_kind(k) for n, k in self.tvars}
        out.update({"#" + n: print_kind(k) for n, k in self.eigs})
        return out


EMPTY_CTX = KindCtx()


def env_to_json(env: Mapping[str, Type]) -> dict:
    return {x: print_type(a) for x, a in env.items()}
