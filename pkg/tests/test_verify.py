import json

import pytest
from hypothesis import given, strategies as st

from rlz.driver import GenConfig, base_ctx, gen_type
from rlz.syntax import (
    PROP, STAR, Gen, Guard, KArrow, KindCtx, Level, Var, alpha_eq, free_names, parse_env,
    parse_kindctx_entries, parse_term, parse_type, strip_annotations,
)
from rlz.typecheck import KindMismatch, default_ctx
from rlz.verify import (
    OpenTypeError, PreconditionViolated, apply_subst, correctness_check, gen_subst, realizes,
    universality_check,
)
from strategies import judgments, seeds

ST, F, FW = Level.ST, Level.F, Level.FOMEGA


def verdict(level, ty, term, env="", ctx=None, **kw):
    a, m, e = parse_type(ty, level), parse_term(term, level), parse_env(env, level)
    return realizes(level, default_ctx(ctx or KindCtx(), a, e), e, a, m, **kw)


class TestGenerativeSubstitution:
    def test_duplicated_hypothesis(self):
        env = parse_env("x : #a, y : #b", F)
        out = apply_subst(parse_term(r"(\x. x y y) x", F), gen_subst(env))
        assert alpha_eq(out, parse_term(r"(\x. x gen(#b) gen(#b)) gen(#a)", F))

    def test_empty_environment(self):
        m = parse_term("x y", F)
        assert apply_subst(m, gen_subst({})) == m

    def test_outside_domain(self):
        out = apply_subst(parse_term("z", F), gen_subst(parse_env("x : #a", F)))
        assert out == Var("z")

    def test_st_values_are_expanded(self):
        sigma = gen_subst(parse_env("x : #a -> #b", ST), ST)
        assert alpha_eq(sigma["x"], parse_term(r"\v. seq(ver(#a, v), gen(#b))", ST))


class TestRealizes:
    def test_k(self):
        assert verdict(ST, "#a -> #b -> #a", r"\x.\y.x").realized

    def test_s(self):
        v = verdict(ST, "(#a -> #b -> #c) -> (#a -> #b) -> #a -> #c", r"\x.\y.\z. x z (y z)")
        assert v.realized and v.steps < 200

    def test_conjunction_intro(self):
        v = verdict(F, "#a -> #b -> (forall c. (#a -> #b -> c) -> c)", r"\x.\y./\c.\f. f x y")
        assert v.realized

    def test_leibniz_symmetry(self):
        ctx = KindCtx.from_entries(parse_kindctx_entries("#A : @k, #B : @k"))
        v = verdict(FW, "(forall P:@k->Prop. P #A -> P #B) -> (forall P:@k->Prop. P #B -> P #A)",
                    r"\e. /\P:@k->Prop. \x. e [\c:@k. P c -> P #A] (\y.y) x", ctx=ctx)
        assert v.realized

    def test_second_projection_is_stuck(self):
        v = verdict(ST, "#a -> #b -> #a", r"\x.\y.y")
        assert v.stuck and alpha_eq(v.final, parse_term("ver(#a, gen(#b))", ST))

    def test_environment(self):
        assert verdict(ST, "#b", "f x", env="f : #a -> #b, x : #a").realized

    def test_divergence(self):
        assert verdict(ST, "#a", r"(\x. x x) (\x. x x)", fuel=50).exhausted

    def test_open_types_rejected(self):
        with pytest.raises(OpenTypeError):
            verdict(F, "a -> a", r"\x. x")

    def test_open_types_closed_on_request(self):
        assert verdict(F, "a -> a", r"\x. x", close=True).realized

    def test_fomega_needs_a_proposition(self):
        ctx = KindCtx().extend_eig("p", KArrow(PROP, PROP))
        with pytest.raises(KindMismatch):
            realizes(FW, ctx, {}, parse_type("#p", FW), STAR)

    def test_verdict_jsonl_ends_with_summary(self):
        v = verdict(ST, "#a", "x", env="x : #a")
        last = json.loads(list(v.jsonl())[-1])
        assert last == {"verdict": "realized", "steps": 1}

    @pytest.mark.parametrize("level", [ST, F, FW], ids=lambda lv: lv.value)
    @given(data=st.data())
    def test_soundness(self, level, data):
        ctx, env, t, a = data.draw(judgments(level))
        assert realizes(level, ctx, env, a, strip_annotations(t), fuel=10_000).realized


class TestCorrectness:
    def test_atom_in_one_step(self):
        v = correctness_check(ST, parse_type("#a", ST))
        assert v.realized and v.steps == 1

    def test_implication(self):
        assert correctness_check(ST, parse_type("#a -> #b", ST)).realized

    def test_free_type_variable_is_stuck(self):
        v = correctness_check(F, parse_type("a", F))
        assert v.stuck

    @pytest.mark.parametrize("level", [ST, F, FW], ids=lambda lv: lv.value)
    @given(seed=seeds)
    def test_closed_types(self, level, seed):
        a = gen_type(GenConfig(seed=seed, level=level, max_depth=4))
        assert not free_names(a)[1]
        assert correctness_check(level, a, fuel=100_000, ctx=base_ctx(level)).realized


class TestUniversality:
    env = parse_env("y : #b", ST)
    m = parse_term("ver(#b, y)", ST)

    def test_generative_substitution(self):
        r = universality_check(self.env, {"y": Gen(parse_type("#b", ST))}, self.m)
        assert r.status == "Confirmed"

    def test_guarded_generator(self):
        r = universality_check(self.env, {"y": Guard(STAR, Gen(parse_type("#b", ST)))}, self.m)
        assert r.status == "Confirmed"

    def test_incompatible_substitution(self):
        with pytest.raises(PreconditionViolated):
            universality_check(self.env, {"y": parse_term(r"\x. x", ST)}, self.m)
