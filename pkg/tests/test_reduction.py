import json

import pytest
from hypothesis import given, strategies as st

from rlz.driver import GenConfig, gen_metaterm, gen_multi_redex
from rlz.reduction import (
    Outcome, RuleTag, apply_at, complete_development, enumerate_redexes, expand_st,
    one_step_reducts, par_reduces, reduce, validate_trace, wh_redexes, wh_step,
)
from rlz.syntax import (
    Level, LevelError, STAR, alpha_eq, alpha_key, parse_term, print_term,
)
from rlz.typecheck import well_kinded
from strategies import seeds

ST, F, FW = Level.ST, Level.F, Level.FOMEGA


def t(text, level=F):
    return parse_term(text, level)


class TestExpandST:
    def test_generator_at_arrow(self):
        assert alpha_eq(expand_st(t("gen(#a -> #b)", ST)), t(r"\x. seq(ver(#a, x), gen(#b))", ST))

    def test_verifier_at_hilbert_axiom(self):
        m = expand_st(t(r"ver(#a -> #b -> #a, \x. \y. x)", ST))
        want = t(r"ver(#a, (\x. \y. x) gen(#a) gen(#b))", ST)
        assert alpha_eq(m, want)

    def test_atomic_generator_unchanged(self):
        assert expand_st(t("gen(#a)", ST)) == t("gen(#a)", ST)

    def test_quantifiers_rejected(self):
        with pytest.raises(LevelError):
            expand_st(t("gen(forall a. a)"))


class TestWeakHead:
    def test_guard(self):
        s = wh_step(ST, t("seq(star, x)", ST))
        assert s.rule is RuleTag.GuardStar and s.position == () and s.after == t("x", ST)

    def test_verifier_meets_generator(self):
        s = wh_step(ST, t("ver(#a, gen(#a))", ST))
        assert s.rule is RuleTag.VerifEig and s.after == STAR

    def test_verifier_at_quantifier(self):
        s = wh_step(F, t("ver(forall a. a, m)"))
        assert s.rule is RuleTag.VerifAll
        assert print_term(s.after) == "nu #g0. ver(#g0, m [#g0])"

    def test_abstraction_is_normal(self):
        assert wh_step(ST, t(r"\x. x", ST)) is None

    def test_no_step_under_lambda(self):
        assert wh_step(F, t(r"\y. (\x. x) y")) is None

    def test_nu_drop_is_eager(self):
        s = wh_step(F, t("nu #e. ver(#a, gen(#a))"))
        assert s.rule is RuleTag.FreshDrop

    def test_fomega_type_beta_checks_kinds(self):
        from rlz.syntax import KindCtx, PROP
        ctx = KindCtx().extend_eig("b", PROP)
        assert wh_step(FW, t(r"(/\a:@k. star) [#b]", FW), ctx) is None
        assert wh_step(FW, t(r"(/\a. star) [#b]", FW), ctx).rule is RuleTag.TyBeta


class TestReduce:
    def test_k_combinator(self):
        tr = reduce(ST, expand_st(t(r"ver(#a -> #b -> #a, \x. \y. x)", ST)), "wh")
        assert tr.outcome is Outcome.StarReached and tr.final == STAR

    @pytest.mark.parametrize("strategy", ["wh", "lo", "random"])
    def test_omega_runs_out(self, strategy):
        tr = reduce(ST, t(r"(\x. x x) (\x. x x)", ST), strategy, fuel=10)
        assert tr.outcome is Outcome.FuelExhausted and len(tr.steps) == 10

    def test_stuck_verifier(self):
        m = t(r"ver(#a, \x. x)", ST)
        tr = reduce(ST, m, "wh")
        assert tr.outcome is Outcome.Normal and tr.final == m

    def test_surface_elaboration_is_a_free_step(self):
        tr = reduce(ST, t(r"ver(#a -> #a, \x. x)", ST), "wh", fuel=2)
        assert tr.steps[0].rule is RuleTag.StExpand
        assert tr.outcome is Outcome.StarReached and tr.contractions == 2

    def test_trace_jsonl(self):
        tr = reduce(ST, t("seq(star, star)", ST), "wh")
        lines = [json.loads(x) for x in tr.jsonl()]
        assert lines[0] == {"level": "st", "strategy": "wh", "fuel": tr.fuel}
        assert lines[1] == {"step": 0, "rule": "GuardStar", "pos": "root", "term": "star"}
        assert lines[-1] == {"outcome": "StarReached"}

    @given(seeds, st.sampled_from(["wh", "lo", "random"]))
    def test_traces_revalidate(self, seed, strategy):
        m = gen_metaterm(GenConfig(seed=seed, max_depth=4, level=F))
        tr = reduce(F, m, strategy, fuel=50, seed=seed)
        assert validate_trace(tr)

    @given(seeds)
    def test_random_strategy_is_seeded(self, seed):
        m = gen_metaterm(GenConfig(seed=seed, max_depth=4, level=F))
        a = reduce(F, m, "random", fuel=30, seed=seed)
        b = reduce(F, m, "random", fuel=30, seed=seed)
        assert list(a.jsonl()) == list(b.jsonl())

    @given(seeds)
    def test_steps_preserve_well_kindedness(self, seed):
        from rlz.driver import FW_CTX
        m = gen_metaterm(GenConfig(seed=seed, max_depth=4, level=FW))
        assert well_kinded(FW_CTX, m)
        for s in reduce(FW, m, "random", fuel=20, seed=seed, ctx=FW_CTX).steps:
            assert well_kinded(FW_CTX, s.after)


class TestEnumerate:
    def test_guard_and_verifier(self):
        out = enumerate_redexes(ST, t("seq(star, ver(#a, gen(#a)))", ST))
        assert out == [((), RuleTag.GuardStar), ((1,), RuleTag.VerifEig)]

    def test_star(self):
        assert enumerate_redexes(ST, STAR) == []

    def test_generator_at_implication(self):
        assert enumerate_redexes(F, t("gen(#a -> #b)")) == [((), RuleTag.GenImp)]

    def test_positions_apply(self):
        m = t(r"seq(star, (\x. x) y)")
        for pos, rule in enumerate_redexes(F, m):
            assert apply_at(F, m, pos).rule is rule


class TestDevelopment:
    def test_created_redex_untouched(self):
        assert alpha_eq(complete_development(F, t(r"(\x. x x) (\y. y)")), t(r"(\y. y) (\y. y)"))

    def test_generator(self):
        assert alpha_eq(complete_development(F, t("gen(#a -> #b)")),
                        t(r"\x. seq(ver(#a, x), gen(#b))"))

    def test_star(self):
        assert complete_development(F, STAR) == STAR

    def test_outside_f(self):
        with pytest.raises(LevelError):
            complete_development(ST, STAR)

    @given(seeds)
    def test_diamond(self, seed):
        m = gen_metaterm(GenConfig(seed=seed, max_depth=3, level=F))
        cd = complete_development(F, m)
        assert par_reduces(m, cd)
        for s in one_step_reducts(F, m):
            assert par_reduces(s.after, cd)


class TestDeterminism:
    @given(seeds)
    def test_st_has_one_weak_head_redex(self, seed):
        m = expand_st(gen_metaterm(GenConfig(seed=seed, max_depth=5, level=ST)))
        assert len(wh_redexes(ST, m)) <= 1

    @given(seeds)
    def test_f_subcommutes(self, seed):
        from rlz.reduction import wh_reducts
        m = gen_multi_redex(GenConfig(seed=seed, level=F))
        steps = wh_reducts(F, m)
        assert len(steps) >= 2

        def closure(x):
            return {alpha_key(x)} | {alpha_key(s.after) for s in wh_reducts(F, x)}

        for a in steps:
            for b in steps:
                assert closure(a.after) & closure(b.after)
