import pytest
from hypothesis import assume, given, strategies as st

from rlz.extract import (
    NotNormal, NotPure, NotRealizer, beta_normalize, extract, is_normal, match_inputs,
    proof_size,
)
from rlz.reduction import FuelExhausted
from rlz.syntax import (
    App, Arrow, Eig, KindCtx, Level, Var, alpha_eq, parse_env, parse_term, parse_type,
    nf_type, spine, strip_annotations,
)
from rlz.typecheck import check, default_ctx, validate
from strategies import judgments

ST, F, FW = Level.ST, Level.F, Level.FOMEGA


class TestMatch:
    def test_polymorphic_fixpoint_shape(self):
        b = Eig("b")
        r = match_inputs(F, parse_type("forall a. (a -> a) -> a", F), [b, Var("m")])
        assert r.arg_types == (b, Arrow(b, b)) and r.residual == b

    def test_empty(self):
        a = parse_type("#a -> #b", F)
        r = match_inputs(F, a, [])
        assert r.arg_types == () and r.residual == a

    def test_shape_disagreement(self):
        assert match_inputs(F, parse_type("#a -> #b", F), [Eig("c")]) is None

    def test_fomega_normalizes_after_instantiation(self):
        a = parse_type(r"forall f:Prop->Prop. f #b", FW)
        r = match_inputs(FW, a, [parse_type(r"\c:Prop. c -> c", FW)])
        assert r.residual == Arrow(Eig("b"), Eig("b"))

    @given(data=st.data())
    def test_deterministic_and_length_preserving(self, data):
        ctx, env, t, a = data.draw(judgments(F, goal=Eig("a")))
        nf = beta_normalize(strip_annotations(t))
        head, inputs = spine(nf)
        assume(isinstance(head, Var) and head.name in env)
        r1 = match_inputs(F, env[head.name], inputs)
        r2 = match_inputs(F, env[head.name], inputs)
        assert r1 == r2 and r1 is not None and len(r1.arg_types) == len(inputs)


class TestProofSize:
    def test_variable(self):
        assert proof_size(ST, {"x": Eig("a")}, Var("x"), Eig("a")) == 1

    def test_identity(self):
        assert proof_size(ST, {}, parse_term(r"\x. x", ST), parse_type("#a -> #a", ST)) == 1

    def test_otherwise_zero(self):
        assert proof_size(ST, {}, parse_term(r"\x. x", ST), Eig("a")) == 0

    def test_not_normal(self):
        with pytest.raises(NotNormal):
            proof_size(ST, {}, parse_term(r"(\x. x) y", ST), Eig("a"))

    def test_not_pure(self):
        with pytest.raises(NotPure):
            proof_size(ST, {}, parse_term("gen(#a)", ST), Eig("a"))

    @given(data=st.data())
    def test_arguments_are_smaller(self, data):
        ctx, env, t, a = data.draw(judgments(ST, goal=Eig("a")))
        nf = beta_normalize(strip_annotations(t))
        head, inputs = spine(nf)
        assume(isinstance(head, Var) and inputs)
        r = match_inputs(ST, env[head.name], inputs)
        whole = proof_size(ST, env, nf, a)
        for i, b in zip(inputs, r.arg_types):
            assert whole > proof_size(ST, env, i, b)

    @given(data=st.data())
    def test_application_to_fresh_variable(self, data):
        ctx, env, t, a = data.draw(judgments(ST))
        assume(isinstance(a, Arrow))
        nf = beta_normalize(strip_annotations(t))
        x = "fresh_x"
        body = beta_normalize(App(nf, Var(x)))
        assert proof_size(ST, env, nf, a) >= proof_size(ST, {**env, x: a.dom}, body, a.cod)


class TestNormalize:
    def test_redex(self):
        assert alpha_eq(beta_normalize(parse_term(r"(\x. x) (\y. y)", F)), parse_term(r"\y. y", F))

    def test_normal_unchanged(self):
        m = parse_term(r"\x. x", F)
        assert beta_normalize(m) == m

    def test_omega(self):
        with pytest.raises(FuelExhausted):
            beta_normalize(parse_term(r"(\x. x x) (\x. x x)", F), fuel=100)

    def test_pseudo_redex_survives(self):
        m = parse_term(r"(\x. x) [#a]", F)
        assert beta_normalize(m) == m and is_normal(m)

    def test_impure(self):
        with pytest.raises(NotPure):
            beta_normalize(parse_term("seq(star, x)", F))


def run(level, ty, term, env="", ctx=None):
    a, m, e = parse_type(ty, level), parse_term(term, level), parse_env(env, level)
    return extract(level, default_ctx(ctx or KindCtx(), a, e), e, a, m)


class TestExtract:
    def test_k(self):
        r = run(ST, "#a -> #b -> #a", r"\x.\y.x")
        assert alpha_eq(r.normal_form, parse_term(r"\x.\y.x", ST))
        assert validate(r.derivation) and r.derivation.type == parse_type("#a -> #b -> #a", ST)
        ctx = default_ctx(KindCtx(), r.derivation.type)
        assert check(ST, ctx, {}, r.normal_form, r.derivation.type)

    def test_subject_is_the_normal_form(self):
        r = run(ST, "#a -> #a", r"(\f. f) (\x. (\y. y) x)")
        assert alpha_eq(r.normal_form, parse_term(r"\x. x", ST))
        assert alpha_eq(r.derivation.term, r.normal_form)

    def test_eta_long_metadata(self):
        r = run(ST, "(#a -> #b) -> #a -> #b", r"\f. f")
        assert alpha_eq(r.normal_form, parse_term(r"\f. f", ST))
        assert alpha_eq(r.eta_long, parse_term(r"\f. \x. f x", ST))

    def test_conjunction_elim(self):
        r = run(F, "(forall c. (#a -> #b -> c) -> c) -> #a", r"\p. p [#a] (\x.\y.x)")
        assert validate(r.derivation)

    def test_impure(self):
        with pytest.raises(NotPure):
            run(ST, "#a", "gen(#a)")

    def test_not_a_realizer(self):
        with pytest.raises(NotRealizer):
            run(ST, "#a -> #b", r"\x. x")

    @pytest.mark.parametrize("level", [ST, F, FW], ids=lambda lv: lv.value)
    @given(data=st.data())
    def test_round_trip(self, level, data):
        ctx, env, t, a = data.draw(judgments(level))
        r = extract(level, ctx, env, a, t, fuel=100_000)
        assert validate(r.derivation) and alpha_eq(r.derivation.type, nf_type(a))
        assert alpha_eq(r.derivation.term, beta_normalize(strip_annotations(t), level=level))
