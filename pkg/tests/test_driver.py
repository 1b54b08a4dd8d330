import json
import subprocess
import sys

import pytest
from hypothesis import given

from rlz.driver import (
    EXIT_FUEL, EXIT_NEGATIVE, EXIT_OK, EXIT_USAGE, FW_CTX, GenConfig, GenerationExhausted,
    UnknownSuite, check_entry, gen_metaterm, gen_typed_term, load_corpus, main, parse_corpus_entry,
    run_suite, shrink,
)
from rlz.syntax import STAR, Eig, Gen, Level, Var, free_names, is_pure, parse_term
from rlz.typecheck import check, well_kinded
from strategies import seeds

ST, F, FW = Level.ST, Level.F, Level.FOMEGA


def rlz(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestCli:
    def test_verify_k(self, capsys):
        code, out, _ = rlz(capsys, "verify", "--calculus", "st", "--type", "#a -> #b -> #a",
                           "--term", r"\x.\y.x")
        assert code == EXIT_OK and out.startswith("realized")

    def test_omega_runs_out_of_fuel(self, capsys):
        code, _, _ = rlz(capsys, "reduce", "--calculus", "st", "--strategy", "wh",
                         "--fuel", "5", r"(\x. x x)(\x. x x)")
        assert code == EXIT_FUEL

    def test_stuck_verdict(self, capsys):
        code, out, _ = rlz(capsys, "verify", "--calculus", "st", "--type", "#a",
                           "--term", r"\x.x")
        assert code == EXIT_NEGATIVE and r"ver(#a, \x. x)" in out

    def test_parse_error(self, capsys):
        code, _, err = rlz(capsys, "parse", r"\x.")
        assert code == EXIT_USAGE and err

    def test_unknown_subcommand(self, capsys):
        assert rlz(capsys, "frobnicate")[0] == EXIT_USAGE

    def test_check_failure(self, capsys):
        code, out, _ = rlz(capsys, "check", "--type", "#a -> #b", "--term", r"\x. x")
        assert code == EXIT_NEGATIVE and "ill-typed" in out

    def test_extract_json(self, capsys):
        code, out, _ = rlz(capsys, "--json", "extract", "--calculus", "f",
                           "--type", "(forall c. (#a -> #b -> c) -> c) -> #a",
                           "--term", r"\p. p [#a] (\x.\y.x)")
        data = json.loads(out)
        assert code == EXIT_OK
        assert {"normal_form", "derivation", "proof_size"} <= data.keys()

    def test_leibniz_with_kind_context(self, capsys):
        code, _, _ = rlz(capsys, "verify", "--calculus", "fw", "--ctx", "#A : @k, #B : @k",
                         "--type", "(forall P:@k->Prop. P #A -> P #B) -> "
                                   "(forall P:@k->Prop. P #B -> P #A)",
                         "--term", r"\e. /\P:@k->Prop. \x. e [\c:@k. P c -> P #A] (\y.y) x")
        assert code == EXIT_OK

    def test_trace_file(self, capsys, tmp_path):
        path = tmp_path / "trace.jsonl"
        rlz(capsys, "--trace", str(path), "verify", "--type", "#a -> #a", "--term", r"\x.x")
        lines = [json.loads(x) for x in path.read_text().splitlines()]
        assert lines[0]["level"] == "st" and lines[-1] == {"verdict": "realized", "steps": 2}

    def test_fuel_from_environment(self, capsys, monkeypatch):
        monkeypatch.setenv("RLZ_FUEL", "3")
        assert rlz(capsys, "reduce", r"(\x. x x)(\x. x x)")[0] == EXIT_FUEL

    def test_json_is_deterministic(self, capsys):
        argv = ("--json", "--seed", "7", "gen", "--calculus", "f", "--count", "5")
        assert rlz(capsys, *argv)[1] == rlz(capsys, *argv)[1]

    def test_suite_command(self, capsys):
        code, out, _ = rlz(capsys, "--json", "suite", "determinism", "--cases", "20")
        assert code == EXIT_OK and json.loads(out)["pass"] == 20

    def test_console_script(self):
        r = subprocess.run([sys.executable, "-m", "rlz.driver", "parse", "gen(#a -> #b)"],
                           capture_output=True, text=True)
        assert r.returncode == 0 and r.stdout.strip() == "gen(#a -> #b)"


class TestGenerators:
    def test_depth_zero_uses_the_variable_rule(self):
        _, env, t, a = gen_typed_term(GenConfig(seed=1, max_depth=0, level=ST),
                                      env={"x": Eig("a")}, goal=Eig("a"))
        assert (t, a) == (Var("x"), Eig("a"))

    @given(seeds)
    def test_typed_terms_check(self, seed):
        for lv in (ST, F, FW):
            try:
                ctx, env, t, a = gen_typed_term(GenConfig(seed=seed, level=lv))
            except GenerationExhausted:
                continue
            assert check(lv, ctx, env, t, a)

    @given(seeds)
    def test_seed_determinism(self, seed):
        cfg = GenConfig(seed=seed, max_depth=3, level=F)
        assert gen_metaterm(cfg) == gen_metaterm(cfg)

    def test_metaterm_leaves(self):
        leaves = {type(gen_metaterm(GenConfig(seed=s, max_depth=0, level=F))) for s in range(50)}
        assert leaves <= {type(STAR), Var, Gen}

    @given(seeds)
    def test_fomega_metaterms_are_well_kinded(self, seed):
        assert well_kinded(FW_CTX, gen_metaterm(GenConfig(seed=seed, level=FW)))


class TestSuites:
    def test_unknown_suite(self):
        with pytest.raises(UnknownSuite):
            run_suite("nonsense", GenConfig(), 1)

    def test_report_counts(self):
        rep = run_suite("soundness", GenConfig(seed=2, level=F), 25)
        assert rep.ok and rep.passed == 25 and rep.failed == 0

    def test_consistency(self):
        assert run_suite("consistency", GenConfig(seed=5, level=ST), 50).ok

    def test_shrinking_finds_a_smaller_failure(self):
        big = parse_term(r"seq(star, (\y. y) seq(star, x))", ST)
        assert shrink(big, lambda t: "x" in free_names(t)[0]) == Var("x")


class TestCorpus:
    def test_bundled_corpus_passes(self):
        entries = load_corpus()
        names = {e.name for e in entries}
        assert {"k-combinator", "s-combinator", "conjunction-intro",
                "conjunction-elim-first", "leibniz-symmetry", "stuck-second-projection"} <= names
        for e in entries:
            assert check_entry(e, 100_000)[0], e.name

    def test_entry_format(self):
        e = parse_corpus_entry("-- note\nname: id\nlevel: st\ntype: #a -> #a\n"
                               "term: \\x. x\nexpect: realized\n")
        assert e.name == "id" and e.level is ST and is_pure(e.term)
        assert check_entry(e, 100)[0]

    def test_cli(self, capsys):
        code, out, _ = rlz(capsys, "corpus")
        assert code == EXIT_OK and "FAIL" not in out
