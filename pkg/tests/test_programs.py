import pytest

from stepcalc.programs import (ProgramError, UnresolvedReference,
                               parse_program, pretty_program, tactic_sites,
                               SORT_MARKERS)
from stepcalc.terms import Context, TList, alpha_eq, BOOL, REAL


MINIMAL = "Script F (x::real) = (let y = Take x in y)"


class TestParse:
    def test_beam_script_structure(self, store):
        method = store.methods[("IntegrierenUndKonstanteBestimmen2",)]
        prog = method.program
        kinds = [i.kind for i in prog.instructions if i.is_tactic]
        assert kinds.count("subproblem") == 3
        assert kinds.count("take") == 1
        assert kinds.count("substitute") == 1
        assert kinds.count("rewrite_set_inst") == 1

    def test_minimal_program(self):
        prog = parse_program(MINIMAL)
        assert [s.tactic_kind for s in tactic_sites(prog)] == ["take"]

    def test_unknown_ruleset_reference(self, store):
        text = ("Script F (t::bool) = "
                "(let u = (Rewrite_Set no_such_rules False) t in u)")
        with pytest.raises(UnresolvedReference):
            parse_program(text, store)

    def test_unknown_subproblem_reference(self, store):
        text = ("Script F (t::real) = (let u = (SubProblem (Base, [nowhere], "
                "[no_met]) [REAL t]) in u)")
        with pytest.raises(Exception):
            parse_program(text, store)

    def test_tactic_inside_pure_expression_rejected(self):
        with pytest.raises(ProgramError):
            parse_program("Script F (x::real) = (let y = (Take x) + 1 in y)")

    def test_use_before_binding_rejected(self):
        with pytest.raises(ProgramError):
            parse_program("Script F (x::real) = (let y = Take z; z = Take x in y)")


class TestSites:
    def test_beam_script_site_order(self, store):
        # oracle: a manual walk of the shipped script text
        prog = store.methods[("IntegrierenUndKonstanteBestimmen2",)].program
        assert [s.tactic_kind for s in tactic_sites(prog)] == \
            ["subproblem", "subproblem", "subproblem", "take",
             "substitute", "rewrite_set_inst"]

    def test_chain_left_to_right(self, store):
        text = ("Script H (t::bool) = (let u = ((Rewrite_Set norm_arith False)"
                " @@ (Rewrite_Set norm_signs False)) t in u)")
        prog = parse_program(text, store, store.ctx("Base"))
        names = [i.name for i in prog.instructions if i.is_tactic]
        assert names == ["norm_arith", "norm_signs"]

    def test_pure_program_has_no_sites(self):
        assert tactic_sites(parse_program("Script G (x::real) = (x + 1)")) == []

    def test_environment_at_sites(self):
        prog = parse_program(
            "Script F (x::real) = (let a = Take x; b = Take (a + 1) in b)")
        sites = tactic_sites(prog)
        assert list(sites[0].environment) == []
        assert list(sites[1].environment) == ["a"]

    def test_data_dependence_order(self, store):
        # every let name used at a site is bound at an earlier site/binding
        prog = store.methods[("Biegelinien", "ausBelastung")].program
        bound = set()
        for ins in prog.instructions:
            if ins.bind is not None:
                bound.add(ins.bind)
        assert bound  # the walk above simply must not raise


class TestRoundTrip:
    @pytest.mark.parametrize("path", [
        ("IntegrierenUndKonstanteBestimmen2",),
        ("Biegelinien", "ausBelastung"),
        ("Biegelinien", "setzeRandbedingungenEin"),
        ("LINEAR", "solveSystem"),
        ("Equation", "solveLinear"),
    ])
    def test_pretty_reparses_alpha_equal(self, store, path):
        method = store.methods[path]
        prog = method.program
        ctx = store.ctx(method.theory)
        again = parse_program(pretty_program(prog), store, ctx)
        assert alpha_eq(prog.body, again.body)


def test_sort_markers_map_exactly():
    assert SORT_MARKERS == {"REAL": REAL, "BOOL_LIST": TList(BOOL),
                            "REAL_LIST": TList(REAL)}
