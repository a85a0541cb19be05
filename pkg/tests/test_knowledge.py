import pytest

from stepcalc.knowledge import (KnowledgeError, Model, ModelItem, NotFound,
                                Problem, guard_matches, match_model,
                                methods_for, refine)
from stepcalc.programs import RefTriple
from stepcalc.terms import Context, Var, parse, pretty, typ_of, REAL


def items_for(store, example_id):
    return store.examples[example_id].items


class TestLookup:
    def test_beam_problem(self, store):
        _, prob, _ = store.lookup(RefTriple(problem=("Biegelinien",)))
        assert prob is not None and prob.theory == "Biegelinie"

    def test_linear_system(self, store):
        _, prob, _ = store.lookup(RefTriple(problem=("LINEAR", "system")))
        assert prob is not None

    def test_not_found(self, store):
        with pytest.raises(NotFound):
            store.lookup(RefTriple(problem=("nonexistent",)))

    def test_full_triple(self, store):
        thy, prob, meth = store.lookup(RefTriple(
            "Biegelinie", ("Biegelinien",), ("IntegrierenUndKonstanteBestimmen2",)))
        assert thy.name == "Biegelinie"
        assert meth.program is not None

    def test_theory_dag_and_tree_view(self, store):
        order = store.theory_order
        assert order.index("Base") < order.index("Biegelinie")
        tree = store.theory_tree()
        roots = [name for name, _ in tree]
        assert "Base" in roots

    def test_every_shipped_reference_resolves(self, store):
        for ex in store.examples.values():
            store.lookup(ex.refs)
        for m in store.methods.values():
            if m.program is None:
                continue
            for ins in m.program.instructions:
                if ins.kind == "subproblem":
                    store.lookup(ins.ref)


class TestMatchModel:
    def test_beam_items_all_correct(self, store):
        prob = store.problems[("Biegelinien",)]
        items = items_for(store, "biegelinie-1")
        model_items = [it for it in items if it.word != "FunktionsVariable"]
        fb = match_model(prob, model_items, store.ctx("Biegelinie"),
                         reference=items)
        assert fb.complete
        assert all(s.status == "correct" for s in fb.slots)

    def test_empty_items_all_missing(self, store):
        prob = store.problems[("Biegelinien",)]
        fb = match_model(prob, [], store.ctx("Biegelinie"))
        assert all(s.status == "missing" for s in fb.slots)
        assert not fb.complete

    def test_superfluous_item(self, store):
        # slot-by-slot oracle: FunktionsVariable is not a slot of the model
        prob = store.problems[("Biegelinien",)]
        items = items_for(store, "biegelinie-1")
        fb = match_model(prob, items, store.ctx("Biegelinie"), reference=items)
        words = {it.word for _, it in prob.model.slots()}
        expect_superfluous = [it.word for it in items if it.word not in words]
        assert [it.word for it in fb.superfluous] == expect_superfluous == \
            ["FunktionsVariable"]

    def test_incomplete_list(self, store):
        prob = store.problems[("Biegelinien",)]
        items = items_for(store, "biegelinie-1")
        partial = [it if it.word != "Randbedingungen" else
                   ModelItem("Randbedingungen",
                             parse("[Q 0 = q_0 * L]", store.ctx("Biegelinie")))
                   for it in items if it.word != "FunktionsVariable"]
        fb = match_model(prob, partial, store.ctx("Biegelinie"), reference=items)
        assert fb.status_of("Randbedingungen") == "incomplete"

    def test_wrong_slot(self, store):
        prob = store.problems[("Biegelinien",)]
        items = items_for(store, "biegelinie-1")
        rb = next(it.term for it in items if it.word == "Randbedingungen")
        swapped = [ModelItem("Traegerlaenge", rb)]
        fb = match_model(prob, swapped, store.ctx("Biegelinie"), reference=items)
        assert fb.status_of("Traegerlaenge") == "syntax-bound-to-wrong-slot"

    def test_guards_validate_with_the_same_checker(self, store):
        # a guard is model-shaped: wrap it as a problem and reuse match_model
        method = store.methods[("IntegrierenUndKonstanteBestimmen2",)]
        as_problem = Problem(("guard",), method.theory, method.guard)
        items = items_for(store, "biegelinie-1")
        fb = match_model(as_problem, items, store.ctx("Biegelinie"))
        assert fb.complete


class TestRefine:
    def test_linear_classification(self, store):
        assert refine(store, items_for(store, "linear-1"), ("equation",)) == \
            ("equation", "univariate", "linear")

    def test_failing_root_gives_none(self, store):
        bad = [ModelItem("equality", parse("[1]"))]
        assert refine(store, bad, ("equation",)) is None

    def test_beam_leaf_stays(self, store):
        items = items_for(store, "biegelinie-1")
        assert refine(store, items, ("Biegelinien",)) == ("Biegelinien",)

    def test_monotone_prefixes_match(self, store):
        items = items_for(store, "linear-1")
        path = refine(store, items, ("equation",))
        for i in range(1, len(path) + 1):
            assert refine(store, items, path[:i]) == path


class TestMethodsFor:
    def test_beam(self, store):
        assert methods_for(store, ("Biegelinien",)) == \
            [("IntegrierenUndKonstanteBestimmen2",)]

    def test_linear_equation(self, store):
        assert methods_for(store, ("equation", "univariate", "linear")) == \
            [("Equation", "solveLinear")]

    def test_no_match_empty(self, store):
        # a fresh problem whose words match no guard
        p = Problem(("odd",), "Base",
                    Model(given=[ModelItem("UnheardOf", Var("z_z", REAL))]))
        store.problems[("odd",)] = p
        try:
            assert methods_for(store, ("odd",)) == []
        finally:
            del store.problems[("odd",)]


class TestLoadChecks:
    def test_child_where_superset_enforced(self, tmp_path, content_dir):
        src = (content_dir / "base.thy").read_text()
        (tmp_path / "base.thy").write_text(src)
        (tmp_path / "bad.pbl").write_text(
            "problem equation\n"
            "  theory Base\n"
            "  given equality (e_e::bool), solveFor (v_v::real)\n"
            "  find solution (sol_l::bool)\n"
            "  where occurs_in v_v e_e\n"
            "problem equation/univariate\n"
            "  where\n")
        from stepcalc.knowledge import load_bundle
        with pytest.raises(KnowledgeError):
            load_bundle(tmp_path)

    def test_import_cycle_detected(self, tmp_path):
        (tmp_path / "a.thy").write_text("theory A\nimports B\n")
        (tmp_path / "b.thy").write_text("theory B\nimports A\n")
        from stepcalc.knowledge import load_bundle
        with pytest.raises(KnowledgeError):
            load_bundle(tmp_path)
