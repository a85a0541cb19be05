import pytest

from stepcalc.knowledge import Model, ModelItem, Problem
from stepcalc.specify import (Formalisation, MethodAbsent, PlanDiagnosis,
                              Specification, SubproblemPlan, check_preconditions,
                              displayed_model, plan_node_for,
                              sequence_subproblems, toggle_view,
                              PRE_TRUE, PRE_FALSE, PRE_UNDECIDED)
from stepcalc.programs import RefTriple
from stepcalc.terms import Context, Var, parse, pretty, BOOL, REAL


def filled_spec(store, example_id):
    ex = store.examples[example_id]
    spec = Specification(refs=ex.refs)
    for it in ex.items:
        spec.filled[it.word] = it.term
    return spec, ex


class TestPreconditions:
    def test_beam_integrability_true(self, store):
        spec, ex = filled_spec(store, "biegelinie-1")
        problem = store.problems[("Biegelinien",)]
        out = check_preconditions(spec, store, problem, store.ctx("Biegelinie"))
        assert out.precond_status == [PRE_TRUE]

    def test_unfilled_variable_undecided(self, store):
        ctx = store.ctx("Base")
        model = Model(given=[ModelItem("value", Var("b_b", REAL))],
                      where=[parse("not (b_b = 0)", ctx,
                                   expected=BOOL)])
        problem = Problem(("scratch",), "Base", model)
        spec = Specification()
        out = check_preconditions(spec, store, problem, ctx)
        assert out.precond_status == [PRE_UNDECIDED]

    def test_linear_polynomial_condition_true(self, store):
        # evaluator oracle: the precondition evaluates on the instance
        spec, _ = filled_spec(store, "linear-1")
        problem = store.problems[("equation", "univariate", "linear")]
        out = check_preconditions(spec, store, problem, store.ctx("Equation"))
        assert out.precond_status == [PRE_TRUE, PRE_TRUE]

    def test_false_precondition(self, store):
        ctx = store.ctx("Base")
        model = Model(given=[ModelItem("value", Var("b_b", REAL))],
                      where=[parse("not (b_b = 0)", ctx, expected=BOOL)])
        problem = Problem(("scratch",), "Base", model)
        spec = Specification()
        spec.filled["value"] = parse("0")
        out = check_preconditions(spec, store, problem, ctx)
        assert out.precond_status == [PRE_FALSE]

    def test_monotone_filling_never_flips_true_to_false(self, store):
        spec, ex = filled_spec(store, "linear-1")
        problem = store.problems[("equation", "univariate", "linear")]
        ctx = store.ctx("Equation")
        full = check_preconditions(spec, store, problem, ctx)
        for drop in list(spec.filled):
            partial = Specification(refs=spec.refs,
                                    filled={k: v for k, v in spec.filled.items()
                                            if k != drop})
            before = check_preconditions(partial, store, problem, ctx)
            for b, f in zip(before.precond_status, full.precond_status):
                if b == PRE_TRUE:
                    assert f == PRE_TRUE


class TestToggleView:
    def test_method_guard_shown(self, store):
        spec, _ = filled_spec(store, "biegelinie-1")
        out = toggle_view(spec, store)
        assert out.view == "method"
        guard = displayed_model(out, store)
        words = [it.word for it in guard.given]
        assert "FunktionsVariable" in words  # the guard requires more

    def test_involution(self, store):
        spec, _ = filled_spec(store, "biegelinie-1")
        twice = toggle_view(toggle_view(spec, store), store)
        assert twice.view == spec.view
        assert set(twice.filled) <= set(spec.filled)

    def test_no_method_raises(self, store):
        spec, _ = filled_spec(store, "linear-1")  # refs carry no_met
        with pytest.raises(MethodAbsent):
            toggle_view(spec, store)


BEAM_PATHS = [("vonBelastungZu", "Biegelinien"),
              ("setzeRandbedingungen", "Biegelinien"),
              ("LINEAR", "system")]


def beam_formalisation(store):
    ex = store.examples["biegelinie-1"]
    extra = [ModelItem("Unbekannte", parse("[c, c_2, c_3, c_4]",
                                           store.ctx("Biegelinie")))]
    return Formalisation(list(ex.items) + extra, ex.refs)


class TestSequencing:
    def test_beam_order_valid(self, store):
        nodes = [plan_node_for(store, p) for p in BEAM_PATHS]
        plan = sequence_subproblems(nodes, beam_formalisation(store))
        assert isinstance(plan, SubproblemPlan)
        words = {(e.producer, e.consumer, e.slot) for e in plan.edges}
        assert (0, 1, "Funktionen") in words
        assert (1, 2, "Gleichungen") in words

    def test_reversed_order_diagnoses_cycle(self, store):
        nodes = [plan_node_for(store, p) for p in reversed(BEAM_PATHS)]
        result = sequence_subproblems(nodes, beam_formalisation(store))
        assert isinstance(result, PlanDiagnosis)
        assert result.cycle

    def test_single_node_trivial_plan(self, store):
        nodes = [plan_node_for(store, ("vonBelastungZu", "Biegelinien"))]
        plan = sequence_subproblems(nodes, beam_formalisation(store))
        assert isinstance(plan, SubproblemPlan)
        assert plan.edges == []

    def test_mutual_consumption_cycle(self, store):
        from stepcalc.specify import PlanNode
        a = PlanNode(("a",), [("left", REAL)], [("right", REAL)])
        b = PlanNode(("b",), [("right", REAL)], [("left", REAL)])
        result = sequence_subproblems([a, b], Formalisation([], RefTriple()))
        assert isinstance(result, PlanDiagnosis) and result.cycle

    def test_unfed_input_diagnosed(self, store):
        from stepcalc.specify import PlanNode
        a = PlanNode(("a",), [("mystery", REAL)], [])
        result = sequence_subproblems([a], Formalisation([], RefTriple()))
        assert isinstance(result, PlanDiagnosis)
        assert result.unfed == [(0, "mystery")]

    def test_valid_plan_is_topologically_ordered(self, store):
        nodes = [plan_node_for(store, p) for p in BEAM_PATHS]
        plan = sequence_subproblems(nodes, beam_formalisation(store))
        for e in plan.edges:
            assert e.producer < e.consumer
