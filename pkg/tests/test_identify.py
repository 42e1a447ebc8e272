import pytest

from selid.estimand import (
    BaseKernel,
    Product,
    Restrict,
    SelectorAssign,
    SumOver,
    Sym,
    normal_form,
    restrict,
)
from selid.fixtures import all_fixtures, compliance_pair
from selid.graph import SelectorSupport
from selid.identify import (
    DatasetSpec,
    Query,
    QueryError,
    identify,
    identify_fused,
    identify_selected,
    selected_g_formula,
    sequential_baseline,
)
from selid.oracle import verify
FX = all_fixtures()


def q(outs, **treats):
    return Query(frozenset(outs), tuple((k, Sym(v)) for k, v in treats.items()))


def kernel(outs, ctx=(), **restr):
    e = BaseKernel("p", frozenset(outs), frozenset(ctx))
    return restrict(e, restr) if restr else e


def sval(**kids):
    return SelectorAssign(frozenset(kids), tuple((k, Sym(v)) for k, v in kids.items()))


class TestPlainIdentification:
    def test_chain_g_formula(self):
        r = identify(FX["chain"].graph, q("Y", A="a"))
        expected = SumOver(
            Product((kernel("Y", "M"), kernel("M", "A", A=Sym("a")))),
            frozenset({"M"}),
        )
        assert r.estimand == normal_form(expected)

    def test_frontdoor_functional(self):
        r = identify(FX["frontdoor"].graph, q("Y", A="a"))
        expected = SumOver(
            Product(
                (
                    kernel("M", "A", A=Sym("a")),
                    SumOver(Product((kernel("A"), kernel("Y", "AM"))), frozenset("A")),
                )
            ),
            frozenset("M"),
        )
        assert r.estimand == normal_form(expected)

    def test_backdoor_adjustment(self):
        r = identify(FX["backdoor"].graph, q("Y", A="a"))
        expected = SumOver(
            Product((kernel("C"), kernel("Y", "AC", A=Sym("a")))), frozenset("C")
        )
        assert r.estimand == normal_form(expected)

    def test_bow_hedge(self):
        r = identify(FX["bow"].graph, q("Y", A="a"))
        assert r.kind == "hedge"
        assert r.district == {"Y"} and r.closure == {"A", "Y"}

    def test_query_validation(self):
        with pytest.raises(QueryError):
            identify(FX["chain"].graph, Query(frozenset("A"), (("A", Sym("a")),)))


class TestFusedIdentification:
    def test_single_observational_dataset_reduces_to_plain(self):
        for name in ("chain", "frontdoor", "backdoor"):
            g = FX[name].graph
            ds = [DatasetSpec("p", frozenset(), g)]
            a = identify_fused(g, ds, q("Y", A="a"))
            b = identify(g, q("Y", A="a"))
            assert a.estimand == b.estimand
        # non-identification carries the fusion failure kind
        g = FX["bow"].graph
        a = identify_fused(g, [DatasetSpec("p", frozenset(), g)], q("Y", A="a"))
        b = identify(g, q("Y", A="a"))
        assert a.kind == "thicket" and b.kind == "hedge"
        assert a.district == b.district

    def test_two_copies_of_bow_fail(self):
        g = FX["bow"].graph
        ds = [DatasetSpec("p1", frozenset(), g), DatasetSpec("p2", frozenset(), g)]
        r = identify_fused(g, ds, q("Y", A="a"))
        assert r.kind == "thicket" and r.tried == ("p1", "p2")

    def test_compliance_pair_identifies(self):
        model, experimental = compliance_pair()
        ds = [
            DatasetSpec("p1", frozenset(), model.graph),
            DatasetSpec("p2", frozenset({"M"}), experimental),
        ]
        r = identify_fused(model.graph, ds, q("Y", A="a"))
        assert r.kind == "identified"
        names = {n.name for n in _base_kernels(r.estimand)}
        assert names == {"p1", "p2"}
        rep = verify(
            model.graph,
            q("Y", A="a"),
            None,
            r,
            trials=25,
            seed=7,
            dag=model.dag,
            datasets=[("p1", frozenset()), ("p2", frozenset({"M"}))],
        )
        assert rep.passed


def _base_kernels(e):
    out = []
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, BaseKernel):
            out.append(n)
        for attr in ("child", "num", "den"):
            if hasattr(n, attr):
                stack.append(getattr(n, attr))
        if hasattr(n, "children"):
            stack.extend(n.children)
    return out


class TestSelectedGFormula:
    def test_scar_identifies_and_verifies(self):
        fx = FX["scar"]
        r = selected_g_formula(fx.graph, q("Y", A="a"))
        assert r.kind == "identified"
        rep = verify(fx.graph, q("Y", A="a"), fx.graph.support, r, trials=20, seed=1, dag=fx.graph)
        assert rep.passed

    def test_trivial_support_is_plain_g_formula(self):
        fx = FX["scar"]
        support = SelectorSupport(frozenset([frozenset()]))
        r = selected_g_formula(fx.graph, q("Y", A="a"), support)
        assert r.kind == "identified"

    def test_forced_outcome_not_identified(self):
        r = selected_g_formula(FX["forced_outcome"].graph, q("Y"))
        assert r.kind == "positivity" and r.district == {"Y"}

    def test_rejects_latent_models(self):
        with pytest.raises(QueryError):
            selected_g_formula(FX["double_bow"].dag, q("Y", A="a"))


class TestSelectedIdentification:
    def test_double_bow_exact_form(self):
        r = identify_selected(FX["double_bow"].graph, q("Y", A="a"))
        expected = Restrict(
            BaseKernel("p", frozenset("Y"), frozenset({"A", "S"})),
            (("A", Sym("a")), ("S", sval(A="a"))),
        )
        assert r.estimand == normal_form(expected)

    def test_double_bow_dominates_baseline(self):
        ss = identify_selected(FX["double_bow"].graph, q("Y", A="a"))
        base = sequential_baseline(FX["double_bow"].graph, q("Y", A="a"))
        assert ss.kind == "identified"
        assert base.kind == "hedge"

    def test_selection_web_reference_functional(self):
        r = identify_selected(FX["selection_web"].graph, q("Y", A1="a1", A2="a2"))
        assert r.kind == "identified"
        inner = SumOver(
            Product(
                (
                    BaseKernel("p", frozenset({"W2", "A3"})),
                    restrict(
                        BaseKernel(
                            "p",
                            frozenset("Y"),
                            frozenset({"M", "W2", "W1", "C", "S", "A3"}),
                        ),
                        {"S": sval(A1="a1", A2="a2")},
                    ),
                )
            ),
            frozenset({"A3"}),
        )
        expected = SumOver(
            Product(
                (
                    kernel("C"),
                    restrict(
                        BaseKernel("p", frozenset("M"), frozenset({"A1", "S"})),
                        {"A1": Sym("a1"), "S": sval(A1="a1")},
                    ),
                    restrict(
                        BaseKernel("p", frozenset({"W1"}), frozenset({"W2", "A2", "S"})),
                        {"A2": Sym("a2"), "S": sval(A2="a2")},
                    ),
                    inner,
                )
            ),
            frozenset({"M", "W1", "W2", "C"}),
        )
        assert r.estimand == normal_form(expected)

    def test_conservativity_without_selector(self):
        for name in ("chain", "frontdoor", "backdoor", "bow"):
            g = FX[name].graph
            a = identify_selected(g, q("Y", A="a"))
            b = identify(g, q("Y", A="a"))
            assert a.kind == b.kind
            if a.kind == "identified":
                assert a.estimand == b.estimand

    def test_failure_cases_reach_their_branches(self):
        r = identify_selected(FX["forced_outcome"].graph, q("Y"))
        assert r.kind == "positivity" and r.district == {"Y"}

        r = identify_selected(FX["split_thicket"].graph, q("Y", A1="a1", A2="a2"))
        assert r.kind == "thicket" and r.district == {"Y"}
        assert set(r.tried) == {("A1",), ("A2",)}

        r = identify_selected(FX["confounded_selector_hedge"].graph, q("Y", A="a"))
        assert r.kind == "hedge"
        assert r.district == {"Y"} and r.closure == {"A", "S", "Y"}

    def test_selected_verifies_against_oracle(self):
        cases = [
            ("double_bow", {"A": "a"}),
            ("scar", {"A": "a"}),
        ]
        for name, treats in cases:
            fx = FX[name]
            qq = q("Y", **treats)
            r = identify_selected(fx.graph, qq)
            assert r.kind == "identified"
            rep = verify(
                fx.graph, qq, fx.graph.support, r, trials=20, seed=3, dag=fx.dag or fx.graph
            )
            assert rep.passed, (name, rep)


class TestSequentialBaseline:
    def test_trivial_selector_equals_plain(self):
        g = FX["chain"].graph
        assert (
            sequential_baseline(g, q("Y", A="a")).estimand
            == identify(g, q("Y", A="a")).estimand
        )

    def test_scar_baseline_verifies(self):
        fx = FX["scar"]
        r = sequential_baseline(fx.graph, q("Y", A="a"))
        assert r.kind == "identified"
        rep = verify(fx.graph, q("Y", A="a"), fx.graph.support, r, trials=10, seed=2, dag=fx.graph)
        assert rep.passed

    def test_baseline_identified_implies_selected_identified(self):
        for name in ("scar", "double_bow", "selection_web"):
            fx = FX[name]
            qq = Query(
                frozenset("Y"),
                tuple(
                    (v, Sym(v.lower()))
                    for v in sorted(fx.graph.random & {"A", "A1", "A2"})
                ),
            )
            base = sequential_baseline(fx.graph, qq)
            ss = identify_selected(fx.graph, qq)
            if base.kind == "identified":
                assert ss.kind == "identified"


class TestConfoundedSelectorWrapper:
    def test_wrapper_reproduces_instrument_answer(self):
        from selid.estimand import ChainKernel
        from selid.identify import confounded_selector

        fx = FX["double_bow"]
        g = fx.graph
        query = q("Y", A="a")
        closure = frozenset({"S", "A", "Y"})
        qtil = ChainKernel.from_joint(g)
        r = confounded_selector(g, query, qtil, frozenset({"Y"}), closure, g.support)
        assert r.kind == "identified"
        expected = normal_form(
            restrict(
                BaseKernel("p", frozenset("Y"), frozenset({"A", "S"})),
                {"A": Sym("a"), "S": sval(A="a")},
            )
        )
        assert normal_form(r.estimand) == expected

    def test_wrapper_validates_closure(self):
        from selid.estimand import ChainKernel
        from selid.identify import QueryError, confounded_selector

        fx = FX["double_bow"]
        g = fx.graph
        qtil = ChainKernel.from_joint(g)
        with pytest.raises(QueryError):
            confounded_selector(
                g, q("Y", A="a"), qtil, frozenset({"A"}),
                frozenset({"S", "A", "Y"}), g.support,
            )
