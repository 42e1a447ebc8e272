"""Identification procedures for interventional queries, with and without a
systematic-selection variable.

Five entry points share the district-factorization backbone:

* ``identify``            single observational law, hidden-variable ADMG
* ``identify_fused``      several interventional datasets over one model
* ``selected_g_formula``  fully observed selection model (labelled DAG)
* ``identify_selected``   hidden-variable selection model (labelled multigraph)
* ``sequential_baseline`` de-select first, then identify (strictly weaker)

Results are either an ``Identified`` estimand or a structured failure naming
the obstructing district.  Failure verdicts that carry a non-identification
guarantee can be certified by the oracle's witness generator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .estimand import (
    BaseKernel,
    ChainFactor,
    ChainKernel,
    Estimand,
    Lo,
    Product,
    SelectorAssign,
    SumOver,
    Var,
    normal_form,
    restrict,
    substitute_base,
    trim_conditioning,
)
from .graph import Graph, GraphError, SelectorSupport, SelectorValue
from .projection import context_graph, fixed_name, swig

OBS = SelectorValue()


class QueryError(GraphError):
    pass


@dataclass(frozen=True)
class Query:
    """p(outcomes(treatments, selector=observational)); values are symbolic."""

    outcomes: frozenset
    treatments: tuple  # sorted ((vertex, Sym), ...)

    def __post_init__(self):
        object.__setattr__(self, "outcomes", frozenset(self.outcomes))
        object.__setattr__(
            self, "treatments", tuple(sorted(dict(self.treatments).items()))
        )
        if self.outcomes & self.treated:
            raise QueryError("outcomes and treatments overlap")
        if not self.outcomes:
            raise QueryError("empty outcome set")

    @property
    def treated(self) -> frozenset:
        return frozenset(v for v, _ in self.treatments)

    @property
    def tokens(self) -> dict:
        return dict(self.treatments)


@dataclass(frozen=True)
class Identified:
    estimand: Estimand
    kind: str = "identified"


@dataclass(frozen=True)
class FailPositivity:
    district: frozenset
    kind: str = "positivity"


@dataclass(frozen=True)
class FailThicket:
    district: frozenset
    tried: tuple = ()
    kind: str = "thicket"


@dataclass(frozen=True)
class FailHedge:
    district: frozenset
    closure: frozenset
    kind: str = "hedge"


@dataclass(frozen=True)
class FailUnknown:
    district: frozenset
    tried: tuple = ()
    kind: str = "unknown"


@dataclass(frozen=True)
class DatasetSpec:
    """An available law p_name(V - intervened | do(intervened)) and its CADMG."""

    name: str
    intervened: frozenset
    graph: Graph

    def __post_init__(self):
        object.__setattr__(self, "intervened", frozenset(self.intervened))
        if self.intervened != self.graph.fixed:
            raise QueryError("dataset graph must fix exactly the intervened set")


def _validate_query(g: Graph, query: Query):
    missing = (query.outcomes | query.treated) - g.random
    if missing:
        raise QueryError(f"query references non-random vertices {sorted(missing)}")
    if g.selector is not None and g.selector in (query.outcomes | query.treated):
        raise QueryError("the selector is addressed only through its own slot")


def _ancestral_set(g: Graph, query: Query) -> frozenset:
    """Ancestors of the outcomes among random vertices of the context SWIG
    for the intervention (treatments, selector observational)."""
    targets: dict = dict(query.tokens)
    s = OBS if g.selector is not None else None
    sw = swig(g, targets, s)
    return sw.ancestors(query.outcomes) & sw.random


def _outcome_districts(g: Graph, ystar: frozenset) -> list:
    return g.induced_subgraph(ystar).districts()


def _restrict_treatments(e: Estimand, query: Query, allowed: frozenset) -> Estimand:
    asg = {
        v: tok
        for v, tok in query.treatments
        if v in allowed and v in e.free_vars()
    }
    return restrict(e, asg) if asg else e


def _assemble(kernels: list, ystar: frozenset, query: Query) -> Estimand:
    e: Estimand = kernels[0] if len(kernels) == 1 else Product(tuple(kernels))
    bound = ystar - query.outcomes
    if bound:
        e = SumOver(e, bound)
    return normal_form(e)


# --------------------------------------------------------------------------
# plain interventional identification (single law, no selector semantics)


def identify(g: Graph, query: Query, base: str = "p"):
    """District factorization over the ancestral outcome set; every district
    must be reachable in the full graph, else the hedge is returned."""
    _validate_query(g, query)
    ystar = _ancestral_set(g, query)
    kernels = []
    for dstar in _outcome_districts(g, ystar):
        if g.reachable(dstar) is None:
            return FailHedge(dstar, g.reachable_closure(dstar))
        kernel = ChainKernel.from_joint(g, base).fix_to(dstar)
        e = kernel.expr()
        e = _restrict_treatments(e, query, g.parents(dstar) - dstar)
        kernels.append(e)
    return Identified(_assemble(kernels, ystar, query))


# --------------------------------------------------------------------------
# fusion of several interventional datasets


def identify_fused(g: Graph, datasets: Iterable[DatasetSpec], query: Query):
    """Per district, the first dataset in which it is reachable supplies the
    kernel; with a single observational dataset this reduces to ``identify``."""
    _validate_query(g, query)
    datasets = list(datasets)
    ystar = _ancestral_set(g, query)
    kernels = []
    for dstar in _outcome_districts(g, ystar):
        tried = []
        chosen = None
        for ds in datasets:
            tried.append(ds.name)
            if not dstar <= ds.graph.random:
                continue
            if ds.graph.reachable(dstar) is None:
                continue
            chosen = ChainKernel.from_joint(ds.graph, ds.name).fix_to(dstar)
            break
        if chosen is None:
            return FailThicket(dstar, tuple(tried))
        e = chosen.expr()
        e = _restrict_treatments(e, query, g.parents(dstar) - dstar)
        kernels.append(e)
    return Identified(_assemble(kernels, ystar, query))


# --------------------------------------------------------------------------
# selector machinery


def _selector_children(g: Graph) -> frozenset:
    """Children of the selector as named anywhere in the model: current graph
    children plus label references (children projected out or fixed away)."""
    if g.selector is None:
        return frozenset()
    out = set(g.children(g.selector))
    for e in g.edges:
        out |= e.label
    return frozenset(out)


def _candidate_patterns(
    support: SelectorSupport,
    laidback_for: frozenset,
    required: frozenset,
) -> list:
    """Support patterns laidback for the district, those covering the
    query-consistent required children first, then fewest interventions."""
    cands = support.laidback_patterns(laidback_for)
    return sorted(
        cands, key=lambda p: (not (required <= p), len(p), tuple(sorted(p)))
    )


def _selector_assign(
    pattern: frozenset, query: Query, scope: frozenset
) -> SelectorAssign:
    """Concrete symbolic value for a pattern: query tokens where applicable,
    the child's own observed value when it is in scope (the data's diagonal),
    and an arbitrary fixed value otherwise (mechanism invariance)."""
    tokens = query.tokens
    vals = []
    for c in sorted(pattern):
        if c in tokens:
            vals.append((c, tokens[c]))
        elif c in scope:
            vals.append((c, Var(c)))
        else:
            vals.append((c, Lo()))
    return SelectorAssign(pattern, tuple(vals))


def _pattern_value(pattern: frozenset) -> SelectorValue:
    return SelectorValue(pattern, tuple((c, "*") for c in sorted(pattern)))


def _kernel_scope(kernel: ChainKernel) -> frozenset:
    return kernel.expr().free_vars()


def _selection_fixable(g: Graph, v: str) -> bool:
    """Fixability for the selection procedures.

    The selector's own factor can only be divided out where its law is
    positive; a remaining bidirected neighbour makes the restricted slices
    load-bearing, so the selector stays random until its district is clear.
    Other vertices use the ordinary criterion.
    """
    if not g.is_fixable(v):
        return False
    if v == g.selector:
        return g.district_of(v) == {v}
    return True


def _selection_closure(g: Graph, target: frozenset) -> frozenset:
    while True:
        v = next(
            (v for v in sorted(g.random - target) if _selection_fixable(g, v)),
            None,
        )
        if v is None:
            return g.random
        g = g.fix(v)


def _selection_fix_to(kernel: ChainKernel, target: frozenset) -> ChainKernel:
    """Chain fixing under the selection fixability rule, preferring clean steps."""
    k = kernel
    todo = set(k.randoms) - target
    while todo:
        fixable = [v for v in sorted(todo) if _selection_fixable(k.graph, v)]
        if not fixable:
            raise QueryError(f"{sorted(target)} not reachable under selection")
        pick = next((v for v in fixable if k._fix_is_clean(v)), fixable[0])
        k = k.fix(pick)
        todo.discard(pick)
    return k


def _polish_kernel(
    kernel: ChainKernel,
    g_labelled: Graph,
    sval: Optional[SelectorAssign],
    query: Query,
) -> Estimand:
    """Attach the selector restriction to chain factors that depend on the
    selector, trimming their conditioning sets in the context graph (the
    conditional independencies that hold given the chosen value)."""
    sel = g_labelled.selector
    if kernel.factors is None or sval is None or sel is None:
        e = kernel.expr()
        if sval is not None and sel is not None and sel in e.free_vars():
            e = restrict(e, {sel: sval})
        return e
    ctx = context_graph(g_labelled, _pattern_value(sval.pattern))
    out = kernel
    for v in sorted(kernel.factors):
        f = kernel.factors[v]
        if sel in f.cond:
            cond = trim_conditioning(ctx, v, f.cond, keep={sel})
            factors = dict(out.factors)
            factors[v] = ChainFactor(v, f.base, cond, f.restr)
            out = ChainKernel(out.graph, factors, None)
            out = out.restrict_factor(v, {sel: sval})
    return out.expr()


# --------------------------------------------------------------------------
# fully observed selection models: the selected g-formula


def selected_g_formula(g: Graph, query: Query, support: Optional[SelectorSupport] = None):
    """Product of parent conditionals over the SWIG-ancestral set, each factor
    at a selector value that leaves its vertex natural; identified exactly
    when such a value exists for every factor."""
    if g.latent or any(e.kind == "bidirected" for e in g.edges):
        raise QueryError("the selected g-formula needs a fully observed model")
    if g.selector is None:
        raise QueryError("no selector; use identify instead")
    support = support or g.support
    if support is None:
        raise QueryError("a selector support is required")
    _validate_query(g, query)
    sel = g.selector
    children = _selector_children(g)
    ystar = _ancestral_set(g, query)
    factors = []
    for v in sorted(ystar):
        patterns = support.laidback_patterns({v})
        if not patterns:
            return FailPositivity(frozenset({v}))
        required = children & query.treated & g.ancestors({v})
        pattern = _candidate_patterns(support, frozenset({v}), required)[0]
        pa = g.parents(v)
        e: Estimand = BaseKernel("p", frozenset({v}), pa)
        asg = {w: tok for w, tok in query.treatments if w in pa}
        if sel in pa:
            asg[sel] = _selector_assign(pattern, query, pa | {v})
        if asg:
            e = restrict(e, asg)
        factors.append(e)
    return Identified(_assemble(factors, ystar, query))


# --------------------------------------------------------------------------
# hidden-variable selection models


def identify_selected(
    g: Graph,
    query: Query,
    support: Optional[SelectorSupport] = None,
    base: str = "p",
):
    """General identification under systematic selection and confounding.

    Per district of the ancestral set: a selector value leaving the district
    natural must exist (else the positivity failure); districts equal to
    their reachable closure fix directly; a selector-free closure is searched
    across contexts like a dataset-fusion problem (else the thicket failure);
    a closure containing the selector goes to the confounded-selector
    routine.
    """
    if g.selector is None:
        return identify(g, query, base)
    support = support or g.support
    if support is None:
        raise QueryError("a selector support is required")
    _validate_query(g, query)
    sel = g.selector
    children = _selector_children(g)
    ystar = _ancestral_set(g, query)
    kernels = []
    for dstar in _outcome_districts(g, ystar):
        patterns = support.laidback_patterns(dstar)
        if not patterns:
            return FailPositivity(dstar)
        required = children & query.treated & g.ancestors(dstar)
        closure = _selection_closure(g, dstar)

        if closure == dstar:
            kernel = _selection_fix_to(ChainKernel.from_joint(g, base), dstar)
            pattern = _candidate_patterns(support, dstar, required)[0]
            sval = _selector_assign(pattern, query, _kernel_scope(kernel))
            e = _polish_kernel(kernel, g, sval, query)
        elif sel not in closure:
            qtil = _selection_fix_to(ChainKernel.from_joint(g, base), closure)
            gtil = qtil.graph
            e = None
            tried = []
            for pattern in _candidate_patterns(support, dstar, required):
                tried.append(tuple(sorted(pattern)))
                ctx = context_graph(gtil, _pattern_value(pattern))
                if ctx.reachable(dstar) is None:
                    continue
                kernel = qtil.with_graph(ctx).fix_to(dstar)
                sval = _selector_assign(pattern, query, _kernel_scope(kernel))
                e = _polish_kernel(kernel, g, sval, query)
                break
            if e is None:
                return FailThicket(dstar, tuple(tried))
        else:
            qtil = _selection_fix_to(ChainKernel.from_joint(g, base), closure)
            gtil = qtil.graph
            sub = _confounded_selector(
                g, gtil, query, qtil, dstar, closure, support, required
            )
            if not isinstance(sub, Identified):
                return sub
            e = sub.estimand

        e = _restrict_treatments(e, query, g.parents(dstar) - dstar)
        kernels.append(e)
    return Identified(_assemble(kernels, ystar, query))


def confounded_selector(
    g: Graph,
    query: Query,
    qtil: ChainKernel,
    dstar: frozenset,
    closure: frozenset,
    support: SelectorSupport,
):
    """Public wrapper for the confounded-selector subroutine; ``qtil`` is the
    kernel over ``closure`` with everything else fixed (its graph is the
    CADMG the routine works in)."""
    if closure != qtil.graph.random:
        raise QueryError("kernel graph must match the closure")
    if closure != _selection_closure(g, frozenset(dstar)):
        raise QueryError("the given set is not the district's reachable closure")
    children = _selector_children(g)
    required = children & query.treated & g.ancestors(dstar)
    return _confounded_selector(
        g, qtil.graph, query, qtil, dstar, closure, support, required
    )


def _confounded_selector(
    g_full: Graph,
    gtil: Graph,
    query: Query,
    qtil: ChainKernel,
    dstar: frozenset,
    closure: frozenset,
    support: SelectorSupport,
    required: frozenset,
):
    sel = gtil.selector
    ch_star = gtil.children(sel) & (closure - dstar)
    if not ch_star:
        return FailHedge(dstar, closure)
    de_s = gtil.descendants(sel)
    tried = []
    for pattern in _candidate_patterns(support, dstar, required):
        tried.append(tuple(sorted(pattern)))
        pv = _pattern_value(pattern)
        sw = swig(gtil, {sel: pv}, pv)
        anchor = min(dstar)
        if anchor not in sw.random:
            continue
        dprime = sw.district_of(anchor)
        if not dstar <= dprime or sel in dprime:
            continue
        left = dprime & de_s
        cond = (dprime - left) | (gtil.parents(dprime) - dprime)
        cond = (cond & sw.vertices) - {sel}
        if left and not sw.m_separated(left, {sel}, cond):
            continue
        sub = sw.induced_subgraph(dprime | sw.fixed)
        if sub.reachable(dstar) is None:
            continue

        if qtil.factors is not None:
            scope = frozenset(dprime)
            for v in dprime:
                scope |= qtil.factors[v].cond
        else:
            scope = _kernel_scope(qtil)
        sval = _selector_assign(pattern, query, scope)
        factors = {}
        ok = True
        if qtil.factors is None:
            ok = False  # the chain degraded; no structured factors to order
        else:
            ctx = context_graph(g_full, pv)
            for v in sorted(dprime):
                f = qtil.factors[v]
                restr = dict(f.restr)
                if v in de_s and sel in f.cond:
                    cond_v = trim_conditioning(ctx, v, f.cond, keep={sel})
                    restr[sel] = sval
                else:
                    cond_v = f.cond
                for w, tok in query.treatments:
                    if w in pattern and w in cond_v:
                        restr[w] = tok
                factors[v] = ChainFactor(v, f.base, cond_v, tuple(sorted(restr.items())))
        if not ok:
            continue
        kernel = ChainKernel(sub, factors, None).fix_to(dstar)
        return Identified(kernel.expr())
    return FailUnknown(dstar, tuple(tried))


# --------------------------------------------------------------------------
# the two-stage baseline


def sequential_baseline(
    g: Graph,
    query: Query,
    support: Optional[SelectorSupport] = None,
    base: str = "p",
):
    """First identify the law of the observational context, then run plain
    identification on it.  Sound but strictly weaker than the one-shot
    procedure: failures here do not imply non-identification."""
    if g.selector is None:
        return identify(g, query, base)
    support = support or g.support
    if support is None:
        raise QueryError("a selector support is required")
    _validate_query(g, query)
    sel = g.selector
    if frozenset() not in support:
        return FailPositivity(frozenset({sel}))
    obs_assign = SelectorAssign(frozenset(), ())

    # stage 1: the observational-context law of everything but the selector
    rest = g.random - {sel}
    stage1 = []
    for dstar in g.induced_subgraph(rest).districts():
        closure = _selection_closure(g, dstar)
        if closure != dstar:
            return FailHedge(dstar, closure)
        kernel = _selection_fix_to(ChainKernel.from_joint(g, base), dstar)
        e = _polish_kernel(kernel, g, obs_assign, query)
        stage1.append(e)
    law = normal_form(
        stage1[0] if len(stage1) == 1 else Product(tuple(stage1))
    )

    # stage 2: plain identification over the observational-context graph;
    # the fixed half of the selector is a constant and carries no information
    sw = swig(context_graph(g, OBS), {sel: OBS}, OBS)
    g2 = sw.induced_subgraph(sw.vertices - {sel, fixed_name(sel)})
    result = identify(g2, query, base="pbar")
    if not isinstance(result, Identified):
        return result
    return Identified(normal_form(substitute_base(result.estimand, "pbar", law)))
