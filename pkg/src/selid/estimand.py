"""Symbolic Markov-kernel algebra: expression trees, fixing, normal form, rendering.

Estimands are immutable trees over named base kernels.  A base kernel
``p(O | C)`` denotes a conditional of a named distribution; derived kernels
are built with marginalization, ratios, products, explicit sums and value
restrictions.  Identification algorithms mostly manipulate kernels in *chain
form* (products of single-vertex conditionals), for which the fixing
operator admits cheap structured rules; a general quotient rule covers the
rest.  Evaluation lives in the oracle module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .graph import Graph, GraphError, NotFixableError, NotReachableError, SelectorValue


class EstimandError(ValueError):
    pass


# --------------------------------------------------------------------------
# value tokens


@dataclass(frozen=True, order=True)
class Sym:
    """A free symbolic constant, e.g. the queried treatment value ``a1``."""

    name: str


@dataclass(frozen=True, order=True)
class Var:
    """A reference to another variable's own value (diagonal restriction)."""

    vertex: str


@dataclass(frozen=True, order=True)
class Lo:
    """The lowest domain value: an arbitrary-but-fixed choice for selector
    components whose value provably does not matter (mechanism invariance)."""


@dataclass(frozen=True)
class SelectorAssign:
    """A symbolic selector value: seriousness pattern plus value tokens."""

    pattern: frozenset
    values: tuple = ()  # sorted tuple of (child, Sym|Var) pairs

    def __post_init__(self):
        object.__setattr__(self, "pattern", frozenset(self.pattern))
        vals = dict(self.values)
        if set(vals) != set(self.pattern):
            raise EstimandError("selector assignment must value exactly its pattern")
        object.__setattr__(self, "values", tuple(sorted(vals.items())))

    def sort_key(self):
        return (sorted(self.pattern), [(c, repr(v)) for c, v in self.values])


Value = object  # Sym | Var | SelectorAssign


# --------------------------------------------------------------------------
# expression nodes


class Estimand:
    """Base class; all nodes are frozen dataclasses, compared structurally."""

    def free_vars(self) -> frozenset:
        """All unbound variable names (outcome and context alike)."""
        return self.outcomes() | self.contexts()

    def outcomes(self) -> frozenset:
        raise NotImplementedError

    def contexts(self) -> frozenset:
        raise NotImplementedError

    def symbols(self) -> frozenset:
        return frozenset()


@dataclass(frozen=True)
class BaseKernel(Estimand):
    name: str
    outcome: frozenset
    context: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "outcome", frozenset(self.outcome))
        object.__setattr__(self, "context", frozenset(self.context))
        if self.outcome & self.context:
            raise EstimandError("kernel outcome and context overlap")
        if not self.outcome:
            raise EstimandError("kernel with empty outcome")

    def outcomes(self):
        return self.outcome

    def contexts(self):
        return self.context


@dataclass(frozen=True)
class Marginal(Estimand):
    child: Estimand
    over: frozenset

    def __post_init__(self):
        object.__setattr__(self, "over", frozenset(self.over))

    def outcomes(self):
        return self.child.outcomes() - self.over

    def contexts(self):
        return self.child.contexts()

    def symbols(self):
        return self.child.symbols()


@dataclass(frozen=True)
class SumOver(Estimand):
    child: Estimand
    over: frozenset

    def __post_init__(self):
        object.__setattr__(self, "over", frozenset(self.over))

    def outcomes(self):
        return self.child.outcomes() - self.over

    def contexts(self):
        return self.child.contexts() - self.over

    def symbols(self):
        return self.child.symbols()


@dataclass(frozen=True)
class Ratio(Estimand):
    num: Estimand
    den: Estimand

    def outcomes(self):
        return self.num.outcomes() - self.den.outcomes()

    def contexts(self):
        return (
            self.num.contexts() | self.den.contexts() | self.den.outcomes()
        ) - self.outcomes()

    def symbols(self):
        return self.num.symbols() | self.den.symbols()


@dataclass(frozen=True)
class Product(Estimand):
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))

    def outcomes(self):
        out = frozenset()
        for c in self.children:
            out |= c.outcomes()
        return out

    def contexts(self):
        ctx = frozenset()
        for c in self.children:
            ctx |= c.contexts()
        return ctx - self.outcomes()

    def symbols(self):
        out = frozenset()
        for c in self.children:
            out |= c.symbols()
        return out


@dataclass(frozen=True)
class Restrict(Estimand):
    child: Estimand
    assignment: tuple  # sorted tuple of (variable, Value) pairs

    def __post_init__(self):
        asg = dict(self.assignment)
        object.__setattr__(
            self, "assignment", tuple(sorted(asg.items(), key=lambda kv: kv[0]))
        )

    @property
    def asg(self) -> dict:
        return dict(self.assignment)

    def outcomes(self):
        return self.child.outcomes() - frozenset(self.asg)

    def contexts(self):
        return self.child.contexts() - frozenset(self.asg)

    def symbols(self):
        syms = set(self.child.symbols())
        for _, v in self.assignment:
            syms.update(_value_symbols(v))
        return frozenset(syms)


@dataclass(frozen=True)
class FailureNode(Estimand):
    reason: str
    witness: tuple = ()

    def outcomes(self):
        return frozenset()

    def contexts(self):
        return frozenset()


def _value_symbols(v) -> set:
    if isinstance(v, Sym):
        return {v.name}
    if isinstance(v, SelectorAssign):
        out = set()
        for _, t in v.values:
            out |= _value_symbols(t)
        return out
    return set()


# --------------------------------------------------------------------------
# constructors / operators


def base_joint(name: str, variables: Iterable[str]) -> BaseKernel:
    return BaseKernel(name, frozenset(variables))


def marginalize(e: Estimand, b: Iterable[str]) -> Estimand:
    """Sum the outcome variables ``b`` out of ``e``."""
    b = frozenset(b)
    if not b:
        return e
    extra = b - e.outcomes()
    if extra:
        raise EstimandError(f"cannot marginalize non-outcome variables {sorted(extra)}")
    return Marginal(e, b)


def condition(e: Estimand, b: Iterable[str]) -> Estimand:
    """Condition ``e`` on its outcome variables ``b``."""
    b = frozenset(b)
    if not b:
        return e
    extra = b - e.outcomes()
    if extra:
        raise EstimandError(f"cannot condition on non-outcome variables {sorted(extra)}")
    return Ratio(e, marginalize(e, e.outcomes() - b))


def restrict(e: Estimand, asg: Mapping[str, Value]) -> Estimand:
    """Evaluate ``e`` at the given symbolic assignment."""
    asg = {k: v for k, v in asg.items() if k in e.free_vars()}
    if not asg:
        return e
    if isinstance(e, Restrict):
        merged = e.asg
        for k, v in asg.items():
            if k in merged and merged[k] != v:
                raise EstimandError(f"conflicting restriction on {k}")
            merged[k] = v
        return Restrict(e.child, tuple(merged.items()))
    return Restrict(e, tuple(asg.items()))


def fix_kernel(e: Estimand, g: Graph, v: str) -> Estimand:
    """Divide out the kernel factor of ``v``; pair with ``g.fix(v)``.

    For a childless vertex this is marginalization; otherwise the kernel is
    divided by the conditional of ``v`` given its nondescendants.
    """
    if v not in g.random:
        raise GraphError(f"{v!r} is not random")
    witness = g.district_of(v) & g.descendants(v)
    if witness != {v}:
        raise NotFixableError(v, witness)
    if v not in e.outcomes():
        raise EstimandError(f"{v!r} is not an outcome variable of the kernel")
    de = g.descendants(v) & e.outcomes()
    if de == {v}:
        return Marginal(e, {v})
    if de == e.outcomes():
        # no nondescendants among the outcomes: divide by the plain margin
        return Ratio(e, Marginal(e, de - {v}))
    num_keep = Marginal(e, de - {v})  # kernel over nd(v) + v
    den_keep = Marginal(e, de)  # kernel over nd(v)
    return Ratio(e, Ratio(num_keep, den_keep))


def fix_sequence(e: Estimand, g: Graph, target: Iterable[str]):
    """Fix everything outside ``target`` along the deterministic valid sequence.

    Returns the pair (kernel, graph).  Raises NotReachableError carrying the
    reachable closure when no valid sequence exists.
    """
    target = frozenset(target)
    seq = g.reachable(target)
    if seq is None:
        raise NotReachableError(target, g.reachable_closure(target))
    for v in seq:
        e = fix_kernel(e, g, v)
        g = g.fix(v)
    return e, g


# --------------------------------------------------------------------------
# chain-form kernels (structured fixing for the identification algorithms)


@dataclass(frozen=True)
class ChainFactor:
    vertex: str
    base: str
    cond: frozenset
    restr: tuple = ()  # sorted (variable, Value) pairs applied to this factor

    def to_estimand(self) -> Estimand:
        e: Estimand = BaseKernel(self.base, frozenset([self.vertex]), self.cond)
        if self.restr:
            e = Restrict(e, self.restr)
        return e

    def conditioning(self) -> frozenset:
        """Context variables still free after restriction."""
        return self.cond - frozenset(dict(self.restr))


def trim_conditioning(g: Graph, v: str, cond: Iterable[str], keep: Iterable[str] = ()) -> frozenset:
    """Drop conditioning variables irrelevant to ``v`` by m-separation in ``g``.

    Deterministic greedy removal in sorted order, iterated to a fixpoint;
    ``keep`` members are never dropped.
    """
    cond = set(cond)
    keep = frozenset(keep)
    changed = True
    while changed:
        changed = False
        for w in sorted(cond - keep):
            rest = (cond - {w}) & g.vertices
            if w not in g.vertices:
                cond.discard(w)
                changed = True
            elif g.m_separated({v}, {w}, rest):
                cond.discard(w)
                changed = True
    return frozenset(cond)


class ChainKernel:
    """A kernel under fixing, kept in chain form as long as the rules allow.

    The kernel starts as the full base law of ``graph`` factorized into
    single-vertex conditionals along the deterministic topological order,
    with conditioning sets trimmed by m-separation (a Markov-equivalent,
    display-friendly form).  ``fix`` applies, in order of preference: the
    factor-drop rule, marginalization of a childless vertex, or the general
    quotient.  The selector is special: its factor is always divided out so
    that it remains a conditioning variable — marginalizing it would assume
    positivity its support structurally violates.  Once a step forces a
    non-chain expression the object degrades to a plain estimand and further
    fixing uses the generic operator.
    """

    def __init__(self, graph: Graph, factors: Optional[dict], expr: Optional[Estimand]):
        self.graph = graph
        self.factors = factors  # dict vertex -> ChainFactor, or None once degraded
        self._expr = expr

    @classmethod
    def from_joint(cls, graph: Graph, base: str = "p", trim: bool = True) -> "ChainKernel":
        order = graph.topological_order()
        factors = {}
        pre: list = []
        for v in order:
            if v in graph.random:
                cond = frozenset(pre)
                if trim:
                    cond = trim_conditioning(graph, v, cond)
                factors[v] = ChainFactor(v, base, cond)
            pre.append(v)
        return cls(graph, factors, None)

    # -- views ---------------------------------------------------------------

    @property
    def randoms(self) -> frozenset:
        return self.graph.random

    def expr(self) -> Estimand:
        if self.factors is not None:
            order = {v: i for i, v in enumerate(self.graph.topological_order())}
            parts = [
                self.factors[v].to_estimand()
                for v in sorted(self.factors, key=lambda v: order.get(v, 0))
            ]
            if len(parts) == 1:
                return parts[0]
            return Product(tuple(parts))
        return self._expr

    def with_graph(self, g: Graph) -> "ChainKernel":
        """Reinterpret the same kernel over another graph (e.g. a context graph)."""
        return ChainKernel(g, dict(self.factors) if self.factors else None, self._expr)

    # -- fixing ----------------------------------------------------------------

    def fix(self, v: str) -> "ChainKernel":
        g = self.graph
        if not g.is_fixable(v):
            raise NotFixableError(v, g.district_of(v) & g.descendants(v))
        g2 = g.fix(v)
        if self.factors is None:
            return ChainKernel(g2, None, fix_kernel(self._expr, g, v))

        de = g.descendants(v) & self.randoms
        factors = dict(self.factors)
        if de == {v}:
            if v == g.selector:
                # the selector stays a conditioning variable: marginalizing
                # it would silently assume positivity, which its support
                # structurally violates; the calling algorithm restricts the
                # remaining factors to one of its values
                factors.pop(v)
                return ChainKernel(g2, factors, None)
            # childless: fixing is marginalization
            others_mention_v = [
                f for w, f in factors.items() if w != v and v in f.conditioning()
            ]
            if not others_mention_v:
                factors.pop(v)
                return ChainKernel(g2, factors, None)
            expr = SumOver(self.expr(), frozenset([v]))
            return ChainKernel(g2, None, expr)

        # drop rule: legal when no factor outside de(v) touches de(v)
        legal = all(
            not (f.conditioning() & de)
            for w, f in factors.items()
            if w not in de
        ) and not (factors[v].conditioning() & (de - {v}))
        if legal:
            factors.pop(v)
            return ChainKernel(g2, factors, None)
        return ChainKernel(g2, None, fix_kernel(self.expr(), g, v))

    def fix_along(self, seq: Iterable[str]) -> "ChainKernel":
        k = self
        for v in seq:
            k = k.fix(v)
        return k

    def _fix_is_clean(self, v: str) -> bool:
        """Whether fixing ``v`` keeps the kernel in chain form."""
        if self.factors is None:
            return True
        g = self.graph
        de = g.descendants(v) & self.randoms
        if de == {v}:
            if v == g.selector:
                return True
            return not any(
                v in f.conditioning() for w, f in self.factors.items() if w != v
            )
        return all(
            not (f.conditioning() & de)
            for w, f in self.factors.items()
            if w not in de
        ) and not (self.factors[v].conditioning() & (de - {v}))

    def fix_to(self, target: Iterable[str]) -> "ChainKernel":
        """Fix everything outside ``target``, preferring steps that keep the
        chain form; all valid orders yield the same kernel."""
        target = frozenset(target)
        if self.graph.reachable(target) is None:
            raise NotReachableError(
                target, self.graph.reachable_closure(target)
            )
        k = self
        todo = set(k.randoms) - target
        while todo:
            fixable = [v for v in sorted(todo) if k.graph.is_fixable(v)]
            pick = next((v for v in fixable if k._fix_is_clean(v)), fixable[0])
            k = k.fix(pick)
            todo.discard(pick)
        return k

    def restrict_factor(self, v: str, asg: Mapping[str, Value]) -> "ChainKernel":
        if self.factors is None or v not in self.factors:
            raise EstimandError(f"no chain factor for {v!r}")
        f = self.factors[v]
        merged = dict(f.restr)
        merged.update({k: val for k, val in asg.items() if k in f.cond})
        factors = dict(self.factors)
        factors[v] = ChainFactor(f.vertex, f.base, f.cond, tuple(sorted(merged.items())))
        return ChainKernel(self.graph, factors, self._expr)


# --------------------------------------------------------------------------
# normal form


def normal_form(e: Estimand) -> Estimand:
    """Canonical form: margins folded into kernels, ratios cancelled, chain
    factors merged, restrictions pushed to the smallest scope, children sorted.
    Two estimands are structurally equal iff their normal forms are identical.
    """
    for _ in range(50):
        e2 = _rewrite(e)
        if e2 == e:
            return e
        e = e2
    return e


def _rewrite(e: Estimand) -> Estimand:
    if isinstance(e, BaseKernel) or isinstance(e, FailureNode):
        return e
    if isinstance(e, Marginal):
        child = _rewrite(e.child)
        if not e.over:
            return child
        if isinstance(child, BaseKernel) and e.over < child.outcome:
            return BaseKernel(child.name, child.outcome - e.over, child.context)
        if isinstance(child, Marginal):
            return Marginal(child.child, child.over | e.over)
        if isinstance(child, BaseKernel):
            return Marginal(child, e.over)
        return SumOver(child, e.over)
    if isinstance(e, SumOver):
        child = _rewrite(e.child)
        if not e.over:
            return child
        if isinstance(child, BaseKernel) and e.over < child.outcome:
            return BaseKernel(child.name, child.outcome - e.over, child.context)
        if isinstance(child, SumOver):
            return SumOver(child.child, child.over | e.over)
        if isinstance(child, Product):
            over = e.over
            parts = list(child.children)
            # telescope: an unreferenced conditional sums out to one
            changed = True
            while changed:
                changed = False
                for i, c in enumerate(parts):
                    outs = _summable_outcomes(c)
                    if outs is None or not outs or not outs <= over:
                        continue
                    rest_free = frozenset()
                    for j, other in enumerate(parts):
                        if j != i:
                            rest_free |= other.free_vars()
                    if outs & rest_free:
                        continue
                    over = over - outs
                    del parts[i]
                    changed = True
                    break
            if not parts:
                return SumOver(child, e.over)  # a bare unit; keep as written
            inside, outside = [], []
            for c in parts:
                if c.free_vars() & over:
                    inside.append(c)
                else:
                    outside.append(c)
            if not over:
                return _mk_product(parts)
            if outside and inside:
                return _mk_product(outside + [SumOver(_mk_product(inside), over)])
            if outside and not inside:
                return _mk_product(outside)
            return SumOver(_mk_product(parts), over)
        return SumOver(child, e.over)
    if isinstance(e, Ratio):
        num, den = _rewrite(e.num), _rewrite(e.den)
        if (
            isinstance(num, BaseKernel)
            and isinstance(den, BaseKernel)
            and num.name == den.name
            and den.outcome < num.outcome
            and den.context == num.context
        ):
            return BaseKernel(num.name, num.outcome - den.outcome, num.context | den.outcome)
        if isinstance(num, Product) and den in num.children:
            kept = list(num.children)
            kept.remove(den)
            return _mk_product(kept)
        if num == den:
            raise EstimandError("degenerate ratio e/e")
        return Ratio(num, den)
    if isinstance(e, Product):
        parts = []
        for c in e.children:
            c = _rewrite(c)
            if isinstance(c, Product):
                parts.extend(c.children)
            else:
                parts.append(c)
        parts = _merge_chain_factors(parts)
        return _mk_product(parts)
    if isinstance(e, Restrict):
        child = _rewrite(e.child)
        asg = {k: v for k, v in e.assignment if k in child.free_vars()}
        if not asg:
            return child
        if isinstance(child, Restrict):
            merged = child.asg
            merged.update(asg)
            return Restrict(child.child, tuple(merged.items()))
        if isinstance(child, Product):
            return _mk_product(
                [restrict(c, {k: v for k, v in asg.items() if k in c.free_vars()}) for c in child.children]
            )
        if isinstance(child, (SumOver, Marginal)):
            if not (frozenset(asg) & child.over):
                return type(child)(restrict(child.child, asg), child.over)
        return Restrict(child, tuple(asg.items()))
    raise EstimandError(f"unknown node {type(e).__name__}")


def _summable_outcomes(e: Estimand):
    """Outcome set of a conditional that sums to one over it, else None."""
    if isinstance(e, BaseKernel):
        return e.outcome
    if isinstance(e, Restrict) and isinstance(e.child, BaseKernel):
        if frozenset(dict(e.assignment)) & e.child.outcome:
            return None
        return e.child.outcome
    return None


def _mk_product(parts: list) -> Estimand:
    if not parts:
        raise EstimandError("empty product")
    if len(parts) == 1:
        return parts[0]
    return Product(tuple(sorted(parts, key=sort_key)))


def _split_restricted(c: Estimand):
    if isinstance(c, Restrict) and isinstance(c.child, BaseKernel):
        return c.child, dict(c.assignment)
    if isinstance(c, BaseKernel):
        return c, {}
    return None, None


def _merge_chain_factors(parts: list) -> list:
    """p(X | C) * p(Y | C + X) -> p(X + Y | C) for unrestricted factors.

    Deliberately limited to unrestricted factors: merging restricted ones
    would collapse the factored g-formula displays the algorithms are meant
    to produce.
    """
    parts = list(parts)
    changed = True
    while changed:
        changed = False
        for i in range(len(parts)):
            for j in range(len(parts)):
                if i == j:
                    continue
                a, ra = _split_restricted(parts[i])
                b, rb = _split_restricted(parts[j])
                if a is None or b is None or a.name != b.name:
                    continue
                if ra or rb:
                    continue
                if b.context == a.context | a.outcome:
                    merged = BaseKernel(a.name, a.outcome | b.outcome, a.context)
                    lo, hi = sorted((i, j))
                    parts[lo] = merged
                    del parts[hi]
                    changed = True
                    break
            if changed:
                break
    return parts


def sort_key(e: Estimand):
    if isinstance(e, BaseKernel):
        return ("base", e.name, sorted(e.outcome), sorted(e.context))
    if isinstance(e, Marginal):
        return ("marginal", sorted(e.over), sort_key(e.child))
    if isinstance(e, SumOver):
        return ("sum", sorted(e.over), sort_key(e.child))
    if isinstance(e, Ratio):
        return ("ratio", sort_key(e.num), sort_key(e.den))
    if isinstance(e, Product):
        return ("product", [sort_key(c) for c in e.children])
    if isinstance(e, Restrict):
        return (
            "restrict",
            [(k, _value_key(v)) for k, v in e.assignment],
            sort_key(e.child),
        )
    if isinstance(e, FailureNode):
        return ("failure", e.reason, list(e.witness))
    raise EstimandError(f"unknown node {type(e).__name__}")


def _value_key(v):
    if isinstance(v, Sym):
        return ("sym", v.name)
    if isinstance(v, Var):
        return ("var", v.vertex)
    if isinstance(v, Lo):
        return ("lo",)
    if isinstance(v, SelectorAssign):
        return ("sel", v.sort_key())
    return ("lit", repr(v))


def structurally_equal(a: Estimand, b: Estimand) -> bool:
    return normal_form(a) == normal_form(b)


def substitute_base(e: Estimand, name: str, replacement: Estimand) -> Estimand:
    """Replace every kernel of ``name`` by the matching derived form of
    ``replacement`` (a joint over at least the kernel's variables)."""
    if isinstance(e, BaseKernel):
        if e.name != name:
            return e
        full = replacement.outcomes()
        missing = (e.outcome | e.context) - full
        if missing:
            raise EstimandError(f"replacement lacks variables {sorted(missing)}")
        num = marginalize(replacement, full - e.outcome - e.context)
        if not e.context:
            return num
        return Ratio(num, marginalize(replacement, full - e.context))
    if isinstance(e, Marginal):
        return Marginal(substitute_base(e.child, name, replacement), e.over)
    if isinstance(e, SumOver):
        return SumOver(substitute_base(e.child, name, replacement), e.over)
    if isinstance(e, Ratio):
        return Ratio(
            substitute_base(e.num, name, replacement),
            substitute_base(e.den, name, replacement),
        )
    if isinstance(e, Product):
        return Product(tuple(substitute_base(c, name, replacement) for c in e.children))
    if isinstance(e, Restrict):
        return Restrict(substitute_base(e.child, name, replacement), e.assignment)
    return e


# --------------------------------------------------------------------------
# rendering and JSON serialization


def render(e: Estimand, fmt: str = "text") -> str:
    if fmt == "text":
        return _render_text(e)
    if fmt == "latex":
        return _render_latex(e)
    if fmt == "json":
        return json.dumps(to_jsonable(e), sort_keys=True, separators=(",", ":"))
    raise EstimandError(f"unknown format {fmt!r}")


def _vname(v: str, latex: bool) -> str:
    if latex and len(v) > 1 and v[-1].isdigit():
        head = v.rstrip("0123456789")
        return f"{head}_{{{v[len(head):]}}}"
    return v


def _render_value(v, latex: bool) -> str:
    if isinstance(v, Sym):
        return _vname(v.name, latex)
    if isinstance(v, Var):
        return _vname(v.vertex.lower(), latex)
    if isinstance(v, Lo):
        return "*" 
    if isinstance(v, SelectorAssign):
        if not v.pattern:
            return "()"
        bits = []
        for child, tok in v.values:
            c = _vname(child, latex)
            if latex:
                bits.append(f"s^e_{{{c}}}{{=}}1, s^v_{{{c}}}{{=}}{_render_value(tok, latex)}")
            else:
                bits.append(f"e_{child}=1, v_{child}={_render_value(tok, False)}")
        return "(" + ", ".join(bits) + ")"
    return str(v)


def _render_kernel(e: BaseKernel, restr: dict, latex: bool) -> str:
    outs = ", ".join(_vname(v, latex) for v in sorted(e.outcome))
    ctx_parts = []
    for v in sorted(e.context):
        if v in restr:
            ctx_parts.append(f"{_vname(v, latex)}={_render_value(restr[v], latex)}")
        else:
            ctx_parts.append(_vname(v, latex))
    name = e.name
    bar = r" \mid " if latex else " | "
    if ctx_parts:
        return f"{name}({outs}{bar}{', '.join(ctx_parts)})"
    return f"{name}({outs})"


def _render_text(e: Estimand, prec: int = 0) -> str:
    if isinstance(e, BaseKernel):
        return _render_kernel(e, {}, False)
    if isinstance(e, Restrict):
        if isinstance(e.child, BaseKernel):
            return _render_kernel(e.child, e.asg, False)
        inner = _render_text(e.child, 2)
        asg = ", ".join(f"{k}={_render_value(v, False)}" for k, v in e.assignment)
        return f"[{inner}]@{{{asg}}}"
    if isinstance(e, (SumOver, Marginal)):
        body = _render_text(e.child, 1)
        s = f"Σ_{{{', '.join(sorted(e.over))}}} {body}"
        return f"({s})" if prec > 0 else s
    if isinstance(e, Product):
        s = " ".join(_render_text(c, 1) for c in e.children)
        return f"({s})" if prec > 1 else s
    if isinstance(e, Ratio):
        return f"{_render_text(e.num, 2)} / {_render_text(e.den, 2)}"
    if isinstance(e, FailureNode):
        return f"FAIL({e.reason}; {', '.join(map(str, e.witness))})"
    raise EstimandError(f"unknown node {type(e).__name__}")


def _render_latex(e: Estimand, prec: int = 0) -> str:
    if isinstance(e, BaseKernel):
        return _render_kernel(e, {}, True)
    if isinstance(e, Restrict):
        if isinstance(e.child, BaseKernel):
            return _render_kernel(e.child, e.asg, True)
        inner = _render_latex(e.child, 2)
        asg = ", ".join(f"{_vname(k, True)}={_render_value(v, True)}" for k, v in e.assignment)
        return rf"\left[{inner}\right]_{{{asg}}}"
    if isinstance(e, (SumOver, Marginal)):
        body = _render_latex(e.child, 1)
        over = ", ".join(_vname(v, True) for v in sorted(e.over))
        s = rf"\sum_{{{over}}} {body}"
        return rf"\left({s}\right)" if prec > 0 else s
    if isinstance(e, Product):
        s = " ".join(_render_latex(c, 1) for c in e.children)
        return rf"\left({s}\right)" if prec > 1 else s
    if isinstance(e, Ratio):
        return rf"\frac{{{_render_latex(e.num)}}}{{{_render_latex(e.den)}}}"
    if isinstance(e, FailureNode):
        return rf"\text{{FAIL({e.reason})}}"
    raise EstimandError(f"unknown node {type(e).__name__}")


def _value_to_jsonable(v):
    if isinstance(v, Sym):
        return {"sym": v.name}
    if isinstance(v, Var):
        return {"var": v.vertex}
    if isinstance(v, Lo):
        return {"lo": True}
    if isinstance(v, SelectorAssign):
        return {
            "selector": {
                "pattern": sorted(v.pattern),
                "values": {c: _value_to_jsonable(t) for c, t in v.values},
            }
        }
    raise EstimandError(f"unserializable value {v!r}")


def _value_from_jsonable(d):
    if "sym" in d:
        return Sym(d["sym"])
    if "var" in d:
        return Var(d["var"])
    if "lo" in d:
        return Lo()
    if "selector" in d:
        sel = d["selector"]
        return SelectorAssign(
            frozenset(sel["pattern"]),
            tuple((c, _value_from_jsonable(t)) for c, t in sel["values"].items()),
        )
    raise EstimandError(f"bad value payload {d!r}")


def to_jsonable(e: Estimand):
    if isinstance(e, BaseKernel):
        return {
            "kind": "base",
            "name": e.name,
            "outcome": sorted(e.outcome),
            "context": sorted(e.context),
        }
    if isinstance(e, Marginal):
        return {"kind": "marginal", "over": sorted(e.over), "child": to_jsonable(e.child)}
    if isinstance(e, SumOver):
        return {"kind": "sum", "over": sorted(e.over), "child": to_jsonable(e.child)}
    if isinstance(e, Ratio):
        return {"kind": "ratio", "num": to_jsonable(e.num), "den": to_jsonable(e.den)}
    if isinstance(e, Product):
        return {"kind": "product", "children": [to_jsonable(c) for c in e.children]}
    if isinstance(e, Restrict):
        return {
            "kind": "restrict",
            "assignment": {k: _value_to_jsonable(v) for k, v in e.assignment},
            "child": to_jsonable(e.child),
        }
    if isinstance(e, FailureNode):
        return {"kind": "failure", "reason": e.reason, "witness": list(e.witness)}
    raise EstimandError(f"unknown node {type(e).__name__}")


def from_jsonable(d) -> Estimand:
    kind = d["kind"]
    if kind == "base":
        return BaseKernel(d["name"], frozenset(d["outcome"]), frozenset(d["context"]))
    if kind == "marginal":
        return Marginal(from_jsonable(d["child"]), frozenset(d["over"]))
    if kind == "sum":
        return SumOver(from_jsonable(d["child"]), frozenset(d["over"]))
    if kind == "ratio":
        return Ratio(from_jsonable(d["num"]), from_jsonable(d["den"]))
    if kind == "product":
        return Product(tuple(from_jsonable(c) for c in d["children"]))
    if kind == "restrict":
        return Restrict(
            from_jsonable(d["child"]),
            tuple((k, _value_from_jsonable(v)) for k, v in d["assignment"].items()),
        )
    if kind == "failure":
        return FailureNode(d["reason"], tuple(d["witness"]))
    raise EstimandError(f"unknown node kind {kind!r}")


def parse(text: str) -> Estimand:
    """Parse the JSON rendering back into an expression tree."""
    return from_jsonable(json.loads(text))


def selector_assignment_from_value(s: SelectorValue) -> SelectorAssign:
    return SelectorAssign(s.pattern, tuple((c, v) for c, v in s.values))
