"""Labelled mixed multigraphs: DAGs, ADMGs, CADMGs and their selection-labelled variants.

One immutable ``Graph`` class covers every graph family used by the
identification machinery.  Vertices are plain strings.  Random vertices may
carry a ``latent`` mark (pre-projection only) and at most one vertex is the
selector.  Edges are directed or bidirected and may carry a label naming
selector children; two parallel edges of the same kind must differ in label.

All operations are pure functions over immutable data and are safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Optional

DIRECTED = "directed"
BIDIRECTED = "bidirected"


class GraphError(ValueError):
    """Raised when a graph invariant or operation precondition is violated."""


class NotFixableError(GraphError):
    """Fixing was attempted on a vertex that is not fixable.

    ``witness`` is the set dis(v) & de(v), which has more than one element
    exactly when the vertex is not fixable.
    """

    def __init__(self, vertex: str, witness: frozenset):
        self.vertex = vertex
        self.witness = witness
        super().__init__(f"{vertex} is not fixable; dis & de = {sorted(witness)}")


class NotReachableError(GraphError):
    """A requested vertex set is not reachable; carries its reachable closure."""

    def __init__(self, target: frozenset, closure: frozenset):
        self.target = target
        self.closure = closure
        super().__init__(
            f"{sorted(target)} is not reachable; closure is {sorted(closure)}"
        )


@dataclass(frozen=True)
class Edge:
    kind: str
    tail: str
    head: str
    label: frozenset = frozenset()

    def sort_key(self):
        return (self.kind, self.tail, self.head, sorted(self.label))

    def __post_init__(self):
        if self.kind not in (DIRECTED, BIDIRECTED):
            raise GraphError(f"unknown edge kind {self.kind!r}")
        if self.tail == self.head:
            raise GraphError(f"self loop on {self.tail}")
        if self.kind == BIDIRECTED and self.tail > self.head:
            # canonical endpoint order for bidirected edges
            lo, hi = self.head, self.tail
            object.__setattr__(self, "tail", lo)
            object.__setattr__(self, "head", hi)

    def endpoints(self) -> frozenset:
        return frozenset((self.tail, self.head))


def directed(tail: str, head: str, label: Iterable[str] = ()) -> Edge:
    return Edge(DIRECTED, tail, head, frozenset(label))


def bidirected(a: str, b: str, label: Iterable[str] = ()) -> Edge:
    a, b = sorted((a, b))
    return Edge(BIDIRECTED, a, b, frozenset(label))


@dataclass(frozen=True)
class SelectorValue:
    """A value of the selector: which children are intervened, at what tokens.

    ``pattern`` is the set of children with intervene-flag 1; ``values`` maps
    each of them to a symbolic value token (any hashable).  The distinguished
    observational value has an empty pattern.
    """

    pattern: frozenset = frozenset()
    values: tuple = ()  # sorted tuple of (child, token) pairs

    def __post_init__(self):
        vals = dict(self.values)
        if set(vals) != set(self.pattern):
            raise GraphError("selector value present iff flag is 1")
        object.__setattr__(self, "values", tuple(sorted(vals.items())))

    @property
    def entries(self) -> dict:
        """Per-child (flag, value) view over the pattern."""
        vals = dict(self.values)
        return {c: (1, vals[c]) for c in self.pattern}

    def is_laidback_for(self, vertices: Iterable[str]) -> bool:
        return not (self.pattern & frozenset(vertices))

    def is_serious_for(self, vertices: Iterable[str]) -> bool:
        return not self.is_laidback_for(vertices)

    def value_of(self, child: str):
        return dict(self.values)[child]


OBSERVATIONAL = SelectorValue()


def laidback(s: SelectorValue, d: Iterable[str]) -> bool:
    """True iff ``s`` intervenes on no member of ``d``."""
    return s.is_laidback_for(d)


@dataclass(frozen=True)
class SelectorSupport:
    """The allowed seriousness patterns of the selector.

    Each pattern names the set of children jointly intervened on; value
    components are symbolic and unconstrained.  The empty pattern is the
    observational context.
    """

    patterns: frozenset  # frozenset of frozensets of child names

    def __post_init__(self):
        if not self.patterns:
            raise GraphError("selector support must be non-empty")
        object.__setattr__(
            self, "patterns", frozenset(frozenset(p) for p in self.patterns)
        )

    def __iter__(self):
        return iter(sorted(self.patterns, key=lambda p: (len(p), sorted(p))))

    def __contains__(self, pattern) -> bool:
        return frozenset(pattern) in self.patterns

    def laidback_patterns(self, d: Iterable[str]):
        dset = frozenset(d)
        return [p for p in self if not (p & dset)]


def trivial_support() -> SelectorSupport:
    return SelectorSupport(frozenset([frozenset()]))


@dataclass(frozen=True)
class Graph:
    """A mixed multigraph with random, fixed and latent vertices.

    ``fixed`` vertices receive no arrowheads; ``latent`` is a subset of
    ``random`` and only meaningful before latent projection.  ``selector``
    names the selection vertex when present, and ``support`` its allowed
    patterns.  ``swig_splits`` records intervened originals after SWIG
    construction (display metadata; vertex identity is preserved).
    """

    random: frozenset
    fixed: frozenset = frozenset()
    edges: frozenset = frozenset()
    latent: frozenset = frozenset()
    selector: Optional[str] = None
    support: Optional[SelectorSupport] = None
    swig_splits: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "random", frozenset(self.random))
        object.__setattr__(self, "fixed", frozenset(self.fixed))
        object.__setattr__(self, "edges", frozenset(self.edges))
        object.__setattr__(self, "latent", frozenset(self.latent))
        self._validate()

    def _validate(self):
        if self.random & self.fixed:
            raise GraphError("random and fixed vertices must be disjoint")
        if not self.latent <= self.random:
            raise GraphError("latent vertices must be random")
        verts = self.vertices
        for v in verts:
            if not v:
                raise GraphError("empty vertex name")
        if self.selector is not None and self.selector not in verts:
            raise GraphError("selector must be a vertex of the graph")
        seen = set()
        for e in self.edges:
            if e.tail not in verts or e.head not in verts:
                raise GraphError(f"edge endpoint not a vertex: {e}")
            if e.kind == DIRECTED and e.head in self.fixed:
                raise GraphError(f"directed edge into fixed vertex {e.head}")
            if e.kind == BIDIRECTED and (e.endpoints() & self.fixed):
                raise GraphError("bidirected edge at a fixed vertex")
            key = (e.kind, e.tail, e.head, e.label)
            if key in seen:
                raise GraphError(f"duplicate edge {e}")
            seen.add(key)
            if e.label:
                if self.selector is None:
                    raise GraphError("labelled edge in a graph without selector")
                # labels may name selector children that were projected out
                # or fixed along the way; only sanity-check the names
                if any(not c for c in e.label):
                    raise GraphError("empty name in an edge label")
        if self._directed_cycle():
            raise GraphError("directed cycle")

    def _directed_cycle(self) -> bool:
        state = {}

        def visit(v):
            state[v] = 1
            for w in self.children(v):
                if state.get(w) == 1:
                    return True
                if state.get(w) is None and visit(w):
                    return True
            state[v] = 2
            return False

        return any(state.get(v) is None and visit(v) for v in self.vertices)

    # -- basic views -------------------------------------------------------

    @property
    def vertices(self) -> frozenset:
        return self.random | self.fixed

    @cached_property
    def _parents(self) -> dict:
        out = {v: set() for v in self.vertices}
        for e in self.edges:
            if e.kind == DIRECTED:
                out[e.head].add(e.tail)
        return {v: frozenset(s) for v, s in out.items()}

    @cached_property
    def _children(self) -> dict:
        out = {v: set() for v in self.vertices}
        for e in self.edges:
            if e.kind == DIRECTED:
                out[e.tail].add(e.head)
        return {v: frozenset(s) for v, s in out.items()}

    @cached_property
    def _siblings(self) -> dict:
        out = {v: set() for v in self.vertices}
        for e in self.edges:
            if e.kind == BIDIRECTED:
                out[e.tail].add(e.head)
                out[e.head].add(e.tail)
        return {v: frozenset(s) for v, s in out.items()}

    def parents(self, x) -> frozenset:
        return self._relation_over(x, self._parents)

    def children(self, x) -> frozenset:
        return self._relation_over(x, self._children)

    def siblings(self, x) -> frozenset:
        return self._relation_over(x, self._siblings)

    def _relation_over(self, x, table) -> frozenset:
        if isinstance(x, str):
            x = (x,)
        out = set()
        for v in x:
            if v not in table:
                raise GraphError(f"unknown vertex {v!r}")
            out |= table[v]
        return frozenset(out)

    def _closure(self, x, step) -> frozenset:
        if isinstance(x, str):
            x = (x,)
        seen = set()
        stack = list(x)
        for v in stack:
            if v not in self.vertices:
                raise GraphError(f"unknown vertex {v!r}")
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(step(v))
        return frozenset(seen)

    def ancestors(self, x) -> frozenset:
        return self._closure(x, lambda v: self._parents[v])

    def descendants(self, x) -> frozenset:
        return self._closure(x, lambda v: self._children[v])

    def nondescendants(self, x) -> frozenset:
        return self.vertices - self.descendants(x)

    def district_of(self, x) -> frozenset:
        """Bidirected-connected component over random vertices."""
        if isinstance(x, str):
            x = (x,)
        for v in x:
            if v not in self.random:
                raise GraphError(f"district defined for random vertices, got {v!r}")
        return self._closure(x, lambda v: self._siblings[v] & self.random)

    def districts(self) -> list:
        """Partition of the random vertices into districts, sorted."""
        remaining = set(self.random)
        out = []
        while remaining:
            v = min(remaining)
            d = self.district_of(v)
            out.append(d)
            remaining -= d
        return sorted(out, key=lambda d: sorted(d))

    def topological_order(self) -> tuple:
        """Deterministic topological order (lexicographic Kahn)."""
        pending = {v: len(self._parents[v]) for v in self.vertices}
        ready = sorted((v for v, n in pending.items() if n == 0), reverse=True)
        order = []
        while ready:
            v = ready.pop()
            order.append(v)
            changed = False
            for w in self._children[v]:
                pending[w] -= 1
                if pending[w] == 0:
                    ready.append(w)
                    changed = True
            if changed:
                ready.sort(reverse=True)
        return tuple(order)

    # -- structural edits ---------------------------------------------------

    def induced_subgraph(self, keep: Iterable[str]) -> "Graph":
        keep = frozenset(keep)
        unknown = keep - self.vertices
        if unknown:
            raise GraphError(f"unknown vertices {sorted(unknown)}")
        kept = [e for e in self.edges if e.endpoints() <= keep]
        if self.selector not in keep:
            # labels are meaningless without the selector
            kept = [Edge(e.kind, e.tail, e.head) for e in kept]
        return replace(
            self,
            random=self.random & keep,
            fixed=self.fixed & keep,
            latent=self.latent & keep,
            edges=frozenset(kept),
            selector=self.selector if self.selector in keep else None,
        )

    def with_edges(self, edges: Iterable[Edge]) -> "Graph":
        return replace(self, edges=frozenset(edges))

    # -- separation ---------------------------------------------------------

    def m_separated(self, x, y, z=()) -> bool:
        """m-separation on the mixed graph; fixed vertices are always context.

        A path is blocked if a non-collider on it is conditioned on, or a
        collider on it is not an ancestor of the conditioning set.  Parallel
        edges and labels are irrelevant.
        """
        x = frozenset((x,) if isinstance(x, str) else x)
        y = frozenset((y,) if isinstance(y, str) else y)
        z = frozenset((z,) if isinstance(z, str) else z)
        for side in (x, y, z):
            unknown = side - self.vertices
            if unknown:
                raise GraphError(f"unknown vertices {sorted(unknown)}")
        if (x & y) or (x & z) or (y & z):
            raise GraphError("m-separation arguments must be pairwise disjoint")
        z_eff = z | (self.fixed - x - y)
        anc_z = self.ancestors(z_eff) if z_eff else frozenset()

        # State: (vertex, arrived with an arrowhead at this vertex?).
        start = [(v, False) for v in x]
        seen = set(start)
        stack = list(start)
        while stack:
            v, came_by_head = stack.pop()
            for e in self.edges:
                if v not in e.endpoints():
                    continue
                if e.kind == DIRECTED:
                    if e.tail == v:
                        mark_here, w, mark_there = False, e.head, True
                    else:
                        mark_here, w, mark_there = True, e.tail, False
                else:
                    mark_here, mark_there = True, True
                    w = e.head if e.tail == v else e.tail
                collider = came_by_head and mark_here
                if collider:
                    if v not in anc_z:
                        continue
                else:
                    if v in z_eff:
                        continue
                if w in y:
                    return False
                state = (w, mark_there)
                if state not in seen:
                    seen.add(state)
                    stack.append(state)
        return True

    # -- fixing -------------------------------------------------------------

    def is_fixable(self, v: str) -> bool:
        if v not in self.random:
            raise GraphError(f"{v!r} is not a random vertex")
        return self.district_of(v) & self.descendants(v) == {v}

    def fix(self, v: str) -> "Graph":
        """Render ``v`` fixed, removing every edge with an arrowhead into it."""
        if v not in self.random:
            raise GraphError(f"{v!r} is not a random vertex")
        witness = self.district_of(v) & self.descendants(v)
        if witness != {v}:
            raise NotFixableError(v, witness)
        kept = frozenset(
            e
            for e in self.edges
            if not (
                (e.kind == DIRECTED and e.head == v)
                or (e.kind == BIDIRECTED and v in e.endpoints())
            )
        )
        return replace(
            self,
            random=self.random - {v},
            fixed=self.fixed | {v},
            latent=self.latent - {v},
            edges=kept,
        )

    def fix_all(self, vs: Iterable[str]) -> "Graph":
        g = self
        for v in vs:
            g = g.fix(v)
        return g

    def reachable(self, r: Iterable[str]) -> Optional[tuple]:
        """A valid fixing sequence for everything outside ``r``, if one exists.

        Among currently fixable vertices the lexicographically smallest is
        fixed first, so the sequence is deterministic.
        """
        r = frozenset(r)
        unknown = r - self.random
        if unknown:
            raise GraphError(f"not random vertices: {sorted(unknown)}")
        g = self
        seq = []
        todo = set(self.random - r)
        while todo:
            v = next((v for v in sorted(todo) if g.is_fixable(v)), None)
            if v is None:
                return None
            g = g.fix(v)
            seq.append(v)
            todo.remove(v)
        return tuple(seq)

    def reachable_closure(self, r: Iterable[str]) -> frozenset:
        """The unique smallest reachable superset of ``r``."""
        r = frozenset(r)
        unknown = r - self.random
        if unknown:
            raise GraphError(f"not random vertices: {sorted(unknown)}")
        g = self
        while True:
            v = next(
                (v for v in sorted(g.random - r) if g.is_fixable(v)),
                None,
            )
            if v is None:
                return g.random
            g = g.fix(v)


def genealogy(g: Graph, kind: str, x, strict: bool = False) -> frozenset:
    """Genealogical relation ``kind`` of ``x`` in ``g``, disjunctive over sets.

    ``kind`` is one of pa, ch, an, de, nd, dis.  Strict variants exclude the
    argument set itself.
    """
    x = frozenset((x,) if isinstance(x, str) else x)
    fns = {
        "pa": g.parents,
        "ch": g.children,
        "an": g.ancestors,
        "de": g.descendants,
        "nd": g.nondescendants,
        "dis": g.district_of,
    }
    if kind not in fns:
        raise GraphError(f"unknown genealogy kind {kind!r}")
    out = fns[kind](x)
    return out - x if strict else out
