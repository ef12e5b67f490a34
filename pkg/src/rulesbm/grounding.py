"""Grounding: instantiate weighted rules over a network into hinge potentials.

Each surviving grounding is a linear function l(x) = constant + sum(coeff * x)
over ground-atom variables, contributing the potential (max(l(x), 0))^exponent.
Observed atoms fold into the constant; groundings with l <= 0 for every
assignment are vacuous and dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .rules import Constant, Variable


class GroundingError(ValueError):
    """Rule set cannot be grounded against the given network."""


@dataclass
class VariableSpace:
    """Index of ground-atom variables.

    Keys are ("pi", p, k) with 0-based node and community indices,
    ("b", k1, k2), or ("latent", predicate, args) where args hold node labels,
    1-based community numbers, and name strings. Once any membership atom is
    interned the full N*K membership block exists; same for the K*K
    interaction block.
    """

    N: int
    K: int
    node_ids: tuple
    keys: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    kinds: list = field(default_factory=list)
    node_deps: list = field(default_factory=list)
    has_pi: bool = False
    has_b: bool = False

    def __len__(self):
        return len(self.keys)

    def _add(self, key, kind, deps):
        self.index[key] = len(self.keys)
        self.keys.append(key)
        self.kinds.append(kind)
        self.node_deps.append(frozenset(deps))

    def _ensure_pi_block(self):
        if not self.has_pi:
            self.has_pi = True
            for p in range(self.N):
                for k in range(self.K):
                    self._add(("pi", p, k), "pi", (p,))

    def _ensure_b_block(self):
        if not self.has_b:
            self.has_b = True
            for k1 in range(self.K):
                for k2 in range(self.K):
                    self._add(("b", k1, k2), "b", ())

    def intern(self, key, deps=frozenset()):
        if key[0] == "pi":
            self._ensure_pi_block()
        elif key[0] == "b":
            self._ensure_b_block()
        elif key not in self.index:
            self._add(key, "latent", deps)
        return self.index[key]

    def pi_id(self, p, k):
        self._ensure_pi_block()
        return self.index[("pi", p, k)]

    def b_id(self, k1, k2):
        self._ensure_b_block()
        return self.index[("b", k1, k2)]

    def latent_keys(self):
        return [k for k, kind in zip(self.keys, self.kinds) if kind == "latent"]

    def atom_label(self, vid) -> str:
        key = self.keys[vid]
        if key[0] == "pi":
            return "pi(%s,%d)" % (self.node_ids[key[1]], key[2] + 1)
        if key[0] == "b":
            return "B(%d,%d)" % (key[1] + 1, key[2] + 1)
        return "%s(%s)" % (key[1], ",".join(str(a) for a in key[2]))


@dataclass(frozen=True)
class GroundPotential:
    rule_id: int
    weight: float
    exponent: int
    constant: float
    terms: tuple  # ((variable id, coefficient), ...)


def potential_value(pot: GroundPotential, x) -> float:
    """(max(l(x), 0))^exponent at assignment x (indexable by variable id)."""
    l = pot.constant
    for vid, coeff in pot.terms:
        l += coeff * x[vid]
    return max(l, 0.0) ** pot.exponent


def touches_b(vs: VariableSpace, pot: GroundPotential) -> bool:
    """True for interaction-prior potentials (the B-side class)."""
    return any(vs.kinds[vid] == "b" for vid, _ in pot.terms)


def potential_nodes(vs: VariableSpace, pot: GroundPotential) -> frozenset:
    """Node indices whose sampled presence a mini-batch needs to own this potential."""
    deps = frozenset()
    for vid, _ in pot.terms:
        deps |= vs.node_deps[vid]
    return deps


def pi_rows_touched(vs, pots):
    return {vs.keys[vid][1] for pot in pots for vid, _ in pot.terms if vs.kinds[vid] == "pi"}


def b_cells_touched(vs, pots):
    return {(vs.keys[vid][1], vs.keys[vid][2])
            for pot in pots for vid, _ in pot.terms if vs.kinds[vid] == "b"}


def _position_domains(lit, decl_kind, net):
    """Domain tag per argument position, None for untyped latent positions."""
    if decl_kind == "pi":
        return ("node", "community")
    if decl_kind == "B":
        return ("community", "community")
    if decl_kind == "latent":
        return (None,) * lit.arity
    # observed predicates: typing follows the data they read
    if lit.arity == 1:
        return ("node",)
    if lit.arity == 2 and lit.predicate in net.relations:
        return ("node", "node")
    if lit.arity == 2:
        return ("node", "feature")
    if lit.arity == 3:
        return ("node", "node", "relation")
    raise GroundingError("cannot type observed predicate %r of arity %d"
                         % (lit.predicate, lit.arity))


def _observed_value(lit, values, net):
    """Value of a fully substituted observed atom, before negation."""
    if lit.arity == 1:
        return net.feature_value(values[0], lit.predicate)
    if lit.arity == 2 and lit.predicate in net.relations:
        return net.link_value(lit.predicate, values[0], values[1])
    if lit.arity == 2:
        return net.feature_value(values[0], values[1])
    return net.link_value(values[2], values[0], values[1])


def _constant_value(term, domain, net, K):
    """Validate and convert a rule constant for one typed position."""
    v = term.value
    if domain == "node":
        if not isinstance(v, str):
            raise GroundingError("node constants must be quoted ids, got %r" % (v,))
        try:
            return net.index_of(v)
        except ValueError:
            raise GroundingError("rule names unknown node %r" % v) from None
    if domain == "community":
        if not isinstance(v, int) or not (1 <= v <= K):
            raise GroundingError("community constant %r outside 1..%d" % (v, K))
        return v - 1
    if domain in ("feature", "relation"):
        return str(v)
    # untyped latent position: keep the token as written
    return v


class _RuleGrounder:
    def __init__(self, rule, rule_id, net, K, vs, kept, cap, decl_kinds):
        self.rule = rule
        self.rule_id = rule_id
        self.net = net
        self.K = K
        self.vs = vs
        self.kept = kept
        self.cap = cap
        self.decl_kinds_map = decl_kinds
        self.literals = list(rule.body) + [rule.head]
        self.domains_by_lit = []
        self.var_domain = {}
        for lit in self.literals:
            doms = _position_domains(lit, self.decl_kind(lit), net)
            self.domains_by_lit.append(doms)
            for term, dom in zip(lit.args, doms):
                if isinstance(term, Variable) and dom is not None:
                    prev = self.var_domain.get(term.name)
                    if prev is not None and prev != dom:
                        raise GroundingError(
                            "variable %r used as both %s and %s" % (term.name, prev, dom))
                    self.var_domain[term.name] = dom
        order = []
        for lit in self.literals:
            for term in lit.args:
                if isinstance(term, Variable) and term.name not in order:
                    order.append(term.name)
        for name in order:
            if name not in self.var_domain:
                raise GroundingError(
                    "cannot infer a domain for variable %r (latent-only use)" % name)
        self.var_order = order
        self.domain_values = {
            "node": list(range(net.n)),
            "community": list(range(K)),
            "feature": net.feature_names(),
            "relation": sorted(net.relations),
        }

    def decl_kind(self, lit):
        return self.decl_kinds_map[lit.predicate]

    def run(self):
        self._descend({}, 0)

    def _descend(self, sub, depth):
        if depth == len(self.var_order):
            self._emit(sub)
            return
        name = self.var_order[depth]
        for value in self.domain_values[self.var_domain[name]]:
            sub[name] = value
            if self._viable(sub):
                self._descend(sub, depth + 1)
        del sub[name]

    def _ground_values(self, lit, doms, sub):
        values = []
        for term, dom in zip(lit.args, doms):
            if isinstance(term, Variable):
                if term.name not in sub:
                    return None
                values.append(sub[term.name])
            else:
                values.append(_constant_value(term, dom, self.net, self.K))
        return values

    def _viable(self, sub):
        """Sound partial-prune: a zero body literal or a satisfied observed head
        forces l <= 0 for every completion."""
        n_lit = len(self.literals)
        for i, (lit, doms) in enumerate(zip(self.literals, self.domains_by_lit)):
            if self.decl_kind(lit) not in ("observed",):
                continue
            values = self._ground_values(lit, doms, sub)
            if values is None:
                continue
            v = _observed_value(lit, values, self.net)
            eff = 1.0 - v if lit.negated else v
            if i < n_lit - 1 and eff == 0.0:
                return False
            if i == n_lit - 1 and eff == 1.0:
                return False
        return True

    def _emit(self, sub):
        n_body = len(self.rule.body)
        constant = -float(n_body - 1)
        atoms = {}  # key -> [coeff, node deps]

        def add_atom(lit, doms, sign):
            # sign +1 for body literals, -1 for the head
            values = self._ground_values(lit, doms, sub)
            kind = self.decl_kind(lit)
            if kind == "observed":
                v = _observed_value(lit, values, self.net)
                eff = 1.0 - v if lit.negated else v
                return sign * eff, None
            if kind == "pi":
                key = ("pi", values[0], values[1])
                deps = frozenset((values[0],))
            elif kind == "B":
                key = ("b", values[0], values[1])
                deps = frozenset()
            else:
                args = []
                deps = set()
                for term, dom, value in zip(lit.args, doms, values):
                    vdom = dom if not isinstance(term, Variable) else self.var_domain[term.name]
                    if vdom == "node":
                        args.append(self.net.node_ids[value])
                        deps.add(value)
                    elif vdom == "community":
                        args.append(value + 1)
                    else:
                        args.append(value)
                key = ("latent", lit.predicate, tuple(args))
                deps = frozenset(deps)
            coeff = -sign if lit.negated else sign
            shift = sign if lit.negated else 0.0
            entry = atoms.setdefault(key, [0.0, deps])
            entry[0] += coeff
            return shift, key

        for lit, doms in zip(self.rule.body, self.domains_by_lit[:-1]):
            shift, _ = add_atom(lit, doms, +1)
            constant += shift
        shift, _ = add_atom(self.rule.head, self.domains_by_lit[-1], -1)
        constant += shift

        terms = [(key, c, deps) for key, (c, deps) in atoms.items() if c != 0.0]
        l_max = constant + sum(c for _, c, _ in terms if c > 0.0)
        if l_max <= 0.0:
            return
        if len(self.kept) >= self.cap:
            raise GroundingError(
                "grounding exceeds the potential cap (%d); rule %d is the offender"
                % (self.cap, self.rule_id))
        ids = tuple((self.vs.intern(key, deps), c) for key, c, deps in terms)
        weight = 1.0 if self.rule.weight is None else self.rule.weight
        self.kept.append(GroundPotential(
            rule_id=self.rule_id, weight=weight, exponent=self.rule.exponent,
            constant=constant, terms=ids))


def ground(ruleset, net, K: int, cap: int = 10_000_000):
    """Ground a RuleSet against a network.

    Returns (VariableSpace, list of GroundPotential). Raises GroundingError on
    untypeable variables, bad constants, or when the kept-potential count
    would exceed cap.
    """
    rules, decls = ruleset
    decl_kinds = {d.name: d.kind for d in decls}
    vs = VariableSpace(N=net.n, K=int(K), node_ids=net.node_ids)
    kept: list[GroundPotential] = []
    for rule_id, rule in enumerate(rules):
        for lit in rule.literals():
            if lit.predicate not in decl_kinds:
                decl_kinds[lit.predicate] = "observed"
        _RuleGrounder(rule, rule_id, net, K, vs, kept, cap, decl_kinds).run()
    return vs, kept


def assignment_from_state(vs: VariableSpace, state):
    """Dense assignment vector over vs from a model state (missing H read 0.5)."""
    import numpy as np

    x = np.empty(len(vs), dtype=float)
    for vid, key in enumerate(vs.keys):
        if key[0] == "pi":
            x[vid] = state.Pi[key[1], key[2]]
        elif key[0] == "b":
            x[vid] = state.B[key[1], key[2]]
        else:
            x[vid] = state.H.get((key[1], key[2]), 0.5)
    return x


def dump_potentials(vs: VariableSpace, pots, fh) -> None:
    """One potential per line: rule<TAB>weight<TAB>exponent<TAB>constant<TAB>terms."""
    for pot in pots:
        terms = ",".join("%s:%.17g" % (vs.atom_label(vid), c) for vid, c in pot.terms)
        fh.write("%d\t%.17g\t%d\t%.17g\t%s\n"
                 % (pot.rule_id, pot.weight, pot.exponent, pot.constant, terms))
