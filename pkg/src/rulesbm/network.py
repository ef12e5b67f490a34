"""Directed multi-relation networks with [0,1] node features: containers and TSV I/O."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class NetworkFormatError(ValueError):
    """Malformed or inconsistent network input."""


class SplitError(ValueError):
    """A holdout split cannot satisfy its contract."""


@dataclass(frozen=True)
class Network:
    """Immutable directed network over named nodes.

    relations maps a relation name to the frozenset of ordered index pairs
    (p, q), p != q, that carry value 1; absent pairs are 0. features maps
    (node index, feature name) to a value in [0, 1]; absent entries read as 0.
    heldout pairs of the target relation are hidden from training and from
    grounding-time observations of the target relation.
    """

    node_ids: tuple[str, ...]
    relations: dict[str, frozenset[tuple[int, int]]]
    target_relation: str
    features: dict[tuple[int, str], float] = field(default_factory=dict)
    heldout: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        n = len(self.node_ids)
        if len(set(self.node_ids)) != n:
            raise NetworkFormatError("duplicate node ids")
        if self.target_relation not in self.relations:
            raise NetworkFormatError(
                "target relation %r has no adjacency" % self.target_relation)
        for rel, pairs in self.relations.items():
            for p, q in pairs:
                if p == q:
                    raise NetworkFormatError("self-pair (%d, %d) in relation %r" % (p, q, rel))
                if not (0 <= p < n and 0 <= q < n):
                    raise NetworkFormatError("pair (%d, %d) outside node range" % (p, q))
        for (p, name), v in self.features.items():
            if not (0 <= p < n):
                raise NetworkFormatError("feature row for unknown node index %d" % p)
            if not (0.0 <= v <= 1.0):
                raise NetworkFormatError("feature %r of node %d outside [0, 1]" % (name, p))
        for p, q in self.heldout:
            if p == q or not (0 <= p < n and 0 <= q < n):
                raise NetworkFormatError("held-out pair (%d, %d) invalid" % (p, q))

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def index_of(self, label: str) -> int:
        try:
            return self.node_ids.index(label)
        except ValueError:
            raise NetworkFormatError("unknown node id %r" % label) from None

    def ordered_pairs(self):
        """All ordered pairs (p, q), p != q, in canonical sorted order."""
        n = self.n
        return [(p, q) for p in range(n) for q in range(n) if p != q]

    def link_value(self, relation: str, p: int, q: int) -> float:
        """Observed value of relation(p, q); target-relation held-out pairs read as 0."""
        if relation == self.target_relation and (p, q) in self.heldout:
            return 0.0
        return 1.0 if (p, q) in self.relations[relation] else 0.0

    def feature_value(self, p: int, name: str) -> float:
        return self.features.get((p, name), 0.0)

    def links(self, relation: str | None = None):
        """Sorted list of value-1 pairs of a relation (default: target)."""
        rel = self.target_relation if relation is None else relation
        return sorted(self.relations[rel])

    def feature_names(self):
        return sorted({name for (_, name) in self.features})

    def with_heldout(self, pairs) -> "Network":
        return replace(self, heldout=self.heldout | frozenset(pairs))


@dataclass(frozen=True)
class Split:
    """Partition of all ordered pairs into train and test, tagged with its seed."""

    train_pairs: frozenset[tuple[int, int]]
    test_pairs: frozenset[tuple[int, int]]
    seed: int

    def sorted_train(self):
        return sorted(self.train_pairs)

    def sorted_test(self):
        return sorted(self.test_pairs)


def _read_feature_rows(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split("\t")
            if len(parts) != 3:
                raise NetworkFormatError(
                    "%s:%d: expected node<TAB>feature<TAB>value" % (path, lineno))
            node, name, raw = parts
            try:
                value = float(raw)
            except ValueError:
                raise NetworkFormatError(
                    "%s:%d: feature value %r is not a number" % (path, lineno, raw)) from None
            if not (0.0 <= value <= 1.0):
                raise NetworkFormatError(
                    "%s:%d: feature value %g outside [0, 1]" % (path, lineno, value))
            rows.append((node, name, value))
    return rows


def load_network(edges_path, features_path=None, target_relation="link") -> Network:
    """Load a Network from edge and optional feature TSV files.

    Edge lines are `src<TAB>dst<TAB>relation<TAB>value` with value in {0, 1};
    feature lines are `node<TAB>feature<TAB>value` with value in [0, 1]. Lines
    starting with `#` and blank lines are skipped. Nodes are ordered by first
    appearance, features file first, so that feature rows (including
    zero-valued ones, which introduce a node but store no entry) can pin an
    explicit node order. Value-0 edge lines record an explicit non-edge and
    conflict with a value-1 line for the same triple. A target relation absent
    from a file that contains edge data is an error; an empty edge file yields
    an empty target adjacency.
    """
    order: list[str] = []
    seen: dict[str, int] = {}

    def intern(label):
        if label not in seen:
            seen[label] = len(order)
            order.append(label)
        return seen[label]

    feature_rows = _read_feature_rows(features_path) if features_path else []
    features: dict[tuple[int, str], float] = {}
    for node, name, value in feature_rows:
        idx = intern(node)
        if value > 0.0:
            features[(idx, name)] = value

    relations: dict[str, set[tuple[int, int]]] = {}
    edge_values: dict[tuple[str, int, int], int] = {}
    saw_edge_line = False
    with open(edges_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split("\t")
            if len(parts) != 4:
                raise NetworkFormatError(
                    "%s:%d: expected src<TAB>dst<TAB>relation<TAB>value" % (edges_path, lineno))
            src, dst, rel, raw = parts
            if raw not in ("0", "1"):
                raise NetworkFormatError(
                    "%s:%d: edge value must be 0 or 1, got %r" % (edges_path, lineno, raw))
            if src == dst:
                raise NetworkFormatError(
                    "%s:%d: self-pair %r -> %r" % (edges_path, lineno, src, dst))
            saw_edge_line = True
            value = int(raw)
            p, q = intern(src), intern(dst)
            key = (rel, p, q)
            if key in edge_values and edge_values[key] != value:
                raise NetworkFormatError(
                    "%s:%d: conflicting duplicate for %s(%s, %s)" % (edges_path, lineno, rel, src, dst))
            edge_values[key] = value
            relations.setdefault(rel, set())
            if value == 1:
                relations[rel].add((p, q))

    if target_relation not in relations:
        if saw_edge_line:
            raise NetworkFormatError(
                "target relation %r missing from %s" % (target_relation, edges_path))
        relations[target_relation] = set()

    return Network(
        node_ids=tuple(order),
        relations={rel: frozenset(pairs) for rel, pairs in relations.items()},
        target_relation=target_relation,
        features=features,
    )


def save_network(net: Network, edges_path, features_path=None) -> None:
    """Write a Network back to TSV files.

    With a features path the node order is pinned exactly (every node gets at
    least one feature row, using a zero-valued `_` sentinel when it has no
    features), so load_network(save_network(net)) reproduces net including
    node order. Without one, only edge-covered nodes survive.
    """
    if features_path is not None:
        with open(features_path, "w", encoding="utf-8") as fh:
            for p, label in enumerate(net.node_ids):
                rows = sorted((name, v) for (i, name), v in net.features.items() if i == p)
                if not rows:
                    fh.write("%s\t_\t0\n" % label)
                for name, v in rows:
                    fh.write("%s\t%s\t%.17g\n" % (label, name, v))
    with open(edges_path, "w", encoding="utf-8") as fh:
        for rel in sorted(net.relations):
            for p, q in sorted(net.relations[rel]):
                fh.write("%s\t%s\t%s\t1\n" % (net.node_ids[p], net.node_ids[q], rel))


def holdout_split(net: Network, test_fraction: float, seed: int) -> Split:
    """Stratified pair-level split of the target relation.

    floor(test_fraction * links) link pairs and floor(test_fraction * nonlinks)
    non-link pairs go to test; everything else trains. Deterministic in seed.
    """
    if not (0.0 <= test_fraction < 1.0):
        raise SplitError("test fraction %g outside [0, 1)" % test_fraction)
    if net.n < 2:
        raise SplitError("need at least 2 nodes to split")
    links = net.links()
    pairs = net.ordered_pairs()
    nonlinks = sorted(set(pairs) - set(links))
    if not links:
        raise SplitError("no training links: target relation has no edges")
    rng = np.random.default_rng([int(seed), len(pairs)])
    n_test_links = int(np.floor(test_fraction * len(links)))
    n_test_non = int(np.floor(test_fraction * len(nonlinks)))
    test = set()
    if n_test_links:
        idx = rng.choice(len(links), size=n_test_links, replace=False)
        test.update(links[i] for i in idx)
    if n_test_non:
        idx = rng.choice(len(nonlinks), size=n_test_non, replace=False)
        test.update(nonlinks[i] for i in idx)
    train = set(pairs) - test
    if not (set(links) - test):
        raise SplitError("test fraction %g leaves zero training links" % test_fraction)
    return Split(train_pairs=frozenset(train), test_pairs=frozenset(test), seed=int(seed))


def link_rate(net: Network, split: Split) -> float:
    """Fraction of training pairs of the target relation that carry a link."""
    train = split.train_pairs - net.heldout
    if not train:
        raise SplitError("no training pairs to measure a link rate on")
    links = net.relations[net.target_relation]
    return sum(1 for pq in train if pq in links) / len(train)
