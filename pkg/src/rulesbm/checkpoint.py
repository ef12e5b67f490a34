"""Plain-text model checkpoints and JSON pair splits.

Floats are written with repr, whose shortest-exact decimals parse back to the
same doubles, so save/load round trips bit for bit. Latent atom arguments are
JSON-encoded to keep int/str types and odd characters unambiguous.
"""

from __future__ import annotations

import json

import numpy as np

from .model import ModelState
from .network import Network, Split

MAGIC = "rulesbm-model v1"


class CheckpointError(ValueError):
    """Malformed or inconsistent checkpoint file."""


def _fmt(x: float) -> str:
    return repr(float(x))


def save_model(state: ModelState, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MAGIC + "\n")
        fh.write("n\t%d\n" % state.n)
        fh.write("k\t%d\n" % state.K)
        fh.write("alpha\t%s\n" % _fmt(state.alpha))
        fh.write("beta1\t%s\n" % _fmt(state.beta1))
        fh.write("beta2\t%s\n" % _fmt(state.beta2))
        for label in state.node_ids:
            fh.write("node\t%s\n" % label)
        for row in state.Pi:
            fh.write("pi\t%s\n" % "\t".join(_fmt(v) for v in row))
        for row in state.B:
            fh.write("b\t%s\n" % "\t".join(_fmt(v) for v in row))
        for (pred, args), v in sorted(state.H.items(),
                                      key=lambda kv: (kv[0][0], [str(a) for a in kv[0][1]])):
            fh.write("h\t%s\t%s\t%s\n" % (pred, json.dumps(list(args)), _fmt(v)))
        for v in state.Lambda:
            fh.write("lambda\t%s\n" % _fmt(v))
        fh.write("end\n")


def load_model(path: str) -> ModelState:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise CheckpointError("%s: not a %r file" % (path, MAGIC))
    fields = {"n": None, "k": None, "alpha": None, "beta1": None, "beta2": None}
    nodes, pi_rows, b_rows, lam = [], [], [], []
    H = {}
    saw_end = False
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        tag = parts[0]
        try:
            if tag == "end":
                saw_end = True
            elif tag in ("n", "k"):
                fields[tag] = int(parts[1])
            elif tag in ("alpha", "beta1", "beta2"):
                fields[tag] = float(parts[1])
            elif tag == "node":
                nodes.append(parts[1])
            elif tag == "pi":
                pi_rows.append([float(v) for v in parts[1:]])
            elif tag == "b":
                b_rows.append([float(v) for v in parts[1:]])
            elif tag == "h":
                H[(parts[1], tuple(json.loads(parts[2])))] = float(parts[3])
            elif tag == "lambda":
                lam.append(float(parts[1]))
            else:
                raise CheckpointError("%s:%d: unknown tag %r" % (path, lineno, tag))
        except (IndexError, ValueError, json.JSONDecodeError) as exc:
            if isinstance(exc, CheckpointError):
                raise
            raise CheckpointError("%s:%d: %s" % (path, lineno, exc)) from None
    if not saw_end:
        raise CheckpointError("%s: truncated (no end line)" % path)
    n, k = fields["n"], fields["k"]
    if n is None or k is None or fields["alpha"] is None:
        raise CheckpointError("%s: missing header fields" % path)
    if len(nodes) != n or len(pi_rows) != n or len(b_rows) != k:
        raise CheckpointError("%s: row counts disagree with header" % path)
    Pi = np.array(pi_rows, dtype=float)
    B = np.array(b_rows, dtype=float)
    if Pi.shape != (n, k) or B.shape != (k, k):
        raise CheckpointError("%s: matrix shapes disagree with header" % path)
    return ModelState(node_ids=tuple(nodes), Pi=Pi, B=B, H=H,
                      alpha=fields["alpha"], beta1=fields["beta1"],
                      beta2=fields["beta2"], Lambda=np.array(lam, dtype=float))


def save_split(split: Split, net: Network, path: str) -> None:
    """Pairs are stored by node label so the file survives reorderings."""
    doc = {"version": 1, "seed": split.seed,
           "train": [[net.node_ids[p], net.node_ids[q]] for p, q in split.sorted_train()],
           "test": [[net.node_ids[p], net.node_ids[q]] for p, q in split.sorted_test()]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_split(path: str, net: Network) -> Split:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError("%s: %s" % (path, exc)) from None
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise CheckpointError("%s: unsupported split file" % path)
    try:
        train = frozenset((net.index_of(a), net.index_of(b)) for a, b in doc["train"])
        test = frozenset((net.index_of(a), net.index_of(b)) for a, b in doc["test"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError("%s: %s" % (path, exc)) from None
    if train & test:
        raise CheckpointError("%s: train and test overlap" % path)
    return Split(train_pairs=train, test_pairs=test, seed=int(doc.get("seed", 0)))
