"""Independent reference implementations the tests compare the library against.

Everything here is written for obviousness, not speed: explicit loops, dense
grids, per-template enumeration. None of it imports library internals beyond
public constructors.
"""

import numpy as np

from rulesbm.admm import ConsensusProblem, project_simplex

LOG_FLOOR = 1e-10


# ---------------------------------------------------------------- ADMM oracle

def batch_objective(problem, P):
    """Vectorized evaluation of problem.objective over rows of P."""
    P = np.asarray(P, dtype=float)
    vals = np.zeros(P.shape[0])
    if problem.n_potentials:
        L = np.tile(problem.pot_constant, (P.shape[0], 1)).astype(float)
        contrib = problem.term_coeff * P[:, problem.term_var]
        L += np.add.reduceat(contrib, problem.term_ptr[:-1], axis=1)
        vals += (problem.pot_weight * np.maximum(L, 0.0) ** problem.pot_exponent).sum(axis=1)
    if problem.log_idx.size:
        vals -= (problem.log_A * np.log(np.maximum(P[:, problem.log_idx], LOG_FLOOR))).sum(axis=1)
    return vals


def grid_minimize(problem, d, simplex):
    """Dense feasible grid plus two zoom passes; returns (argmin, value)."""
    if simplex and d == 2:
        xs = np.linspace(0.0, 1.0, 20001)
        pts = np.stack([xs, 1.0 - xs], axis=1)
    elif simplex and d == 3:
        m = 400
        ii, jj = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
        mask = ii + jj <= m
        a = ii[mask] / m
        b = jj[mask] / m
        pts = np.stack([a, b, 1.0 - a - b], axis=1)
    elif simplex and d == 4:
        m = 60
        axes = np.arange(m + 1)
        ii, jj, kk = np.meshgrid(axes, axes, axes, indexing="ij")
        mask = ii + jj + kk <= m
        a, b, c = ii[mask] / m, jj[mask] / m, kk[mask] / m
        pts = np.stack([a, b, c, 1.0 - a - b - c], axis=1)
    else:
        m = {1: 200001, 2: 2001, 3: 201, 4: 61}[d]
        axes = [np.linspace(0.0, 1.0, m)] * d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    best = pts[np.argmin(batch_objective(problem, pts))]
    for zoom in (0.05, 0.002, 8e-5):
        if simplex:
            # perturb within the sum-to-one plane, clip to the nonnegative part
            steps = np.linspace(-zoom, zoom, 31)
            grids = np.meshgrid(*([steps] * (d - 1)), indexing="ij")
            deltas = np.stack([g.ravel() for g in grids], axis=1)
            cand = np.concatenate(
                [best[:-1] + deltas, best[-1] - deltas.sum(axis=1, keepdims=True)], axis=1)
            cand = cand[(cand >= 0.0).all(axis=1)]
        else:
            axes = [np.clip(np.linspace(b - zoom, b + zoom, 31), 0, 1) for b in best]
            cand = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        if cand.shape[0]:
            best = cand[np.argmin(batch_objective(problem, cand))]
    return best, float(problem.objective(best))


def random_consensus_problem(rng):
    """Random <=4-variable problem mixing hinge exponents, logs, simplex/box."""
    d = int(rng.integers(2, 5))
    simplex = bool(rng.integers(0, 2))
    pots = []
    for _ in range(int(rng.integers(1, 5))):
        k = int(rng.integers(1, d + 1))
        vids = rng.choice(d, size=k, replace=False)
        coeffs = rng.choice([-1.0, 1.0], size=k)
        pots.append((float(rng.uniform(0.2, 3.0)), int(rng.choice([1, 2])),
                     float(rng.uniform(-0.5, 0.5)),
                     list(zip(vids.tolist(), coeffs.tolist()))))
    logs = []
    for v in range(d):
        if simplex or rng.integers(0, 2):
            logs.append((v, float(rng.uniform(0.3, 2.5))))
    init = project_simplex(rng.uniform(0, 1, d)) if simplex else rng.uniform(0, 1, d)
    problem = ConsensusProblem.from_parts(
        init=init, potentials=pots, log_terms=logs,
        simplex_groups=[np.arange(d)] if simplex else [], rho=1.0)
    return problem, d, simplex


def weighted_projection_reference(v, w):
    """Bisection on the water-filling multiplier for min sum w(z-v)^2 on the simplex."""
    v = np.asarray(v, dtype=float)
    b = 0.5 / np.asarray(w, dtype=float)

    def mass(mu):
        return float(np.maximum(v - mu * b, 0.0).sum())

    lo = float((v / b).min() - 1.0)
    hi = float((v / b).max())
    while mass(lo) < 1.0:
        lo -= 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mass(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi) * b, 0.0)


# ----------------------------------------------------- grounding enumeration

def _linear(expr_atoms, const):
    """Canonical (constant, frozenset of (atom label, coeff)) with zeros dropped."""
    items = frozenset((a, c) for a, c in expr_atoms.items() if c != 0.0)
    return const, items


def _hinge_from_vals(body_vals, head_val):
    """body_vals/head_val: (constant, {label: coeff}) pieces of literal values."""
    const = -(len(body_vals) - 1.0)
    atoms = {}
    for c, terms in body_vals:
        const += c
        for label, coeff in terms.items():
            atoms[label] = atoms.get(label, 0.0) + coeff
    hc, hterms = head_val
    const -= hc
    for label, coeff in hterms.items():
        atoms[label] = atoms.get(label, 0.0) - coeff
    return atoms, const


def _negate(val):
    c, terms = val
    return 1.0 - c, {a: -x for a, x in terms.items()}


def _pi(p_label, k):
    return 0.0, {"pi(%s,%d)" % (p_label, k + 1): 1.0}


def _b(k1, k2):
    return 0.0, {"B(%d,%d)" % (k1 + 1, k2 + 1): 1.0}


def _lat(name, *args):
    return 0.0, {"%s(%s)" % (name, ",".join(str(a) for a in args)): 1.0}


def _keep(atoms, const, out, weight, exponent):
    items = {a: c for a, c in atoms.items() if c != 0.0}
    l_max = const + sum(c for c in items.values() if c > 0.0)
    if l_max <= 0.0:
        return
    out.append((weight, exponent, const, frozenset(items.items())))


def enumerate_feature_similarity(net, K, weights=(1.0, 1.0, 1.0)):
    """Naive grounding of the feature-similarity template.

    feature(p,T) & feature(q,T) & link(p,q) -> similarity(p,q)
    similarity(p,q) & pi(p,K) -> pi(q,K)
    similarity(p,q) & !pi(p,K) -> !pi(q,K)
    """
    out = []
    labels = net.node_ids
    for p in range(net.n):
        for q in range(net.n):
            for t in net.feature_names():
                body = [(net.feature_value(p, t), {}),
                        (net.feature_value(q, t), {}),
                        (net.link_value(net.target_relation, p, q), {})]
                atoms, const = _hinge_from_vals(body, _lat("similarity", labels[p], labels[q]))
                _keep(atoms, const, out, weights[0], 1)
    for p in range(net.n):
        for q in range(net.n):
            for k in range(K):
                sim = _lat("similarity", labels[p], labels[q])
                atoms, const = _hinge_from_vals([sim, _pi(labels[p], k)], _pi(labels[q], k))
                _keep(atoms, const, out, weights[1], 1)
                atoms, const = _hinge_from_vals([sim, _negate(_pi(labels[p], k))],
                                                _negate(_pi(labels[q], k)))
                _keep(atoms, const, out, weights[2], 1)
    return out


def enumerate_multi_relational(net, K, weights=(1.0, 1.0)):
    """Naive grounding of the node-proximity template.

    link(p,q,T) -> close(p,q)
    close(p,q) & B(K1,K2) & pi(p,K1) -> pi(q,K2)
    """
    out = []
    labels = net.node_ids
    for p in range(net.n):
        for q in range(net.n):
            for rel in sorted(net.relations):
                body = [(net.link_value(rel, p, q), {})]
                atoms, const = _hinge_from_vals(body, _lat("close", labels[p], labels[q]))
                _keep(atoms, const, out, weights[0], 1)
    for p in range(net.n):
        for q in range(net.n):
            for k1 in range(K):
                for k2 in range(K):
                    body = [_lat("close", labels[p], labels[q]), _b(k1, k2), _pi(labels[p], k1)]
                    atoms, const = _hinge_from_vals(body, _pi(labels[q], k2))
                    _keep(atoms, const, out, weights[1], 1)
    return out


def enumerate_neighborhood_similarity(net, K, weights=(1.0, 1.0, 1.0)):
    """Naive grounding of the neighborhood-similarity template.

    link(p,r) & link(q,r) -> similarity(p,q)
    similarity(p,q) & pi(p,K) -> pi(q,K)
    similarity(p,q) & !pi(p,K) -> !pi(q,K)
    """
    out = []
    labels = net.node_ids
    for p in range(net.n):
        for q in range(net.n):
            for r in range(net.n):
                body = [(net.link_value(net.target_relation, p, r), {}),
                        (net.link_value(net.target_relation, q, r), {})]
                atoms, const = _hinge_from_vals(body, _lat("similarity", labels[p], labels[q]))
                _keep(atoms, const, out, weights[0], 1)
    for p in range(net.n):
        for q in range(net.n):
            for k in range(K):
                sim = _lat("similarity", labels[p], labels[q])
                atoms, const = _hinge_from_vals([sim, _pi(labels[p], k)], _pi(labels[q], k))
                _keep(atoms, const, out, weights[1], 1)
                atoms, const = _hinge_from_vals([sim, _negate(_pi(labels[p], k))],
                                                _negate(_pi(labels[q], k)))
                _keep(atoms, const, out, weights[2], 1)
    return out


def grounded_as_multiset(vs, pots):
    """Kept potentials as comparable (weight, exponent, constant, terms) tuples."""
    out = []
    for pot in pots:
        items = frozenset((vs.atom_label(vid), c) for vid, c in pot.terms)
        out.append((pot.weight, pot.exponent, pot.constant, items))
    return out


def multiset_equal(a, b, tol=1e-12):
    """Order-insensitive potential comparison with float tolerance on constants."""
    if len(a) != len(b):
        return False

    def key(item):
        w, e, c, terms = item
        return (round(w, 9), e, round(c, 9), tuple(sorted((lbl, round(x, 9)) for lbl, x in terms)))

    return sorted(map(key, a)) == sorted(map(key, b))


# ------------------------------------------------------------ plain-EM oracle

def plain_mmsb_em(Pi0, B0, pairs, ys, alpha, beta1, beta2, iters):
    """Reference EM for the unstructured blockmodel, explicit loops only.

    Starts from the given parameters and runs exactly `iters` iterations,
    recording the bound after each M-step with that iteration's posteriors.
    Returns (Pi, B, trace) as plain Python lists.
    """
    import math

    eps = 1e-10
    N = len(Pi0)
    K = len(B0)
    Pi = [[float(v) for v in row] for row in Pi0]
    B = [[float(v) for v in row] for row in B0]
    trace = []
    for _ in range(iters):
        gammas = []
        for (p, q), y in zip(pairs, ys):
            g = [[0.0] * K for _ in range(K)]
            Z = 0.0
            for k1 in range(K):
                for k2 in range(K):
                    w = B[k1][k2] if y == 1.0 else 1.0 - B[k1][k2]
                    v = w * Pi[p][k1] * Pi[q][k2]
                    g[k1][k2] = v
                    Z += v
            for k1 in range(K):
                for k2 in range(K):
                    g[k1][k2] = 1.0 / (K * K) if Z == 0.0 else g[k1][k2] / Z
            gammas.append(g)
        theta = [[0.0] * K for _ in range(N)]
        alink = [[0.0] * K for _ in range(K)]
        bnon = [[0.0] * K for _ in range(K)]
        for (p, q), y, g in zip(pairs, ys, gammas):
            for k1 in range(K):
                for k2 in range(K):
                    theta[p][k1] += g[k1][k2]
                    theta[q][k2] += g[k1][k2]
                    if y == 1.0:
                        alink[k1][k2] += g[k1][k2]
                    else:
                        bnon[k1][k2] += g[k1][k2]
        for p in range(N):
            row = [max(theta[p][k] + alpha - 1.0, eps) for k in range(K)]
            s = sum(row)
            Pi[p] = [v / s for v in row]
        for k1 in range(K):
            for k2 in range(K):
                a = max(alink[k1][k2] + beta1 - 1.0, eps)
                b = max(bnon[k1][k2] + beta2 - 1.0, eps)
                B[k1][k2] = min(max(a / (a + b), eps), 1.0 - eps)
        R = 0.0
        for p in range(N):
            for k in range(K):
                R += (theta[p][k] + alpha - 1.0) * math.log(max(Pi[p][k], eps))
        for k1 in range(K):
            for k2 in range(K):
                R += (alink[k1][k2] + beta1 - 1.0) * math.log(max(B[k1][k2], eps))
                R += (bnon[k1][k2] + beta2 - 1.0) * math.log(max(1.0 - B[k1][k2], eps))
        for g in gammas:
            for k1 in range(K):
                for k2 in range(K):
                    if g[k1][k2] > 0.0:
                        R -= g[k1][k2] * math.log(g[k1][k2])
        trace.append(R)
    return Pi, B, trace


def random_network(rng, n, p_link=0.3, n_features=0, extra_relations=()):
    """Random directed network; features are random binary indicators."""
    from rulesbm.network import Network

    node_ids = tuple("n%d" % i for i in range(n))
    links = {(p, q) for p in range(n) for q in range(n)
             if p != q and rng.random() < p_link}
    if not links:
        links = {(0, 1)}
    relations = {"link": frozenset(links)}
    for name in extra_relations:
        relations[name] = frozenset({(p, q) for p in range(n) for q in range(n)
                                     if p != q and rng.random() < p_link})
    features = {}
    for j in range(n_features):
        for p in range(n):
            if rng.random() < 0.5:
                features[(p, "f%d" % j)] = 1.0
    return Network(node_ids=node_ids, relations=relations, target_relation="link",
                   features=features)
