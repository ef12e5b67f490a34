"""Mixed-membership blockmodel EM with hinge-potential structured priors.

The batch driver alternates the pair-posterior E-step with two M-step phases:
a closed-form update for membership rows and interaction cells that appear in
no ground potential, and consensus-ADMM solves for the structured block
(membership rows plus latent atoms, then interaction cells plus latent atoms,
each with the complementary block frozen). All count smoothing goes through
_smoothed so the mini-batch path can reproduce batch arithmetic bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .admm import ConsensusProblem, run_admm
from .grounding import (assignment_from_state, b_cells_touched, ground,
                        pi_rows_touched, potential_value)
from .network import Network, link_rate

EPS = 1e-10


@dataclass
class ModelState:
    """Point estimate of all model parameters.

    Pi rows live on the simplex, B entries in (0, 1), H maps latent atom keys
    (predicate, ground-argument tuple) to values in [0, 1]. Lambda holds the
    effective per-rule weights in rule order.
    """

    node_ids: tuple
    Pi: np.ndarray
    B: np.ndarray
    H: dict
    alpha: float
    beta1: float
    beta2: float
    Lambda: np.ndarray

    @property
    def n(self) -> int:
        return self.Pi.shape[0]

    @property
    def K(self) -> int:
        return self.Pi.shape[1]

    def copy(self) -> "ModelState":
        return ModelState(node_ids=self.node_ids, Pi=self.Pi.copy(), B=self.B.copy(),
                          H=dict(self.H), alpha=self.alpha, beta1=self.beta1,
                          beta2=self.beta2, Lambda=self.Lambda.copy())


@dataclass
class Gamma:
    """Pair posteriors: G[i] is the K x K posterior over the two indicators."""

    pairs: np.ndarray  # (P, 2) node indices
    ys: np.ndarray     # (P,) observed values
    G: np.ndarray      # (P, K, K)


def _smoothed(counts, pm1, inv_g):
    # counts * (1/g) + (prior - 1); inv_g = 1.0 reproduces the batch numerator
    return counts * inv_g + pm1


def _rows_normalized(theta):
    t = np.maximum(theta, EPS)
    return t / t.sum(axis=1, keepdims=True)


def _b_from_stats(phi, phi_prime):
    a = np.maximum(phi, EPS)
    b = np.maximum(phi_prime, EPS)
    return np.clip(a / (a + b), EPS, 1.0 - EPS)


def init_model(net: Network, split, K: int, alpha: float, seed: int) -> ModelState:
    """Random start: Dirichlet(alpha) rows, uniform B, Beta prior from link rate."""
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng([int(seed), 1])
    Pi = rng.dirichlet(np.full(K, float(alpha)), size=net.n)
    B = rng.uniform(0.05, 0.95, size=(K, K))
    rate = min(max(link_rate(net, split), 1e-3), 1.0 - 1e-3)
    return ModelState(node_ids=net.node_ids, Pi=Pi, B=B, H={}, alpha=float(alpha),
                      beta1=2.0 * rate, beta2=2.0 * (1.0 - rate),
                      Lambda=np.zeros(0))


def pairs_with_values(net: Network, pair_list):
    pairs = np.array(pair_list, dtype=np.int64).reshape(-1, 2)
    rel = net.target_relation
    ys = np.array([net.link_value(rel, int(p), int(q)) for p, q in pairs], dtype=float)
    return pairs, ys


def gamma_for_pairs(Pi, B, pairs, ys) -> np.ndarray:
    """Normalized pair posteriors; all-zero rows fall back to uniform."""
    K = B.shape[0]
    if pairs.shape[0] == 0:
        return np.zeros((0, K, K))
    un = (np.where(ys[:, None, None] == 1.0, B[None], 1.0 - B[None])
          * Pi[pairs[:, 0]][:, :, None] * Pi[pairs[:, 1]][:, None, :])
    Z = un.sum(axis=(1, 2), keepdims=True)
    dead = Z[:, 0, 0] == 0.0
    if dead.any():
        warnings.warn("%d pair posteriors vanished; using uniform" % int(dead.sum()))
        un[dead] = 1.0
        Z = un.sum(axis=(1, 2), keepdims=True)
    return un / Z


def e_step(state: ModelState, net: Network, split) -> Gamma:
    pairs, ys = pairs_with_values(net, split.sorted_train())
    return Gamma(pairs=pairs, ys=ys, G=gamma_for_pairs(state.Pi, state.B, pairs, ys))


def accumulate_counts(gamma: Gamma, N: int, K: int):
    """Raw E-step counts: membership mass per (node, community) and the two
    interaction-cell masses split by observed value."""
    theta = np.zeros((N, K))
    if gamma.G.size:
        np.add.at(theta, gamma.pairs[:, 0], gamma.G.sum(axis=2))
        np.add.at(theta, gamma.pairs[:, 1], gamma.G.sum(axis=1))
        a = np.einsum("pij,p->ij", gamma.G, gamma.ys)
        b = np.einsum("pij,p->ij", gamma.G, 1.0 - gamma.ys)
    else:
        a = np.zeros((K, K))
        b = np.zeros((K, K))
    return theta, a, b


def m_step_closed_form(gamma: Gamma, state: ModelState, net=None, split=None):
    """Candidate (Pi, B) ignoring structured priors; callers mask structured
    rows/cells. Entries going negative under alpha < 1 smoothing clamp at EPS."""
    theta_c, a_c, b_c = accumulate_counts(gamma, state.n, state.K)
    s_theta = _smoothed(theta_c, state.alpha - 1.0, 1.0)
    s_a = _smoothed(a_c, state.beta1 - 1.0, 1.0)
    s_b = _smoothed(b_c, state.beta2 - 1.0, 1.0)
    if (s_theta < 0.0).any() or (s_a < 0.0).any() or (s_b < 0.0).any():
        warnings.warn("negative smoothed counts clamped at %g" % EPS)
    return _rows_normalized(s_theta), _b_from_stats(s_a, s_b)


def lower_bound(state: ModelState, gamma: Gamma, net=None, split=None,
                grounding=None) -> float:
    """Evidence lower bound (additive constants dropped).

    grounding is the (variable space, potentials) pair; potentials enter as
    -weight * hinge value at the current assignment, with weights taken from
    state.Lambda by rule id.
    """
    theta_c, a_c, b_c = accumulate_counts(gamma, state.n, state.K)
    R = 0.0
    if grounding is not None:
        vs, pots = grounding
        x = assignment_from_state(vs, state)
        lam = state.Lambda
        for pot in pots:
            w = lam[pot.rule_id] if pot.rule_id < lam.size else pot.weight
            if w != 0.0:
                R -= w * potential_value(pot, x)
    R += float(np.sum(_smoothed(theta_c, state.alpha - 1.0, 1.0)
                      * np.log(np.maximum(state.Pi, EPS))))
    R += float(np.sum(_smoothed(a_c, state.beta1 - 1.0, 1.0)
                      * np.log(np.maximum(state.B, EPS))))
    R += float(np.sum(_smoothed(b_c, state.beta2 - 1.0, 1.0)
                      * np.log(np.maximum(1.0 - state.B, EPS))))
    G = gamma.G
    if G.size:
        R -= float(np.sum(np.where(G > 0.0, G * np.log(np.where(G > 0.0, G, 1.0)), 0.0)))
    return R


def pair_likelihood(state: ModelState, p: int, q: int) -> float:
    """Marginal link probability pi_p^T B pi_q."""
    return float(state.Pi[p] @ state.B @ state.Pi[q])


def link_probabilities(state: ModelState, pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return np.einsum("pk,kl,pl->p", state.Pi[pairs[:, 0]], state.B, state.Pi[pairs[:, 1]])


def generate_network(state: ModelState, seed: int,
                     target_relation: str = "link") -> Network:
    """Sample indicators then links for every ordered pair."""
    rng = np.random.default_rng([int(seed), 2])
    N, K = state.n, state.K
    links = set()
    for p in range(N):
        for q in range(N):
            if p == q:
                continue
            z1 = rng.choice(K, p=state.Pi[p])
            z2 = rng.choice(K, p=state.Pi[q])
            if rng.random() < state.B[z1, z2]:
                links.add((p, q))
    return Network(node_ids=state.node_ids,
                   relations={target_relation: frozenset(links)},
                   target_relation=target_relation)


# ------------------------------------------------- structured M-step assembly

def _hinge_parts(pots, lam, local, x):
    """Potentials over a free block: frozen atoms fold into the constant,
    potentials with no free atom drop (they are constants for this solve)."""
    out = []
    for pot in pots:
        w = lam[pot.rule_id] if pot.rule_id < lam.size else pot.weight
        if w == 0.0:
            continue
        const = pot.constant
        terms = []
        for vid, coeff in pot.terms:
            li = local.get(vid)
            if li is None:
                const += coeff * x[vid]
            else:
                terms.append((li, coeff))
        if terms:
            out.append((w, pot.exponent, const, terms))
    return out


class _BlockSolve:
    """One structured sub-solve (membership block or interaction block).

    The variable layout is fixed at construction so duals can warm-start
    across EM iterations; only log coefficients and folded constants change.
    """

    def __init__(self, vs, pots, K, rows=(), cells=(), rho=1.0,
                 eps_abs=1e-5, eps_rel=1e-4, max_iters=1000, latent_vids=None):
        self.vs = vs
        self.pots = pots
        self.K = K
        self.rows = sorted(rows)
        self.cells = sorted(cells)
        self.rho = rho
        self.eps_abs = eps_abs
        self.eps_rel = eps_rel
        self.max_iters = max_iters
        self.local = {}
        self.b_pair = {}
        n = 0
        for p in self.rows:
            for k in range(K):
                self.local[vs.pi_id(p, k)] = n
                n += 1
        for (k1, k2) in self.cells:
            self.local[vs.b_id(k1, k2)] = n
            self.b_pair[(k1, k2)] = n + 1
            n += 2
        if latent_vids is None:
            latent_vids = [i for i, kind in enumerate(vs.kinds) if kind == "latent"]
        self.latent_vids = list(latent_vids)
        for vid in self.latent_vids:
            self.local[vid] = n
            n += 1
        self.n_vars = n
        groups = [np.array([self.local[vs.pi_id(p, k)] for k in range(K)], dtype=np.int64)
                  for p in self.rows]
        groups += [np.array([self.local[vs.b_id(k1, k2)], self.b_pair[(k1, k2)]],
                            dtype=np.int64) for (k1, k2) in self.cells]
        self.groups = groups
        self.warm = None

    @property
    def active(self):
        return self.n_vars > 0

    def run(self, state, lam, x, A_theta=None, A_b=None, A_bp=None):
        """Solve the block and write Pi rows / B cells / H atoms back into state."""
        vs, K = self.vs, self.K
        init = np.empty(self.n_vars)
        for vid, li in self.local.items():
            init[li] = x[vid]
        for (k1, k2), li in self.b_pair.items():
            init[li] = 1.0 - x[vs.b_id(k1, k2)]
        log_terms = []
        if A_theta is not None:
            for p in self.rows:
                for k in range(K):
                    log_terms.append((self.local[vs.pi_id(p, k)],
                                      float(max(A_theta[p, k], EPS))))
        if A_b is not None:
            for (k1, k2) in self.cells:
                log_terms.append((self.local[vs.b_id(k1, k2)],
                                  float(max(A_b[k1, k2], EPS))))
                log_terms.append((self.b_pair[(k1, k2)], float(max(A_bp[k1, k2], EPS))))
        problem = ConsensusProblem.from_parts(
            init=init, potentials=_hinge_parts(self.pots, lam, self.local, x),
            log_terms=log_terms, simplex_groups=self.groups, rho=self.rho)
        res = run_admm(problem, max_iters=self.max_iters, eps_abs=self.eps_abs,
                       eps_rel=self.eps_rel, warm=self.warm)
        self.warm = res
        v = res.values
        for p in self.rows:
            state.Pi[p] = [v[self.local[vs.pi_id(p, k)]] for k in range(K)]
        for (k1, k2) in self.cells:
            state.B[k1, k2] = min(max(v[self.local[vs.b_id(k1, k2)]], EPS), 1.0 - EPS)
        for vid in self.latent_vids:
            key = vs.keys[vid]
            state.H[(key[1], key[2])] = float(min(max(v[self.local[vid]], 0.0), 1.0))
        return res


def train_batch(net: Network, split, ruleset, K: int, config, callback=None):
    """Batch EM. Returns (state, R trace, grounding).

    Held-out target pairs are masked before grounding. Convergence is on the
    relative change of the bound; non-finite R aborts. max_iters = 0 returns
    the initial state with an empty trace.
    """
    net = net.with_heldout(split.test_pairs)
    state = init_model(net, split, K, config.alpha, config.seed)
    rules = list(ruleset.rules) if ruleset is not None else []
    state.Lambda = np.array([1.0 if r.weight is None else r.weight for r in rules])
    if rules:
        vs, pots = ground(ruleset, net, K, cap=config.grounding_cap)
        grounding = (vs, pots)
        rows = pi_rows_touched(vs, pots)
        cells = b_cells_touched(vs, pots)
        pi_solve = _BlockSolve(vs, pots, K, rows=rows, rho=config.admm_rho,
                               eps_abs=config.admm_eps_abs, eps_rel=config.admm_eps_rel,
                               max_iters=config.admm_max_iters)
        b_solve = _BlockSolve(vs, pots, K, cells=cells, rho=config.admm_rho,
                              eps_abs=config.admm_eps_abs, eps_rel=config.admm_eps_rel,
                              max_iters=config.admm_max_iters) if cells else None
    else:
        grounding = None
        rows, cells = set(), set()
        pi_solve = b_solve = None

    row_mask = np.zeros(state.n, dtype=bool)
    for p in rows:
        row_mask[p] = True
    cell_mask = np.zeros((K, K), dtype=bool)
    for (k1, k2) in cells:
        cell_mask[k1, k2] = True

    trace = []
    prev = None
    for t in range(1, config.max_iters + 1):
        gamma = e_step(state, net, split)
        theta_c, a_c, b_c = accumulate_counts(gamma, state.n, K)
        s_theta = _smoothed(theta_c, state.alpha - 1.0, 1.0)
        s_a = _smoothed(a_c, state.beta1 - 1.0, 1.0)
        s_b = _smoothed(b_c, state.beta2 - 1.0, 1.0)
        if (s_theta < 0.0).any() or (s_a < 0.0).any() or (s_b < 0.0).any():
            warnings.warn("negative smoothed counts clamped at %g" % EPS)
        Pi_cand = _rows_normalized(s_theta)
        B_cand = _b_from_stats(s_a, s_b)
        state.Pi[~row_mask] = Pi_cand[~row_mask]
        state.B[~cell_mask] = B_cand[~cell_mask]
        if pi_solve is not None and pi_solve.active:
            x = assignment_from_state(vs, state)
            pi_solve.run(state, state.Lambda, x, A_theta=np.maximum(s_theta, EPS))
        if b_solve is not None and b_solve.active:
            x = assignment_from_state(vs, state)
            b_solve.run(state, state.Lambda, x,
                        A_b=np.maximum(s_a, EPS), A_bp=np.maximum(s_b, EPS))
        R = lower_bound(state, gamma, net, split, grounding)
        if not np.isfinite(R):
            raise RuntimeError("bound became non-finite at iteration %d "
                               "(B range [%g, %g])" % (t, state.B.min(), state.B.max()))
        trace.append(R)
        if callback is not None:
            callback(t, R, state)
        if prev is not None and abs(R - prev) / max(abs(prev), 1e-12) < config.tol:
            break
        prev = R
    return state, trace, grounding
