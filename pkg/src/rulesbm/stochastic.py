"""Stochastic EM on node-induced mini-batches.

Each iteration samples a node subset, restricts the E-step to training pairs
inside it, scales the resulting counts by the inverse coverage 1/g, and blends
them into running sufficient statistics with a Robbins-Monro step size.
Structured rows and cells first re-distribute their scaled mass along the
optimum of a mini-batch ADMM solve; everything a mini-batch cannot see keeps
its previous statistics. The arithmetic deliberately routes through the same
helpers as the batch driver so a full-coverage, unit-step iteration reproduces
one batch EM iteration bit for bit.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .grounding import (assignment_from_state, b_cells_touched, ground,
                        pi_rows_touched, potential_nodes)
from .model import (EPS, Gamma, _b_from_stats, _BlockSolve, _rows_normalized,
                    _smoothed, accumulate_counts, gamma_for_pairs, init_model)


class MiniBatchError(RuntimeError):
    """No usable mini-batch could be drawn."""


@dataclass
class SufficientStats:
    """Running statistics behind the point estimates.

    theta holds per-node membership mass, phi/phi_prime the link and non-link
    interaction masses. t counts applied updates.
    """

    theta: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray
    t: int = 0


@dataclass
class MiniBatch:
    nodes: np.ndarray   # sorted sampled node indices
    pairs: np.ndarray   # (P, 2) training pairs inside the sample
    ys: np.ndarray
    g: float            # fraction of training pairs covered


def init_stats(state) -> SufficientStats:
    # unit-mass start: normalizing reproduces the initial point estimates
    return SufficientStats(theta=state.Pi.copy(), phi=state.B.copy(),
                           phi_prime=1.0 - state.B, t=0)


def derive_state(stats: SufficientStats, state) -> None:
    state.Pi = _rows_normalized(stats.theta)
    state.B = _b_from_stats(stats.phi, stats.phi_prime)


def step_size(t: int, tau0: float, kappa: float) -> float:
    """(tau0 + t)^-kappa for the t-th update, t counted from 1."""
    if t < 1:
        raise ValueError("step index starts at 1")
    return (tau0 + t) ** -kappa


def sample_minibatch(net, split, node_fraction: float, seed: int, t: int) -> MiniBatch:
    """Node-induced batch for iteration t; resamples up to 10 times when the
    induced pair set comes up empty."""
    train = split.sorted_train()
    if not train:
        raise MiniBatchError("empty training pair set")
    n_sample = math.ceil(node_fraction * net.n)
    for attempt in range(10):
        rng = np.random.default_rng([int(seed), int(t), attempt])
        nodes = np.sort(rng.choice(net.n, size=n_sample, replace=False))
        inside = set(int(v) for v in nodes)
        batch = [(p, q) for p, q in train if p in inside and q in inside]
        if batch:
            pairs = np.array(batch, dtype=np.int64)
            rel = net.target_relation
            ys = np.array([net.link_value(rel, p, q) for p, q in batch], dtype=float)
            return MiniBatch(nodes=nodes, pairs=pairs, ys=ys,
                             g=len(batch) / len(train))
    raise MiniBatchError("10 samples of %d nodes induced no training pairs" % n_sample)


def expected_stats(state, batch: MiniBatch):
    """Mini-batch E-step and inverse-coverage-scaled smoothed counts."""
    G = gamma_for_pairs(state.Pi, state.B, batch.pairs, batch.ys)
    gamma = Gamma(pairs=batch.pairs, ys=batch.ys, G=G)
    theta_c, a_c, b_c = accumulate_counts(gamma, state.n, state.K)
    inv_g = 1.0 / batch.g
    s_theta = _smoothed(theta_c, state.alpha - 1.0, inv_g)
    s_a = _smoothed(a_c, state.beta1 - 1.0, inv_g)
    s_b = _smoothed(b_c, state.beta2 - 1.0, inv_g)
    return gamma, s_theta, s_a, s_b


def remass_with_prior(s_theta, s_a, s_b, pi_star, b_star, rows, cells):
    """Re-distribute scaled mass along the structured optimum.

    Rows in `rows` keep their total but take the shape of pi_star; cells in
    `cells` keep a+b but split it by b_star. Everything else passes through
    untouched (same array, not a copy) so unstructured paths stay bit-exact.
    """
    if rows:
        s_theta = s_theta.copy()
        for p in sorted(rows):
            total = s_theta[p].sum()
            if total < EPS:
                warnings.warn("row %d total mass %g floored for re-massing" % (p, total))
                total = EPS
            s_theta[p] = pi_star[p] * total
    if cells:
        s_a = s_a.copy()
        s_b = s_b.copy()
        for (k1, k2) in sorted(cells):
            mass = s_a[k1, k2] + s_b[k1, k2]
            if mass < EPS:
                warnings.warn("cell (%d, %d) mass %g floored for re-massing" % (k1, k2, mass))
                mass = EPS
            s_a[k1, k2] = b_star[k1, k2] * mass
            s_b[k1, k2] = (1.0 - b_star[k1, k2]) * mass
    return s_theta, s_a, s_b


def batch_update(state, batch: MiniBatch, grounding, config):
    """One mini-batch worth of work: scaled stats, structured re-massing, and
    latent updates. Returns (s_theta, s_a, s_b, h_updates); h_updates must be
    merged into the authoritative state by the caller."""
    _, s_theta, s_a, s_b = expected_stats(state, batch)
    h_updates = {}
    if grounding is not None:
        vs, pots, pot_nodes = grounding
        inside = frozenset(int(v) for v in batch.nodes)
        eligible = [pot for pot, nd in zip(pots, pot_nodes) if nd <= inside]
        if eligible:
            K = state.K
            rows = pi_rows_touched(vs, eligible)
            cells = b_cells_touched(vs, eligible)
            latents = sorted({vid for pot in eligible for vid, _ in pot.terms
                              if vs.kinds[vid] == "latent"})
            scratch = state.copy()
            if rows or latents:
                solve = _BlockSolve(vs, eligible, K, rows=rows, rho=config.admm_rho,
                                    eps_abs=config.admm_eps_abs,
                                    eps_rel=config.admm_eps_rel,
                                    max_iters=config.admm_max_iters,
                                    latent_vids=latents)
                solve.run(scratch, state.Lambda, assignment_from_state(vs, scratch),
                          A_theta=np.maximum(s_theta, EPS))
            if cells:
                solve = _BlockSolve(vs, eligible, K, cells=cells, rho=config.admm_rho,
                                    eps_abs=config.admm_eps_abs,
                                    eps_rel=config.admm_eps_rel,
                                    max_iters=config.admm_max_iters,
                                    latent_vids=latents)
                solve.run(scratch, state.Lambda, assignment_from_state(vs, scratch),
                          A_b=np.maximum(s_a, EPS), A_bp=np.maximum(s_b, EPS))
            s_theta, s_a, s_b = remass_with_prior(s_theta, s_a, s_b,
                                                  scratch.Pi, scratch.B, rows, cells)
            for vid in latents:
                key = vs.keys[vid]
                h_updates[(key[1], key[2])] = scratch.H[(key[1], key[2])]
    return s_theta, s_a, s_b, h_updates


def global_update(stats: SufficientStats, nodes, s_theta, s_a, s_b, rho: float) -> None:
    """Blend one batch's statistics in; untouched rows keep stale values."""
    stats.theta[nodes] = np.maximum(
        (1.0 - rho) * stats.theta[nodes] + rho * s_theta[nodes], EPS)
    stats.phi = np.maximum((1.0 - rho) * stats.phi + rho * s_a, EPS)
    stats.phi_prime = np.maximum((1.0 - rho) * stats.phi_prime + rho * s_b, EPS)
    stats.t += 1


def prepare_grounding(net, split, ruleset, K, config):
    """Ground once against the training view; precompute per-potential node sets."""
    if ruleset is None or not ruleset.rules:
        return None
    vs, pots = ground(ruleset, net.with_heldout(split.test_pairs), K,
                      cap=config.grounding_cap)
    return vs, pots, [potential_nodes(vs, pot) for pot in pots]


def train_stochastic(net, split, ruleset, K: int, config, callback=None):
    """Mini-batch EM driver. Returns (state, trace); trace rows are
    (iteration, step size, train log-likelihood, wall seconds)."""
    from .evaluate import log_likelihood

    net = net.with_heldout(split.test_pairs)
    state = init_model(net, split, K, config.alpha, config.seed)
    rules = list(ruleset.rules) if ruleset is not None else []
    state.Lambda = np.array([1.0 if r.weight is None else r.weight for r in rules])
    grounding = prepare_grounding(net, split, ruleset, K, config)
    stats = init_stats(state)
    trace = []
    start = time.monotonic()
    every = max(int(getattr(config, "trace_every", 100)), 1)
    for t in range(1, config.iterations + 1):
        batch = sample_minibatch(net, split, config.node_fraction, config.seed, t)
        s_theta, s_a, s_b, h_updates = batch_update(state, batch, grounding, config)
        rho = step_size(t, config.tau0, config.kappa)
        global_update(stats, batch.nodes, s_theta, s_a, s_b, rho)
        state.H.update(h_updates)
        derive_state(stats, state)
        if t % every == 0 or t == config.iterations:
            ll = log_likelihood(state, net, split.sorted_train())
            trace.append((t, rho, ll, time.monotonic() - start))
            if callback is not None:
                callback(t, rho, state)
    return state, trace
