"""Approximate maximum-likelihood learning of rule weights.

Each outer step re-fits the model under the current weights, then compares
every rule's total hinge penalty at the fitted (observed) state against the
penalty at the MAP state of the hinge prior alone, with latent atoms pinned
to their inferred values. The difference approximates the likelihood gradient
for that rule's weight: rules the data satisfies more strongly than the prior's
own optimum gain weight, rules the data violates lose it.
"""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np

from .grounding import (assignment_from_state, b_cells_touched,
                        pi_rows_touched, potential_value)
from .model import _BlockSolve, train_batch
from .rules import RuleSet

CAP_STREAK_LIMIT = 10


class WeightLearnError(ValueError):
    """Weight learning asked of a rule set that cannot support it."""


def reweighted(ruleset: RuleSet, weights) -> RuleSet:
    rules = [dataclasses.replace(r, weight=float(w))
             for r, w in zip(ruleset.rules, weights)]
    return RuleSet(rules=rules, decls=ruleset.decls)


def map_state(state, grounding, config):
    """Minimizer of the weighted hinge penalty over all structured membership
    rows and interaction cells jointly; latent atoms stay at their inferred
    values (treated as observed)."""
    vs, pots = grounding
    rows = pi_rows_touched(vs, pots)
    cells = b_cells_touched(vs, pots)
    out = state.copy()
    if not rows and not cells:
        return out
    solve = _BlockSolve(vs, pots, state.K, rows=rows, cells=cells,
                        rho=config.admm_rho, eps_abs=config.admm_eps_abs,
                        eps_rel=config.admm_eps_rel,
                        max_iters=config.admm_max_iters, latent_vids=[])
    solve.run(out, state.Lambda, assignment_from_state(vs, state))
    return out


def weight_gradient(grounding, state_obs, state_map) -> np.ndarray:
    """Per-rule total penalty at the MAP state minus at the observed state:
    the ascent direction for the approximate log-likelihood."""
    vs, pots = grounding
    n_rules = state_obs.Lambda.size
    x_obs = assignment_from_state(vs, state_obs)
    x_map = assignment_from_state(vs, state_map)
    grad = np.zeros(n_rules)
    for pot in pots:
        grad[pot.rule_id] += potential_value(pot, x_map) - potential_value(pot, x_obs)
    return grad


def learn_weights(net, split, ruleset: RuleSet, K: int, config, callback=None):
    """Projected gradient ascent on learnable rule weights.

    Returns (weights, state, history); history rows are (step, weights copy,
    gradient). Stops early with a warning when some learnable weight sits at
    the cap for CAP_STREAK_LIMIT consecutive steps.
    """
    rules = list(ruleset.rules)
    learnable = np.array([r.learnable for r in rules], dtype=bool)
    if not learnable.any():
        raise WeightLearnError("no learnable rules in the rule set")
    lam = np.array([1.0 if r.weight is None else float(r.weight) for r in rules])
    lr = config.learn_rate
    floor, cap = config.weight_floor, config.weight_cap
    history = []
    state = None
    streak = 0
    for step in range(1, config.weight_iterations + 1):
        state, _, grounding = train_batch(net, split, reweighted(ruleset, lam),
                                          K, config)
        if grounding is None:
            raise WeightLearnError("rule set grounded to nothing")
        grad = weight_gradient(grounding, state, map_state(state, grounding, config))
        lam = np.where(learnable, np.clip(lam + lr * grad, floor, cap), lam)
        history.append((step, lam.copy(), grad))
        if callback is not None:
            callback(step, lam, grad)
        if (learnable & (lam >= cap)).any():
            streak += 1
            if streak >= CAP_STREAK_LIMIT:
                warnings.warn("weights pinned at the cap for %d steps; "
                              "stopping early (divergent learning rate?)"
                              % CAP_STREAK_LIMIT)
                break
        else:
            streak = 0
    if state is None:  # weight_iterations == 0
        state, _, _ = train_batch(net, split, reweighted(ruleset, lam), K, config)
    return lam, state, history
