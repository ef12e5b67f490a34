"""Consensus ADMM over [0,1] boxes and probability-simplex blocks.

Objectives are sums of weighted hinge potentials lambda * (max(l(x), 0))^e,
e in {1, 2} with l linear, and negative-log terms -A log x_i with A >= 0.
Every term owns local copies of its variables; the consensus step averages the
copies and projects onto the feasible set; scaled duals tie copies together.
All subproblem solves are exact closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_FLOOR = 1e-10


def project_simplex(v):
    """Euclidean projection of a vector onto the probability simplex."""
    return project_rows_simplex(np.asarray(v, dtype=float)[None, :])[0]


def project_rows_simplex(V):
    """Row-wise simplex projection via the sort-and-threshold construction."""
    V = np.asarray(V, dtype=float)
    n = V.shape[1]
    U = np.sort(V, axis=1)[:, ::-1]
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, n + 1, dtype=float)
    cond = U - css / ind > 0.0
    last = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(V.shape[0]), last] / (last + 1.0)
    return np.maximum(V - tau[:, None], 0.0)


def project_rows_simplex_weighted(V, W):
    """Row-wise minimizers of sum_i w_i (z_i - v_i)^2 over the simplex.

    The consensus step needs this because a variable averaged over c copies
    carries prox weight c; plain Euclidean projection would bias rows whose
    entries appear in different numbers of subproblems. Support search runs on
    breakpoints of z_i(mu) = max(v_i - mu / (2 w_i), 0).
    """
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    rows, n = V.shape
    B = 0.5 / W
    R = V / B  # breakpoint of each coordinate
    order = np.argsort(R, axis=1)[:, ::-1]
    take = np.arange(rows)[:, None]
    v_sorted = V[take, order]
    b_sorted = B[take, order]
    r_sorted = R[take, order]
    mu_cand = (np.cumsum(v_sorted, axis=1) - 1.0) / np.cumsum(b_sorted, axis=1)
    cond = mu_cand < r_sorted  # support of size j is consistent iff mu_j below j-th breakpoint
    last = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    mu = mu_cand[np.arange(rows), last]
    return np.maximum(V - mu[:, None] * B, 0.0)


def solve_log_subproblem(A: float, eta: float, C: float, rho: float) -> float:
    """argmin over c > 0 of -A log c + eta (c - C) + (rho/2)(c - C)^2.

    Stationarity multiplied through by c gives rho c^2 + c (eta - rho C) - A = 0;
    the positive root is returned, using the conjugate form when eta - rho C > 0
    so no cancellation occurs. A = 0 degrades to max(C - eta / rho, 0).
    """
    if A < 0.0:
        raise ValueError("log coefficient must be nonnegative, got %g" % A)
    b = eta - rho * C
    root = np.sqrt(b * b + 4.0 * rho * A)
    if b > 0.0:
        denom = b + root
        return 0.0 if denom == 0.0 else 2.0 * A / denom
    return (root - b) / (2.0 * rho)


def solve_hinge_subproblem(pot, consensus, duals, rho: float, weight=None):
    """Exact minimizer of lambda (max(l(c), 0))^e + sum eta (c - C) + (rho/2)||c - C||^2.

    consensus and duals align with pot.terms; returns the new local copies.
    Three cases: hinge inactive at the prox point, active interior, or pinned
    to the boundary l = 0 (exponent 1 only; the squared hinge is smooth).
    """
    coeffs = np.array([c for _, c in pot.terms], dtype=float)
    lam = float(pot.weight if weight is None else weight)
    c0 = np.asarray(consensus, dtype=float) - np.asarray(duals, dtype=float) / rho
    l0 = pot.constant + coeffs @ c0
    if l0 <= 0.0:
        return c0
    norm2 = coeffs @ coeffs
    if pot.exponent == 1:
        c1 = c0 - (lam / rho) * coeffs
        if pot.constant + coeffs @ c1 >= 0.0:
            return c1
        return c0 - (l0 / norm2) * coeffs
    t = 2.0 * lam * l0 / (rho + 2.0 * lam * norm2)
    return c0 - t * coeffs


@dataclass
class ConsensusProblem:
    """Flat description of one consensus optimization.

    Hinge potentials live in CSR form (term_ptr into term_var/term_coeff);
    log terms attach one A to one variable. simplex_groups lists variable-id
    arrays that must each sum to one; all other variables clip to [0, 1].
    """

    n_vars: int
    init: np.ndarray
    pot_weight: np.ndarray
    pot_exponent: np.ndarray
    pot_constant: np.ndarray
    term_ptr: np.ndarray
    term_var: np.ndarray
    term_coeff: np.ndarray
    log_idx: np.ndarray
    log_A: np.ndarray
    simplex_groups: list = field(default_factory=list)
    rho: float = 1.0

    @classmethod
    def from_parts(cls, init, potentials, log_terms=(), simplex_groups=(), rho=1.0):
        """potentials: iterable of (weight, exponent, constant, [(var, coeff), ...])."""
        init = np.asarray(init, dtype=float)
        weights, exps, consts, ptr, tv, tc = [], [], [], [0], [], []
        for w, e, const, terms in potentials:
            if not terms:
                continue  # fully folded potentials are constants
            weights.append(w)
            exps.append(e)
            consts.append(const)
            for vid, coeff in terms:
                tv.append(vid)
                tc.append(coeff)
            ptr.append(len(tv))
        log_idx = np.array([i for i, _ in log_terms], dtype=np.int64)
        log_A = np.array([a for _, a in log_terms], dtype=float)
        if np.any(log_A < 0.0):
            raise ValueError("log coefficients must be nonnegative")
        return cls(
            n_vars=init.size, init=init,
            pot_weight=np.asarray(weights, dtype=float),
            pot_exponent=np.asarray(exps, dtype=np.int64),
            pot_constant=np.asarray(consts, dtype=float),
            term_ptr=np.asarray(ptr, dtype=np.int64),
            term_var=np.asarray(tv, dtype=np.int64),
            term_coeff=np.asarray(tc, dtype=float),
            log_idx=log_idx, log_A=log_A,
            simplex_groups=[np.asarray(g, dtype=np.int64) for g in simplex_groups],
            rho=float(rho))

    @property
    def n_potentials(self):
        return self.pot_weight.size

    def objective(self, x) -> float:
        """True objective at a full assignment (no dual or prox terms)."""
        x = np.asarray(x, dtype=float)
        obj = 0.0
        if self.n_potentials:
            l = self.pot_constant + np.add.reduceat(
                self.term_coeff * x[self.term_var], self.term_ptr[:-1])
            obj += float(np.sum(self.pot_weight * np.maximum(l, 0.0) ** self.pot_exponent))
        if self.log_idx.size:
            obj -= float(np.sum(self.log_A * np.log(np.maximum(x[self.log_idx], LOG_FLOOR))))
        return obj


@dataclass
class ADMMResult:
    values: np.ndarray
    converged: bool
    iterations: int
    objective: float
    primal_residual: float
    dual_residual: float
    duals_hinge: np.ndarray
    duals_log: np.ndarray
    duals_anchor: np.ndarray


def _segment_sums(values, seg_ptr, n_seg):
    if n_seg == 0:
        return np.zeros(0)
    return np.add.reduceat(values, seg_ptr[:-1])


def run_admm(problem: ConsensusProblem, max_iters: int = 1000,
             eps_abs: float = 1e-5, eps_rel: float = 1e-4,
             warm: ADMMResult | None = None) -> ADMMResult:
    """Run consensus ADMM; returns the best feasible iterate seen.

    The initial point counts as an iterate, so the returned objective never
    exceeds the objective at problem.init (descent sanity on these convex
    problems). converged reports whether both residual norms fell below their
    tolerances within max_iters sweeps.
    """
    n = problem.n_vars
    rho = problem.rho
    tv, tc, ptr = problem.term_var, problem.term_coeff, problem.term_ptr
    n_pots = problem.n_potentials
    pot_sizes = np.diff(ptr)
    pot_of_term = np.repeat(np.arange(n_pots), pot_sizes)
    norm2 = np.bincount(pot_of_term, weights=tc * tc, minlength=n_pots) if n_pots else np.zeros(0)
    lam = problem.pot_weight
    exp2 = problem.pot_exponent == 2

    counts = (np.bincount(tv, minlength=n) + np.bincount(problem.log_idx, minlength=n)).astype(float)
    anchor_idx = np.flatnonzero(counts == 0)
    counts[anchor_idx] = 1.0

    grouped = np.zeros(n, dtype=bool)
    groups_by_size: dict[int, list] = {}
    for g in problem.simplex_groups:
        grouped[g] = True
        groups_by_size.setdefault(g.size, []).append(g)
    group_mats = [np.stack(gs) for gs in groups_by_size.values()]
    group_wts = [counts[mat] for mat in group_mats]  # copy counts weight the prox
    free = ~grouped

    C = np.clip(np.asarray(problem.init, dtype=float).copy(), 0.0, 1.0)
    if warm is not None:
        eta_h = warm.duals_hinge.copy()
        eta_log = warm.duals_log.copy()
        eta_a = warm.duals_anchor.copy()
    else:
        eta_h = np.zeros(tv.size)
        eta_log = np.zeros(problem.log_idx.size)
        eta_a = np.zeros(anchor_idx.size)

    n_locals = tv.size + problem.log_idx.size + anchor_idx.size
    best_obj = problem.objective(C)
    best_C = C.copy()
    if n_locals == 0 or max_iters == 0:
        return ADMMResult(best_C, n_locals == 0, 0, best_obj, 0.0, 0.0, eta_h, eta_log, eta_a)

    converged = False
    it = 0
    primal = dual = np.inf
    sqrt_n = np.sqrt(n_locals)
    for it in range(1, max_iters + 1):
        # local solves against the current consensus
        c0 = C[tv] - eta_h / rho
        if n_pots:
            l0 = problem.pot_constant + np.bincount(pot_of_term, weights=tc * c0, minlength=n_pots)
            mult = np.zeros(n_pots)
            active = l0 > 0.0
            a1 = active & ~exp2
            a2 = active & exp2
            if a1.any():
                step = lam[a1] / rho
                l1 = l0[a1] - step * norm2[a1]
                mult[a1] = np.where(l1 >= 0.0, step, l0[a1] / norm2[a1])
            if a2.any():
                mult[a2] = 2.0 * lam[a2] * l0[a2] / (rho + 2.0 * lam[a2] * norm2[a2])
            c_h = c0 - mult[pot_of_term] * tc
        else:
            c_h = c0
        if problem.log_idx.size:
            b = eta_log - rho * C[problem.log_idx]
            root = np.sqrt(b * b + 4.0 * rho * problem.log_A)
            with np.errstate(divide="ignore", invalid="ignore"):
                pos = 2.0 * problem.log_A / (b + root)
            c_log = np.where(b > 0.0, pos, (root - b) / (2.0 * rho))
        else:
            c_log = np.zeros(0)
        c_a = C[anchor_idx] - eta_a / rho

        # consensus: average copies plus scaled duals, then restore feasibility;
        # the dual shift is what lets the projection settle on the constrained optimum
        sums = np.zeros(n)
        if c_h.size:
            sums += np.bincount(tv, weights=c_h + eta_h / rho, minlength=n)
        if c_log.size:
            sums += np.bincount(problem.log_idx, weights=c_log + eta_log / rho, minlength=n)
        if c_a.size:
            sums += np.bincount(anchor_idx, weights=c_a + eta_a / rho, minlength=n)
        C_old = C
        C = sums / counts
        for mat, wts in zip(group_mats, group_wts):
            C[mat] = project_rows_simplex_weighted(C[mat], wts)
        C[free] = np.clip(C[free], 0.0, 1.0)

        eta_h += rho * (c_h - C[tv])
        if c_log.size:
            eta_log += rho * (c_log - C[problem.log_idx])
        if c_a.size:
            eta_a += rho * (c_a - C[anchor_idx])

        obj = problem.objective(C)
        if obj < best_obj:
            best_obj = obj
            best_C = C.copy()

        r2 = float(np.sum((c_h - C[tv]) ** 2))
        if c_log.size:
            r2 += float(np.sum((c_log - C[problem.log_idx]) ** 2))
        if c_a.size:
            r2 += float(np.sum((c_a - C[anchor_idx]) ** 2))
        primal = np.sqrt(r2)
        dual = rho * np.sqrt(float(np.sum(counts * (C - C_old) ** 2)))
        norm_locals = np.sqrt(float(np.sum(c_h ** 2)) + float(np.sum(c_log ** 2))
                              + float(np.sum(c_a ** 2)))
        norm_crep = np.sqrt(float(np.sum(counts * C ** 2)))
        norm_eta = np.sqrt(float(np.sum(eta_h ** 2)) + float(np.sum(eta_log ** 2))
                           + float(np.sum(eta_a ** 2)))
        eps_pri = sqrt_n * eps_abs + eps_rel * max(norm_locals, norm_crep)
        eps_dual = sqrt_n * eps_abs + eps_rel * norm_eta
        if primal <= eps_pri and dual <= eps_dual:
            converged = True
            break

    return ADMMResult(best_C, converged, it, best_obj, float(primal), float(dual),
                      eta_h, eta_log, eta_a)
