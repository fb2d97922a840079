"""Opportunity process, adjustment process, and derived measures.

The opportunity process L(n) is the conditional minimal expected squared
error of hedging the constant payoff 1 from node n with zero endowment.
It satisfies the backward recursion

    L(leaf) = 1
    L(n)    = m0 - bbar_u' cbar_u^+ bbar_u

with the weighted one-step moments of linalg.weighted_moments (weights
p_k * L_k).  The adjustment process a_tilde(n) = cbar_u^+ bbar_u is the
optimal per-unit-of-wealth holding in the pure investment problem, and
everything else (the signed variance-optimal measure, the opportunity-
neutral measure, Sharpe ratios, mean-variance tradeoff diagnostics)
derives from these two objects.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStep
from .linalg import pinv_psd, weighted_moments
from .tree import ScenarioTree

DEGENERACY_THRESHOLD = 1e-12


@dataclass
class OpportunitySurface:
    """Per-node outputs of the backward recursion.

    Arrays are indexed by node id; entries that only exist at
    non-terminal nodes are NaN at terminal nodes.  The starred objects
    are the one-step characteristics of the price under the opportunity-
    neutral measure: b_sstar = bbar_u/m0 (conditional mean),
    c_tilde_sstar = cbar_u/m0 (conditional second moment), and
    c_hat_sstar = c_tilde_sstar - b_sstar b_sstar' (conditional
    covariance).
    """

    L: np.ndarray                 # (n,)
    a_tilde: np.ndarray           # (n, d)
    a_hat: np.ndarray             # (n, d)
    dAK: np.ndarray               # (n,)
    m0: np.ndarray                # (n,)
    bbar_u: np.ndarray            # (n, d)
    cbar_u: np.ndarray            # (n, d, d)
    b_sstar: np.ndarray           # (n, d)
    c_tilde_sstar: np.ndarray     # (n, d, d)
    c_hat_sstar: np.ndarray       # (n, d, d)


@dataclass
class MeasureSurface:
    """One-step and cumulative densities of the derived measures.

    Per non-terminal node, lists aligned with the node's children:
      qstar_w: one-step signed density factor of the variance-optimal
               measure, (L_k/L_n)(1 - a_tilde' d_k); may be <= 0
      pstar_p: one-step probability of the opportunity-neutral measure,
               p_k L_k / m0
      nstar_f: one-step factor 1 - a_hat' (d_k - b_sstar)
    Per node (cumulative along the root path, so in particular per leaf):
      z_qstar: product of qstar_w factors (= dQ*/dP on leaves)
      z_pstar: product of pstar_p/p factors (= dP*/dP on leaves)
    """

    qstar_w: dict[int, np.ndarray]
    pstar_p: dict[int, np.ndarray]
    nstar_f: dict[int, np.ndarray]
    z_qstar: np.ndarray
    z_pstar: np.ndarray
    num_negative_weights: int


@dataclass
class MvtDiagnostics:
    """Mean-variance tradeoff process and its classification flags.

    dK_hat(n) = b' c_hat^+ b with the unweighted one-step moments (the
    squared conditional Sharpe ratio of the step).  deterministic_mvt is
    true when dK_hat is constant across each time slice; in that case
    det_l_residual reports the worst relative deviation of L(n) from the
    closed form eps_t / eps_T with eps_t = prod_{s<=t} (1 + dK_hat_s).
    """

    dK_hat: np.ndarray
    deterministic_mvt: bool
    pstar_is_p: bool
    det_l_residual: float | None


def compute_opportunity(tree: ScenarioTree) -> OpportunitySurface:
    """Backward induction for L, a_tilde, and the starred characteristics.

    Raises DegenerateStep when some one-step market admits a riskless
    nonzero return (L would vanish)."""
    n = len(tree.nodes)
    d = tree.num_assets
    surf = OpportunitySurface(
        L=np.ones(n),
        a_tilde=np.full((n, d), np.nan),
        a_hat=np.full((n, d), np.nan),
        dAK=np.full(n, np.nan),
        m0=np.full(n, np.nan),
        bbar_u=np.full((n, d), np.nan),
        cbar_u=np.full((n, d, d), np.nan),
        b_sstar=np.full((n, d), np.nan),
        c_tilde_sstar=np.full((n, d, d), np.nan),
        c_hat_sstar=np.full((n, d, d), np.nan),
    )
    for t in range(tree.horizon - 1, -1, -1):
        for node in tree.nodes_at(t):
            probs = tree.child_probs(node)
            deltas = tree.increments(node)
            child_L = np.array([surf.L[c] for c, _ in node.children])
            mom = weighted_moments(probs * child_L, deltas)
            cinv = pinv_psd(mom.cbar_u)
            a_tilde = cinv @ mom.bbar_u
            L = mom.m0 - float(mom.bbar_u @ cinv @ mom.bbar_u)
            if L <= DEGENERACY_THRESHOLD:
                raise DegenerateStep(node.id)
            i = node.id
            surf.L[i] = L
            surf.m0[i] = mom.m0
            surf.bbar_u[i] = mom.bbar_u
            surf.cbar_u[i] = mom.cbar_u
            surf.a_tilde[i] = a_tilde
            surf.dAK[i] = mom.m0 / L - 1.0
            surf.a_hat[i] = (1.0 + surf.dAK[i]) * a_tilde
            surf.b_sstar[i] = mom.bbar_u / mom.m0
            c_tilde = mom.cbar_u / mom.m0
            surf.c_tilde_sstar[i] = c_tilde
            surf.c_hat_sstar[i] = c_tilde - np.outer(surf.b_sstar[i], surf.b_sstar[i])
    return surf


def measures(tree: ScenarioTree, surf: OpportunitySurface) -> MeasureSurface:
    """One-step weights and cumulative path densities of the
    variance-optimal signed measure and the opportunity-neutral measure.

    Negative qstar_w entries are legal (the variance-optimal measure is
    signed) and are counted, never clamped."""
    qstar_w: dict[int, np.ndarray] = {}
    pstar_p: dict[int, np.ndarray] = {}
    nstar_f: dict[int, np.ndarray] = {}
    z_qstar = np.ones(len(tree.nodes))
    z_pstar = np.ones(len(tree.nodes))
    negatives = 0
    for node in tree.nonterminal():
        i = node.id
        deltas = tree.increments(node)
        probs = tree.child_probs(node)
        child_L = np.array([surf.L[c] for c, _ in node.children])
        drift = deltas @ surf.a_tilde[i]
        qw = (child_L / surf.L[i]) * (1.0 - drift)
        pp = probs * child_L / surf.m0[i]
        nf = 1.0 - (deltas - surf.b_sstar[i]) @ surf.a_hat[i]
        qstar_w[i] = qw
        pstar_p[i] = pp
        nstar_f[i] = nf
        negatives += int(np.sum(qw <= 0.0))
        for (cid, p), w_q, p_star in zip(node.children, qw, pp):
            z_qstar[cid] = z_qstar[i] * w_q
            z_pstar[cid] = z_pstar[i] * (p_star / p)
    return MeasureSurface(
        qstar_w=qstar_w,
        pstar_p=pstar_p,
        nstar_f=nstar_f,
        z_qstar=z_qstar,
        z_pstar=z_pstar,
        num_negative_weights=negatives,
    )


def sharpe_ratio(surf: OpportunitySurface, node_id: int) -> float:
    """Maximal conditional Sharpe ratio over the remaining periods,
    sqrt(1/L(n) - 1)."""
    return float(np.sqrt(max(1.0 / surf.L[node_id] - 1.0, 0.0)))


def mvt_process(tree: ScenarioTree, surf: OpportunitySurface,
                mea: MeasureSurface | None = None,
                tol: float = 1e-10) -> MvtDiagnostics:
    """Mean-variance tradeoff increments (unweighted moments, L set to 1)
    and the deterministic-MVT / opportunity-neutral classification."""
    if mea is None:
        mea = measures(tree, surf)
    dK = np.full(len(tree.nodes), np.nan)
    for node in tree.nonterminal():
        probs = tree.child_probs(node)
        deltas = tree.increments(node)
        b = deltas.T @ probs
        c_tilde = (deltas.T * probs) @ deltas
        c_hat = c_tilde - np.outer(b, b)
        dK[node.id] = float(b @ pinv_psd(c_hat) @ b)
    deterministic = True
    slice_values = np.zeros(tree.horizon)
    for t in range(tree.horizon):
        vals = np.array([dK[n.id] for n in tree.nodes_at(t)])
        slice_values[t] = vals[0]
        if np.max(np.abs(vals - vals[0])) > tol * max(1.0, abs(vals[0])):
            deterministic = False
    pstar_is_p = bool(np.max(np.abs(mea.z_pstar - 1.0)) <= tol)
    det_residual = None
    if deterministic:
        eps = np.cumprod(np.concatenate(([1.0], 1.0 + slice_values)))
        ratio = eps / eps[-1]
        worst = 0.0
        for node in tree.nodes:
            expected = ratio[node.time]
            worst = max(worst, abs(surf.L[node.id] - expected) / expected)
        det_residual = worst
    return MvtDiagnostics(
        dK_hat=dK,
        deterministic_mvt=deterministic,
        pstar_is_p=pstar_is_p,
        det_l_residual=det_residual,
    )


def efficient_value_process(tree: ScenarioTree, surf: OpportunitySurface,
                            start_node: int = 0) -> dict[int, float]:
    """Value of the efficient strategy (hedging the constant 1, started
    at start_node with value 1) at every descendant: the running product
    of the one-step factors 1 - a_tilde' d_k.  The conditional
    expectation of its square at start_node equals L(start_node)."""
    values = {start_node: 1.0}
    stack = [start_node]
    while stack:
        i = stack.pop()
        node = tree.nodes[i]
        if not node.children:
            continue
        deltas = tree.increments(node)
        factors = 1.0 - deltas @ surf.a_tilde[i]
        for (cid, _), f in zip(node.children, factors):
            values[cid] = values[i] * float(f)
            stack.append(cid)
    return values
