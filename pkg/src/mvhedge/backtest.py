"""Monte Carlo path simulation and strategy comparison.

Two evaluation modes: sampled (counter-based per-path randomness, so
results are reproducible independently of evaluation order or worker
count) and exact (every leaf weighted by its probability — the primary
acceptance path, since the trees are finite).
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import BadParameter, IncompatibleClaim
from .hedging import HedgePlan, hedging_error, rollout_strategy
from .linalg import pinv_psd
from .opportunity import OpportunitySurface
from .tree import ScenarioTree

STRATEGY_KINDS = ("mvh", "pure_xi", "gkw", "markowitz")


@dataclass
class BacktestReport:
    strategy: str
    num_paths: int
    mean_sq_error: float
    std_error: float
    analytic_error: float | None
    exact: bool


def sample_paths(tree: ScenarioTree, n: int, seed: int) -> list[int]:
    """Draw n root-to-leaf paths by the edge probabilities; returns leaf
    node ids.  Path i consumes its own counter block of the Philox
    stream keyed by seed, so the result depends only on (seed, i)."""
    if n < 1:
        raise BadParameter("need at least one path")
    cum: dict[int, tuple[np.ndarray, list[int]]] = {}
    for node in tree.nonterminal():
        probs = tree.child_probs(node)
        cum[node.id] = (np.cumsum(probs), [c for c, _ in node.children])
    out = []
    for i in range(n):
        bg = np.random.Philox(key=seed, counter=[0, 0, i, 0])
        u = np.random.Generator(bg).random(tree.horizon)
        nid = 0
        for t in range(tree.horizon):
            cdf, children = cum[nid]
            nid = children[int(np.searchsorted(cdf, u[t], side="right").clip(0, len(children) - 1))]
        out.append(nid)
    return out


def strategy_holdings(tree: ScenarioTree, surf: OpportunitySurface, plan: HedgePlan,
                      kind: str, v0: float) -> np.ndarray:
    """Per-node holdings of the requested strategy (NaN at terminals).

    mvh       feedback-optimal strategy
    pure_xi   pure hedge coefficient, no feedback
    gkw       martingale-style hedge: conditional expectation of the
              payoff under P and unweighted regression of its increments
              on price increments (L forced to 1 throughout)
    markowitz pure investment of the running deficit, requires a
              constant claim
    """
    n = len(tree.nodes)
    d = tree.num_assets
    if kind == "mvh":
        phi, _ = rollout_strategy(tree, surf, plan, v0)
        return phi
    if kind == "pure_xi":
        return plan.xi.copy()
    if kind == "gkw":
        V = plan.V.copy()
        phi = np.full((n, d), np.nan)
        for t in range(tree.horizon - 1, -1, -1):
            for node in tree.nodes_at(t):
                probs = tree.child_probs(node)
                deltas = tree.increments(node)
                child_V = np.array([V[c] for c, _ in node.children])
                V[node.id] = float(probs @ child_V)
                c_u = (deltas.T * probs) @ deltas
                d_u = deltas.T @ (probs * (child_V - V[node.id]))
                phi[node.id] = pinv_psd(c_u) @ d_u
        return phi
    if kind == "markowitz":
        leaves = tree.leaves()
        h = np.array([plan.V[leaf.id] for leaf in leaves])
        if np.max(np.abs(h - h[0])) > 1e-12 * max(1.0, np.max(np.abs(h))):
            raise IncompatibleClaim("markowitz strategy requires a constant claim")
        target = float(h[0])
        phi = np.full((n, d), np.nan)
        G = np.full(n, np.nan)
        G[0] = v0
        for node in tree.nonterminal():
            i = node.id
            phi[i] = (target - G[i]) * surf.a_tilde[i]
            deltas = tree.increments(node)
            for (cid, _), g in zip(node.children, deltas @ phi[i]):
                G[cid] = G[i] + g
        return phi
    raise BadParameter(f"unknown strategy kind {kind!r}")


def _terminal_wealth(tree: ScenarioTree, holdings: np.ndarray, v0: float) -> np.ndarray:
    """Wealth at every node from fixed per-node holdings."""
    G = np.full(len(tree.nodes), np.nan)
    G[0] = v0
    for node in tree.nonterminal():
        deltas = tree.increments(node)
        for (cid, _), g in zip(node.children, deltas @ holdings[node.id]):
            G[cid] = G[node.id] + g
    return G


def exact_sq_error(tree: ScenarioTree, plan: HedgePlan, holdings: np.ndarray,
                   v0: float) -> float:
    """Full-tree expectation of the squared terminal hedging error."""
    G = _terminal_wealth(tree, holdings, v0)
    probs = tree.node_probs()
    total = 0.0
    for leaf in tree.leaves():
        err = G[leaf.id] - plan.V[leaf.id]
        total += probs[leaf.id] * err * err
    return total


def run_strategy(tree: ScenarioTree, surf: OpportunitySurface, plan: HedgePlan,
                 kind: str, v0: float, paths: list[int] | None = None,
                 exact: bool = False) -> BacktestReport:
    """Evaluate a strategy on sampled paths or by exact expectation.

    The claim is read off the plan's terminal values.  For kind='mvh'
    the analytic error of the closed-form decomposition is attached."""
    holdings = strategy_holdings(tree, surf, plan, kind, v0)
    analytic = hedging_error(tree, surf, plan, v0).total_error if kind == "mvh" else None
    if exact:
        mse = exact_sq_error(tree, plan, holdings, v0)
        return BacktestReport(
            strategy=kind, num_paths=len(tree.leaves()), mean_sq_error=mse,
            std_error=0.0, analytic_error=analytic, exact=True,
        )
    if paths is None:
        raise BadParameter("sampled mode requires paths")
    G = _terminal_wealth(tree, holdings, v0)
    errs = np.array([(G[leaf] - plan.V[leaf]) ** 2 for leaf in paths])
    mean = float(np.mean(errs))
    std_err = float(np.std(errs, ddof=1) / np.sqrt(len(errs))) if len(errs) > 1 else 0.0
    return BacktestReport(
        strategy=kind, num_paths=len(paths), mean_sq_error=mean,
        std_error=std_err, analytic_error=analytic, exact=False,
    )


def compare_report(reports: list[BacktestReport]) -> str:
    """CSV comparison table with each strategy's error ratio to mvh."""
    if not reports:
        raise BadParameter("need at least one report")
    mvh = next((r for r in reports if r.strategy == "mvh"), reports[0])
    buf = io.StringIO()
    buf.write("strategy,n_paths,mean_sq_error,std_error,analytic_error,ratio_to_mvh\n")
    for r in reports:
        analytic = "" if r.analytic_error is None else format(r.analytic_error, ".17g")
        ratio = r.mean_sq_error / mvh.mean_sq_error if mvh.mean_sq_error > 0.0 else (
            1.0 if r.mean_sq_error == 0.0 else float("inf")
        )
        buf.write("%s,%d,%s,%s,%s,%s\n" % (
            r.strategy, r.num_paths,
            format(r.mean_sq_error, ".17g"),
            format(r.std_error, ".17g"),
            analytic,
            format(ratio, ".17g"),
        ))
    return buf.getvalue()
