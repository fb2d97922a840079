"""Randomized tree/claim generators shared by the test suite."""
from __future__ import annotations

import numpy as np

import mvhedge as mv
from mvhedge.tree import Node, ScenarioTree


def _random_law(rng, branching: int, d: int, martingale: bool):
    probs = rng.dirichlet(np.full(branching, 5.0))
    probs = np.clip(probs, 0.05, None)
    probs = probs / probs.sum()
    mu = rng.normal(0.0, 0.3, size=d)
    sigma = rng.uniform(0.5, 1.5)
    deltas = mu + sigma * rng.normal(size=(branching, d))
    if martingale:
        deltas = deltas - probs @ deltas
    return probs, deltas


def random_tree(rng, periods: int | None = None, d: int | None = None,
                martingale: bool = False) -> ScenarioTree:
    """Heterogeneous random path tree: every node gets its own branch
    probabilities and increment vectors (branching >= d+1, so one-step
    degeneracy has probability zero)."""
    while True:
        dd = int(d if d is not None else rng.integers(1, 3))
        pp = int(periods if periods is not None else rng.integers(1, 5))
        branching = int(rng.integers(dd + 1, 4))
        root = Node(id=0, time=0, price=np.full(dd, 10.0), parent=None)
        nodes = [root]
        frontier = [root]
        for t in range(pp):
            nxt = []
            for node in frontier:
                probs, deltas = _random_law(rng, branching, dd, martingale)
                for p, delta in zip(probs, deltas):
                    child = Node(id=len(nodes), time=t + 1,
                                 price=node.price + delta, parent=node.id)
                    nodes.append(child)
                    node.children.append((child.id, float(p)))
                    nxt.append(child)
            frontier = nxt
        tree = ScenarioTree(num_assets=dd, horizon=pp, nodes=nodes)
        try:
            surf = mv.compute_opportunity(tree)
        except mv.DegenerateStep:
            continue
        # keep the market at desk scale: reject near-degenerate draws whose
        # conditioning would make 1e-9 agreement meaningless
        if surf.L[0] < 0.05:
            continue
        # in martingale mode the drift is centered in floating point; a
        # near-collinear step can amplify that residual, so insist the
        # adjustment is numerically indistinguishable from zero
        if martingale and np.nanmax(np.abs(surf.a_tilde)) > 1e-13:
            continue
        return tree


def random_claim(rng, tree: ScenarioTree) -> mv.Claim:
    kind = rng.choice(["call", "put", "per_leaf"])
    if kind == "per_leaf":
        return mv.attach_claim(tree, "per_leaf",
                               values=rng.normal(0.0, 2.0, size=len(tree.leaves())))
    strike = float(rng.uniform(6.0, 14.0))
    return mv.attach_claim(tree, str(kind), strike=strike)


def random_binomial(rng) -> mv.ScenarioTree:
    return mv.build_binomial(
        [float(rng.uniform(5.0, 20.0))],
        up=float(rng.uniform(1.05, 1.3)),
        down=float(rng.uniform(0.7, 0.95)),
        p_up=float(rng.uniform(0.2, 0.8)),
        periods=int(rng.integers(1, 5)),
    )


def random_iid(rng) -> mv.ScenarioTree:
    branching = int(rng.integers(2, 4))
    periods = int(rng.integers(1, 5))
    while True:
        probs = rng.dirichlet(np.full(branching, 5.0))
        probs = np.clip(probs, 0.05, None)
        probs = probs / probs.sum()
        deltas = rng.normal(0.2, 1.0, size=branching)
        incs = [([float(delta)], float(p)) for delta, p in zip(deltas, probs)]
        tree = mv.build_iid_multinomial([10.0], incs, periods, "additive")
        try:
            surf = mv.compute_opportunity(tree)
        except mv.DegenerateStep:
            continue
        if surf.L[0] < 0.05:
            continue
        return tree


def two_regime_tree(periods: int = 3) -> mv.ScenarioTree:
    """Low/high-vol binomial regimes with distinct one-step tradeoffs."""
    regimes = [
        [([1.0], 0.6), ([-1.0], 0.4)],
        [([2.0], 0.5), ([-2.0], 0.5)],
    ]
    return mv.build_regime_switching(
        [10.0], regimes, [[0.9, 0.1], [0.2, 0.8]], initial_regime=0, periods=periods,
    )


def binomial_06(periods: int = 1) -> mv.ScenarioTree:
    """Additive binomial with increments +-1 and p_up = 0.6."""
    return mv.build_iid_multinomial([10.0], [([1.0], 0.6), ([-1.0], 0.4)], periods)


def martingale_trinomial(periods: int = 1) -> mv.ScenarioTree:
    """Zero-mean trinomial: increments (+1, 0, -1) with p = (0.3, 0.4, 0.3)."""
    return mv.build_iid_multinomial(
        [10.0], [([1.0], 0.3), ([0.0], 0.4), ([-1.0], 0.3)], periods,
    )
