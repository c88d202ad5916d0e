"""Tree structure learning, iterated recovery, and entropy bookkeeping."""

import itertools
import math

import numpy as np
import pytest

from qmctree import (
    DensityOperator,
    QuantumTree,
    SubsystemLayout,
    WeightedEdgeList,
    chow_liu_tree,
    classical_state,
    conditional_mutual_information,
    delta_s,
    learn_tree,
    matrix_function,
    mutual_information,
    petz_recover,
    relative_entropy,
    sample_density,
    sample_markov_path,
    sample_markov_tree,
    trace_distance,
    tree_recover,
    von_neumann_entropy,
)
from qmctree.layout import embed
from qmctree.linalg import frobenius
from qmctree.tree import (
    TreeError,
    TreeRecoveryError,
    enumerate_spanning_trees,
    pairwise_marginals,
)

from conftest import random_conditional


def classical_tree_state(layout, edges, rng):
    """Diagonal state with tree-factorized probabilities (all binary)."""
    labels = layout.labels
    adj = {l: [] for l in labels}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    root = labels[0]
    order, parent = [root], {root: None}
    stack = [root]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in parent:
                parent[w] = v
                order.append(w)
                stack.append(w)
    marg = {root: rng.uniform(0.2, 0.8)}
    conds = {v: random_conditional(rng, 2, 2) for v in order[1:]}
    table = np.zeros((2,) * len(labels))
    for config in np.ndindex(*(2,) * len(labels)):
        x = dict(zip(labels, config))
        p = marg[root] if x[root] == 0 else 1 - marg[root]
        for v in order[1:]:
            p *= conds[v][x[parent[v]], x[v]]
        table[config] = p
    return classical_state(layout, table)


L4 = SubsystemLayout(("A", "B", "C", "D"), (2, 2, 2, 2))


class TestQuantumTree:
    def make_tree(self, state, edges):
        return QuantumTree(
            state.layout, edges, {tuple(sorted(e)): state.marginal(sorted(e))
                                  for e in edges}
        )

    def test_cycle_rejected(self, rng):
        state = sample_density(SubsystemLayout(("A", "B", "C"), (2, 2, 2)),
                               seed=rng)
        with pytest.raises(TreeError):
            self.make_tree(state, [("A", "B"), ("B", "C"), ("A", "C")])

    def test_disconnected_rejected(self, rng):
        state = sample_density(L4, seed=rng)
        with pytest.raises(TreeError):
            self.make_tree(state, [("A", "B"), ("C", "D"), ("A", "B")])

    def test_inconsistent_vertex_reductions_rejected(self):
        ab = sample_density(SubsystemLayout(("A", "B"), (2, 2)), seed=1)
        bc = sample_density(SubsystemLayout(("B", "C"), (2, 2)), seed=2)
        with pytest.raises(TreeError):
            QuantumTree(
                SubsystemLayout(("A", "B", "C"), (2, 2, 2)),
                [("A", "B"), ("B", "C")],
                {("A", "B"): ab, ("B", "C"): bc},
            )

    def test_peel_order_path(self, rng):
        state = sample_density(L4, seed=rng)
        tree = self.make_tree(state, [("A", "B"), ("B", "C"), ("C", "D")])
        steps, root_edge = tree.peel_order()
        assert [s[0] for s in steps] == ["A", "B"]
        assert root_edge == ("C", "D")

    def test_peel_order_star(self, rng):
        state = sample_density(L4, seed=rng)
        tree = self.make_tree(state, [("A", "B"), ("B", "C"), ("B", "D")])
        steps, root_edge = tree.peel_order()
        assert [s[0] for s in steps] == ["A", "C"]
        assert root_edge == ("B", "D")


class TestChowLiu:
    def test_three_vertex_oracle(self):
        weights = WeightedEdgeList.from_dict(
            ("A", "B", "C"),
            {("A", "B"): 0.5, ("B", "C"): 0.4, ("A", "C"): 0.1},
        )
        assert chow_liu_tree(weights) == (("A", "B"), ("B", "C"))

    def test_equal_weights_lexicographic(self):
        weights = WeightedEdgeList.from_dict(
            ("A", "B", "C"), {p: 1.0 for p in
                              [("A", "B"), ("A", "C"), ("B", "C")]}
        )
        assert chow_liu_tree(weights) == (("A", "B"), ("A", "C"))

    def test_matches_brute_force_n5(self):
        labels = tuple("ABCDE")
        rng = np.random.default_rng(55)
        trees = list(enumerate_spanning_trees(labels))
        assert len(trees) == 125  # Cayley: 5^3
        for _ in range(20):
            w = {p: float(rng.uniform(0, 1))
                 for p in itertools.combinations(labels, 2)}
            weights = WeightedEdgeList.from_dict(labels, w)
            got = chow_liu_tree(weights)
            best = max(trees, key=lambda t: sum(w[e] for e in t))
            assert sum(w[e] for e in got) == pytest.approx(
                sum(w[e] for e in best), abs=1e-12
            )

    def test_incomplete_weights_rejected(self):
        with pytest.raises(TreeError):
            WeightedEdgeList.from_dict(("A", "B", "C"), {("A", "B"): 1.0})


class TestTreeRecover:
    def test_three_chain_equals_petz(self):
        state = sample_markov_path(("A", "B", "C"), (2, 2, 2), seed=14)
        ab, bc = state.marginal(("A", "B")), state.marginal(("B", "C"))
        tree = QuantumTree(
            state.layout, [("A", "B"), ("B", "C")],
            {("A", "B"): ab, ("B", "C"): bc},
        )
        out = tree_recover(tree).state
        petz = petz_recover(ab, bc).state
        assert trace_distance(out.matrix, petz.matrix) < 1e-10

    @pytest.mark.parametrize("edges", [
        [("A", "B"), ("B", "C"), ("C", "D")],
        [("A", "B"), ("B", "C"), ("B", "D")],
    ])
    def test_classical_tree_factorization(self, edges, rng):
        state = classical_tree_state(L4, edges, rng)
        tree = QuantumTree(
            L4, edges,
            {tuple(sorted(e)): state.marginal(sorted(e)) for e in edges},
        )
        out = tree_recover(tree).state
        # oracle: joint probability = prod p(edge) / prod p(vertex)^(deg-1)
        diag_out = np.diag(out.matrix).real
        diag_true = np.diag(state.matrix).real
        np.testing.assert_allclose(diag_out, diag_true, atol=1e-10)
        assert trace_distance(out.matrix, state.matrix) < 1e-10

    @pytest.mark.parametrize("edges", [
        [("A", "B"), ("B", "C"), ("C", "D")],
        [("A", "B"), ("B", "C"), ("B", "D")],
    ])
    def test_markov_tree_roundtrip(self, edges):
        state = sample_markov_tree(L4, edges, seed=16)
        tree = QuantumTree(
            L4, edges,
            {tuple(sorted(e)): state.marginal(sorted(e)) for e in edges},
        )
        out = tree_recover(tree).state
        for e in edges:
            pair = tuple(sorted(e))
            assert trace_distance(
                out.marginal(pair).matrix, state.marginal(pair).matrix
            ) < 1e-7

    def test_eq_log_identity_full_rank(self):
        edges = [("A", "B"), ("B", "C"), ("C", "D")]
        state = sample_markov_path(("A", "B", "C", "D"), (2, 2, 2, 2), seed=18)
        tree = QuantumTree(
            state.layout, edges,
            {tuple(sorted(e)): state.marginal(sorted(e)) for e in edges},
        )
        result = tree_recover(tree)
        if result.rank_deficient:
            pytest.skip("rank-deficient sample")
        combo = np.zeros((16, 16), dtype=complex)
        for e in edges:
            m = tree.edge_marginals[tuple(sorted(e))]
            combo += embed(
                matrix_function(m.matrix, "log"), m.layout, state.layout
            )
        for v in state.labels:
            deg = tree.degree(v)
            if deg > 1:
                m = tree.vertex_marginal(v)
                combo -= (deg - 1) * embed(
                    matrix_function(m.matrix, "log"), m.layout, state.layout
                )
        log_out = matrix_function(result.state.matrix, "log")
        assert frobenius(log_out - combo) < 1e-6

    def test_incompatible_edge_reported(self):
        joint = sample_density(L4, seed=19)
        edges = [("A", "B"), ("B", "C"), ("C", "D")]
        tree = QuantumTree(
            L4, edges,
            {tuple(sorted(e)): joint.marginal(sorted(e)) for e in edges},
        )
        with pytest.raises(TreeRecoveryError) as err:
            tree_recover(tree)
        assert err.value.edge is not None
        assert err.value.report is not None


class TestDeltaS:
    def make_tree_and_estimator(self, edges, seed):
        state = sample_markov_tree(L4, edges, seed=seed)
        tree = QuantumTree(
            L4, edges,
            {tuple(sorted(e)): state.marginal(sorted(e)) for e in edges},
        )
        return tree, tree_recover(tree).state

    def test_markov_tree_near_zero(self):
        tree, est = self.make_tree_and_estimator(
            [("A", "B"), ("B", "C"), ("C", "D")], 22
        )
        report = delta_s(tree, est)
        assert abs(report.delta_s) <= 1e-7
        assert all(abs(t) <= 1e-7 for _, t in report.terms)

    def test_term_sum_identity(self):
        tree, est = self.make_tree_and_estimator(
            [("A", "B"), ("B", "C"), ("B", "D")], 23
        )
        report = delta_s(tree, est)
        assert report.term_sum == pytest.approx(report.delta_s, abs=1e-7)

    def test_three_vertex_matches_cmi(self):
        state = sample_markov_path(("A", "B", "C"), (2, 2, 2), seed=24)
        edges = [("A", "B"), ("B", "C")]
        tree = QuantumTree(
            state.layout, edges,
            {tuple(sorted(e)): state.marginal(sorted(e)) for e in edges},
        )
        est = tree_recover(tree).state
        report = delta_s(tree, est)
        cmi = conditional_mutual_information(est, ("A",), ("B",), ("C",))
        assert report.delta_s == pytest.approx(cmi, abs=1e-9)

    def test_non_markov_estimator_positive(self):
        # a constraint-satisfying estimator for the marginals of a non-tree
        # state carries a strictly positive entropy gap
        from qmctree import MarginalSet, marginal_constraints, solve_maxent

        joint = sample_density(L4, seed=26)
        edges = [("A", "B"), ("B", "C"), ("C", "D")]
        marginals = {
            tuple(sorted(e)): joint.marginal(sorted(e)) for e in edges
        }
        tree = QuantumTree(L4, edges, marginals)
        est = solve_maxent(marginal_constraints(
            MarginalSet(L4, tuple(marginals.values()))
        )).state
        report = delta_s(tree, est)
        assert report.delta_s > 0
        assert report.delta_s >= -1e-8


class TestLearnTree:
    def test_classical_tree_recovered(self, rng):
        edges = [("A", "B"), ("B", "C"), ("B", "D")]
        state = classical_tree_state(L4, edges, rng)
        learned = learn_tree(state)
        assert set(learned.tree.edges) == {tuple(sorted(e)) for e in edges}
        assert learned.gap.total <= 1e-8

    def test_product_state_zero_gap_lexicographic(self, rng):
        parts = [sample_density(SubsystemLayout((l,), (2,)), seed=rng)
                 for l in "ABCD"]
        m = parts[0].matrix
        for p in parts[1:]:
            m = np.kron(m, p.matrix)
        joint = DensityOperator(L4, m)
        learned = learn_tree(joint)
        assert learned.gap.total <= 1e-7
        assert learned.tree.edges == (("A", "B"), ("A", "C"), ("A", "D"))

    def test_markov_path_gap_minimal_over_all_trees(self):
        labels = tuple("ABCDE")
        layout = SubsystemLayout(labels, (2,) * 5)
        state = sample_markov_path(labels, (2,) * 5, seed=27)
        learned = learn_tree(state)
        best = math.inf
        for edges in enumerate_spanning_trees(labels):
            tree = QuantumTree(
                layout, edges,
                {e: state.marginal(e) for e in edges},
            )
            est = tree_recover(tree, strict=False).state
            best = min(best, relative_entropy(state, est))
        assert learned.gap.total <= best + 1e-7

    def test_gap_decomposition_sums(self):
        labels = ("A", "B", "C", "D")
        state = sample_markov_tree(
            L4, [("A", "B"), ("B", "C"), ("B", "D")], seed=28
        )
        learned = learn_tree(state)
        assert learned.gap.decomposition_sum == pytest.approx(
            learned.gap.total, abs=1e-7
        )

    def test_marginal_only_input(self):
        state = sample_markov_path(("A", "B", "C"), (2, 2, 2), seed=30)
        learned = learn_tree(pairwise_marginals(state), layout=state.layout)
        assert learned.gap is None
        assert trace_distance(learned.estimator.matrix, state.matrix) < 1e-7
