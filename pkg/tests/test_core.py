import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcvcausal.core import (
    CausalGraph,
    CoefficientStack,
    EdgeKey,
    TimeSeriesDataset,
    dataset_from_csv,
    dataset_to_csv,
    graph_to_stack,
    stack_from_csv,
    stack_to_csv,
    stack_to_graph,
    summary_graph,
)


def make_graph(n, max_lag, edges):
    return CausalGraph(n=n, max_lag=max_lag, edges=frozenset(
        (EdgeKey(cause=c, effect=e, lag=lag), s) for c, e, lag, s in edges
    ))


class TestStackToGraph:
    def test_single_nonzero_entry(self):
        stack = CoefficientStack(mats=(np.array([[0.0, 0.0], [0.8, 0.0]]),))
        g = stack_to_graph(stack, zero_tol=1e-8)
        assert g.edges == frozenset({(EdgeKey(0, 1, 0), 1)})

    def test_all_zero_stack(self):
        stack = CoefficientStack(mats=(np.zeros((3, 3)), np.zeros((3, 3))))
        assert stack_to_graph(stack, zero_tol=0.5).n_edges == 0

    def test_entry_below_tolerance(self):
        mats = [np.zeros((3, 3)), np.zeros((3, 3))]
        mats[1][2, 0] = -0.3
        g = stack_to_graph(CoefficientStack(mats=tuple(mats)), zero_tol=0.5)
        assert g.n_edges == 0

    def test_negative_entry_sign(self):
        mats = [np.zeros((3, 3)), np.zeros((3, 3))]
        mats[1][2, 0] = -0.3
        g = stack_to_graph(CoefficientStack(mats=tuple(mats)), zero_tol=1e-8)
        assert g.edges == frozenset({(EdgeKey(0, 2, 1), -1)})

    def test_lag0_diagonal_ignored(self):
        mats = [np.eye(2)]
        assert stack_to_graph(CoefficientStack(mats=tuple(mats))).n_edges == 0

    def test_negative_tolerance_rejected(self):
        stack = CoefficientStack(mats=(np.zeros((2, 2)),))
        with pytest.raises(ValueError):
            stack_to_graph(stack, zero_tol=-1.0)


class TestSummaryGraph:
    def test_single_lagged_edge(self):
        g = make_graph(2, 1, [(0, 1, 1, 1)])
        assert summary_graph(g).edges == frozenset({(EdgeKey(0, 1, 0), 1)})

    def test_tie_takes_smallest_lag_sign(self):
        g = make_graph(2, 2, [(0, 1, 1, 1), (0, 1, 2, -1)])
        assert summary_graph(g).edges == frozenset({(EdgeKey(0, 1, 0), 1)})

    def test_empty_graph(self):
        g = make_graph(3, 2, [])
        s = summary_graph(g)
        assert s.n_edges == 0 and s.max_lag == 0


def _dedup_edges(edges):
    uniq = {(c, e, lag): s for c, e, lag, s in edges}
    return [(c, e, lag, s) for (c, e, lag), s in uniq.items()]


@st.composite
def graphs(draw):
    n = draw(st.integers(min_value=1, max_value=5))
    p = draw(st.integers(min_value=0, max_value=3))
    edges = draw(st.lists(
        st.tuples(
            st.integers(0, n - 1), st.integers(0, n - 1),
            st.integers(0, p), st.sampled_from([1, -1]),
        ).filter(lambda e: not (e[2] == 0 and e[0] == e[1])),
        max_size=12,
    ))
    return make_graph(n, p, _dedup_edges(edges))


@given(graphs())
@settings(max_examples=100, deadline=None)
def test_graph_stack_round_trip(g):
    assert stack_to_graph(graph_to_stack(g), zero_tol=0.5) == g


@given(graphs())
@settings(max_examples=100, deadline=None)
def test_summary_graph_idempotent(g):
    s = summary_graph(g)
    assert summary_graph(s) == s


class TestValidation:
    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            TimeSeriesDataset(values=np.zeros((5, 2)), names=("a", "a"))

    def test_nan_rejected_by_default(self):
        vals = np.zeros((5, 2))
        vals[2, 1] = np.nan
        with pytest.raises(ValueError):
            TimeSeriesDataset(values=vals, names=("a", "b"))
        TimeSeriesDataset(values=vals, names=("a", "b"), allow_missing=True)

    def test_too_short(self):
        with pytest.raises(ValueError):
            TimeSeriesDataset(values=np.zeros((1, 2)), names=("a", "b"))

    def test_values_are_read_only(self):
        d = TimeSeriesDataset(values=np.zeros((5, 2)), names=("a", "b"))
        with pytest.raises(ValueError):
            d.values[0, 0] = 1.0

    def test_instantaneous_self_loop_forbidden(self):
        with pytest.raises(ValueError):
            EdgeKey(cause=1, effect=1, lag=0)
        EdgeKey(cause=1, effect=1, lag=1)

    def test_graph_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            make_graph(2, 0, [(0, 5, 0, 1)])
        with pytest.raises(ValueError):
            make_graph(2, 0, [(0, 1, 3, 1)])
        with pytest.raises(ValueError):
            make_graph(2, 0, [(0, 1, 0, 2)])

    def test_graph_rejects_duplicate_edgekey(self):
        edges = frozenset({(EdgeKey(0, 1, 0), 1), (EdgeKey(0, 1, 0), -1)})
        with pytest.raises(ValueError):
            CausalGraph(n=2, max_lag=0, edges=edges)

    def test_stack_rejects_ragged_mats(self):
        with pytest.raises(ValueError):
            CoefficientStack(mats=(np.zeros((2, 2)), np.zeros((3, 3))))


class TestInterchange:
    def test_dataset_csv_round_trip(self):
        rng = np.random.default_rng(0)
        d = TimeSeriesDataset(values=rng.standard_normal((20, 3)),
                              names=("a", "b", "c"), seed=7)
        back = dataset_from_csv(dataset_to_csv(d), seed=7)
        assert back == d

    def test_stack_csv_round_trip(self):
        rng = np.random.default_rng(1)
        stack = CoefficientStack(mats=tuple(rng.standard_normal((3, 3))
                                            for _ in range(3)))
        text = stack_to_csv(stack, names=("a", "b", "c"))
        back, names = stack_from_csv(text)
        assert names == ("a", "b", "c")
        assert back == stack

    def test_dot_export(self):
        g = make_graph(2, 1, [(0, 1, 1, -1)])
        dot = g.to_dot(["price", "volume"])
        assert "digraph" in dot
        assert '"price" -> "volume"' in dot
        assert 'label="1"' in dot
        assert "dashed" in dot  # negative sign styling

    def test_graph_dict_report(self):
        g = make_graph(2, 1, [(0, 1, 1, 1)])
        d = g.to_dict(names=["a", "b"])
        assert d == {"n": 2, "max_lag": 1,
                     "edges": [{"cause": "a", "effect": "b",
                                "lag": 1, "sign": 1}]}
