import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfegacn.exceptions import ConfigError
from sfegacn.pointwalk import (WalkHistogram, emit_histogram, point_walk, read_histogram,
                               render_svg, walk_order)


def brute_force_walk(X, start):
    """O(n^2) nearest-unvisited walk using exact pairwise differences."""
    n = len(X)
    order = [start]
    visited = {start}
    while len(order) < n:
        cur = X[order[-1]]
        best, best_d = None, None
        for j in range(n):
            if j in visited:
                continue
            d = float(((X[j] - cur) ** 2).sum())
            if best_d is None or d < best_d:
                best, best_d = j, d
        order.append(best)
        visited.add(best)
    return order


def test_collinear_example():
    X = np.array([[0.0], [1.0], [5.0], [6.0]])
    hist = point_walk(X, ["A", "A", "B", "B"], 2, start=0)
    assert hist.windows == [{"A": 2}, {"B": 2}]
    assert hist.visit_order.tolist() == [0, 1, 2, 3]


def test_single_label_full_windows():
    X = np.random.default_rng(0).normal(size=(23, 2))
    hist = point_walk(X, ["z"] * 23, 5, seed=1)
    assert all(w == {"z": 5} for w in hist.windows[:-1])
    assert hist.windows[-1] == {"z": 3}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 200), st.integers(1, 12))
def test_matches_brute_force_and_conserves_counts(seed, n, w):
    rng = np.random.default_rng(seed)
    # integer grid coordinates make distance ties common
    X = rng.integers(0, 6, size=(n, 2)).astype(float)
    labels = rng.choice(["a", "b", "c"], size=n)
    start = int(rng.integers(n))
    hist = point_walk(X, labels, w, start=start)
    assert hist.visit_order.tolist() == brute_force_walk(X, start)
    assert sorted(hist.visit_order.tolist()) == list(range(n))
    assert sum(sum(win.values()) for win in hist.windows) == n


def test_ties_go_to_lowest_index():
    X = np.array([[0.0], [1.0], [-1.0]])
    assert walk_order(X, 0).tolist() == [0, 1, 2]


def test_seeded_start_is_deterministic():
    X = np.random.default_rng(0).normal(size=(30, 2))
    a = point_walk(X, ["a"] * 30, 4, seed=9)
    b = point_walk(X, ["a"] * 30, 4, seed=9)
    np.testing.assert_array_equal(a.visit_order, b.visit_order)


def test_bad_inputs():
    with pytest.raises(ConfigError):
        point_walk(np.zeros((1, 2)), ["a"], 2)
    with pytest.raises(ConfigError):
        point_walk(np.zeros((3, 2)), ["a"] * 3, 0)
    with pytest.raises(ConfigError):
        point_walk(np.zeros((3, 2)), ["a"] * 2, 1)


def test_emit_empty_is_header_only(tmp_path):
    emit_histogram(WalkHistogram(3, []), tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text() == "window_index,label,count\n"


def test_emit_rows_and_round_trip(tmp_path):
    hist = WalkHistogram(2, [{"A": 2}, {"A": 1, "B": 1}])
    emit_histogram(hist, tmp_path / "h.csv", tmp_path / "h.svg")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert len(lines) == 1 + 4
    assert lines[2] == "0,B,0"
    assert read_histogram(tmp_path / "h.csv").windows == hist.windows
    assert (tmp_path / "h.svg").read_text().startswith("<svg")


def test_svg_escapes_labels():
    svg = render_svg(WalkHistogram(1, [{"<x&y>": 1}]))
    assert "&lt;x&amp;y&gt;" in svg and "<x&y>" not in svg
