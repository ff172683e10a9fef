import io
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcpf import dataset as ds
from dcpf.dataset import InteractionTensor, RatingEvent, Schema, TimeGrid


def tensor_from(cells, M=3, N=3, T=4):
    m, n, t, y = (np.array(c) for c in zip(*cells)) if cells else ([], [], [], [])
    return InteractionTensor([f"u{i}" for i in range(M)], [f"i{i}" for i in range(N)],
                             TimeGrid(0, 10, T), m, n, t, y)


# ---------------------------------------------------------------------------
# parsing


def test_parse_examples():
    [event] = ds.parse_events(["u1,i7,1040000000,4\n"])
    assert event == RatingEvent("u1", "i7", 1040000000, 4.0)
    [event] = ds.parse_events(["u1,i7,1040000000\n"])
    assert event.value == 1.0
    assert ds.parse_events([]) == []


def test_parse_header_and_named_columns():
    text = "when\tuser\tthing\tstars\n5\ta\tb\t3\n"
    schema = Schema(user="user", item="thing", timestamp="when", value="stars", delimiter="\t", header=True)
    assert ds.parse_events(io.StringIO(text), schema) == [RatingEvent("a", "b", 5, 3.0)]
    with pytest.raises(ds.SchemaError):
        ds.parse_events(io.StringIO(text), Schema(user="missing", header=True, delimiter="\t"))


def test_parse_bad_line_threshold():
    good = [f"u{i},i{i},{i},1\n" for i in range(200)]
    events = ds.parse_events(good + ["broken\n"])
    assert len(events) == 200
    with pytest.raises(ds.ParseError) as info:
        ds.parse_events(good[:10] + ["u,i,notatime,1\n"])
    assert info.value.line_errors[0][0] == 11


# ---------------------------------------------------------------------------
# grid and discretisation


def test_grid_from_span_sixteen_windows():
    first = int(datetime(1998, 10, 1, tzinfo=timezone.utc).timestamp())
    last = int(datetime(2005, 12, 31, tzinfo=timezone.utc).timestamp())
    grid = TimeGrid.from_span(first, last, num_windows=16)
    assert grid.num_windows == 16 and grid.end > last
    events = [RatingEvent("a", "b", first), RatingEvent("a", "c", last)]
    assert ds.discretize(events, grid).T == 16
    assert TimeGrid.from_span(0, 99, num_windows=4, window_length=7).window_length == 25


@settings(max_examples=100, deadline=None)
@given(st.integers(-10**6, 10**6), st.integers(1, 1000), st.integers(1, 50), st.data())
def test_window_assignment(origin, length, T, data):
    grid = TimeGrid(origin, length, T)
    ts = data.draw(st.integers(origin, grid.end - 1))
    t = grid.window_index(ts)
    assert origin + t * length <= ts < origin + (t + 1) * length


def test_discretize_examples():
    grid = TimeGrid(0, 10, 3)
    single = ds.discretize([RatingEvent("a", "b", 15, 2.0)], grid)
    assert single.nnz == 1 and single.t[0] == 1
    pair = [RatingEvent("a", "b", 11, 2.0), RatingEvent("a", "b", 12, 3.0)]
    assert ds.discretize(pair, grid, "sum").y.tolist() == [5.0]
    assert ds.discretize(pair, grid, "keep_first").y.tolist() == [2.0]
    assert ds.discretize(pair[::-1], grid, "keep_first").y.tolist() == [2.0]
    assert ds.discretize(pair, grid, "keep_last").y.tolist() == [3.0]
    with pytest.raises(ds.RangeError, match="a"):
        ds.discretize([RatingEvent("a", "b", 30)], grid)
    with pytest.raises(ValueError):
        ds.discretize(pair, grid, "median")


def test_tensor_rejects_bad_cells():
    with pytest.raises(ValueError):
        tensor_from([(0, 0, 0, 1.0), (0, 0, 0, 2.0)])
    with pytest.raises(ValueError):
        tensor_from([(0, 0, 0, 0.0)])
    with pytest.raises(ValueError):
        tensor_from([(5, 0, 0, 1.0)])


cell_lists = st.lists(
    st.tuples(st.integers(0, 4), st.integers(0, 5), st.integers(0, 3),
              st.integers(1, 9).map(float)),
    max_size=40, unique_by=lambda c: c[:3],
)


@settings(max_examples=60, deadline=None)
@given(cell_lists)
def test_sparsity_matches_brute_force(cells):
    tensor = tensor_from(cells, M=5, N=6, T=4)
    for t in range(4):
        count = sum(1 for c in cells if c[2] == t)
        assert tensor.sparsity()[t] == pytest.approx(1 - count / 30)


@settings(max_examples=60, deadline=None)
@given(cell_lists)
def test_event_round_trip(cells):
    tensor = ds.compact(tensor_from(cells, M=5, N=6, T=4))
    buf = io.StringIO()
    ds.write_events(tensor, buf)
    events = ds.parse_events(io.StringIO(buf.getvalue()))
    again = ds.discretize(events, tensor.grid, "sum") if events else tensor
    assert again.same_cells(tensor)


# ---------------------------------------------------------------------------
# dedup and filtering


def test_dedup_across_windows_examples():
    tensor = tensor_from([(0, 1, 1, 2.0), (0, 1, 3, 7.0), (2, 2, 2, 4.0)])
    first = ds.dedup_across_windows(tensor, "keep_first")
    assert sorted(zip(first.m, first.n, first.t, first.y)) == [(0, 1, 1, 2.0), (2, 2, 2, 4.0)]
    last = ds.dedup_across_windows(tensor, "keep_last")
    assert sorted(zip(last.t.tolist(), last.y.tolist())) == [(2, 4.0), (3, 7.0)]
    assert ds.dedup_across_windows(tensor, "none") is tensor


def test_collapse_windows():
    tensor = tensor_from([(0, 1, 1, 2.0), (0, 1, 3, 7.0), (1, 2, 2, 4.0)])
    flat = ds.collapse_windows(tensor)
    assert flat.T == 1 and flat.grid.window_length == 40 and flat.nnz == 2


def test_filter_active():
    cells = [(0, n, t, 1.0) for n in range(3) for t in (0, 3)]  # user 0: active throughout
    cells += [(1, 0, 0, 1.0)]  # user 1: only early
    tensor = tensor_from(cells, M=2, N=3, T=4)
    kept = ds.filter_active(tensor, min_events=2)
    assert kept.users == ["u0"] and kept.nnz == 6


# ---------------------------------------------------------------------------
# splits


def dense_tensor(seed=0, M=20, N=20, T=16):
    rng = np.random.default_rng(seed)
    mask = rng.random((M, N, T)) < 0.2
    m, n, t = np.nonzero(mask)
    return InteractionTensor([f"u{i}" for i in range(M)], [f"i{i}" for i in range(N)],
                             TimeGrid(0, 1, T), m, n, t, rng.integers(1, 6, m.size).astype(float))


def test_split_example_protocol():
    tensor = dense_tensor()
    split = ds.split_by_time(tensor, 2, 0.05, seed=3)
    assert split.train_windows == 14 and split.train.t.max() == 13
    held = int(np.sum(tensor.t >= 14))
    assert split.validation.nnz == round(0.05 * held)
    assert set(split.validation.t) <= {14, 15} and list(split.test_windows) == [14, 15]


def test_split_determinism_and_boundaries():
    tensor = dense_tensor()
    a, b = ds.split_by_time(tensor, 2, 0.1, 9), ds.split_by_time(tensor, 2, 0.1, 9)
    assert np.array_equal(a.validation.keys, b.validation.keys)
    empty = ds.split_by_time(tensor, 2, 0.0)
    assert empty.validation.nnz == 0 and empty.test.nnz == int(np.sum(tensor.t >= 14))
    with pytest.raises(ds.SplitError):
        ds.split_by_time(tensor, 16)
    with pytest.raises(ds.SplitError):
        ds.split_by_time(tensor_from([(0, 0, 0, 1.0)], T=4), 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 15), st.floats(0.0, 0.9))
def test_split_partitions_cells(seed, H, f):
    tensor = dense_tensor(seed % 7)
    split = ds.split_by_time(tensor, H, f, seed)
    parts = [split.train.keys, split.validation.keys, split.test.keys]
    joined = np.concatenate(parts)
    assert joined.size == tensor.nnz
    assert np.array_equal(np.sort(joined), tensor.keys)


def test_static_split():
    split = ds.static_split(ds.split_by_time(dense_tensor(), 2, 0.05))
    assert split.static and split.train_windows == 1 and split.train.T == 1
    pairs = split.train.m * split.train.N + split.train.n
    assert np.unique(pairs).size == pairs.size


# ---------------------------------------------------------------------------
# files


def test_tensor_and_split_files_round_trip(tmp_path):
    tensor = dense_tensor(M=6, N=5, T=4)
    tensor = InteractionTensor(["a b", "ü", "c", "d", "e", "f"], tensor.items, tensor.grid,
                               tensor.m, tensor.n, tensor.t, tensor.y / 3)
    path = tmp_path / "x.tensor"
    ds.write_tensor(tensor, path)
    back = ds.read_tensor(path)
    assert back.users == tensor.users and back.grid == tensor.grid
    assert np.array_equal(back.y, tensor.y) and np.array_equal(back.keys, tensor.keys)
    split = ds.split_by_time(tensor, 1, 0.3, 2)
    ds.write_split(split, tmp_path / "x.split")
    again = ds.read_split(tmp_path / "x.split", back)
    for name in ("train", "validation", "test"):
        assert np.array_equal(getattr(again, name).keys, getattr(split, name).keys)


def test_tensor_file_errors(tmp_path):
    path = tmp_path / "bad"
    path.write_text("nonsense\n")
    (tmp_path / "bad.ids").write_text(ds.format_ids(["a"], ["b"], TimeGrid(0, 1, 1)))
    with pytest.raises(ds.FormatError):
        ds.read_tensor(path)
    with pytest.raises(ds.FormatError):
        ds.format_ids(["tab\there"], [], TimeGrid(0, 1, 1))
