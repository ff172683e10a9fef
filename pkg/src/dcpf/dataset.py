"""Time-stamped rating events, time-window discretisation and splits.

Events are parsed from delimiter-separated text, binned onto an equal-width
:class:`TimeGrid`, deduplicated into a sparse :class:`InteractionTensor` of
nonzero (user, item, window) cells, and split by trailing windows.
"""
from __future__ import annotations

import io
import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np

logger = logging.getLogger(__name__)

TENSOR_MAGIC = "DCPF-TENSOR v1"
SPLIT_MAGIC = "DCPF-SPLIT v1"

WITHIN_WINDOW_POLICIES = ("keep_first", "keep_last", "sum")
ACROSS_WINDOW_POLICIES = ("none", "keep_first", "keep_last")


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    """Too many malformed lines; ``line_errors`` holds (line number, message)."""

    def __init__(self, message: str, line_errors: list[tuple[int, str]]):
        super().__init__(message)
        self.line_errors = line_errors


class RangeError(ValueError):
    pass


class SplitError(ValueError):
    pass


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class RatingEvent:
    user_id: str
    item_id: str
    timestamp: int
    value: float = 1.0


@dataclass(frozen=True)
class Schema:
    """Column mapping for delimited input.

    Columns are zero-based positions or, when ``header`` is set, header names.
    ``value=None`` means every event is binary with value 1.
    """

    user: int | str = 0
    item: int | str = 1
    timestamp: int | str = 2
    value: int | str | None = 3
    delimiter: str = ","
    header: bool = False


def _resolve_columns(schema: Schema, header_fields: list[str] | None) -> dict[str, int | None]:
    cols: dict[str, int | None] = {}
    for role in ("user", "item", "timestamp", "value"):
        spec = getattr(schema, role)
        if spec is None:
            if role != "value":
                raise SchemaError(f"column for {role!r} is required")
            cols[role] = None
        elif isinstance(spec, str) and not spec.isdigit():
            if header_fields is None:
                raise SchemaError(f"named column {spec!r} needs a header line")
            if spec not in header_fields:
                raise SchemaError(f"missing required column {spec!r} in header {header_fields}")
            cols[role] = header_fields.index(spec)
        else:
            cols[role] = int(spec)
    return cols


def _parse_timestamp(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"timestamp {text!r} is not an integer") from None
        return int(value)


def parse_events(
    stream: TextIO | Iterable[str],
    schema: Schema | None = None,
    max_bad_fraction: float = 0.01,
) -> list[RatingEvent]:
    """Parse one :class:`RatingEvent` per well-formed line.

    Malformed lines are logged with their line number.  If more than
    ``max_bad_fraction`` of the data lines are malformed a :class:`ParseError`
    is raised carrying every line error.
    """
    schema = schema or Schema()
    lines = iter(stream)
    header_fields = None
    lineno = 0
    if schema.header:
        for raw in lines:
            lineno += 1
            if raw.strip():
                header_fields = [f.strip() for f in raw.rstrip("\r\n").split(schema.delimiter)]
                break
    cols = _resolve_columns(schema, header_fields)
    required = max(cols["user"], cols["item"], cols["timestamp"])

    events: list[RatingEvent] = []
    errors: list[tuple[int, str]] = []
    n_data = 0
    for raw in lines:
        lineno += 1
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        n_data += 1
        fields = [f.strip() for f in line.split(schema.delimiter)]
        try:
            if len(fields) <= required:
                raise ValueError(f"expected at least {required + 1} fields, got {len(fields)}")
            user, item = fields[cols["user"]], fields[cols["item"]]
            if not user or not item:
                raise ValueError("empty user or item id")
            ts = _parse_timestamp(fields[cols["timestamp"]])
            vcol = cols["value"]
            if vcol is None or vcol >= len(fields) or fields[vcol] == "":
                value = 1.0
            else:
                value = float(fields[vcol])
                if not math.isfinite(value):
                    raise ValueError(f"non-finite value {fields[vcol]!r}")
        except ValueError as exc:
            errors.append((lineno, str(exc)))
            logger.warning("line %d: %s", lineno, exc)
            continue
        events.append(RatingEvent(user, item, ts, value))

    if errors and len(errors) > max_bad_fraction * n_data:
        raise ParseError(
            f"{len(errors)} of {n_data} lines malformed (first at line {errors[0][0]}: {errors[0][1]})",
            errors,
        )
    return events


def write_events(tensor: "InteractionTensor", stream: TextIO, delimiter: str = ","):
    """Serialise tensor cells as events stamped at the start of their window."""
    for m, n, t, y in zip(tensor.m, tensor.n, tensor.t, tensor.y):
        ts = tensor.grid.origin + int(t) * tensor.grid.window_length
        stream.write(
            delimiter.join([tensor.users[m], tensor.items[n], str(ts), format_value(y)]) + "\n"
        )


def format_value(y: float) -> str:
    """Shortest round-tripping positional decimal."""
    return np.format_float_positional(float(y), unique=True, trim="-")


# ---------------------------------------------------------------------------
# time grid


@dataclass(frozen=True)
class TimeGrid:
    """Contiguous equal-width windows ``[origin + t L, origin + (t+1) L)``."""

    origin: int
    window_length: int
    num_windows: int

    def __post_init__(self):
        if self.window_length < 1:
            raise ValueError(f"window_length must be >= 1, got {self.window_length}")
        if self.num_windows < 1:
            raise ValueError(f"num_windows must be >= 1, got {self.num_windows}")

    @property
    def end(self) -> int:
        return self.origin + self.window_length * self.num_windows

    def contains(self, timestamp) -> np.ndarray:
        ts = np.asarray(timestamp, dtype=np.int64)
        return (ts >= self.origin) & (ts < self.end)

    def window_index(self, timestamp):
        ts = np.asarray(timestamp, dtype=np.int64)
        if not np.all(self.contains(ts)):
            bad = ts[~self.contains(ts)].reshape(-1)[0]
            raise RangeError(f"timestamp {bad} outside [{self.origin}, {self.end})")
        out = (ts - self.origin) // self.window_length
        return int(out) if out.ndim == 0 else out

    @classmethod
    def from_span(
        cls,
        first: int,
        last: int,
        num_windows: int | None = None,
        window_length: int | None = None,
    ) -> "TimeGrid":
        """Grid covering the inclusive span ``[first, last]``.

        ``num_windows`` takes precedence over ``window_length``.
        """
        span = int(last) - int(first) + 1
        if span < 1:
            raise ValueError("empty time span")
        if num_windows is not None:
            return cls(int(first), -(-span // int(num_windows)), int(num_windows))
        if window_length is not None:
            return cls(int(first), int(window_length), -(-span // int(window_length)))
        raise ValueError("give num_windows or window_length")

    @classmethod
    def from_events(cls, events: list[RatingEvent], num_windows=None, window_length=None) -> "TimeGrid":
        if not events:
            raise ValueError("cannot build a grid from no events")
        ts = [e.timestamp for e in events]
        return cls.from_span(min(ts), max(ts), num_windows, window_length)

    def to_dict(self) -> dict:
        return {"origin": self.origin, "window_length": self.window_length, "num_windows": self.num_windows}


# ---------------------------------------------------------------------------
# sparse tensor


@dataclass(eq=False)
class InteractionTensor:
    """Nonzero (user, item, window) cells with dense index maps.

    Cells are kept sorted by (t, m, n).  ``users[m]`` and ``items[n]`` hold
    the original ids.
    """

    users: list[str]
    items: list[str]
    grid: TimeGrid
    m: np.ndarray
    n: np.ndarray
    t: np.ndarray
    y: np.ndarray
    _window_starts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.int64)
        self.n = np.asarray(self.n, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=float)
        if not (self.m.shape == self.n.shape == self.t.shape == self.y.shape):
            raise ValueError("cell arrays must have equal length")
        if self.nnz:
            if self.m.min() < 0 or self.m.max() >= self.M:
                raise ValueError("user index out of range")
            if self.n.min() < 0 or self.n.max() >= self.N:
                raise ValueError("item index out of range")
            if self.t.min() < 0 or self.t.max() >= self.T:
                raise ValueError("window index out of range")
            if np.any(self.y == 0):
                raise ValueError("stored cells must be nonzero")
        order = np.lexsort((self.n, self.m, self.t))
        self.m, self.n, self.t, self.y = self.m[order], self.n[order], self.t[order], self.y[order]
        keys = self.keys
        if keys.size > 1 and np.any(keys[1:] == keys[:-1]):
            raise ValueError("duplicate (user, item, window) cells")
        self._window_starts = np.searchsorted(self.t, np.arange(self.T + 1))

    @property
    def M(self) -> int:
        return len(self.users)

    @property
    def N(self) -> int:
        return len(self.items)

    @property
    def T(self) -> int:
        return self.grid.num_windows

    @property
    def nnz(self) -> int:
        return int(self.y.size)

    @property
    def keys(self) -> np.ndarray:
        """Flat cell keys, increasing in (t, m, n)."""
        return (self.t * self.M + self.m) * self.N + self.n

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.users)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.items)}

    def window_slice(self, t: int) -> slice:
        return slice(int(self._window_starts[t]), int(self._window_starts[t + 1]))

    def window_nnz(self) -> np.ndarray:
        return np.diff(self._window_starts)

    def sparsity(self) -> np.ndarray:
        """1 - nnz(t) / (M N) per window."""
        return 1.0 - self.window_nnz() / float(self.M * self.N)

    @cached_property
    def user_cells(self) -> list[np.ndarray]:
        """Cell positions grouped by user."""
        order = np.argsort(self.m, kind="stable")
        bounds = np.searchsorted(self.m[order], np.arange(self.M + 1))
        return [order[bounds[i]:bounds[i + 1]] for i in range(self.M)]

    @cached_property
    def item_cells(self) -> list[np.ndarray]:
        order = np.argsort(self.n, kind="stable")
        bounds = np.searchsorted(self.n[order], np.arange(self.N + 1))
        return [order[bounds[i]:bounds[i + 1]] for i in range(self.N)]

    def select(self, mask_or_index) -> "InteractionTensor":
        """Subset of cells sharing the same maps and grid."""
        return InteractionTensor(
            self.users, self.items, self.grid,
            self.m[mask_or_index], self.n[mask_or_index], self.t[mask_or_index], self.y[mask_or_index],
        )

    def with_grid(self, grid: TimeGrid, t: np.ndarray) -> "InteractionTensor":
        return InteractionTensor(self.users, self.items, grid, self.m, self.n, t, self.y)

    def cell_set(self) -> set[tuple[str, str, int, float]]:
        """Cells keyed by original ids, for label-independent comparison."""
        return {
            (self.users[m], self.items[n], int(t), float(y))
            for m, n, t, y in zip(self.m, self.n, self.t, self.y)
        }

    def same_cells(self, other: "InteractionTensor") -> bool:
        return self.grid == other.grid and self.cell_set() == other.cell_set()


def discretize(
    events: list[RatingEvent], grid: TimeGrid, dedup: str = "sum"
) -> InteractionTensor:
    """Bin events onto ``grid`` with one value per (user, item, window).

    Dense indices follow first-seen order.  ``keep_first``/``keep_last``
    compare timestamps, breaking ties by input order.  Cells whose resolved
    value is zero are dropped.
    """
    if dedup not in WITHIN_WINDOW_POLICIES:
        raise ValueError(f"dedup must be one of {WITHIN_WINDOW_POLICIES}, got {dedup!r}")
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    cells: dict[tuple[int, int, int], list] = {}
    for i, e in enumerate(events):
        if not (grid.origin <= e.timestamp < grid.end):
            raise RangeError(
                f"event {i} ({e.user_id}, {e.item_id}) at {e.timestamp} outside [{grid.origin}, {grid.end})"
            )
        m = users.setdefault(e.user_id, len(users))
        n = items.setdefault(e.item_id, len(items))
        t = (e.timestamp - grid.origin) // grid.window_length
        key = (m, n, t)
        cur = cells.get(key)
        if cur is None:
            cells[key] = [e.timestamp, e.value]
        elif dedup == "sum":
            cur[1] += e.value
        elif dedup == "keep_first":
            if e.timestamp < cur[0]:
                cells[key] = [e.timestamp, e.value]
        elif e.timestamp >= cur[0]:
            cells[key] = [e.timestamp, e.value]

    kept = [(k, v[1]) for k, v in cells.items() if v[1] != 0]
    arr = np.array([k for k, _ in kept], dtype=np.int64).reshape(-1, 3)
    return InteractionTensor(
        list(users), list(items), grid, arr[:, 0], arr[:, 1], arr[:, 2],
        np.array([v for _, v in kept], dtype=float),
    )


def dedup_across_windows(tensor: InteractionTensor, policy: str = "keep_first") -> InteractionTensor:
    """Keep one cell per (user, item) pair across windows."""
    if policy not in ACROSS_WINDOW_POLICIES:
        raise ValueError(f"policy must be one of {ACROSS_WINDOW_POLICIES}, got {policy!r}")
    if policy == "none" or tensor.nnz == 0:
        return tensor
    pair = tensor.m * tensor.N + tensor.n
    # cells are sorted by t, so a stable sort by pair keeps windows ordered
    order = np.argsort(pair, kind="stable")
    sorted_pair = pair[order]
    if policy == "keep_first":
        first = np.ones(order.size, dtype=bool)
        first[1:] = sorted_pair[1:] != sorted_pair[:-1]
    else:
        first = np.ones(order.size, dtype=bool)
        first[:-1] = sorted_pair[1:] != sorted_pair[:-1]
    return tensor.select(np.sort(order[first]))


def collapse_windows(tensor: InteractionTensor, policy: str = "keep_first") -> InteractionTensor:
    """Static ablation input: dedup across windows, then one window over the horizon."""
    deduped = dedup_across_windows(tensor, policy)
    grid = TimeGrid(tensor.grid.origin, tensor.grid.window_length * tensor.grid.num_windows, 1)
    return deduped.with_grid(grid, np.zeros(deduped.nnz, dtype=np.int64))


def filter_active(
    tensor: InteractionTensor,
    min_events: int = 5,
    presence_fraction: float = 0.25,
    max_rounds: int = 50,
) -> InteractionTensor:
    """Restrict to entities active early and late with enough events.

    An entity survives if it has at least ``min_events`` cells and appears in
    both the first and the last ``presence_fraction`` of the windows.
    Filtering repeats until stable, then indices are compacted.
    """
    T = tensor.T
    span = max(1, math.ceil(presence_fraction * T))
    early = tensor.t < span
    late = tensor.t >= T - span
    keep = np.ones(tensor.nnz, dtype=bool)
    for _ in range(max_rounds):
        ok_u = _active(tensor.m, keep, early, late, tensor.M, min_events)
        ok_i = _active(tensor.n, keep, early, late, tensor.N, min_events)
        new_keep = keep & ok_u[tensor.m] & ok_i[tensor.n]
        if np.array_equal(new_keep, keep):
            break
        keep = new_keep
    return compact(tensor.select(keep))


def _active(idx, keep, early, late, size, min_events):
    count = np.bincount(idx[keep], minlength=size)
    seen_early = np.bincount(idx[keep & early], minlength=size) > 0
    seen_late = np.bincount(idx[keep & late], minlength=size) > 0
    return (count >= min_events) & seen_early & seen_late


def compact(tensor: InteractionTensor) -> InteractionTensor:
    """Drop entities without cells, keeping first-seen relative order."""
    used_u = np.unique(tensor.m)
    used_i = np.unique(tensor.n)
    map_u = np.full(tensor.M, -1, dtype=np.int64)
    map_u[used_u] = np.arange(used_u.size)
    map_i = np.full(tensor.N, -1, dtype=np.int64)
    map_i[used_i] = np.arange(used_i.size)
    return InteractionTensor(
        [tensor.users[i] for i in used_u], [tensor.items[i] for i in used_i], tensor.grid,
        map_u[tensor.m], map_i[tensor.n], tensor.t, tensor.y,
    )


# ---------------------------------------------------------------------------
# splits


@dataclass
class DataSplit:
    """Train / validation / test partition by trailing windows.

    All three tensors share the id maps.  ``train_windows`` is the model
    horizon: ``T - held_out_windows`` normally, 1 for the static ablation.
    """

    train: InteractionTensor
    validation: InteractionTensor
    test: InteractionTensor
    held_out_windows: int
    train_windows: int
    validation_fraction: float = 0.0
    seed: int = 0
    static: bool = False

    @property
    def grid(self) -> TimeGrid:
        return self.test.grid

    @property
    def test_windows(self) -> range:
        T = self.grid.num_windows
        return range(T - self.held_out_windows, T)


def split_by_time(
    tensor: InteractionTensor, held_out_windows: int, validation_fraction: float = 0.05, seed: int = 0
) -> DataSplit:
    """Hold out the last ``held_out_windows`` windows.

    A seeded uniform ``validation_fraction`` of the held-out cells forms the
    validation set; the remainder is the test set.
    """
    T = tensor.T
    H = int(held_out_windows)
    if not 1 <= H < T:
        raise SplitError(f"held_out_windows must satisfy 1 <= H < T={T}, got {H}")
    if not 0 <= validation_fraction < 1:
        raise SplitError(f"validation_fraction must be in [0, 1), got {validation_fraction}")
    held = tensor.t >= T - H
    held_idx = np.flatnonzero(held)
    if held_idx.size == 0:
        raise SplitError(f"no cells in the last {H} windows")
    rng = np.random.default_rng(seed)
    n_val = int(round(validation_fraction * held_idx.size))
    val_idx = np.sort(rng.choice(held_idx, size=n_val, replace=False))
    is_val = np.zeros(tensor.nnz, dtype=bool)
    is_val[val_idx] = True
    return DataSplit(
        train=tensor.select(~held),
        validation=tensor.select(is_val),
        test=tensor.select(held & ~is_val),
        held_out_windows=H,
        train_windows=T - H,
        validation_fraction=float(validation_fraction),
        seed=int(seed),
    )


def static_split(split: DataSplit, policy: str = "keep_first") -> DataSplit:
    """Same split with the training cells collapsed to a single window."""
    return DataSplit(
        train=collapse_windows(split.train, policy),
        validation=split.validation,
        test=split.test,
        held_out_windows=split.held_out_windows,
        train_windows=1,
        validation_fraction=split.validation_fraction,
        seed=split.seed,
        static=True,
    )


# ---------------------------------------------------------------------------
# file formats


def ids_path(path: str | os.PathLike) -> str:
    return os.fspath(path) + ".ids"


def _check_id(value: str):
    if any(ch in value for ch in "\t\r\n"):
        raise FormatError(f"id {value!r} contains a tab or newline")


def format_tensor(tensor: InteractionTensor) -> str:
    out = io.StringIO()
    out.write(f"{TENSOR_MAGIC}\n{tensor.M} {tensor.N} {tensor.T}\n")
    for m, n, t, y in zip(tensor.m, tensor.n, tensor.t, tensor.y):
        out.write(f"{m} {n} {t} {format_value(y)}\n")
    return out.getvalue()


def format_ids(users: list[str], items: list[str], grid: TimeGrid) -> str:
    out = io.StringIO()
    for section, ids in (("users", users), ("items", items)):
        out.write(f"[{section}]\n")
        for i, value in enumerate(ids):
            _check_id(value)
            out.write(f"{i}\t{value}\n")
    out.write("[grid]\n")
    for key, value in grid.to_dict().items():
        out.write(f"{key}\t{value}\n")
    return out.getvalue()


def parse_ids(text: str) -> tuple[list[str], list[str], TimeGrid]:
    sections: dict[str, list[tuple[str, str]]] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1], [])
            continue
        if current is None or "\t" not in line:
            raise FormatError(f"ids line {lineno}: expected index<TAB>value")
        key, value = line.split("\t", 1)
        current.append((key, value))
    for name in ("users", "items", "grid"):
        if name not in sections:
            raise FormatError(f"ids file lacks a [{name}] section")

    def ordered(rows):
        ids = [None] * len(rows)
        for key, value in rows:
            i = int(key)
            if not 0 <= i < len(rows) or ids[i] is not None:
                raise FormatError(f"bad id index {key}")
            ids[i] = value
        return ids

    grid = TimeGrid(**{k: int(v) for k, v in sections["grid"]})
    return ordered(sections["users"]), ordered(sections["items"]), grid


def write_tensor(tensor: InteractionTensor, path: str | os.PathLike):
    """Write the canonical tensor file and its ``.ids`` sidecar."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_tensor(tensor))
    with open(ids_path(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_ids(tensor.users, tensor.items, tensor.grid))


def read_tensor(path: str | os.PathLike) -> InteractionTensor:
    with open(ids_path(path), encoding="utf-8") as fh:
        users, items, grid = parse_ids(fh.read())
    with open(path, encoding="ascii") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != TENSOR_MAGIC:
            raise FormatError(f"{path}: expected header {TENSOR_MAGIC!r}, got {magic!r}")
        dims = fh.readline().split()
        if len(dims) != 3:
            raise FormatError(f"{path}: expected 'M N T' line")
        M, N, T = (int(d) for d in dims)
        body = fh.read()
    if (M, N, T) != (len(users), len(items), grid.num_windows):
        raise FormatError(f"{path}: dimensions {M} {N} {T} disagree with the ids sidecar")
    rows = np.loadtxt(io.StringIO(body), ndmin=2) if body.strip() else np.zeros((0, 4))
    if rows.shape[1] != 4:
        raise FormatError(f"{path}: expected 'm n t y' rows")
    return InteractionTensor(
        users, items, grid, rows[:, 0].astype(np.int64), rows[:, 1].astype(np.int64),
        rows[:, 2].astype(np.int64), rows[:, 3],
    )


def format_split(split: DataSplit) -> str:
    out = io.StringIO()
    out.write(f"{SPLIT_MAGIC}\n")
    out.write(f"held_out_windows {split.held_out_windows}\n")
    out.write(f"validation_fraction {format_value(split.validation_fraction)}\n")
    out.write(f"seed {split.seed}\n")
    for name in ("train", "validation", "test"):
        part = getattr(split, name)
        for m, n, t in zip(part.m, part.n, part.t):
            out.write(f"{name} {m} {n} {t}\n")
    return out.getvalue()


def write_split(split: DataSplit, path: str | os.PathLike):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_split(split))


def read_split(path: str | os.PathLike, tensor: InteractionTensor) -> DataSplit:
    """Rebuild a split from its manifest and the tensor it was cut from."""
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != SPLIT_MAGIC:
        raise FormatError(f"{path}: expected header {SPLIT_MAGIC!r}")
    meta = {}
    for line in lines[1:4]:
        key, value = line.split()
        meta[key] = value
    index = {int(k): i for i, k in enumerate(tensor.keys)}
    parts: dict[str, list[int]] = {"train": [], "validation": [], "test": []}
    for lineno, line in enumerate(lines[4:], 5):
        name, m, n, t = line.split()
        key = (int(t) * tensor.M + int(m)) * tensor.N + int(n)
        if name not in parts or key not in index:
            raise FormatError(f"{path} line {lineno}: unknown cell or set {line!r}")
        parts[name].append(index[key])
    H = int(meta["held_out_windows"])
    return DataSplit(
        train=tensor.select(np.sort(np.array(parts["train"], dtype=np.int64))),
        validation=tensor.select(np.sort(np.array(parts["validation"], dtype=np.int64))),
        test=tensor.select(np.sort(np.array(parts["test"], dtype=np.int64))),
        held_out_windows=H,
        train_windows=tensor.T - H,
        validation_fraction=float(meta["validation_fraction"]),
        seed=int(meta["seed"]),
    )
