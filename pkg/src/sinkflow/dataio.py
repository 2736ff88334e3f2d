"""Faction timelines, ground-truth flows, splits and synthetic data.

A timeline is a ``T x N`` integer matrix of faction labels.  From it we build
``T`` marginals (faction shares) and ``T - 1`` transport plans whose
``(i, j)`` entry is the fraction of elements that moved from faction ``i`` to
faction ``j`` between consecutive steps.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataFormatError, DimensionError, InvalidInputError

CSV_HEADER = ("time_step", "element_id", "faction_id")


@dataclass
class FactionTimeline:
    labels: np.ndarray  # (T, N) int
    k: int
    element_ids: list = field(default=None)
    time_steps: list = field(default=None)
    label_mapping: dict = field(default=None)  # original faction id -> contiguous index

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 2:
            raise DimensionError(f"labels must be (T, N), got shape {self.labels.shape}")
        T, N = self.labels.shape
        if N < 1:
            raise InvalidInputError("timeline needs at least one element")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise InvalidInputError(f"labels must lie in [0, {self.k})")
        if self.element_ids is None:
            self.element_ids = list(range(N))
        if self.time_steps is None:
            self.time_steps = list(range(T))
        if len(self.element_ids) != N or len(self.time_steps) != T:
            raise DimensionError("element_ids / time_steps do not match labels shape")

    @property
    def T(self) -> int:
        return self.labels.shape[0]

    @property
    def N(self) -> int:
        return self.labels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FactionTimeline):
            return NotImplemented
        return (
            self.k == other.k
            and np.array_equal(self.labels, other.labels)
            and list(self.element_ids) == list(other.element_ids)
            and list(self.time_steps) == list(other.time_steps)
        )


@dataclass
class FlowData:
    """Marginals ``(T, k)``, plans ``(T-1, k, k)`` and optionally the element labels behind them."""

    marginals: np.ndarray
    plans: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.marginals = np.asarray(self.marginals, dtype=np.float64)
        self.plans = np.asarray(self.plans, dtype=np.float64)
        if self.marginals.ndim != 2 or self.plans.ndim != 3:
            raise DimensionError("marginals must be (T, k) and plans (T-1, k, k)")
        T, k = self.marginals.shape
        if self.plans.shape != (T - 1, k, k):
            raise DimensionError(f"plans shape {self.plans.shape} does not match marginals {self.marginals.shape}")

    @property
    def k(self) -> int:
        return self.marginals.shape[1]

    @property
    def n_plans(self) -> int:
        return self.plans.shape[0]

    @classmethod
    def from_timeline(cls, tl: FactionTimeline) -> "FlowData":
        marginals, plans = build_marginals_and_plans(tl)
        return cls(marginals, plans, tl.labels)


@dataclass(frozen=True)
class SplitSpec:
    train_len: int
    val_len: int
    test_len: int

    def __post_init__(self):
        if min(self.train_len, self.val_len, self.test_len) < 0:
            raise ConfigurationError("split lengths must be nonnegative")

    @property
    def total(self) -> int:
        return self.train_len + self.val_len + self.test_len


PARLIAMENT_SPLIT = SplitSpec(130, 10, 24)
EU_EMAIL_SPLIT = SplitSpec(85, 5, 26)


@dataclass
class SyntheticSpec:
    k: int
    N: int
    T: int
    kernel: list  # k x k row-stochastic
    seed: int = 0
    drift: list | None = None  # optional list of kernels, cycled per step
    initial: list | None = None  # initial faction shares; uniform if None

    def kernels(self) -> list[np.ndarray]:
        ks = [np.asarray(self.kernel, dtype=np.float64)]
        if self.drift:
            ks = [np.asarray(K, dtype=np.float64) for K in self.drift]
        return ks

    def validate(self):
        if self.k < 2 or self.N < 1 or self.T < 2:
            raise ConfigurationError("synthetic spec needs k >= 2, N >= 1, T >= 2")
        for K in self.kernels():
            if K.shape != (self.k, self.k):
                raise DimensionError(f"kernel shape {K.shape} != ({self.k}, {self.k})")
            if np.any(K < 0) or not np.allclose(K.sum(axis=1), 1.0, atol=1e-12, rtol=0):
                raise ConfigurationError("every kernel row must be a probability vector")
        if self.initial is not None:
            p = np.asarray(self.initial, dtype=np.float64)
            if p.shape != (self.k,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
                raise ConfigurationError("initial shares must be a length-k probability vector")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**{key: d[key] for key in d if key in cls.__dataclass_fields__})

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "N": self.N,
            "T": self.T,
            "kernel": np.asarray(self.kernel, dtype=float).tolist(),
            "seed": self.seed,
            "drift": None if self.drift is None else [np.asarray(K, dtype=float).tolist() for K in self.drift],
            "initial": None if self.initial is None else list(map(float, self.initial)),
        }


# ---------------------------------------------------------------------------
# ingestion


def _parse_int(text: str, line_no: int, column: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise DataFormatError(f"line {line_no}: {column} must be an integer, got {text!r}") from None


def read_timeline_csv(source, remap_labels: bool = True) -> FactionTimeline:
    """Parse a ``time_step,element_id,faction_id`` CSV (path or text stream).

    Faction ids that are not already ``0..k-1`` are remapped in sorted order;
    the mapping is kept on ``label_mapping``.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_timeline_csv(fh, remap_labels)

    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise DataFormatError(f"expected header {','.join(CSV_HEADER)}, got {header}")
    cells: dict[tuple[int, int], int] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise DataFormatError(f"line {line_no}: expected 3 columns, got {len(row)}")
        t = _parse_int(row[0], line_no, "time_step")
        e = _parse_int(row[1], line_no, "element_id")
        f = _parse_int(row[2], line_no, "faction_id")
        if (t, e) in cells:
            raise DataFormatError(f"line {line_no}: duplicate cell (time_step={t}, element_id={e})")
        cells[(t, e)] = f
    if not cells:
        raise DataFormatError("timeline file has no rows")

    times = sorted({t for t, _ in cells})
    elements = sorted({e for _, e in cells})
    missing = [(t, e) for t in times for e in elements if (t, e) not in cells]
    if missing:
        shown = ", ".join(f"(t={t}, e={e})" for t, e in missing[:10])
        raise DataFormatError(f"{len(missing)} missing (time_step, element_id) cells; first: {shown}")

    raw = np.array([[cells[(t, e)] for e in elements] for t in times], dtype=np.int64)
    factions = np.unique(raw)
    mapping = None
    contiguous = factions.min() >= 0 and factions.max() < len(factions)
    if remap_labels and not contiguous:
        mapping = {int(f): i for i, f in enumerate(factions)}
        labels = np.searchsorted(factions, raw)
        k = len(factions)
    elif factions.min() >= 0:
        # unused ids below the maximum are kept as empty factions
        k = max(int(factions.max()) + 1, 2)
        labels = raw
    else:
        raise DataFormatError("negative faction ids need remapping")
    return FactionTimeline(labels, k, elements, times, mapping)


def write_timeline_csv(tl: FactionTimeline, dest) -> None:
    """Write a timeline in the CSV schema, sorted by time then element."""
    if isinstance(dest, (str, os.PathLike)):
        buf = io.StringIO()
        write_timeline_csv(tl, buf)
        atomic_write_text(dest, buf.getvalue())
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for ti, t in enumerate(tl.time_steps):
        for ei, e in enumerate(tl.element_ids):
            writer.writerow((t, e, int(tl.labels[ti, ei])))


def ingest(path, remap_labels: bool = True) -> FactionTimeline:
    return read_timeline_csv(path, remap_labels)


def relabel_max_overlap(labels: np.ndarray) -> np.ndarray:
    """Greedily align faction ids across steps by maximum member overlap.

    Optional preprocessing for label sets produced independently per step
    (e.g. by a community detector).  Each step's factions are matched to the
    previous step's ids in decreasing order of overlap; unmatched factions get
    fresh ids.
    """
    labels = np.asarray(labels, dtype=np.int64)
    out = np.empty_like(labels)
    out[0] = labels[0]
    next_id = int(labels[0].max()) + 1
    for t in range(1, labels.shape[0]):
        prev, cur = out[t - 1], labels[t]
        pairs = []
        for c in np.unique(cur):
            members = cur == c
            ids, counts = np.unique(prev[members], return_counts=True)
            pairs.extend((int(n), int(c), int(p)) for p, n in zip(ids, counts))
        pairs.sort(key=lambda x: (-x[0], x[1], x[2]))
        assign, used = {}, set()
        for _, c, p in pairs:
            if c not in assign and p not in used:
                assign[c] = p
                used.add(p)
        for c in np.unique(cur):
            if int(c) not in assign:
                assign[int(c)] = next_id
                next_id += 1
        out[t] = np.array([assign[int(c)] for c in cur])
    # compact to 0..k-1 preserving first-appearance order
    _, inverse = np.unique(out, return_inverse=True)
    return inverse.reshape(out.shape)


# ---------------------------------------------------------------------------
# ground truth


def build_counts(tl: FactionTimeline):
    """Integer member counts ``(T, k)`` and transition counts ``(T-1, k, k)``."""
    L = tl.labels
    T, N = L.shape
    k = tl.k
    counts = np.zeros((T, k), dtype=np.int64)
    for t in range(T):
        counts[t] = np.bincount(L[t], minlength=k)
    flows = np.zeros((max(T - 1, 0), k, k), dtype=np.int64)
    for t in range(T - 1):
        np.add.at(flows[t], (L[t], L[t + 1]), 1)
    return counts, flows


def build_marginals_and_plans(tl: FactionTimeline):
    """Return ``(marginals (T, k), plans (T-1, k, k))`` as fractions of the population."""
    counts, flows = build_counts(tl)
    return counts / tl.N, flows / tl.N


def check_plan(plan, x_now, x_next, atol: float = 1e-12) -> None:
    plan = np.asarray(plan)
    if np.any(plan < 0):
        raise InvalidInputError("plan has negative entries")
    if not np.allclose(plan.sum(axis=1), x_now, atol=atol, rtol=0):
        raise InvalidInputError("plan row sums do not match the current marginal")
    if not np.allclose(plan.sum(axis=0), x_next, atol=atol, rtol=0):
        raise InvalidInputError("plan column sums do not match the next marginal")


# ---------------------------------------------------------------------------
# synthetic data


def generate_synthetic(spec: SyntheticSpec) -> FactionTimeline:
    """Sample a timeline where each element switches faction by the kernel row of its current faction."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    kernels = spec.kernels()
    cdfs = [np.cumsum(K, axis=1) for K in kernels]
    p0 = np.full(spec.k, 1.0 / spec.k) if spec.initial is None else np.asarray(spec.initial, dtype=float)
    labels = np.empty((spec.T, spec.N), dtype=np.int64)
    labels[0] = rng.choice(spec.k, size=spec.N, p=p0)
    for t in range(spec.T - 1):
        cdf = cdfs[t % len(cdfs)]
        u = rng.random(spec.N)
        rows = cdf[labels[t]]
        nxt = (u[:, None] >= rows).sum(axis=1)
        labels[t + 1] = np.minimum(nxt, spec.k - 1)
    return FactionTimeline(labels, spec.k)


def empirical_kernel(tl: FactionTimeline) -> np.ndarray:
    """Row-normalized transition counts pooled over all steps."""
    counts = np.zeros((tl.k, tl.k))
    for t in range(tl.T - 1):
        np.add.at(counts, (tl.labels[t], tl.labels[t + 1]), 1)
    sums = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)


# ---------------------------------------------------------------------------
# splits


def split(n_plans: int, spec: SplitSpec) -> tuple[range, range, range]:
    """Contiguous chronological index ranges over the plans: train, validation, test."""
    if spec.total > n_plans:
        raise ConfigurationError(
            f"split needs {spec.total} plans but only {n_plans} are available (short by {spec.total - n_plans})"
        )
    a = spec.train_len
    b = a + spec.val_len
    c = b + spec.test_len
    return range(0, a), range(a, b), range(b, c)


# ---------------------------------------------------------------------------
# JSON


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, doc) -> None:
    atomic_write_text(path, dumps(doc))


def flows_to_dict(data: FlowData) -> dict:
    return {"k": data.k, "marginals": data.marginals.tolist(), "plans": data.plans.tolist()}


def flows_from_dict(doc: dict) -> FlowData:
    try:
        k = int(doc["k"])
        data = FlowData(doc["marginals"], doc["plans"])
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"malformed flows document: {exc}") from None
    if data.k != k:
        raise DataFormatError(f"declared k={k} but marginals have {data.k} columns")
    return data


def load_flows(path) -> FlowData:
    """Load either a flows JSON dump or a timeline CSV."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        with open(path, encoding="utf-8") as fh:
            return flows_from_dict(json.load(fh))
    return FlowData.from_timeline(read_timeline_csv(path))
