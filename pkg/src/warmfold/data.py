"""Interaction logs, binary interaction matrices, degree weights and temporal splits."""

from __future__ import annotations

import os
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    ColdUserError,
    DegenerateSplitError,
    DimensionError,
    EmptyInputError,
    ParseError,
)

FORMATS = ("auto", "csv", "tsv", "ml1m")


@dataclass(frozen=True)
class InteractionLog:
    """Timestamped (user, item) events over dense 0-based indices.

    ``user_ids`` / ``item_ids`` map dense indices back to the raw identifiers
    (first-appearance order). Subsets produced by splitting share the maps, so
    ``n_users`` and ``n_items`` always describe the full index space.
    """

    users: np.ndarray
    items: np.ndarray
    timestamps: np.ndarray
    user_ids: np.ndarray
    item_ids: np.ndarray

    def __len__(self):
        return len(self.users)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def dims(self) -> tuple[int, int]:
        return self.n_users, self.n_items

    def subset(self, mask) -> "InteractionLog":
        return InteractionLog(
            self.users[mask], self.items[mask], self.timestamps[mask],
            self.user_ids, self.item_ids,
        )

    def concat(self, other: "InteractionLog") -> "InteractionLog":
        if other.dims != self.dims:
            raise DimensionError(f"cannot concatenate logs with dims {self.dims} and {other.dims}")
        return InteractionLog(
            np.concatenate([self.users, other.users]),
            np.concatenate([self.items, other.items]),
            np.concatenate([self.timestamps, other.timestamps]),
            self.user_ids, self.item_ids,
        )


def from_arrays(users, items, timestamps, n_users=None, n_items=None) -> InteractionLog:
    """Build a log directly from index arrays (ids are the indices themselves)."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    timestamps = np.asarray(timestamps, dtype=np.int64)
    if not (len(users) == len(items) == len(timestamps)):
        raise DimensionError("users, items and timestamps must have equal length")
    if n_users is None:
        n_users = int(users.max()) + 1 if len(users) else 0
    if n_items is None:
        n_items = int(items.max()) + 1 if len(items) else 0
    return InteractionLog(
        users, items, timestamps,
        np.arange(n_users).astype(str), np.arange(n_items).astype(str),
    )


def _detect_format(line: str) -> str:
    if "::" in line:
        return "ml1m"
    if "\t" in line:
        return "tsv"
    return "csv"


def _split_fields(line, fmt):
    if fmt == "ml1m":
        return line.split("::")
    return line.split("\t" if fmt == "tsv" else ",")


def ingest(path, format: str = "auto") -> InteractionLog:
    """Read a delimited interaction file.

    Accepted layouts are ``user,item,timestamp`` (comma or tab separated) and
    MovieLens ``user::item::rating::timestamp``. A 4-column CSV/TSV is read as
    ``user,item,rating,timestamp`` with the rating dropped. A header line is
    detected by a non-integer timestamp field; lines starting with ``#`` are
    skipped. Duplicate events are kept.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    if not os.path.exists(path):
        raise FileNotFoundError(path)

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users, items, stamps = [], [], []
    fmt = None if format == "auto" else format
    first_data_line = True

    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if fmt is None:
                fmt = _detect_format(line)
            fields = [f.strip() for f in _split_fields(line, fmt)]
            if len(fields) == 3:
                u, i, t = fields
            elif len(fields) == 4:
                u, i, _, t = fields
            else:
                raise ParseError(f"expected 3 or 4 fields, got {len(fields)}", lineno)
            try:
                ts = int(t)
            except ValueError:
                if first_data_line:
                    first_data_line = False
                    continue
                raise ParseError(f"timestamp {t!r} is not an integer", lineno) from None
            first_data_line = False
            if not u or not i:
                raise ParseError("empty user or item field", lineno)
            users.append(user_index.setdefault(u, len(user_index)))
            items.append(item_index.setdefault(i, len(item_index)))
            stamps.append(ts)

    if not users:
        raise EmptyInputError(f"{path}: no interaction records")
    return InteractionLog(
        np.asarray(users, dtype=np.int64),
        np.asarray(items, dtype=np.int64),
        np.asarray(stamps, dtype=np.int64),
        np.asarray(list(user_index), dtype=object),
        np.asarray(list(item_index), dtype=object),
    )


def filter_min_counts(log: InteractionLog, min_user: int = 0, min_item: int = 0) -> InteractionLog:
    """Repeatedly drop users/items with fewer events than the thresholds, then re-compact."""
    if min_user <= 0 and min_item <= 0:
        return log
    keep = np.ones(len(log), dtype=bool)
    while True:
        u_counts = np.bincount(log.users[keep], minlength=log.n_users)
        i_counts = np.bincount(log.items[keep], minlength=log.n_items)
        new_keep = keep & (u_counts[log.users] >= min_user) & (i_counts[log.items] >= min_item)
        if new_keep.sum() == keep.sum():
            break
        keep = new_keep
    if not keep.any():
        raise EmptyInputError("count filters removed every event")

    users, items = log.users[keep], log.items[keep]
    # np.unique sorts, which preserves first-appearance order of the original compaction
    u_old, u_new = np.unique(users, return_inverse=True)
    i_old, i_new = np.unique(items, return_inverse=True)
    return InteractionLog(
        u_new.astype(np.int64), i_new.astype(np.int64), log.timestamps[keep],
        log.user_ids[u_old], log.item_ids[i_old],
    )


@dataclass(frozen=True)
class TemporalSplit:
    train: InteractionLog
    warm: InteractionLog
    test: InteractionLog
    boundaries: tuple[int, int]

    def counts(self) -> tuple[int, int, int]:
        return len(self.train), len(self.warm), len(self.test)


def temporal_split(log: InteractionLog, fractions=(0.8, 0.1, 0.1)) -> TemporalSplit:
    """Cut the log at two timestamps so that subset sizes best match ``fractions``.

    Boundaries fall between distinct timestamps, so all events sharing a
    timestamp land in the same (earlier) subset.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    if len(log) == 0:
        raise EmptyInputError("cannot split an empty log")

    stamps, counts = np.unique(log.timestamps, return_counts=True)
    if len(stamps) < 2:
        raise DegenerateSplitError("all events share one timestamp")
    cum = np.cumsum(counts)
    n = len(log)
    last = len(stamps) - 2  # the final timestamp always belongs to test

    target1 = fractions[0] * n
    j1 = int(np.argmin(np.abs(cum[: last + 1] - target1)))
    target2 = (fractions[0] + fractions[1]) * n
    if j1 + 1 <= last:
        j2 = j1 + 1 + int(np.argmin(np.abs(cum[j1 + 1 : last + 1] - target2)))
    else:
        j2 = j1
    t1, t2 = int(stamps[j1]), int(stamps[j2])

    ts = log.timestamps
    return TemporalSplit(
        train=log.subset(ts <= t1),
        warm=log.subset((ts > t1) & (ts <= t2)),
        test=log.subset(ts > t2),
        boundaries=(t1, t2),
    )


def write_manifest(split: TemporalSplit, path, **extra) -> None:
    n_train, n_warm, n_test = split.counts()
    lines = [
        f"t1={split.boundaries[0]}",
        f"t2={split.boundaries[1]}",
        f"train_events={n_train}",
        f"warm_events={n_warm}",
        f"test_events={n_test}",
        f"users={split.train.n_users}",
        f"items={split.train.n_items}",
    ]
    lines += [f"{k}={v}" for k, v in extra.items()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.rstrip("\n").split("=", 1)
                out[k] = v
    return out


def build_matrix(log: InteractionLog, dims=None) -> sp.csr_matrix:
    """Binary CSR matrix of the log; duplicate (u, i) pairs collapse to one entry."""
    n_users, n_items = log.dims if dims is None else dims
    if len(log):
        if log.users.min() < 0 or log.users.max() >= n_users:
            raise DimensionError(f"user index out of range for {n_users} rows")
        if log.items.min() < 0 or log.items.max() >= n_items:
            raise DimensionError(f"item index out of range for {n_items} columns")
    data = np.ones(len(log), dtype=np.float64)
    mat = sp.csr_matrix((data, (log.users, log.items)), shape=(n_users, n_items))
    mat.sum_duplicates()
    mat.data[:] = 1.0
    mat.sort_indices()
    return mat


def user_beta(degrees) -> np.ndarray:
    """sqrt(d + 1) / d, NaN where d == 0."""
    d = np.asarray(degrees, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.sqrt(d + 1.0) / d
    return np.where(d > 0, beta, np.nan)


def item_beta(degrees) -> np.ndarray:
    """1 / sqrt(d + 1)."""
    return 1.0 / np.sqrt(np.asarray(degrees, dtype=np.float64) + 1.0)


@dataclass(frozen=True)
class GraphStats:
    user_degrees: np.ndarray
    item_degrees: np.ndarray
    beta_u: np.ndarray
    beta_i: np.ndarray

    @property
    def user_defined(self) -> np.ndarray:
        """Mask of users with a finite beta_u (degree >= 1)."""
        return self.user_degrees > 0

    @classmethod
    def from_degrees(cls, user_degrees, item_degrees) -> "GraphStats":
        du = np.asarray(user_degrees, dtype=np.int64)
        di = np.asarray(item_degrees, dtype=np.int64)
        return cls(du, di, user_beta(du), item_beta(di))


def graph_stats(matrix: sp.csr_matrix) -> GraphStats:
    return GraphStats.from_degrees(matrix.getnnz(axis=1), matrix.getnnz(axis=0))


def group_items_by_user(log: InteractionLog) -> dict[int, np.ndarray]:
    """user index -> sorted unique item indices."""
    if len(log) == 0:
        return {}
    order = np.lexsort((log.items, log.users))
    users, items = log.users[order], log.items[order]
    cuts = np.flatnonzero(np.diff(users)) + 1
    out = {}
    for u_block, i_block in zip(np.split(users, cuts), np.split(items, cuts)):
        out[int(u_block[0])] = np.unique(i_block)
    return out


def merge_for_foldin(train: sp.csr_matrix, warm, user: int):
    """Union of a user's train row and warm events.

    ``warm`` is either an :class:`InteractionLog` or a mapping produced by
    :func:`group_items_by_user`. Returns ``(items, degree, beta_u)`` where
    ``items`` is the sorted support of the binary vector a_u.
    """
    row = train.indices[train.indptr[user] : train.indptr[user + 1]]
    if isinstance(warm, Mapping):
        extra = warm.get(user, np.empty(0, dtype=np.int64))
    else:
        extra = warm.items[warm.users == user]
    items = np.union1d(row, extra).astype(np.int64)
    if len(items) == 0:
        raise ColdUserError(f"user {user} has no train or warm interactions")
    degree = len(items)
    return items, degree, float(np.sqrt(degree + 1.0) / degree)
