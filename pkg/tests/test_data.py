from collections import Counter, defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warmfold.data import (
    build_matrix,
    filter_min_counts,
    from_arrays,
    graph_stats,
    group_items_by_user,
    ingest,
    item_beta,
    merge_for_foldin,
    read_manifest,
    temporal_split,
    user_beta,
    write_manifest,
)
from warmfold.errors import (
    ColdUserError,
    DegenerateSplitError,
    DimensionError,
    EmptyInputError,
    ParseError,
)


def test_ingest_three_line_csv(write_lines):
    log = ingest(write_lines(["u1,i1,10", "u1,i2,20", "u2,i1,15"]))
    assert (log.n_users, log.n_items, len(log)) == (2, 2, 3)
    assert list(log.user_ids) == ["u1", "u2"]
    assert log.users.tolist() == [0, 0, 1]
    assert log.items.tolist() == [0, 1, 0]
    assert log.timestamps.tolist() == [10, 20, 15]


def test_ingest_keeps_duplicates(write_lines):
    log = ingest(write_lines(["u1,i1,10", "u1,i1,10"]))
    assert len(log) == 2
    assert build_matrix(log).nnz == 1


def test_ingest_header_comments_and_tsv(write_lines):
    path = write_lines(["# exported", "user\titem\ttimestamp", "a\tx\t1", "b\ty\t2"], "e.tsv")
    log = ingest(path)
    assert len(log) == 2 and log.n_users == 2


def test_ingest_movielens_format(write_lines):
    log = ingest(write_lines(["1::1193::5::978300760", "1::661::3::978302109", "2::1193::4::978298413"], "r.dat"))
    assert (log.n_users, log.n_items, len(log)) == (2, 2, 3)
    assert log.timestamps[0] == 978300760


def test_ingest_four_column_csv_drops_rating(write_lines):
    log = ingest(write_lines(["userId,movieId,rating,timestamp", "1,2,3.5,100"]))
    assert log.timestamps.tolist() == [100]


def test_ingest_malformed_line_reports_line_number(write_lines):
    with pytest.raises(ParseError, match="line 3"):
        ingest(write_lines(["u1,i1,10", "u1,i2,20", "u2,i1"]))
    with pytest.raises(ParseError, match="line 2"):
        ingest(write_lines(["u1,i1,10", "u1,i2,later"]))


def test_ingest_empty_file(write_lines):
    with pytest.raises(EmptyInputError):
        ingest(write_lines(["# nothing here"]))


def test_ingest_compaction_is_first_appearance(write_lines):
    log = ingest(write_lines(["z,q,3", "a,p,1", "z,p,2"]))
    assert list(log.user_ids) == ["z", "a"]
    assert list(log.item_ids) == ["q", "p"]


def test_split_exact_proportions():
    log = from_arrays(np.zeros(10), np.arange(10), np.arange(1, 11))
    split = temporal_split(log, (0.8, 0.1, 0.1))
    assert split.train.timestamps.tolist() == list(range(1, 9))
    assert split.warm.timestamps.tolist() == [9]
    assert split.test.timestamps.tolist() == [10]
    assert split.boundaries == (8, 9)


def test_split_ties_go_to_earlier_subset():
    # events 8, 9 and 10 share a timestamp with the 8th event
    ts = [1, 2, 3, 4, 5, 6, 7, 8, 8, 8, 11, 12]
    log = from_arrays(np.zeros(12), np.arange(12), ts)
    split = temporal_split(log, (0.6, 0.2, 0.2))
    all_eight = [t for t in ts if t == 8]
    for part in (split.train, split.warm, split.test):
        got = [t for t in part.timestamps.tolist() if t == 8]
        assert got in ([], all_eight)
    assert split.boundaries[0] < split.boundaries[1]


def test_split_single_timestamp_is_degenerate():
    log = from_arrays([0, 1], [0, 1], [5, 5])
    with pytest.raises(DegenerateSplitError):
        temporal_split(log)


def test_split_rejects_bad_fractions():
    log = from_arrays([0, 1], [0, 1], [1, 2])
    with pytest.raises(ValueError):
        temporal_split(log, (0.5, 0.5, 0.5))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=3, max_size=300))
def test_split_soundness(stamps):
    n = len(stamps)
    log = from_arrays(np.arange(n) % 7, np.arange(n) % 5, stamps)
    if len(set(stamps)) < 2:
        with pytest.raises(DegenerateSplitError):
            temporal_split(log)
        return
    split = temporal_split(log)
    parts = [split.train, split.warm, split.test]
    assert sum(len(p) for p in parts) == n
    t1, t2 = split.boundaries
    assert (split.train.timestamps <= t1).all()
    assert ((split.warm.timestamps > t1) & (split.warm.timestamps <= t2)).all()
    assert (split.test.timestamps > t2).all()
    assert len(split.train) > 0 and len(split.test) > 0
    assert Counter(np.concatenate([p.timestamps for p in parts]).tolist()) == Counter(stamps)


def test_split_proportions_without_ties():
    n = 10_000
    log = from_arrays(np.arange(n) % 100, np.arange(n) % 37, np.arange(n))
    tr, wa, te = temporal_split(log).counts()
    assert abs(tr - 0.8 * n) <= 0.02 * n
    assert abs(wa - 0.1 * n) <= 0.02 * n
    assert abs(te - 0.1 * n) <= 0.02 * n


def test_manifest_roundtrip(tmp_path):
    log = from_arrays(np.zeros(10), np.arange(10), np.arange(1, 11))
    split = temporal_split(log)
    write_manifest(split, tmp_path / "m", data_sha256="abc")
    m = read_manifest(tmp_path / "m")
    assert m["t1"] == "8" and m["t2"] == "9"
    assert m["train_events"] == "8" and m["data_sha256"] == "abc"


def test_build_matrix_small():
    m = build_matrix(from_arrays([0, 0, 1], [0, 1, 0], [1, 2, 3]))
    assert m.shape == (2, 2) and m.nnz == 3
    m = build_matrix(from_arrays([0, 0], [0, 0], [1, 2]))
    assert m.nnz == 1 and m.data.tolist() == [1.0]


def test_build_matrix_out_of_range():
    with pytest.raises(DimensionError):
        build_matrix(from_arrays([0, 3], [0, 1], [1, 2]), dims=(2, 2))


def test_build_matrix_matches_dictionary_count(rng):
    # brute-force oracle: distinct pairs per user via a dict of sets
    n = 100_000
    users = rng.integers(0, 2000, n)
    items = rng.integers(0, 500, n)
    log = from_arrays(users, items, np.arange(n), 2000, 500)
    m = build_matrix(log)
    per_user = defaultdict(set)
    for u, i in zip(users.tolist(), items.tolist()):
        per_user[u].add(i)
    expected = np.array([len(per_user[u]) for u in range(2000)])
    np.testing.assert_array_equal(np.asarray(m.sum(axis=1)).ravel(), expected)
    assert m.nnz == len({(u, i) for u, i in zip(users.tolist(), items.tolist())})
    assert m.has_sorted_indices
    assert set(m.data.tolist()) == {1.0}


def test_betas_hand_values():
    assert item_beta([0])[0] == 1.0
    assert item_beta([3])[0] == 0.5
    assert user_beta([3])[0] == pytest.approx(2 / 3, abs=1e-12)
    assert np.isnan(user_beta([0])[0])


def test_beta_monotone():
    d = np.arange(1, 500)
    assert (np.diff(user_beta(d)) < 0).all()
    assert (np.diff(item_beta(np.arange(0, 500))) < 0).all()
    assert ((item_beta(np.arange(0, 500)) > 0) & (item_beta(np.arange(0, 500)) <= 1)).all()


def test_graph_stats_degrees():
    m = build_matrix(from_arrays([0, 0, 1, 1, 1], [0, 1, 0, 1, 2], np.arange(5), 3, 4))
    s = graph_stats(m)
    assert s.user_degrees.tolist() == [2, 3, 0]
    assert s.item_degrees.tolist() == [2, 2, 1, 0]
    assert s.user_defined.tolist() == [True, True, False]
    assert s.beta_i[3] == 1.0


def test_merge_for_foldin_union():
    train = build_matrix(from_arrays([0], [0], [1], 2, 3))
    warm = from_arrays([0], [1], [2], 2, 3)
    items, deg, beta = merge_for_foldin(train, warm, 0)
    assert items.tolist() == [0, 1] and deg == 2
    assert beta == pytest.approx(np.sqrt(3) / 2)

    warm_same = from_arrays([0], [0], [2], 2, 3)
    items, deg, _ = merge_for_foldin(train, group_items_by_user(warm_same), 0)
    assert items.tolist() == [0] and deg == 1


def test_merge_for_foldin_cold_user():
    train = build_matrix(from_arrays([0], [0], [1], 2, 3))
    with pytest.raises(ColdUserError):
        merge_for_foldin(train, from_arrays([0], [1], [2], 2, 3), 1)


def test_filter_min_counts():
    log = from_arrays([0, 0, 0, 1, 2, 2], [0, 1, 2, 0, 0, 1], np.arange(6))
    out = filter_min_counts(log, min_user=2, min_item=2)
    # user 1 (1 event) and item 2 (1 event) are dropped, then everything left has >= 2
    assert len(out) == 4
    assert out.n_users == 2 and out.n_items == 2
    assert list(out.user_ids) == ["0", "2"]
