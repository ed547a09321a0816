import numpy as np
import pytest

from grrmf.datasets import load_movielens, load_movielens_pair, split, write_movielens
from grrmf.errors import ValidationError


def test_load_maps_ratings_to_levels(ratings_file):
    ds = load_movielens(ratings_file)
    raw = np.loadtxt(ratings_file, dtype=int)
    assert len(ds) == raw.shape[0]
    assert ds.n_levels == 4
    assert ds.observations.values.min() >= 0 and ds.observations.values.max() <= 4
    first = raw[0]
    i, j = ds.user_index(str(first[0])), ds.item_index(str(first[1]))
    k = np.flatnonzero((ds.observations.rows == i) & (ds.observations.cols == j))[0]
    assert ds.observations.values[k] == first[2] - 1


def test_round_trip(ratings_file, tmp_path):
    ds = load_movielens(ratings_file)
    write_movielens(ds, tmp_path / "copy.data")
    assert load_movielens(tmp_path / "copy.data") == ds
    assert (tmp_path / "copy.data").read_text() == ratings_file.read_text()


def test_header_line_is_skipped(ratings_file, tmp_path):
    path = tmp_path / "with_header.data"
    path.write_text("user_id\titem_id\trating\ttimestamp\n" + ratings_file.read_text())
    assert load_movielens(path) == load_movielens(ratings_file)


def test_split_counts_and_determinism(ratings_file):
    ds = load_movielens(ratings_file)
    a, b = split(ds, 0.2, seed=4), split(ds, 0.2, seed=4)
    assert np.array_equal(a.observations.is_validation, b.observations.is_validation)
    obs = a.observations
    for user in range(ds.n_users):
        mine = obs.rows == user
        count = int(mine.sum())
        expected = min(round(0.2 * count), count - 1)
        assert int(obs.is_validation[mine].sum()) == expected
        assert (~obs.is_validation[mine]).sum() >= 1


def test_single_rating_user_stays_in_train(tmp_path):
    path = tmp_path / "one.data"
    path.write_text("1\t1\t5\n2\t1\t3\n2\t2\t4\n2\t3\t1\n")
    ds = split(load_movielens(path), 0.5, seed=0)
    obs = ds.observations
    assert not obs.is_validation[obs.rows == ds.user_index("1")].any()


def test_paired_files(ratings_file, tmp_path):
    ds = split(load_movielens(ratings_file), 0.3, seed=1)
    write_movielens(ds, tmp_path / "train.data", part="train")
    write_movielens(ds, tmp_path / "val.data", part="validation")
    paired = load_movielens_pair(tmp_path / "train.data", tmp_path / "val.data")
    assert len(paired) == len(ds)
    assert paired.observations.is_validation.sum() == ds.observations.is_validation.sum()


@pytest.mark.parametrize("text, message", [
    ("1\t1\t3\n1\t1\t4\n", "duplicate rating"),
    ("1\t1\t9\n", "outside 1..5"),
    ("1\t1\n", ":1:"),
    ("1\t1\tx\n", ":1:"),
])
def test_bad_lines_name_the_line(tmp_path, text, message):
    path = tmp_path / "bad.data"
    path.write_text(text)
    with pytest.raises(ValidationError, match=message):
        load_movielens(path)


def test_unknown_ids(ratings_file):
    ds = load_movielens(ratings_file)
    with pytest.raises(ValidationError, match="unknown user"):
        ds.user_index("999")
    with pytest.raises(ValidationError):
        split(ds, 1.0)


def test_empty_file_is_rejected(tmp_path):
    path = tmp_path / "empty.data"
    path.write_text("user\titem\trating\n")
    with pytest.raises(ValidationError, match="no ratings"):
        load_movielens(path)
