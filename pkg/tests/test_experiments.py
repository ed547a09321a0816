import math

import numpy as np

from grrmf.config import ExperimentConfig
from grrmf.datasets import load_movielens, split
from grrmf.experiments import (
    completion_split,
    completion_table,
    run_complete,
    run_figure1,
    run_pool,
    run_recommend,
    run_recover,
    write_csv,
)
from grrmf.generators import upper_triangle


def test_completion_split_layout():
    y = upper_triangle(20)
    obs, test = completion_split(y, 0.5, seed=3)
    test_mask = test.as_mask()
    assert test_mask.sum() == 80
    assert not (obs.as_mask() & test_mask).any()
    assert len(obs) == 200
    assert obs.is_validation.sum() == 20
    # the test set is shared across observation fractions
    _, test2 = completion_split(y, 0.2, seed=3)
    assert np.array_equal(test2.as_mask(), test_mask)


def test_run_pool_keeps_order():
    assert run_pool(lambda t: t * t, list(range(10)), threads=3) == [t * t for t in range(10)]


def test_write_csv_format(tmp_path):
    path = write_csv(tmp_path / "a.csv", ["x", "y"], [[1, 0.1234567891], [2, math.nan]], timestamp=False,
                     comments=["note"])
    assert path.read_text().splitlines() == ["# note", "x,y", "1,0.123457", "2,nan"]
    stamped = write_csv(tmp_path / "b.csv", ["x"], [[1]])
    assert stamped.read_text().startswith("# generated ")


def test_recover_round_beats_linear():
    cfg = ExperimentConfig(families=("upper_triangle",), n=8, ranks=(1,), methods=("linear", "round:fixed"),
                           learning_rates=(0.05,), l2_regs=(0.0,), max_epochs=1500)
    runs = {r.method.label: r for r in run_recover(cfg)}
    assert runs["round:fixed"].final_rmse < 0.05 < runs["linear"].final_rmse


def test_complete_threads_do_not_change_results():
    base = {"families": ("upper_triangle",), "n": 16, "ranks": (1,), "fractions": (0.4,),
            "methods": ("linear", "round:fixed"), "learning_rates": (0.05,), "l2_regs": (0.0,), "max_epochs": 60,
            "trials": 2}
    one = run_complete(ExperimentConfig(**base, threads=1))
    two = run_complete(ExperimentConfig(**base, threads=2))
    assert [c.test_rmse for c in one] == [c.test_rmse for c in two]
    table = completion_table(one)
    cell = table["upper_triangle"]["round:fixed"][0.4]
    assert cell.trials == 2


def test_figure1_rows():
    rows = run_figure1(8, 4)
    assert all(r.witness_verified for r in rows)
    ident = next(r for r in rows if r.family.startswith("identity"))
    assert [round(res, 6) for _, res in ident.curve] == [8, 7, 6, 5, 4]


def test_recommend_on_small_file(ratings_file):
    ds = split(load_movielens(ratings_file), 0.2, seed=0)
    cfg = ExperimentConfig(source="dataset", dataset_path=str(ratings_file), ranks=(2,),
                           methods=("linear", "multi_sigmoid:learned"), learning_rates=(0.02,), l2_regs=(1e-3,),
                           max_epochs=20)
    rows = run_recommend(cfg, ds)
    assert len(rows) == 2
    assert all(0.0 <= r.accuracy <= 1.0 and r.val_rmse >= 0 for r in rows)
