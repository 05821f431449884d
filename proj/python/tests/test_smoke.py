import math
import os
from pathlib import Path

import numpy as np
import pytest

import pbcox

DATA = Path(os.environ.get("PBCOX_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))


def test_pb_pmf_examples():
    assert pbcox.pb_pmf([0.1, 0.2], 1, "enum") == pytest.approx(0.26, abs=1e-15)
    assert pbcox.pb_pmf([0.3] * 10, 4, "dft") == pytest.approx(0.200120949, rel=1e-9)
    pmf = pbcox.pb_pmf_all([0.2, 0.5, 0.9])
    assert sum(pmf) == pytest.approx(1.0, abs=1e-14)
    assert pbcox.lecam_bound([0.1, 0.2]) == pytest.approx(0.05)


def test_pb_pmf_rejects_bad_input():
    with pytest.raises(ValueError):
        pbcox.pb_pmf([0.5, 1.5], 1)
    with pytest.raises(pbcox.CapacityError):
        pbcox.pb_pmf([0.5] * 26, 3, "enum")


def test_group_times():
    out = pbcox.group_times(np.array([0.01, 0.1, 0.11]), 0.1)
    assert np.allclose(out, [0.1, 0.1, 0.2])


def test_fit_larynx():
    d = pbcox.load_csv(str(DATA / "larynx.csv"), "time", "death", ["age", "Stage_III", "Stage_IV"])
    assert d["times"].shape == (90,)
    res = pbcox.fit(d["times"], d["status"], d["covariates"])
    assert set(res) == {"breslow", "efron", "pb"}
    for m in res.values():
        assert m["converged"]
        assert np.all(np.isfinite(m["se"]))
        assert len(m["baseline"]) == len(m["event_times"])
    # ties are mild, so all three land close together
    assert np.max(np.abs(res["pb"]["beta"] - res["efron"]["beta"])) < 0.2


def test_fit_reports_failures_per_method():
    t = np.arange(1.0, 7.0)
    s = np.array([1, 1, 0, 1, 1, 0], dtype=np.int32)
    x = np.full((6, 1), 2.0)
    res = pbcox.fit(t, s, x, methods=["breslow"])
    assert "error" in res["breslow"]


def test_log_apl_example():
    t = np.array([1.0, 2.0])
    s = np.array([1, 0], dtype=np.int32)
    x = np.array([[0.0], [math.log(math.log(0.8) / math.log(0.9))]])
    total, terms, flagged = pbcox.log_apl(np.array([1.0]), np.array([-math.log(0.9)]), t, s, x)
    # Pr(first fails alone | one failure) = 0.1 * 0.8 / 0.26
    assert total == pytest.approx(math.log(0.08 / 0.26), rel=1e-12)
    assert len(terms) == 1
    assert not flagged


def test_simulate_small():
    cfg = {"n": 40, "B": 6, "tau": 0.1, "seed": 7}
    a = pbcox.simulate(cfg)
    b = pbcox.simulate(cfg, threads=2)
    for m in a["methods"] + b["methods"]:
        assert m.pop("mean_fit_seconds") >= 0
    assert a == b
    assert [m["method"] for m in a["methods"]] == ["breslow", "efron", "pb"]
    with pytest.raises(ValueError):
        pbcox.simulate({"n": 1})


def test_tau_sweep_lung():
    d = pbcox.load_csv(
        str(DATA / "lung.csv"),
        "time",
        "status",
        ["female", "ph.ecog", "ph.karno", "pat.karno", "wt.loss"],
        drop_missing=True,
    )
    assert d["dropped_rows"] > 0
    rec = pbcox.tau_sweep(d["times"], d["status"], d["covariates"], taus=[0.0, 0.1, 0.2])
    assert [r["tau"] for r in rec] == [0.0, 0.1, 0.2]
    assert rec[0]["k"] >= rec[1]["k"] >= rec[2]["k"]
    assert all(r["ed_breslow"] >= 0 for r in rec)
