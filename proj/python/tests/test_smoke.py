import math
import os
from pathlib import Path

import pytest

figphm = pytest.importorskip("figphm")

ROOT = Path(os.environ.get("FIGPHM_SOURCE_DIR", Path(__file__).resolve().parents[2]))
SMOKE = ROOT / "tests" / "data" / "smoke.ini"


def test_tokenize_lowercases_and_splits():
    assert figphm.tokenize("My HEART attack!") == ["my", "heart", "attack", "!"]


def test_kappa_hand_values():
    pairs = [("literal", "literal"), ("literal", "figurative"), ("figurative", "figurative"),
             ("figurative", "figurative")]
    assert figphm.cohen_kappa(pairs) == pytest.approx(0.5)
    assert figphm.cohen_kappa([("literal", "figurative"), ("figurative", "literal")]) == pytest.approx(-1.0)


def test_metrics():
    m = figphm.compute_metrics(["PHM", "PHM", "PHM", "PHM", "NonPHM", "NonPHM"],
                               ["PHM", "PHM", "PHM", "NonPHM", "PHM", "PHM"])
    assert (m["tp"], m["fp"], m["fn"]) == (3, 1, 2)
    assert m["f_score"] == pytest.approx(2 / 3)


def test_threshold_is_strict():
    assert figphm.classify(0.19999) == "figurative"
    assert figphm.classify(0.2) == "literal"


def test_retrofit_chain():
    out = figphm.retrofit({"a": [1.0], "b": [3.0]}, {"a": ["b"]}, iterations=100, beta="uniform")
    assert out["a"][0] == pytest.approx(5 / 3)
    assert out["b"][0] == pytest.approx(7 / 3)


def test_literal_score():
    vectors = {"cough": [1, 0], "phlegm": [1, 0.01], "sick": [3, 4], "market": [0, 1]}
    score = figphm.literal_usage_score(["my", "cough", "sick"], "cough", vectors, k=1)
    assert score == pytest.approx(0.6, abs=1e-2)
    assert figphm.literal_usage_score(["cough"], "cough", vectors, k=1) == 0.5


def test_folds_partition():
    strata = [("cancer", "PHM" if i % 3 else "NonPHM") for i in range(30)]
    folds = figphm.stratified_kfold(strata, 5, 1)
    assert sorted(i for f in folds for i in f) == list(range(30))
    assert figphm.stratified_kfold(strata, 5, 1) == folds


def test_bad_config_raises(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("bogus = 1\n")
    with pytest.raises(figphm.ConfigError):
        figphm.run_experiment(bad)


def test_experiment_round_trip(tmp_path):
    records = figphm.run_experiment(SMOKE, out_dir=tmp_path, jobs=2)
    rows = [r for r in records if r["scope"] == "all" and not r["mean"]]
    assert {r["approach"] for r in rows} == {"phmd", "pipeline", "feataug"}
    for r in rows:
        assert r["tp"] + r["fp"] + r["fn"] + r["tn"] == 10
        p, rec = r["precision"], r["recall"]
        if p + rec > 0:
            assert math.isclose(r["f_score"], 2 * p * rec / (p + rec), rel_tol=1e-9)
    assert (tmp_path / "report.tsv").exists()
    assert "+FeatAug" in figphm.render_report(tmp_path / "report.tsv")
    again = figphm.run_experiment(SMOKE)
    assert again == records


def test_verdicts_cover_dataset():
    verdicts = figphm.figurative_verdicts(SMOKE)
    assert len(verdicts) == 10
    assert all(label in ("figurative", "literal") for _, _, label in verdicts)
