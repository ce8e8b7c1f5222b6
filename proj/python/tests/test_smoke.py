import math
from pathlib import Path

import numpy as np
import pytest

import dat

CONFIGS = Path(__file__).resolve().parents[2] / "configs"


def test_energy_functions():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(5, 4))
    lse = np.log(np.exp(logits).sum(axis=1))
    np.testing.assert_allclose(dat.logsumexp(logits), lse, atol=1e-12)
    np.testing.assert_allclose(dat.marginal_energy(logits), -lse, atol=1e-12)
    labels = [0, 1, 2, 3, 0]
    np.testing.assert_allclose(dat.joint_energy(logits, labels), -logits[np.arange(5), labels])
    p = dat.conditional_probs(logits)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-15)


def test_metrics():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(200, 2))
    assert dat.fid(a, a) == pytest.approx(0.0, abs=1e-9)
    assert dat.ood_auroc([2.0, 3.0], [0.0, 1.0]) == 1.0
    assert dat.ood_auroc([1.0], [1.0]) == 0.5
    assert dat.inception_score(np.full((4, 3), 1 / 3)) == pytest.approx(1.0)
    assert dat.inception_score(np.eye(3)) == pytest.approx(3.0)
    assert dat.ece(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 0], 10) == pytest.approx(0.5)


def test_errors_map_to_python():
    with pytest.raises(ValueError, match="model.depth"):
        dat.config_text(CONFIGS / "dat_2d.toml", ["model.depth=3"])
    assert issubclass(dat.DomainError, ValueError)


def test_dataset():
    x, y = dat.load_dataset("two_moons_id", "train", 100, 0)
    assert x.shape == (100, 2, 1, 1)
    assert sorted(set(y)) == [0, 1]


def test_train_evaluate_and_use_model(tmp_path):
    overrides = [
        "stage1.steps=40",
        "stage1.checkpoint_every=20",
        "stage2.steps=20",
        "stage2.checkpoint_every=10",
        "eval.n_gen=100",
    ]
    summary = dat.train(CONFIGS / "dat_2d.toml", tmp_path / "run", overrides)
    assert summary["stage2"]["step"] > 40
    ckpt = summary["stage2"]["path"]
    rows = dat.evaluate(ckpt, CONFIGS / "dat_2d.toml", {"robust", "ood"}, tmp_path / "eval", overrides)
    names = {r["metric"] for r in rows}
    assert {"clean_accuracy", "robust_accuracy", "auroc_neg_energy_clean"} <= names
    assert (tmp_path / "eval" / "logs" / "eval.csv").exists()

    model = dat.load_model(ckpt)
    assert model.num_classes == 2
    x, y = dat.load_dataset("two_moons_id", "test", 64, 0)
    e = model.energy(x.reshape(64, 2))
    assert e.shape == (64,) and np.all(np.isfinite(e))
    adv = model.attack(x, y, eps=0.3, steps=5, step_size=0.06)
    assert np.linalg.norm((adv - x).reshape(64, -1), axis=1).max() <= 0.3 + 1e-9
    samples = model.sample(x, labels=y, steps=3)
    assert samples.shape == x.shape
    assert not math.isnan(float(model.logits(samples).sum()))


def test_verify(tmp_path):
    results = dat.verify(tmp_path)
    assert results and all(passed for _, passed, _ in results)
