import math

import numpy as np
import pytest

# Skipped unless the package is installed (pip install .).
diffgap = pytest.importorskip("diffgap")


def test_param_count_default():
    assert diffgap.param_count() == 1_115_648


def test_schedule_hand_values():
    s = diffgap.NoiseSchedule(4, 0.1, 0.4)
    assert [round(s.alpha_bar(t), 12) for t in range(1, 5)] == [0.9, 0.72, 0.504, 0.3024]
    assert s.posterior_variance(1) == 0.0


def test_time_embedding_and_ddim_timesteps():
    e = diffgap.time_embedding(0, 8)
    assert e == [0.0, 1.0] * 4
    assert diffgap.ddim_timesteps(1000, 5) == [1000, 800, 600, 400, 200]


def test_contrastive_loss_values():
    same = np.full((8, 4), 0.5)
    assert abs(diffgap.contrastive_loss(same, same) - math.log(8)) < 1e-9
    eye = np.eye(2)
    assert abs(diffgap.contrastive_loss(eye, eye, 1.0) - math.log1p(math.exp(-1))) < 1e-9
    with pytest.raises(ValueError):
        diffgap.contrastive_loss(eye, eye, 0.0)


def test_corpus_round_trip(tmp_path):
    spec = diffgap.ConceptSpec()
    spec.dim_a = spec.dim_v = 16
    spec.count = 40
    a, v = diffgap.generate_corpus(spec)
    assert a.shape == (40, 16) and v.shape == (40, 16)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-9)
    diffgap.save_corpus(a, v, tmp_path / "c.dgc1")
    a2, v2 = diffgap.load_corpus(tmp_path / "c.dgc1")
    np.testing.assert_allclose(a2, a.astype(np.float32), rtol=0, atol=0)
    (tmp_path / "bad.dgc1").write_bytes(b"XXXX")
    with pytest.raises(diffgap.FormatError):
        diffgap.load_corpus(tmp_path / "bad.dgc1")


def test_train_generate_retrieve(tmp_path):
    spec = diffgap.ConceptSpec()
    spec.dim_a = spec.dim_v = 16
    spec.count = 300
    a, v = diffgap.generate_corpus(spec)
    cfg = diffgap.TrainConfig()
    cfg.time_embed_dim, cfg.hidden_dim, cfg.epochs, cfg.batch_size = 8, 32, 3, 32
    cfg.interval = None
    ckpt = diffgap.train(a[:250], v[:250], cfg)
    assert ckpt.iteration == 24 and ckpt.toggles == 0
    gen = diffgap.generate(ckpt, "v2a", v[250:], steps=10)
    assert gen.shape == (50, 16)
    np.testing.assert_allclose(np.linalg.norm(gen, axis=1), 1.0, atol=1e-9)
    report = diffgap.diffgap_retrieval(ckpt, "v2a", v[250:], a[250:], steps=10)
    assert report.query_count == 50 and 0.0 <= report.r_at(1) <= report.r_at(10) <= 100.0
    assert diffgap.cosine_retrieval(a[250:], a[250:]).r_at(1) == 100.0

    diffgap.save_checkpoint(ckpt, tmp_path / "m.dgck")
    assert diffgap.load_checkpoint(tmp_path / "m.dgck").to_bytes() == ckpt.to_bytes()


def test_recall_at_k():
    rankings = [[0, 5, 6], [4, 1, 0], [0, 1, 3]]
    assert diffgap.recall_at_k([0, 1, 2], rankings, 1) == pytest.approx(100 / 3)


def test_run_command(tmp_path):
    overrides = {
        "train_count": "60", "eval_count": "20", "dim_a": "8", "dim_v": "8", "concept_dim": "4",
        "time_embed_dim": "4", "hidden_dim": "8", "hidden_layers": "1", "batch_size": "16",
        "epochs": "1", "out": str(tmp_path),
    }
    code, out, err = diffgap.run("train", overrides)
    assert code == 0, err
    assert (tmp_path / "checkpoint.dgck").exists() and (tmp_path / "resolved.cfg").exists()
    code, out, err = diffgap.run("eval-retrieval", overrides)
    assert code != 0 and "checkpoint" in err and err.count("\n") == 1
    with pytest.raises(diffgap.ConfigError):
        diffgap.run("train", {"btach_size": "4"})
