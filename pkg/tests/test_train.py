import numpy as np
import pytest

from dcfnet import checkpoint as ck
from dcfnet.config import ModelConfig, RunConfig
from dcfnet.model import DCFNet
from dcfnet.optim import OptimizerState, Schedule, lr_at
from dcfnet.synthdata import read_manifest
from dcfnet.train import (Item, TrainingDiverged, fit_example, load_items, make_batches, read_log, split_records,
                          train_loop, train_step)

SMALL = dict(C=4, D=4, O=1, N=1, heads=2, hidden=4, d_attn=8, attn_reduce=2)


def small_config(manifest, epochs=3):
    cfg = RunConfig()
    cfg.model = ModelConfig(**SMALL)
    cfg.train.epochs = epochs
    cfg.train.warmup_epochs = 1.0
    cfg.train.batch = 2
    cfg.train.val_fraction = 0.25
    cfg.train.keep_checkpoints = 0
    cfg.data.manifest = str(manifest)
    return cfg


def quiet(*_):
    pass


def test_split_holds_out_validation_tail(tiny_dataset):
    train, val, test = split_records(read_manifest(tiny_dataset), 0.25)
    assert [len(train), len(val), len(test)] == [6, 2, 3]
    assert {r["id"] for r in train}.isdisjoint(r["id"] for r in val)


def test_batches_are_seeded_and_length_homogeneous(rng):
    items = [Item(str(i), np.zeros(n), np.zeros(m), np.zeros(n)) for i, (n, m) in
             enumerate([(100, 50)] * 5 + [(120, 50)] * 4)]
    a = make_batches(items, 2, np.random.default_rng([0, 1]))
    b = make_batches(items, 2, np.random.default_rng([0, 1]))
    assert [[i.id for i in x] for x in a] == [[i.id for i in x] for x in b]
    assert all(len({i.mix.size for i in batch}) == 1 for batch in a)
    assert sorted(i.id for batch in a for i in batch) == sorted(i.id for i in items)


def test_train_loop_log_and_checkpoints(tiny_dataset, tmp_path):
    cfg = small_config(tiny_dataset)
    history = train_loop(cfg, tmp_path / "run", log=quiet)
    rows = read_log(tmp_path / "run" / "train_log.csv")
    assert [r["epoch"] for r in rows] == [1, 2, 3]
    sched = Schedule(cfg.train.lr, cfg.train.warmup_epochs, cfg.train.epochs)
    assert [r["lr"] for r in rows] == [lr_at(e, sched) for e in (1, 2, 3)]
    assert [r["loss"] for r in rows] == [h["loss"] for h in history]
    names = sorted(p.name for p in (tmp_path / "run" / "checkpoints").iterdir())
    assert names == ["best.ckpt", "epoch_001.ckpt", "epoch_002.ckpt", "epoch_003.ckpt"]
    assert (tmp_path / "run" / "config.txt").read_text() == cfg.dumps()


def test_checkpoint_pruning(tiny_dataset, tmp_path):
    cfg = small_config(tiny_dataset)
    cfg.train.keep_checkpoints = 1
    train_loop(cfg, tmp_path / "run", log=quiet)
    assert sorted(p.name for p in (tmp_path / "run" / "checkpoints").glob("epoch_*")) == ["epoch_003.ckpt"]


def test_runs_are_reproducible(tiny_dataset, tmp_path):
    cfg = small_config(tiny_dataset, epochs=2)
    a = train_loop(cfg, tmp_path / "a", log=quiet)
    b = train_loop(cfg, tmp_path / "b", log=quiet)
    assert [r["loss"] for r in a] == [r["loss"] for r in b]
    assert (tmp_path / "a/checkpoints/epoch_002.ckpt").read_bytes() == (tmp_path / "b/checkpoints/epoch_002.ckpt").read_bytes()


def test_resume_matches_uninterrupted_run(tiny_dataset, tmp_path):
    cfg = small_config(tiny_dataset, epochs=3)
    full = train_loop(cfg, tmp_path / "full", log=quiet)
    resumed = train_loop(cfg, tmp_path / "resumed", resume=tmp_path / "full/checkpoints/epoch_001.ckpt", log=quiet)
    assert len(resumed) == 3
    np.testing.assert_allclose([r["loss"] for r in resumed[1:]], [r["loss"] for r in full[1:]], atol=1e-6)


def test_non_finite_loss_names_the_batch(rng):
    model = DCFNet(ModelConfig(**SMALL))
    opt = OptimizerState.for_params(model.parameters())
    bad = Item("train-00042", rng.uniform(-1, 1, 600), rng.uniform(-1, 1, 600), np.full(600, np.nan))
    with pytest.raises(TrainingDiverged, match="train-00042"):
        train_step(model, opt, [bad], 1e-3, 5.0, label="epoch 1 #0")


def test_fit_example_reduces_loss(tiny_dataset):
    item = load_items(read_manifest(tiny_dataset)[:1])[0]
    model = DCFNet(ModelConfig(**SMALL), seed=0)
    losses = fit_example(model, item, 25, lr=3e-3, warmup=3)
    assert losses[-1] < losses[0]


def test_resume_rejects_foreign_checkpoint(tiny_dataset, tmp_path):
    cfg = small_config(tiny_dataset, epochs=1)
    ck.save_checkpoint(tmp_path / "x.ckpt", DCFNet(ModelConfig(C=8, D=4, O=1, N=1, heads=2, hidden=4)).parameters(),
                       {"epoch": 0, "step": 0})
    with pytest.raises(ValueError):
        train_loop(cfg, tmp_path / "r", resume=tmp_path / "x.ckpt", log=quiet)
