import numpy as np
import pytest

from dcfnet import checkpoint as ck
from dcfnet.config import preset
from dcfnet.model import DCFNet
from dcfnet.optim import OptimizerState


def test_round_trip_paper_parameters_bit_exact(tmp_path):
    model = DCFNet(preset("paper").model, seed=3)
    params = model.parameters()
    ck.save_checkpoint(tmp_path / "p.ckpt", params, {"epoch": 1})
    loaded = ck.load_checkpoint(tmp_path / "p.ckpt")
    assert list(loaded.params()) == sorted(params)
    for name, p in params.items():
        assert loaded.tensors[name].tobytes() == p.data.astype("<f4").tobytes()
    assert loaded.meta == {"epoch": 1}


def test_layout_header(tmp_path):
    ck.save_checkpoint(tmp_path / "a.ckpt", {"b": np.ones((2, 3)), "a": np.zeros(1)}, {"k": 1})
    raw = (tmp_path / "a.ckpt").read_bytes()
    assert raw[:4] == b"DCFN"
    assert int.from_bytes(raw[4:8], "little") == ck.VERSION
    n = int.from_bytes(raw[8:12], "little")
    body = raw[12 + n:]
    assert int.from_bytes(body[:4], "little") == 1 and body[4:5] == b"a"  # lexicographic order


def test_truncated_file_rejected(tmp_path):
    ck.save_checkpoint(tmp_path / "a.ckpt", {"w": np.arange(10.0)})
    raw = (tmp_path / "a.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(raw[:-7])
    with pytest.raises(ck.CheckpointError):
        ck.load_checkpoint(tmp_path / "t.ckpt")


def test_bad_magic_and_version(tmp_path):
    raw = ck.encode({"w": np.ones(2)}, {})
    with pytest.raises(ck.CheckpointError):
        ck.decode(b"XXXX" + raw[4:])
    with pytest.raises(ck.CheckpointError):
        ck.decode(raw[:4] + (99).to_bytes(4, "little") + raw[8:])


def test_truncated_load_leaves_model_untouched(tmp_path):
    model = DCFNet(preset("desk").model, seed=0)
    before = {k: v.data.copy() for k, v in model.parameters().items()}
    other = DCFNet(preset("desk").model, seed=9)
    ck.save_checkpoint(tmp_path / "o.ckpt", other.parameters())
    raw = (tmp_path / "o.ckpt").read_bytes()
    (tmp_path / "o.ckpt").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(ck.CheckpointError):
        model.load_state(ck.load_checkpoint(tmp_path / "o.ckpt").params())
    for k, v in model.parameters().items():
        np.testing.assert_array_equal(v.data, before[k])


def test_desk_checkpoint_rejected_by_paper_model(tmp_path):
    ck.save_checkpoint(tmp_path / "d.ckpt", DCFNet(preset("desk").model).parameters())
    paper = DCFNet(preset("paper").model)
    with pytest.raises(ValueError, match="shape mismatch"):
        paper.load_state(ck.load_checkpoint(tmp_path / "d.ckpt").params())


def test_optimizer_state_round_trip(tmp_path, rng):
    params = {"w": rng.standard_normal((3, 2)).astype(np.float32)}
    st = OptimizerState.for_params(params, weight_decay=0.02)
    st.m["w"] += 1.5
    st.v["w"] += 0.25
    st.step = 7
    ck.save_checkpoint(tmp_path / "s.ckpt", params, {}, st)
    back = ck.restore_optimizer(ck.load_checkpoint(tmp_path / "s.ckpt"), params)
    assert back.step == 7 and back.weight_decay == 0.02
    np.testing.assert_array_equal(back.m["w"], st.m["w"])
    np.testing.assert_array_equal(back.v["w"], st.v["w"])
