import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pixssr import checkpoint as ck
from pixssr import tensor as T
from pixssr.config import ConfigError, RunConfig
from pixssr.network import build_model

SMALL = RunConfig(bands=4, b_feat=4, n_blocks=1, d_state=2)


# -- config ---------------------------------------------------------------------------

def test_defaults_roundtrip_through_text():
    cfg = RunConfig()
    assert RunConfig.from_text(cfg.to_text()) == cfg


@given(st.floats(1e-4, 1e-1), st.integers(0, 2**31), st.booleans())
def test_text_roundtrip_property(lr, seed, flag):
    cfg = RunConfig(lr0=lr, seed=seed, fixed_field=flag)
    assert RunConfig.from_text(cfg.to_text(), apply_env=False) == cfg


def test_comments_and_blank_lines():
    cfg = RunConfig.from_text("# header\n\nsteps = 7   # inline\n  omega=0.1\n")
    assert cfg.steps == 7 and cfg.omega == 0.1


@pytest.mark.parametrize("text,match", [
    ("bogus = 1\n", "unknown key"),
    ("steps 5\n", "expected"),
    ("steps = five\n", "cannot parse"),
    ("block_norm = maybe\n", "cannot parse"),
    ("steps = 0\n", "positive"),
    ("omega = 1.5\n", "omega"),
    ("spectra_model = poisson\n", "spectra_model"),
    ("n_blocks = 2\n", "odd"),
    ("lr0 = 0\n", "lr0"),
])
def test_invalid_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_text(text)


def test_seed_env_override(monkeypatch):
    monkeypatch.setenv("PIXSSR_SEED", "42")
    assert RunConfig.from_text("seed = 1\n").seed == 42
    assert RunConfig.from_text("seed = 1\n", apply_env=False).seed == 1
    monkeypatch.setenv("PIXSSR_SEED", "x")
    with pytest.raises(ConfigError):
        RunConfig.from_text("")


def test_load_rejects_non_utf8(tmp_path):
    (tmp_path / "c.cfg").write_bytes(b"steps = 5\n\xff\xfe\n")
    with pytest.raises(ConfigError, match="UTF-8"):
        RunConfig.load(tmp_path / "c.cfg")


def test_views_and_hash():
    cfg = RunConfig(b_feat=16, gamma_alpha=3.0, loss_beta2=0.5)
    assert cfg.model.b_feat == 16 and cfg.gamma.alpha == 3.0 and cfg.weights.beta2 == 0.5
    assert cfg.config_hash() == cfg.model.arch_hash()
    assert cfg.config_hash() == cfg.with_overrides(omega=0.1, seed=9, steps=3).config_hash()
    assert cfg.config_hash() != cfg.with_overrides(bands=31).config_hash()
    assert cfg.digest() != cfg.with_overrides(seed=9).digest()


# -- checkpoint format -----------------------------------------------------------------

def test_record_layout():
    c = ck.Checkpoint({"a": "1"}, {"w": np.arange(6, dtype=np.float32).reshape(2, 3)}, {}, seed=7)
    raw = ck.encode(c)
    assert raw[:4] == b"PSSR"
    assert struct.unpack_from("<II", raw, 4) == (1, 4)
    assert raw[12:16] == b"a=1\n"
    pos = 16
    assert struct.unpack_from("<II", raw, pos) == (1, 1)
    assert raw[pos + 8:pos + 9] == b"w"
    assert struct.unpack_from("<III", raw, pos + 9) == (2, 2, 3)
    payload = np.frombuffer(raw, "<f4", 6, pos + 21)
    np.testing.assert_array_equal(payload, np.arange(6))
    assert struct.unpack_from("<I", raw, pos + 45)[0] == 0
    assert struct.unpack("<Q", raw[-8:])[0] == 7
    assert len(raw) == pos + 49 + 8


def test_encode_decode_roundtrip(rng):
    c = ck.Checkpoint({"x": "y", "z": "1.5"}, {"a": rng.random((2, 3)).astype(np.float32),
                                               "b": np.float32(3.0) * np.ones(())},
                      {"t": np.asarray(4.0)}, seed=2**40 + 3)
    back = ck.decode(ck.encode(c))
    assert back.config == c.config and back.seed == c.seed
    for k in c.params:
        assert back.params[k].tobytes() == np.asarray(c.params[k], np.float32).tobytes()
    assert back.optimizer["t"].shape == () and back.optimizer["t"] == 4.0


@pytest.mark.parametrize("cut", [2, 10, 30, -1])
def test_truncated_checkpoint(cut):
    raw = ck.encode(ck.Checkpoint({"a": "1"}, {"w": np.ones((2, 2))}, {}, 0))
    with pytest.raises(ck.CheckpointError):
        ck.decode(raw[:cut])


def test_bad_magic_and_version():
    raw = ck.encode(ck.Checkpoint({}, {}, {}, 0))
    with pytest.raises(ck.CheckpointError, match="bad magic"):
        ck.decode(b"NOPE" + raw[4:])
    with pytest.raises(ck.CheckpointError, match="version"):
        ck.decode(raw[:4] + struct.pack("<I", 9) + raw[8:])


def test_save_load_restore(tmp_path, rng):
    model = build_model(SMALL.model)
    params = model.parameters()
    for p in params.values():
        p.grad = np.ones_like(p.data)
    opt = T.OptimizerState(lr0=1e-3, total_steps=10)
    T.adam_step(params, opt)
    ck.save(tmp_path / "m.pssr", model, SMALL, opt)
    c = ck.load(tmp_path / "m.pssr")
    assert c.config_hash == SMALL.config_hash()
    assert c.config["backbone"] == "dypro"
    assert c.run_config == SMALL
    assert float(c.optimizer["t"]) == 1
    assert {k for k in c.optimizer if k.startswith("m/")} == {"m/" + k for k in model.parameters()}
    restored = ck.restore_model(c)
    for name, p in restored.named_parameters():
        assert p.data.dtype == np.float64
        np.testing.assert_array_equal(p.data, dict(model.named_parameters())[name].data.astype(np.float32))
    assert not (tmp_path / "m.pssr.tmp").exists()


def test_save_is_deterministic(tmp_path):
    for name in ("a", "b"):
        ck.save(tmp_path / name, build_model(SMALL.model), SMALL)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_backbone_swap_changes_only_backbone_records(tmp_path):
    dy, ident = SMALL, SMALL.with_overrides(backbone="identity")
    a, b = ck.snapshot(build_model(dy.model), dy), ck.snapshot(build_model(ident.model), ident)
    differing_cfg = {k for k in a.config if a.config[k] != b.config.get(k)}
    assert differing_cfg == {"backbone", "config_hash"}
    only_a = set(a.params) - set(b.params)
    assert only_a and all(k.startswith("backbone.") for k in only_a)
    assert set(b.params) <= set(a.params)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in b.params)


def test_restore_rejects_wrong_shapes():
    c = ck.snapshot(build_model(SMALL.model), SMALL)
    name = next(iter(c.params))
    c.params[name] = np.zeros((1, 1, 1, 1, 1), np.float32)
    with pytest.raises(ck.CheckpointError, match="shape"):
        ck.restore_model(c)
    c.params.pop(name)
    with pytest.raises(ck.CheckpointError, match="names"):
        ck.restore_model(c)


def test_load_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        ck.load(tmp_path / "none.pssr")
