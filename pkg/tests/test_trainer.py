"""Loss, optimizer, and the training loop."""

import numpy as np
import pytest

from befd.checkpoint import load_checkpoint, network_from_checkpoint
from befd.data import read_manifest
from befd.gradcheck import grad_check
from befd.network import NetworkVariant, UNetConfig, build, forward, param_count
from befd.synth import synth_generate
from befd.tensor import Tensor, backward, no_grad
from befd.trainer import AdamState, TrainConfig, adam_step, bce_loss, predict_sample, train_loop

TINY = UNetConfig(depth=2, base_channels=4, be_levels=(1, 2), fd_skips=(1,))


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthdata")
    manifest = synth_generate(4, 32, 32, seed=77, out_dir=root)
    return manifest


def _tiny_config(iterations, seed=0, variant=NetworkVariant.BEFD_UNET, **kw):
    return TrainConfig(iterations=iterations, batch_size=2, seed=seed,
                       variant=variant, unet=TINY, **kw)


# -- BCE ---------------------------------------------------------------------

def test_bce_matches_reference_formula():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((2, 1, 4, 4)) * 5
    y = rng.integers(0, 2, (2, 1, 4, 4)).astype(np.float64)
    loss = float(bce_loss(Tensor(z, dtype=np.float64), y).data)
    p = 1.0 / (1.0 + np.exp(-z))
    with np.errstate(divide="ignore", invalid="ignore"):
        want = -(y * np.log(p) + (1 - y) * np.log1p(-p))
    assert abs(loss - want.mean()) <= 1e-10


def test_bce_extreme_logits_finite():
    z = np.array([[[[-500.0, 500.0], [0.0, 50.0]]]])
    y = np.array([[[[1.0, 0.0], [1.0, 1.0]]]])
    loss = float(bce_loss(Tensor(z, dtype=np.float64), y).data)
    assert np.isfinite(loss)
    assert loss == pytest.approx((500.0 + 500.0 + np.log(2) + np.log1p(np.exp(-50.0))) / 4)


def test_bce_mask_excludes_pixels():
    z = np.zeros((1, 1, 2, 2))
    y = np.array([[[[1.0, 0.0], [1.0, 0.0]]]])
    mask = np.array([[[[1, 1], [0, 0]]]], dtype=np.uint8)
    loss = float(bce_loss(Tensor(z, dtype=np.float64), y, mask).data)
    assert loss == pytest.approx(np.log(2))  # only the first row counts


def test_bce_all_masked_errors():
    z = Tensor(np.zeros((1, 1, 2, 2)), dtype=np.float64)
    y = np.zeros((1, 1, 2, 2))
    with pytest.raises(ValueError, match="mask"):
        bce_loss(z, y, np.zeros((1, 1, 2, 2), dtype=np.uint8))


def test_bce_gradient():
    rng = np.random.default_rng(1)
    z = Tensor(rng.standard_normal((2, 1, 3, 3)), dtype=np.float64, requires_grad=True)
    y = rng.integers(0, 2, (2, 1, 3, 3)).astype(np.float64)
    mask = (rng.random((2, 1, 3, 3)) < 0.7).astype(np.uint8)
    report = grad_check(lambda z: bce_loss(z, y, mask), [z], rng=rng)
    assert report.passed, report


# -- Adam --------------------------------------------------------------------

def test_adam_matches_reference_two_steps():
    cfg = _tiny_config(0, learning_rate=0.01)
    w = Tensor(np.array([1.0, -2.0], dtype=np.float32), requires_grad=True)
    params = {"w": w}
    state = AdamState()
    theta = w.data.astype(np.float64).copy()
    m = np.zeros(2)
    v = np.zeros(2)
    for t in (1, 2):
        g = np.array([0.5, -1.0]) * t
        w.grad = g.astype(np.float32)
        adam_step(params, state, cfg)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mhat = m / (1 - 0.9 ** t)
        vhat = v / (1 - 0.999 ** t)
        theta = theta - 0.01 * mhat / (np.sqrt(vhat) + 1e-8)
        assert np.allclose(w.data, theta, atol=1e-6), t
    assert state.t == 2


def test_adam_zero_gradients_leave_parameters_fixed():
    cfg = _tiny_config(0)
    w = Tensor(np.array([3.0], dtype=np.float32), requires_grad=True)
    w.grad = np.zeros(1, dtype=np.float32)
    before = w.data.copy()
    adam_step({"w": w}, AdamState(), cfg)
    assert np.array_equal(w.data, before)


def test_adam_missing_gradient_names_parameter():
    cfg = _tiny_config(0)
    w = Tensor(np.ones(2, dtype=np.float32), requires_grad=True)
    with pytest.raises(RuntimeError, match="enc1.conv1.weight"):
        adam_step({"enc1.conv1.weight": w}, AdamState(), cfg)


# -- the loop ----------------------------------------------------------------

def test_micro_overfit(tiny_dataset, tmp_path):
    cfg = _tiny_config(200, learning_rate=3e-3)
    result = train_loop(cfg, tiny_dataset, tmp_path / "run")
    early = float(np.mean(result.losses[:50]))
    late = float(np.mean(result.losses[150:200]))
    assert late < early, (early, late)
    assert len(result.losses) == 200


def test_zero_iterations_checkpoint_equals_init(tiny_dataset, tmp_path):
    cfg = _tiny_config(0, seed=5)
    result = train_loop(cfg, tiny_dataset, tmp_path / "run0")
    ckpt = load_checkpoint(result.final_checkpoint)
    assert ckpt.iteration == 0
    init = build(TINY, cfg.variant, seed=5)
    for name, t in init.params.items():
        assert np.array_equal(ckpt.entries[name], t.data), name


def test_two_runs_bit_identical(tiny_dataset, tmp_path):
    cfg = _tiny_config(30, seed=3)
    a = train_loop(cfg, tiny_dataset, tmp_path / "a")
    b = train_loop(cfg, tiny_dataset, tmp_path / "b")
    assert np.array_equal(a.losses, b.losses)
    blob_a = a.final_checkpoint.read_bytes()
    blob_b = b.final_checkpoint.read_bytes()
    assert blob_a == blob_b


def test_seed_changes_trajectory(tiny_dataset, tmp_path):
    a = train_loop(_tiny_config(10, seed=1), tiny_dataset, tmp_path / "a")
    b = train_loop(_tiny_config(10, seed=2), tiny_dataset, tmp_path / "b")
    assert not np.array_equal(a.losses, b.losses)


def test_periodic_checkpoints_written(tiny_dataset, tmp_path):
    cfg = _tiny_config(10, checkpoint_every=4)
    result = train_loop(cfg, tiny_dataset, tmp_path / "run")
    names = sorted(p.name for p in (tmp_path / "run").glob("ckpt_*.bin"))
    assert any("000004" in n for n in names)
    assert any("000008" in n for n in names)
    assert result.final_checkpoint.exists()


def test_log_file_format(tiny_dataset, tmp_path):
    cfg = _tiny_config(100)
    result = train_loop(cfg, tiny_dataset, tmp_path / "run")
    lines = result.log_path.read_text().strip().split("\n")
    assert len(lines) == 2  # one line per 50 iterations
    for want_it, line in zip((50, 100), lines):
        it, loss, sec = line.split("\t")
        assert int(it) == want_it
        float(loss), float(sec)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises(tiny_dataset, tmp_path):
    cfg = _tiny_config(60, learning_rate=1e12)
    with pytest.raises(RuntimeError, match="non-finite"):
        train_loop(cfg, tiny_dataset, tmp_path / "run")


def test_resume_from_checkpoint_inference(tiny_dataset, tmp_path):
    """predict_sample crops back to the original extent and stays in [0,1]."""
    from befd.data import load_sample
    cfg = _tiny_config(20)
    result = train_loop(cfg, tiny_dataset, tmp_path / "run")
    net = network_from_checkpoint(load_checkpoint(result.final_checkpoint))
    sample = load_sample(tiny_dataset.records[0])
    probs = predict_sample(net, sample, cfg.attention)
    assert probs.shape == (32, 32)
    assert probs.min() >= 0.0 and probs.max() <= 1.0
