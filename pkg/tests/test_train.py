import numpy as np
import pytest

from spgat.config import RunConfig
from spgat.data import extract_patches
from spgat.errors import EvalError, FormatError, NumericError
from spgat.model import init_model
from spgat.optim import AdamState, adam_step
from spgat.tensor import Tensor
from spgat.train import (classification_map, evaluate, load_dataset, load_model, run_session,
                         run_sessions, save_model, train)

TINY = RunConfig(patch=3, epochs=3, sessions=2, batch_size=4, dilation_rates=(1, 2),
                 branch_channels=4, bottleneck_mids=(4, 4), expansion=1, train_per_class="3",
                 synth_classes=3, synth_bands=12, synth_height=10, synth_width=10)


@pytest.fixture(scope="module")
def data():
    return load_dataset(TINY)


def _model(data, seed=0, config=TINY):
    return init_model(config.model_config(data.classes), seed)


def _patches(data, config=TINY):
    return extract_patches(data.cube, data.labels, data.split.train_coords, config.patch)


def _bytes(model):
    return {k: p.data.tobytes() for k, p in model.params.items()}


# ------------------------------------------------------------------- Adam

def test_adam_first_step_moves_by_lr_times_sign():
    p = {"w": Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)}
    g = {"w": np.array([3.0, -0.01, 0.0])}
    adam_step(p, g, AdamState(lr=0.1))
    # bias correction makes the first update lr * g / (|g| + eps)
    expected = np.array([1.0, -2.0, 0.5]) - 0.1 * g["w"] / (np.abs(g["w"]) + 1e-8)
    np.testing.assert_allclose(p["w"].data, expected, rtol=0, atol=1e-15)


def test_adam_matches_loop_reference_over_steps():
    rng = np.random.default_rng(0)
    w = rng.normal(size=4)
    p = {"w": Tensor(w.copy(), requires_grad=True)}
    st = AdamState(lr=0.01)
    m = v = 0.0
    ref = w.copy()
    for t in range(1, 6):
        g = rng.normal(size=4)
        adam_step(p, {"w": g}, st)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p["w"].data, ref, rtol=0, atol=1e-14)


def test_adam_zero_gradient_is_a_no_op():
    p = {"w": Tensor(np.ones(3), requires_grad=True)}
    adam_step(p, {}, AdamState())
    np.testing.assert_array_equal(p["w"].data, 1.0)


# ------------------------------------------------------------------ train

def test_zero_learning_rate_leaves_parameters_bitwise_unchanged(data):
    model = _model(data)
    before = _bytes(model)
    train(model, _patches(data), epochs=2, lr=0.0, batch_size=4)
    assert _bytes(model) == before


def test_same_seed_is_bitwise_reproducible(data):
    a, b, c = _model(data), _model(data), _model(data)
    la = train(a, _patches(data), 3, 1e-2, 4, seed=5).losses
    lb = train(b, _patches(data), 3, 1e-2, 4, seed=5).losses
    train(c, _patches(data), 3, 1e-2, 4, seed=6)
    assert la == lb and _bytes(a) == _bytes(b)
    assert _bytes(a) != _bytes(c)


def test_single_sample_is_memorised(data):
    model = _model(data, seed=1)
    patches = _patches(data)[:1]
    losses = train(model, patches, epochs=50, lr=1e-2, batch_size=1).losses
    assert losses[-1] < 0.1 < losses[0]


def test_loss_reported_per_epoch_and_callback(data):
    seen = []
    res = train(_model(data), _patches(data), 4, 1e-3, 4, on_epoch=lambda e, l: seen.append(e))
    assert len(res.losses) == 4 and seen == [0, 1, 2, 3]


def test_non_finite_loss_reports_epoch_and_batch(data):
    model = _model(data)
    model.params["head.cls.w"].data[...] = 1e300
    with pytest.raises(NumericError, match="epoch 0, batch 0"):
        train(model, _patches(data), 1, 1e-3, 4)


def test_empty_training_set(data):
    with pytest.raises(ValueError):
        train(_model(data), _patches(data)[:0], 1)


# --------------------------------------------------------------- sessions

def test_run_sessions_are_deterministic_and_means_are_reported(data):
    a = run_sessions(TINY, data)
    b = run_sessions(TINY, data)
    assert [r.oa for r in a.sessions] == [r.oa for r in b.sessions]
    assert a.oa == pytest.approx(np.mean([r.oa for r in a.sessions]), abs=1e-15)
    single = run_session(TINY, data, TINY.seed)
    assert single.report.oa == a.sessions[0].oa
    one = run_sessions(TINY.replace(sessions=1), data)
    assert (one.oa, one.aa, one.kappa) == (single.report.oa, single.report.aa,
                                           single.report.kappa)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_session_errors_name_the_session(data):
    cfg = TINY.replace(lr=1e300)
    with pytest.raises(NumericError, match="session 0"):
        run_sessions(cfg, data)


def test_evaluate_rejects_empty_test_set(data):
    with pytest.raises(EvalError):
        evaluate(_model(data), data.cube, np.zeros((0, 3), dtype=np.int64))


def test_classification_map_marks_only_labeled_pixels(data):
    m = classification_map(_model(data), data.cube, data.labels)
    assert m.shape == data.labels.shape
    labeled = data.labels.classes > 0
    assert (m[~labeled] == 0).all()
    assert ((m[labeled] >= 1) & (m[labeled] <= data.classes)).all()


def test_model_file_round_trip(data, tmp_path):
    res = run_session(TINY.replace(sessions=1), data, 0)
    save_model(tmp_path / "m.npz", res.model, TINY)
    model, cfg = load_model(tmp_path / "m.npz")
    assert cfg == TINY
    assert _bytes(model) == _bytes(res.model)
    for k, st in res.model.state.items():
        assert model.state[k].running_var.tobytes() == st.running_var.tobytes()
    again = evaluate(model, data.cube, data.split.test)
    np.testing.assert_array_equal(again.confusion, res.report.confusion)


def test_bad_model_file(tmp_path):
    p = tmp_path / "junk.npz"
    p.write_bytes(b"not a zip")
    with pytest.raises(FormatError):
        load_model(p)


def test_adam_refuses_non_finite_updates():
    p = {"w": Tensor(np.ones(2), requires_grad=True)}
    with pytest.raises(NumericError, match="'w'"):
        adam_step(p, {"w": np.array([1e200, 0.0])}, AdamState())
    np.testing.assert_array_equal(p["w"].data, 1.0)
