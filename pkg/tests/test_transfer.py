import numpy as np
import pytest

from bhpsensor import conditioning as C
from bhpsensor import synthgen
from bhpsensor import training as T
from bhpsensor import transfer as TL
from bhpsensor.errors import IncompatibleFeatures, InvalidConfig
from bhpsensor.models import dumps, loads


@pytest.fixture(scope="module")
def field2():
    cfg = synthgen.GenConfig(n_wells=10, n_days=160, seed=21, field_profile="field2")
    ds, _ = synthgen.generate(cfg)
    return C.condition(ds, C.ConditioningConfig(n_heldout=2, test_days=40))


@pytest.fixture(scope="module")
def base_lstm(small_field):
    h = {**T.NEURAL_DEFAULTS, "hidden_size": 20, "n_layers": 2, "p": 2, "epochs": 3, "batch_size": 128,
         "learning_rate": 3e-3}
    return T.fit_model(T.ModelConfig("LSTM-T", "lstm", "Set3", "minmax", h), small_field.partitions["trainval"], seed=0)


@pytest.fixture(scope="module")
def base_mlp(small_field):
    h = {**T.NEURAL_DEFAULTS, "hidden": [20, 20], "epochs": 3, "batch_size": 128}
    return T.fit_model(T.ModelConfig("NN-T", "mlp", "Set3", "minmax", h), small_field.partitions["trainval"], seed=0)


def snapshot(model):
    return {k: v.tobytes() for k, v in model.params.items()}


def windows(model, frame):
    return C.window_samples(frame, model.feature_set, model.p)


# --------------------------------------------------------------------------
# spec validation


def test_spec_defaults():
    ft = TL.TransferSpec("fine_tune")
    assert (ft.lr_scale, ft.epochs_scale, ft.unfrozen) == (0.1, 0.3, "all")
    nl = TL.TransferSpec("new_layer")
    assert nl.lr_scale == 1.0 and nl.new_layer_width is None
    assert TL.TransferSpec.from_dict(ft.to_dict()) == ft


@pytest.mark.parametrize("bad", [
    {"strategy": "distill"}, {"lr_scale": 1.5}, {"lr_scale": -0.1}, {"epochs_scale": 0.0},
    {"new_layer_width": 0}, {"unfrozen": "last:0"}, {"unfrozen": "some"},
])
def test_spec_rejects(bad):
    with pytest.raises(InvalidConfig):
        TL.TransferSpec(**{"strategy": "fine_tune", **bad})


# --------------------------------------------------------------------------
# adapt_input


@pytest.mark.parametrize("which", ["base_lstm", "base_mlp"])
def test_adapt_input_identity(which, request, field2):
    base = request.getfixturevalue(which)
    frame = field2.partitions["trainval"]
    adapted = TL.adapt_input(base, base.feature_set.extend(["q_gaslift"]), frame)
    assert adapted.feature_set.columns[-1] == "q_gaslift"
    assert adapted.n_inputs == base.n_inputs + 1
    no_gl = frame[frame["q_gaslift"] == 0]
    assert len(no_gl) > 0
    a = adapted.predict(windows(adapted, no_gl).x)
    b = base.predict(windows(base, no_gl).x)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
    # the zero rows make the value of the new column irrelevant everywhere
    gl = frame[frame["q_gaslift"] > 0]
    np.testing.assert_allclose(adapted.predict(windows(adapted, gl).x), base.predict(windows(base, gl).x),
                               rtol=0, atol=1e-12)
    assert snapshot(base) != snapshot(adapted)


def test_adapt_input_rejects_dropped_column(base_lstm, field2):
    cols = [c for c in base_lstm.feature_set.columns if c != "whp"]
    with pytest.raises(IncompatibleFeatures):
        TL.adapt_input(base_lstm, cols, field2.partitions["trainval"])


def test_base_not_mutated(base_lstm, field2):
    before = snapshot(base_lstm)
    meta = dict(base_lstm.meta)
    TL.fine_tune(base_lstm, TL.TransferSpec("fine_tune", input_adapter=["q_gaslift"]), field2.partitions["trainval"])
    TL.extend_with_new_layer(base_lstm, TL.TransferSpec("new_layer", input_adapter=["q_gaslift"]),
                             field2.partitions["trainval"])
    assert snapshot(base_lstm) == before and base_lstm.meta == meta


# --------------------------------------------------------------------------
# scaler refit


@pytest.mark.parametrize("which", ["base_lstm", "base_mlp"])
def test_refit_scalers_preserves_function(which, request, field2):
    base = request.getfixturevalue(which)
    frame = field2.partitions["trainval"]
    refit = TL.refit_scalers(base, frame)
    assert refit.scaler != base.scaler and refit.target_scaler != base.target_scaler
    x = windows(base, frame).x
    np.testing.assert_allclose(refit.predict(x), base.predict(x), rtol=1e-10)


# --------------------------------------------------------------------------
# fine-tuning


def test_fine_tune_lr_zero_is_base(base_lstm, field2):
    frame = field2.partitions["trainval"]
    spec = TL.TransferSpec("fine_tune", lr_scale=0.0, input_adapter=["q_gaslift"])
    tuned = TL.fine_tune(base_lstm, spec, frame)
    x_new = windows(tuned, frame).x
    x_old = windows(base_lstm, frame).x
    np.testing.assert_allclose(tuned.predict(x_new), base_lstm.predict(x_old), rtol=1e-10)
    # only the scaler fold touched the weights: deeper layers are byte-identical
    for k in ("body.1.W", "body.1.b"):
        assert tuned.params[k].tobytes() == base_lstm.params[k].tobytes()


def test_fine_tune_head_only_freezes_rest(base_lstm, field2):
    spec = TL.TransferSpec("fine_tune", unfrozen="head", lr_scale=1.0)
    tuned = TL.fine_tune(base_lstm, spec, field2.partitions["trainval"])
    for k, v in base_lstm.params.items():
        if not k.startswith("head."):
            assert tuned.params[k].tobytes() == v.tobytes(), k
    assert tuned.params["head.W"].tobytes() != base_lstm.params["head.W"].tobytes()
    assert tuned.scaler == base_lstm.scaler


def test_fine_tune_last_k(base_lstm, field2):
    spec = TL.TransferSpec("fine_tune", unfrozen="last:2", lr_scale=1.0)
    tuned = TL.fine_tune(base_lstm, spec, field2.partitions["trainval"])
    assert tuned.meta["trainable"] == ["body.1", "head"]
    assert tuned.params["body.0.W"].tobytes() == base_lstm.params["body.0.W"].tobytes()
    assert tuned.params["body.1.W"].tobytes() != base_lstm.params["body.1.W"].tobytes()


def test_fine_tune_learns_gaslift_weights(base_lstm, field2):
    frame = field2.partitions["trainval"]
    assert (frame["q_gaslift"] > 0).any()
    spec = TL.TransferSpec("fine_tune", lr_scale=1.0, input_adapter=["q_gaslift"])
    tuned = TL.fine_tune(base_lstm, spec, frame)
    row = tuned.feature_set.columns.index("q_gaslift")
    assert np.any(tuned.params["body.0.W"][row] != 0.0)


def test_fine_tune_schedule_and_provenance(base_lstm, field2):
    spec = TL.TransferSpec("fine_tune", epochs_scale=0.5)
    tuned = TL.fine_tune(base_lstm, spec, field2.partitions["trainval"], seed=3)
    ts = tuned.meta["train_spec"]
    assert ts["learning_rate"] == pytest.approx(base_lstm.meta["train_spec"]["learning_rate"] * 0.1)
    assert ts["epochs"] == 2
    prov = tuned.meta["transfer"]
    assert prov["base_sha256"] == TL.model_hash(base_lstm)
    assert len(prov["loss_curve"]) == 2
    assert loads(dumps(tuned)).meta["transfer"] == prov


def test_fine_tune_deterministic(base_lstm, field2):
    spec = TL.TransferSpec("fine_tune", input_adapter=["q_gaslift"])
    a = TL.fine_tune(base_lstm, spec, field2.partitions["trainval"], seed=1)
    b = TL.fine_tune(base_lstm, spec, field2.partitions["trainval"], seed=1)
    assert dumps(a) == dumps(b)


# --------------------------------------------------------------------------
# new layer


@pytest.mark.parametrize("which", ["base_lstm", "base_mlp"])
def test_new_layer_base_bitwise_frozen(which, request, field2):
    base = request.getfixturevalue(which)
    spec = TL.TransferSpec("new_layer", input_adapter=["q_gaslift"], new_layer_width=24)
    ext = TL.extend_with_new_layer(base, spec, field2.partitions["trainval"])
    assert TL.frozen_unchanged(base, ext)
    for k, v in base.params.items():
        if k.startswith("body."):
            assert ext.params[k].tobytes() == v.tobytes()
    assert ext.params["adapter.W"].shape == (base.rep_size + 1, 24)
    assert ext.meta["trainable"] == ["adapter", "head"]


def test_frozen_check_detects_change(base_lstm, field2):
    ext = TL.build_new_layer_model(base_lstm, TL.TransferSpec("new_layer"), field2.partitions["trainval"])
    assert TL.frozen_unchanged(base_lstm, ext)
    w = ext.params["body.0.W"].copy()
    w[0, 0] = np.nextafter(w[0, 0], np.inf)
    ext.params["body.0.W"] = w
    assert not TL.frozen_unchanged(base_lstm, ext)


def test_zero_head_is_constant(base_lstm, field2):
    frame = field2.partitions["trainval"]
    spec = TL.TransferSpec("new_layer", zero_head=True, input_adapter=["q_gaslift"])
    ext = TL.build_new_layer_model(base_lstm, spec, frame)
    pred = ext.predict(windows(ext, frame).x)
    expected = ext.target_scaler.inverse(np.zeros((1, 1)))[0, 0]
    assert np.all(pred == expected)


def test_new_layer_default_width(base_lstm, field2):
    ext = TL.build_new_layer_model(base_lstm, TL.TransferSpec("new_layer"), field2.partitions["trainval"])
    assert ext.arch["adapter"]["width"] == base_lstm.rep_size
    assert ext.scaler == base_lstm.scaler


def test_new_layer_rejects_double_adapter(base_lstm, field2):
    ext = TL.build_new_layer_model(base_lstm, TL.TransferSpec("new_layer"), field2.partitions["trainval"])
    with pytest.raises(InvalidConfig):
        TL.build_new_layer_model(ext, TL.TransferSpec("new_layer"), field2.partitions["trainval"])


def test_transfer_dispatch_and_strategy_checks(base_mlp, field2):
    frame = field2.partitions["trainval"]
    assert "adapter.W" in TL.transfer(base_mlp, TL.TransferSpec("new_layer"), frame).params
    assert "adapter.W" not in TL.transfer(base_mlp, TL.TransferSpec("fine_tune"), frame).params
    with pytest.raises(InvalidConfig):
        TL.fine_tune(base_mlp, TL.TransferSpec("new_layer"), frame)
    with pytest.raises(InvalidConfig):
        TL.extend_with_new_layer(base_mlp, TL.TransferSpec("fine_tune"), frame)


def test_ridge_base_rejected(small_field, field2):
    ridge = T.fit_model(T.ModelConfig("LR-T", "ridge", "Set3", "minmax", {"alpha": 0.1}),
                        small_field.partitions["trainval"])
    with pytest.raises(InvalidConfig):
        TL.fine_tune(ridge, TL.TransferSpec("fine_tune"), field2.partitions["trainval"])
