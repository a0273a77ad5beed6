import numpy as np

from flattenquant.core.config import RunConfig
from flattenquant.quant.synthetic import LayerProfile, generate_model, layer_profile, outlier_count
from flattenquant.quant.tensor_io import encode_archive


def _cfg(**overrides) -> RunConfig:
    values = dict(layers=2, in_features=128, out_features=16, tokens=32, batches=2, eval_tokens=16)
    values.update(overrides)
    return RunConfig(**values)


def test_same_seed_gives_identical_archives():
    first = generate_model(_cfg(seed=7))
    second = generate_model(_cfg(seed=7))
    assert encode_archive(first.model_archive()) == encode_archive(second.model_archive())
    assert encode_archive(first.eval_archive()) == encode_archive(second.eval_archive())
    for name, archive in first.calib_archives().items():
        assert encode_archive(archive) == encode_archive(second.calib_archives()[name])


def test_other_seed_differs():
    first = generate_model(_cfg(seed=1)).layers[0].weight
    second = generate_model(_cfg(seed=2)).layers[0].weight
    assert not np.array_equal(first, second)


def test_shapes_and_names():
    model = generate_model(_cfg())
    assert [layer.name for layer in model.layers] == ["layer_00", "layer_01"]
    layer = model.layers[0]
    assert layer.weight.shape == (128, 16)
    assert [x.shape for x in layer.calib] == [(32, 128), (32, 128)]
    assert layer.eval_x.shape == (16, 128)
    assert list(model.calib_archives()["layer_00"]) == ["batch_0", "batch_1"]


def test_planted_channels_reach_their_factor():
    model = generate_model(_cfg(outlier_fraction=0.02, bounded_fraction=0.0))
    for layer in model.layers:
        assert layer.profile is LayerProfile.OUTLIER
        maxes = np.max(np.abs(np.vstack(layer.calib)), axis=0)
        bulk = np.median(np.delete(maxes, layer.outlier_channels))
        assert layer.outlier_channels.size == 3
        np.testing.assert_allclose(maxes[layer.outlier_channels], layer.factors * bulk, rtol=1e-9)
        assert np.all(maxes[layer.outlier_channels] >= 20.0 * bulk * (1 - 1e-9))


def test_zero_fraction_plants_nothing():
    model = generate_model(_cfg(outlier_fraction=0.0))
    for layer in model.layers:
        maxes = np.max(np.abs(np.vstack(layer.calib)), axis=0)
        assert layer.outlier_channels.size == 0
        assert np.max(maxes) <= 5.0 * np.median(maxes)


def test_outlier_count():
    assert outlier_count(4096, 0.01) == 41
    assert outlier_count(10, 0.01) == 1
    assert outlier_count(10, 0.0) == 0


def test_profiles_interleave():
    assert [layer_profile(i, 0.5) for i in range(4)] == [
        LayerProfile.OUTLIER, LayerProfile.BOUNDED, LayerProfile.OUTLIER, LayerProfile.BOUNDED,
    ]
    assert all(layer_profile(i, 0.0) is LayerProfile.OUTLIER for i in range(8))
    assert all(layer_profile(i, 1.0) is LayerProfile.BOUNDED for i in range(8))
    assert sum(layer_profile(i, 0.25) is LayerProfile.BOUNDED for i in range(8)) == 2


def test_default_model_mixes_profiles():
    model = generate_model(_cfg(layers=8))
    profiles = [layer.profile for layer in model.layers]
    assert profiles.count(LayerProfile.BOUNDED) == 4
    assert model.layers[0].profile is LayerProfile.OUTLIER


def test_bounded_layers_stay_inside_their_gain():
    model = generate_model(_cfg(bounded_fraction=1.0, outlier_fraction=0.05))
    for layer in model.layers:
        assert layer.profile is LayerProfile.BOUNDED
        assert layer.outlier_channels.size == 0
        x = np.vstack(layer.calib + [layer.eval_x])
        assert np.max(np.abs(x)) <= 1.1
        assert np.max(np.abs(layer.weight)) <= 1.1 * np.sqrt(3.0 / 128)
        maxes = np.max(np.abs(x), axis=0)
        assert np.max(maxes) <= 1.5 * np.median(maxes)


def test_planted_weight_rows_are_damped():
    layer = generate_model(_cfg(outlier_fraction=0.25, bounded_fraction=0.0)).layers[0]
    norms = np.linalg.norm(layer.weight, axis=1)
    planted = norms[layer.outlier_channels]
    others = np.delete(norms, layer.outlier_channels)
    assert planted.size == 32
    assert planted.mean() < 0.7 * others.mean()
