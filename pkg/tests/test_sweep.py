import pytest

from flattenquant.core.config import QuantMode, RunConfig, SmoothingRule
from flattenquant.core.errors import InvalidParameterError
from flattenquant.quant.sweep import SweepParam, config_for, parse_sweep_values, run_sweep
from flattenquant.schemas import SweepArtifact


@pytest.fixture
def layer_maps(small_model):
    weights = {layer.name: layer.weight for layer in small_model.layers}
    calib = {layer.name: layer.calib for layer in small_model.layers}
    evals = {layer.name: layer.eval_x for layer in small_model.layers}
    return weights, calib, evals


def test_beta_sweep_lowers_the_flatten_ratio(layer_maps):
    table = run_sweep(SweepParam.BETA, [1.1, 1.2, 1.3, 1.4, 1.5], RunConfig(), *layer_maps)
    ratios = [row.flatten_ratio_x for row in table.rows]
    assert ratios == sorted(ratios, reverse=True)
    assert [row.value for row in table.rows] == ["1.1", "1.2", "1.3", "1.4", "1.5"]


def test_gamma_sweep_raises_the_int4_share(layer_maps):
    table = run_sweep(SweepParam.GAMMA, [0.0, 1.0, 1.86, 3.0, 100.0], RunConfig(), *layer_maps)
    fractions = [row.int4_fraction for row in table.rows]
    assert fractions == sorted(fractions)
    assert fractions[0] == 0.0


def test_switch_values():
    assert parse_sweep_values(SweepParam.CLIP, ["on", "off"]) == [True, False]
    assert parse_sweep_values(SweepParam.BETA, ["1.1", "2"]) == [1.1, 2.0]
    with pytest.raises(InvalidParameterError):
        parse_sweep_values(SweepParam.SMOOTH, ["maybe"])
    with pytest.raises(InvalidParameterError):
        parse_sweep_values(SweepParam.GAMMA, ["high"])
    with pytest.raises(InvalidParameterError):
        parse_sweep_values(SweepParam.BETA, [])


def test_config_for_replaces_one_field():
    base = RunConfig(beta=1.2)
    assert config_for(base, SweepParam.ALPHA, 0.8).alpha == 0.8
    assert config_for(base, SweepParam.CLIP, False).clip_outliers is False
    assert config_for(base, SweepParam.SMOOTH, False).smoothing is SmoothingRule.NONE
    assert config_for(RunConfig(smoothing="none"), SweepParam.SMOOTH, True).smoothing is SmoothingRule.FLATTEN
    assert config_for(base, SweepParam.GAMMA, 2.0).beta == 1.2


def test_config_for_validates_values():
    with pytest.raises(InvalidParameterError):
        config_for(RunConfig(), SweepParam.ALPHA, 2.0)


def test_sweep_table_csv(layer_maps):
    table = run_sweep(SweepParam.CLIP, [True, False], RunConfig(), *layer_maps)
    csv_text = SweepArtifact.from_table(table, RunConfig().resolved()).to_csv()
    lines = csv_text.splitlines()
    assert lines[0].startswith("clip,flatten_ratio_x,")
    assert [line.split(",")[0] for line in lines[1:]] == ["on", "off"]


def test_gamma_sweep_on_the_reference_model(reference_maps):
    gammas = [1.82, 1.84, 1.86, 1.88, 1.90]
    table = run_sweep(SweepParam.GAMMA, gammas, RunConfig(), *reference_maps)
    fractions = [row.int4_fraction for row in table.rows]
    assert fractions == sorted(fractions)
    assert all(0.3 <= f <= 0.6 for f in fractions)


def test_smoothing_lowers_the_reference_error(reference_maps):
    table = run_sweep(SweepParam.SMOOTH, [True, False], RunConfig(mode=QuantMode.O1), *reference_maps)
    smoothed, plain = table.rows
    assert [smoothed.value, plain.value] == ["on", "off"]
    assert smoothed.mean_output_mse < plain.mean_output_mse
