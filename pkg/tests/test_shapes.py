import pytest

from src.models.shapes import ShapePlan, minimal_input, natural_output, plan_axis


def test_default_geometry_is_derived_from_the_layer_list():
    plan = ShapePlan.for_output(66, 256, levels=4)
    assert plan.input_shape == (158, 350)
    assert plan.output_shape == (66, 256)
    assert plan.frames.trim == 0
    assert plan.bins.natural_output == 258
    assert plan.bins.trim == 2


def test_adjustments_report_the_bin_trim():
    notes = ShapePlan.for_output(66, 256, levels=4).adjustments
    assert len(notes) == 1
    assert notes[0].startswith("bins")
    assert "258" in notes[0] and "256" in notes[0]


def test_shrunk_network_windows():
    plan = ShapePlan.for_output(32, 256, levels=2)
    assert plan.input_shape == (54, 278)
    assert plan.frame_offset == (54 - 32) // 2


def test_tiny_network_windows():
    plan = ShapePlan.for_output(4, 8, levels=1)
    assert plan.input_shape == (12, 16)
    assert plan.adjustments == []


def test_too_small_input_is_rejected():
    assert natural_output(20, 4) == 0
    with pytest.raises(ValueError):
        plan_axis(100, 66, 4)


def test_minimal_input_reaches_the_target():
    for target, levels in ((66, 4), (256, 4), (32, 2), (8, 1)):
        n = minimal_input(target, levels)
        assert natural_output(n, levels) >= target


def test_table_lists_every_stage():
    plan = ShapePlan.for_output(4, 8, levels=1)
    table = plan.table()
    assert list(table.columns) == ["stage", "frames", "bins"]
    assert table.iloc[0].tolist() == ["input", 12, 16]
    assert table.iloc[-1].tolist() == ["up1_conv", 4, 8]
