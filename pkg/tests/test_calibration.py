import math

import pytest

from conftest import make_scenario
from sunset_sim.calibration import (
    CLEAN_MAX,
    DEGRADED_MIN,
    _mean_entropy,
    calibrate,
    degradations,
    format_table,
)
from sunset_sim.errors import CalibrationError
from sunset_sim.pipeline.scene import SceneSpec


@pytest.fixture
def spec(settings):
    return SceneSpec.from_settings(settings.scene, 0)


def test_entropy_limits_of_the_temperature(settings, spec):
    assert _mean_entropy(settings, spec, 1e-6, None) < 1e-6
    hot = _mean_entropy(settings, spec, 1e3, None)
    assert hot == pytest.approx(math.log(spec.num_classes), rel=1e-3)


def test_entropy_grows_with_temperature(settings, spec):
    values = [_mean_entropy(settings, spec, tau, None) for tau in (1e-3, 1e-2, 1e-1)]
    assert values == sorted(values)


@pytest.mark.slow
def test_calibration_separates_clean_from_degraded(settings):
    result = calibrate(settings)
    best = next(r for r in result.table if round(r.tau, 6) == result.tau["fused"])
    assert best.clean < CLEAN_MAX < 0.06 < DEGRADED_MIN < min(best.degraded.values())
    assert result.tau["rgb"] == result.tau["depth"] == pytest.approx(result.tau["fused"] / 2, abs=1e-6)
    assert result.sharpness_blurred < result.sharpness_min < result.sharpness_clean
    assert set(result.fragment()) == {"model", "thresholds"}
    assert "ok" in format_table(result.table).splitlines()[0]


def test_calibration_fails_when_a_degradation_is_invisible():
    settings = make_scenario(magnitudes={"misalignment_px": [0, 0]}).settings
    assert set(degradations(settings)) == {"color_shift", "enhancement_on_clean", "misalignment", "depth_noise"}
    with pytest.raises(CalibrationError, match="no temperature"):
        calibrate(settings)
