import math

import numpy as np
import pytest
from scipy.special import softmax

from sunset_sim.calibration import degradations
from sunset_sim.errors import CalibrationError, ModelError, ScenarioError
from sunset_sim.evaluation.metrics import compute_iou
from sunset_sim.pipeline import imaging
from sunset_sim.pipeline.frames import FusedFrame
from sunset_sim.pipeline.model import ModelConfig, features, logits_for, pixel_entropy, segment, segment_arrays
from sunset_sim.pipeline.scene import (
    MAX_CLASSES,
    MAX_COLOR_SHIFT,
    SceneSpec,
    band_classes,
    generate_frame,
    prototype_matrix,
    prototypes,
)

SPEC = SceneSpec()


def model(settings, modality="fused"):
    return ModelConfig.for_modality(modality, settings)


# ── Scene ─────────────────────────────────────────────────────────────────────
def test_frame_is_deterministic_and_read_only():
    a = generate_frame(1200, SPEC)
    b = generate_frame(1200, SceneSpec())
    assert np.array_equal(a.rgb, b.rgb) and np.array_equal(a.labels, b.labels)
    with pytest.raises(ValueError):
        a.rgb[0, 0, 0] = 1.0


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("t_ms", [0, 3300, 17900])
def test_every_class_in_every_frame(seed, t_ms):
    spec = SceneSpec(seed=seed)
    labels = generate_frame(t_ms, spec).labels
    assert labels.shape == (spec.height, spec.width)
    assert set(np.unique(labels)) == set(range(spec.num_classes))


def test_noise_free_pixels_equal_their_prototype():
    spec = SceneSpec(pixel_noise_sigma=0.0)
    frame = generate_frame(500, spec)
    protos = prototypes(spec.num_classes)
    grey = np.array([p.rgb_mean for p in protos])[frame.labels]
    depth = np.array([p.depth_mean for p in protos])[frame.labels]
    assert np.array_equal(frame.rgb, grey)
    assert np.array_equal(frame.depth, depth)


def test_right_half_mirrors_left():
    labels = generate_frame(0, SPEC).labels
    half = SPEC.width // 2
    assert np.array_equal(labels[:, half:], (SPEC.num_classes - 1 - labels[:, :half])[:, ::-1])


def test_boundaries_drift_over_time():
    assert not np.array_equal(generate_frame(0, SPEC).labels, generate_frame(2000, SPEC).labels)


@pytest.mark.parametrize("seed", range(4))
def test_consecutive_frames_change_few_labels(seed):
    spec = SceneSpec(seed=seed)
    for t in range(0, 20000, 700):
        a = generate_frame(t, spec).labels
        b = generate_frame(t + 100, spec).labels
        assert np.mean(a != b) < 0.2


def test_band_walk_steps_by_one():
    walk = band_classes(5, 5, 3)
    assert all(abs(a - b) == 1 for a, b in zip(walk, walk[1:]))


def test_prototypes_are_symmetric_and_distinct():
    fused = prototype_matrix(5, "fused")
    assert fused.shape == (5, 4)
    assert np.allclose(fused + fused[::-1], 1.0)
    gaps = np.diff(fused, axis=0)
    # One RGB step and one depth step weigh the same in squared distance.
    assert np.allclose((gaps[:, :3] ** 2).sum(axis=1), gaps[:, 3] ** 2)


@pytest.mark.parametrize("kwargs", [
    {"num_classes": MAX_CLASSES + 1},
    {"width": 6},
    {"bands_per_half": 1},
    {"pixel_noise_sigma": -0.1},
])
def test_degenerate_scene_rejected(kwargs):
    with pytest.raises(ScenarioError):
        generate_frame(0, SceneSpec(**kwargs))


# ── Imaging ───────────────────────────────────────────────────────────────────
def test_enhancement_reverses_colour_shift_away_from_clamp():
    rgb = generate_frame(0, SPEC).rgb
    restored = imaging.enhance(imaging.color_shift(rgb, 0.25), 0.25)
    assert np.allclose(restored, rgb, atol=1e-12)


def test_shift_moves_content_right_and_down():
    img = np.zeros((5, 5))
    img[1, 1] = 1.0
    moved = imaging.shift_image(img, (2, 1))
    assert moved[2, 3] == 1.0 and moved.sum() == 1.0


def test_blur_lowers_sharpness():
    rgb = generate_frame(0, SPEC).rgb
    assert imaging.sharpness(imaging.blur(rgb, 2.0)) < imaging.sharpness(rgb) / 10


@pytest.mark.parametrize("offset", [(2, 0), (-2, 0), (1, 0)])
def test_recalibration_recovers_misalignment(offset):
    frame = generate_frame(700, SPEC)
    shifted = imaging.shift_image(frame.depth, offset)
    assert imaging.recalibrate_offset(frame.rgb, shifted, radius=4) == (-offset[0], -offset[1])


def test_recalibration_without_data():
    with pytest.raises(CalibrationError, match="no data"):
        imaging.recalibrate_offset(None, None)


# ── Model ─────────────────────────────────────────────────────────────────────
def test_softmax_sums_to_one(settings):
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, size=(8, 8, 4))
    probs = softmax(logits_for(x, model(settings)), axis=-1)
    assert np.abs(probs.sum(axis=-1) - 1.0).max() < 1e-9


def test_entropy_bounded_by_log_k(settings):
    rng = np.random.default_rng(2)
    m = model(settings)
    for _ in range(1000):
        rgb = rng.uniform(0, 1, size=(6, 6, 3))
        depth = rng.uniform(0, 1, size=(6, 6))
        h = segment_arrays(rgb, depth, m).mean_entropy
        assert 0.0 <= h <= math.log(m.num_classes) + 1e-12


def test_uniform_logits_give_max_entropy():
    probs = softmax(np.zeros((1, 1, 5)), axis=-1)
    assert pixel_entropy(probs)[0, 0] == pytest.approx(math.log(5))


@pytest.mark.parametrize("modality,frame_modality", [("rgb", "fused"), ("fused", "rgb_only"), ("depth", "fused")])
def test_modality_mismatch(settings, modality, frame_modality):
    f = generate_frame(0, SPEC)
    frame = FusedFrame(rgb=f.rgb, depth=f.depth, modality=frame_modality, stamp=0)
    with pytest.raises(ModelError, match="modality mismatch"):
        segment(frame, model(settings, modality))


def test_missing_channel_is_a_mismatch():
    with pytest.raises(ModelError):
        features(None, np.zeros((2, 2)), "fused")


def test_clean_frames_segment_confidently(settings):
    m = model(settings)
    for t in (100, 6000, 15000):
        f = generate_frame(t, SPEC)
        result = segment_arrays(f.rgb, f.depth, m)
        assert result.mean_entropy < settings.thresholds.entropy_max
        assert np.mean(result.labels == f.labels) > 0.95


def test_each_entropy_uncertainty_crosses_threshold(settings):
    m = model(settings)
    rng = np.random.default_rng(0)
    entropies = {}
    for name, degrade in degradations(settings).items():
        f = generate_frame(2500, SPEC)
        rgb, depth = degrade(f.rgb, f.depth, rng)
        entropies[name] = segment_arrays(rgb, depth, m).mean_entropy
        assert entropies[name] > settings.thresholds.entropy_max, name
    assert entropies["enhancement_on_clean"] == pytest.approx(entropies["color_shift"], rel=0.1)


@pytest.mark.parametrize("seed", range(3))
def test_colour_shift_degrades_monotonically(settings, seed):
    spec = SceneSpec(seed=seed, pixel_noise_sigma=0.0)
    m = model(settings)
    shifts = np.linspace(0.0, MAX_COLOR_SHIFT, 26)
    for t in (0, 4000, 9000):
        f = generate_frame(t, spec)
        results = [segment_arrays(imaging.color_shift(f.rgb, d), f.depth, m) for d in shifts]
        entropy = [r.mean_entropy for r in results]
        iou = [compute_iou(r.labels, f.labels, spec.num_classes).mean for r in results]
        assert all(a < b for a, b in zip(entropy, entropy[1:]))
        assert all(a >= b for a, b in zip(iou, iou[1:]))


def test_colour_shift_degrades_monotonically_with_pixel_noise(settings):
    m = model(settings)
    f = generate_frame(2500, SPEC)
    entropy = [segment_arrays(imaging.color_shift(f.rgb, d), f.depth, m).mean_entropy
               for d in np.linspace(0.0, MAX_COLOR_SHIFT, 6)]
    assert entropy == sorted(entropy)
    assert entropy[0] < settings.thresholds.entropy_max < entropy[-1]


def test_single_modality_models_are_confident_on_clean_data(settings):
    f = generate_frame(0, SPEC)
    assert segment_arrays(f.rgb, None, model(settings, "rgb")).mean_entropy < 0.06
    assert segment_arrays(None, f.depth, model(settings, "depth")).mean_entropy < 0.06
