import json
import math

import numpy as np
import pytest

import mitia

mitia.set_num_threads(1)


def test_phantom_pair_is_deterministic_and_in_range():
    a1, b1 = mitia.make_phantom_pair(4, 32)
    a2, b2 = mitia.make_phantom_pair(4, 32)
    assert a1.shape == (32, 32)
    assert np.array_equal(a1, a2) and np.array_equal(b1, b2)
    assert a1.min() >= -1.0 and a1.max() <= 1.0


def test_shuffle_remap_identity_and_swap():
    x = np.linspace(-1, 1, 16, dtype=np.float32).reshape(4, 4)
    assert np.array_equal(mitia.shuffle_remap(x, [-1 / 3, 1 / 3], [0, 1, 2]), x)
    swapped = mitia.shuffle_remap(np.array([[-1.0, -0.5], [0.0, 1.0]], dtype=np.float32), [0.0], [1, 0])
    assert np.allclose(swapped, [[0.0, 0.5], [-1.0, 0.0]])
    spec = mitia.random_shuffle_spec(3)
    assert sorted(spec["permutation"]) == list(range(spec["k"]))
    with pytest.raises(ValueError):
        mitia.shuffle_remap(x, [0.5, 0.0], [0, 1, 2])


def test_resample_and_affine():
    rng = np.random.default_rng(0)
    img = rng.uniform(-1, 1, (8, 8)).astype(np.float32)
    assert np.array_equal(mitia.resample(img, np.zeros((2, 8, 8), np.float32)), img)
    field = np.zeros((2, 8, 8), np.float32)
    field[1] = 1.0
    shifted = mitia.resample(img, field)
    assert np.allclose(shifted[:, :7], img[:, 1:])
    assert np.all(shifted[:, 7] == -1.0)
    assert np.array_equal(mitia.random_affine(img), img)


def test_mutual_information_of_balanced_binary_image():
    a = np.ones((4, 4), np.float32)
    a[:2] = -1
    assert mitia.mutual_information(a, a) == pytest.approx(math.log(2))


def test_activation():
    w = mitia.activate(np.array([0.0, 0.05, 0.1, 0.7], np.float32), 0.1)
    assert np.allclose(w, [1.0, 0.95, 0.0, 0.0])
    with pytest.raises(ValueError):
        mitia.activate(np.zeros(3, np.float32), 1.0)


def test_metrics():
    ref = np.zeros((16, 16), np.float32)
    assert mitia.psnr(ref + 0.2, ref) == pytest.approx(20.0, abs=1e-4)
    assert mitia.psnr(ref, ref) == 99.0
    assert mitia.ssim(ref + 0.1, ref + 0.1) == pytest.approx(1.0)
    assert mitia.ks_statistic([0.0, 0.1], [1.0, 2.0]) == 1.0
    assert mitia.roc_auc([0.1, 0.9], [0.0, 1.0]) == 1.0


def test_config_and_device(monkeypatch):
    cfg = json.loads(mitia.preset_config("desk"))
    assert cfg["image_size"] == 32 and cfg["width_mult"] == 0.25
    with pytest.raises(RuntimeError):
        mitia.preset_config("nope")
    monkeypatch.setenv("MITIA_DEVICE", "cpu")
    assert mitia.select_device() == "cpu"
    monkeypatch.setenv("MITIA_DEVICE", "cuda")
    with pytest.raises(RuntimeError):
        mitia.select_device()


def test_tiny_pipeline_and_resume(tmp_path):
    cfg = json.loads(mitia.preset_config("desk"))
    cfg["data"].update(train_subjects=1, test_subjects=1, slices_per_subject=4)
    for stage in ("mdet", "cycle"):
        cfg[stage]["num_blocks"] = 1
    cfg["mdet"]["epochs"] = 1
    cfg["mreg"].update(coarse_epochs=1, fine_epochs=1)
    cfg["cycle"]["epochs"] = 1
    first = mitia.run_pipeline(json.dumps(cfg), tmp_path / "run")
    assert first["stages_run"] == ["synth", "mdet", "mreg", "cycle", "evaluate"]
    assert (tmp_path / "run" / "metrics" / "metrics.csv").exists()
    assert (tmp_path / "run" / "report.md").exists()
    again = mitia.run_pipeline(json.dumps(cfg), tmp_path / "run")
    assert again["stages_run"] == []
