import numpy as np
import pytest

from greatscore import TransformConfig, apply_transform, kernels
from greatscore.kernels import backends
from greatscore.score import local_scores
from greatscore.transform import inner_map


def _case(seed, m=3, n=50, k=4):
    r = np.random.default_rng(seed)
    logits = r.normal(0, 2, (m, n, k))
    logits[:, ::9, 1] = logits[:, ::9, 0]
    return logits, r.integers(0, k, n)


def test_fallback_always_present():
    assert "python" in backends()
    assert kernels.BACKEND in backends()


@pytest.mark.parametrize("mode", ["sigmoid-T", "softmax-T", "sigmoid-after-softmax", "softmax-after-sigmoid"])
def test_grid_means_match_reference(kernel, mode):
    logits, labels = _case(3)
    temps = np.array([1e-5, 0.003, 0.5, 1.0, 1.7])
    inner, outer = inner_map(logits, mode)
    got = kernel.grid_means(inner, labels, temps, outer)
    assert got.shape == (temps.size, logits.shape[0])
    for i, t in enumerate(temps):
        cfg = TransformConfig(mode).with_temperature(float(t))
        for m in range(logits.shape[0]):
            ref = local_scores(apply_transform(logits[m], cfg), labels).mean()
            assert got[i, m] == pytest.approx(ref, rel=1e-12, abs=1e-15)


def test_local_scores_backend(kernel):
    r = np.random.default_rng(4)
    probs = r.random((300, 6))
    probs[::5, 2] = probs[::5, 0]
    labels = r.integers(0, 6, 300)
    assert np.array_equal(kernel.local_scores(probs, labels), backends()["python"].local_scores(probs, labels))


def test_backends_agree():
    impls = backends()
    if len(impls) < 2:
        pytest.skip("compiled extension not built")
    logits, labels = _case(11, m=5, n=200, k=10)
    temps = np.linspace(1e-5, 2, 301)
    inner, outer = inner_map(logits, "softmax-after-sigmoid")
    a = impls["cython"].grid_means(inner, labels, temps, outer)
    b = impls["python"].grid_means(inner, labels, temps, outer)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_pure_switch_selects_fallback():
    import subprocess
    import sys
    code = "import greatscore.kernels as k; print(k.BACKEND)"
    env = {**__import__("os").environ, "GREATSCORE_PURE": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
