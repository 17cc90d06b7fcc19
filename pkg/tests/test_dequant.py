from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gifrestore import dequant, metrics, quant
from gifrestore.dequant import (DITHERED, ConstrainedSmoothing, DequantConfig, ResidualStep,
                                cell_retract, dequantize, dequantize_uint8, feasible_uint8,
                                retract_image, smoothness_energy, smoothness_gradient)
from gifrestore.errors import ConfigError, PaletteMismatchError
from helpers import random_palette, smooth_fixture

GRAYS = np.array([[64, 64, 64], [192, 192, 192]], np.uint8)


def scalar_step_oracle(g_row: list[float], levels: tuple[float, float], k: int, eta: float,
                       inner: int) -> list[float]:
    """Constrained smoothing on a gray 1-D signal, written out with plain floats.

    Gray pixels stay gray, so the 3-D cell test reduces to which side of the
    midpoint a value sits, and the 3-D segment length is sqrt(3) times the
    1-D distance.
    """
    lo, hi = levels
    mid = (lo + hi) / 2
    target = [v for v in g_row]
    cur = list(g_row)
    step = eta * 2 / 16
    n = len(cur)

    def cell(v):
        return lo if v <= mid else hi  # ties go to the first (darker) palette entry

    for _ in range(k):
        for _ in range(inner):
            grad = [0.0] * n
            for i in range(n - 1):
                d = cur[i + 1] - cur[i]
                grad[i] -= 2 * d
                grad[i + 1] += 2 * d
            # three channels, all equal
            cur = [c - step * g for c, g in zip(cur, grad)]
        cur = [min(max(c, 0.0), 255.0) for c in cur]
        for i in range(n):
            if cell(cur[i]) != target[i]:
                a, b = 0.0, 1.0
                seg = target[i] - cur[i]
                s0 = cur[i]
                while (b - a) * abs(seg) * 3 ** 0.5 > 0.25:
                    m = (a + b) / 2
                    if cell(s0 + m * seg) == target[i]:
                        b = m
                    else:
                        a = m
                cur[i] = s0 + b * seg
    return cur


def gray_row(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    return np.repeat(v[None, :, None], 3, axis=2)


def test_constant_image_is_fixed_point():
    pal = np.array([[10, 20, 30], [200, 100, 0]], np.uint8)
    g = np.broadcast_to(pal[1], (9, 11, 3)).copy()
    out = dequantize(g, pal)
    assert np.array_equal(out, g.astype(np.float64))


def test_step_image_matches_scalar_oracle_and_improves():
    ramp = np.linspace(0, 255, 64)
    g = quant.quantize(gray_row(ramp), GRAYS)
    cfg = DequantConfig(unfold_steps=2, convergence_tol=0.0)
    out = dequantize(g, GRAYS, cfg)
    ref = scalar_step_oracle(g[0, :, 0].astype(float).tolist(), (64.0, 192.0), 2,
                             cfg.step_size, cfg.inner_iterations)
    np.testing.assert_allclose(out[0, :, 0], ref, atol=1e-9)
    assert np.allclose(out[..., 0], out[..., 1]) and np.allclose(out[..., 0], out[..., 2])
    ramp_img = gray_row(ramp)
    assert metrics.psnr(out, ramp_img) > metrics.psnr(g, ramp_img)
    ref_img = gray_row(ref)
    assert metrics.psnr(ref_img, ramp_img) > metrics.psnr(g, ramp_img)


def test_smoothing_constant_gives_zero_update():
    op = ConstrainedSmoothing()
    assert np.all(op(np.full((5, 5, 3), 77.0), None) == 0)


def test_smoothing_spike_signs():
    img = np.full((7, 7, 3), 100.0)
    img[3, 3] = 200.0
    d = ConstrainedSmoothing(inner_iterations=1)(img, None)
    assert np.all(d[3, 3] < 0)
    for y, x in ((2, 3), (4, 3), (3, 2), (3, 4)):
        assert np.all(d[y, x] > 0)


def test_inner_energy_non_increasing_on_plateau_ramp():
    ramp = np.repeat(np.arange(8) * 30.0, 8)  # 1-D ramp of plateaus
    op = ConstrainedSmoothing(step_size=0.9, inner_iterations=30)
    energies = op.trace(gray_row(ramp))
    assert all(b <= a + 1e-9 for a, b in zip(energies, energies[1:]))


def test_residual_step_zero_when_requantization_matches():
    g = np.full((3, 3, 3), 64.0)
    assert np.all(ResidualStep(0.5)(g + 3, g, g, g - g) == 0)


def test_residual_step_is_local():
    g = np.full((4, 4, 3), 64.0)
    g_t = g.copy()
    g_t[1, 2] = 192.0
    d = ResidualStep(0.5)(g_t, g, g_t, g - g_t)
    expected = np.zeros_like(g)
    expected[1, 2] = 0.5 * (64 - 192)
    assert np.array_equal(d, expected)


def test_residual_step_needs_requantized_input():
    with pytest.raises(ValueError):
        ResidualStep()(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)), None, None)


@pytest.mark.parametrize("seed", range(5))
def test_residual_step_contracts_with_unit_step(seed):
    rng = np.random.default_rng(seed)
    img = smooth_fixture(rng, 24, 24)
    pal = quant.median_cut_palette(img, 16)
    g = quant.quantize(img, pal).astype(np.float64)
    i_t = np.clip(g + rng.normal(0, 12, g.shape), 0, 255)
    g_t = quant.quantize(i_t, pal).astype(np.float64)
    assert np.any(g_t != g)
    d = ResidualStep(1.0)(i_t, g, g_t, g - g_t)
    after = quant.quantize(np.clip(i_t + d, 0, 255), pal).astype(np.float64)
    assert np.linalg.norm(g - after) <= np.linalg.norm(g - g_t)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 255, (8, 8, 3))
    grad = smoothness_gradient(img)
    fd = np.zeros_like(img)
    h = 1e-3
    for idx in np.ndindex(img.shape):
        up, dn = img.copy(), img.copy()
        up[idx] += h
        dn[idx] -= h
        fd[idx] = (smoothness_energy(up) - smoothness_energy(dn)) / (2 * h)
    assert np.linalg.norm(fd - grad) / np.linalg.norm(grad) <= 1e-4


@pytest.mark.parametrize("seed", range(6))
def test_hard_constraint_exactness(seed):
    rng = np.random.default_rng(seed)
    img = smooth_fixture(rng, 32, 32)
    pal = quant.median_cut_palette(img, int(rng.choice([4, 8, 32])))
    g = quant.quantize(img, pal)
    for cfg in (DequantConfig(), DequantConfig(unfold_steps=4, step_size=0.9),
                DequantConfig(operator="residual", step_size=1.0)):
        out = dequantize(g, pal, cfg)
        assert np.array_equal(quant.quantize(out, pal), g)
        assert np.array_equal(quant.quantize(dequantize_uint8(g, pal, cfg), pal), g)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 24))
def test_hard_constraint_property_random_palettes(seed, n):
    rng = np.random.default_rng(seed)
    pal = random_palette(rng, n)
    g = pal[rng.integers(0, n, (7, 9))]
    out = dequantize(g, pal, DequantConfig(unfold_steps=3, step_size=0.9))
    assert np.array_equal(quant.quantize(out, pal), g)


@pytest.mark.parametrize("seed", range(4))
def test_unfolding_energy_monotone(seed):
    rng = np.random.default_rng(seed)
    img = smooth_fixture(rng, 32, 32)
    pal = quant.median_cut_palette(img, 32)
    g = quant.quantize(img, pal)
    energies = [smoothness_energy(g)]
    for k in range(1, 6):
        energies.append(smoothness_energy(dequantize(g, pal, DequantConfig(unfold_steps=k))))
    tol = 1e-6 * energies[0]
    assert all(b <= a + tol for a, b in zip(energies, energies[1:]))


def test_dithered_mode_never_quantizes(monkeypatch):
    def forbidden(*args, **kwargs):
        raise AssertionError("quantization called in dithered mode")
    for name in ("quantize", "quantize_indices", "palette_indices"):
        monkeypatch.setattr(dequant.quant, name, forbidden)
    rng = np.random.default_rng(0)
    g = random_palette(rng, 4)[rng.integers(0, 4, (8, 8))]
    calls = []

    def op(i_t, g_img, g_t, residual):
        calls.append((g_t, residual))
        return np.zeros_like(i_t)

    cfg = DequantConfig(mode=DITHERED, constraint="off", unfold_steps=3)
    out = dequantize(g, random_palette(rng, 4), cfg, op=op)
    assert calls == [(None, None)] * 3
    assert np.array_equal(out, g.astype(np.float64))


def test_config_invariants():
    with pytest.raises(ConfigError):
        DequantConfig(mode=DITHERED)  # hard constraint by default
    with pytest.raises(ConfigError):
        DequantConfig(mode=DITHERED, constraint="off", operator="residual")
    with pytest.raises(ConfigError):
        DequantConfig(unfold_steps=0)
    with pytest.raises(ConfigError):
        DequantConfig(step_size=0)
    assert DequantConfig().unfold_steps == 2


def test_palette_mismatch_rejected():
    with pytest.raises(PaletteMismatchError):
        dequantize(np.full((2, 2, 3), 5, np.uint8), GRAYS)


def test_retract_feasible_pixel_unchanged():
    assert np.array_equal(cell_retract((70, 60, 50), GRAYS, 0), [70, 60, 50])


def test_retract_from_other_palette_color():
    pal = np.array([[0, 0, 0], [100, 0, 0], [0, 100, 0]], np.uint8)
    out = cell_retract(pal[1], pal, 0)
    assert quant.cell_contains(pal, 0, out)
    # on the segment, within 0.25 of the boundary at x = 50 (the tie itself belongs to index 0)
    assert out[1] == 0 and out[2] == 0
    assert 50 - 0.25 <= out[0] <= 50


def test_retract_brute_force_trace():
    pal = np.array([[0, 0, 0], [255, 255, 255]], np.uint8)
    start = np.array([255.0, 255.0, 255.0])
    lo, hi = 0.0, 1.0
    seg = -start
    while (hi - lo) * np.linalg.norm(seg) > 0.25:
        mid = (lo + hi) / 2
        if quant.quantize_index(start + mid * seg, pal) == 0:
            hi = mid
        else:
            lo = mid
    np.testing.assert_allclose(cell_retract(start, pal, 0), start + hi * seg)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_retract_feasible_and_idempotent(seed):
    rng = np.random.default_rng(seed)
    pal = random_palette(rng, int(rng.integers(2, 12)))
    img = rng.uniform(0, 255, (5, 5, 3))
    target = rng.integers(0, len(pal), (5, 5))
    once = retract_image(img, pal, target)
    assert np.array_equal(quant.quantize_indices(once, pal), target)
    assert np.array_equal(retract_image(once, pal, target), once)


def test_retract_index_out_of_range():
    with pytest.raises(IndexError):
        cell_retract((0, 0, 0), GRAYS, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_feasible_uint8_stays_in_cell(seed):
    rng = np.random.default_rng(seed)
    pal = random_palette(rng, int(rng.integers(2, 16)))
    target = rng.integers(0, len(pal), (6, 6))
    img = retract_image(rng.uniform(0, 255, (6, 6, 3)), pal, target)
    out = feasible_uint8(img, pal, target)
    assert out.dtype == np.uint8
    assert np.array_equal(quant.quantize_indices(out, pal), target)


def test_dequantization_improves_smooth_scenes():
    rng = np.random.default_rng(11)
    for _ in range(5):
        img = smooth_fixture(rng)
        pal = quant.median_cut_palette(img, 32)
        g = quant.quantize(img, pal)
        assert metrics.psnr(dequantize(g, pal), img) >= metrics.psnr(g, img)
