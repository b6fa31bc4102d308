import math

import numpy as np
import pytest

from blocs import (BOTH, GLOBAL, LOCAL, ConfigError, CoverageError,
                   DegenerateInputError, GeometryError, PatchConfig,
                   PatchGroup, aggregate_patches, code_groups,
                   estimate_noise_sigma, extract_patches, global_transform,
                   haar_matrix, hard_threshold, inverse_global_transform,
                   local_basis, match_group, similarity_bound, solve_alpha,
                   threshold_for)

def test_positions_cover_the_border() -> None:
    cfg = PatchConfig()
    np.testing.assert_array_equal(cfg.positions(10), [0, 2, 4])
    np.testing.assert_array_equal(cfg.positions(11), [0, 2, 4, 5])
    with pytest.raises(DegenerateInputError):
        cfg.positions(5)

def test_haar_length_is_the_next_power_of_two() -> None:
    assert PatchConfig().haar_length == 64
    assert PatchConfig(group_size=8).haar_length == 8
    assert PatchConfig(group_size=1).haar_length == 1

def test_extract_then_aggregate_reconstructs(rng: np.random.Generator) -> None:
    pixels = rng.uniform(0, 255, (13, 17))
    patches = extract_patches(pixels, PatchConfig())

    assert patches[0][0] == (0, 0)
    assert patches[1][0] == (0, 2)
    np.testing.assert_array_equal(patches[0][1], pixels[:6, :6].ravel())
    np.testing.assert_allclose(aggregate_patches(patches, pixels.shape).pixels,
            pixels, rtol=1e-12)

def test_aggregation_averages_overlaps() -> None:
    patches = [((0, 0), np.full(4, 1.0)), ((0, 1), np.full(4, 3.0))]
    out = aggregate_patches(patches, (2, 3)).pixels
    np.testing.assert_array_equal(out, [[1, 2, 3], [1, 2, 3]])

def test_aggregation_detects_holes() -> None:
    with pytest.raises(CoverageError):
        aggregate_patches([((0, 0), np.zeros(4))], (4, 4))
    with pytest.raises(GeometryError):
        aggregate_patches([((3, 3), np.zeros(4))], (4, 4))

def test_group_of_a_constant_image_is_in_raster_order() -> None:
    cfg = PatchConfig(patch_side=2, group_size=4, stride=2, search_window=6)
    group = match_group((0, 0), np.full((12, 12), 9.0), cfg)

    assert group.members == [(0, 0), (0, 2), (0, 4), (2, 0)]
    assert group.data.shape == (4, 4)
    assert not group.padded

def test_group_prefers_similar_patches(rng: np.random.Generator) -> None:
    pixels = rng.uniform(0, 10, (12, 12))
    pixels[4:6, 4:6] = pixels[0:2, 0:2]
    cfg = PatchConfig(patch_side=2, group_size=2, stride=2, search_window=12)

    group = match_group((0, 0), pixels, cfg)
    assert group.members == [(0, 0), (4, 4)]

def test_small_windows_pad_the_group() -> None:
    cfg = PatchConfig(patch_side=2, group_size=6, stride=2, search_window=4)
    group = match_group((0, 0), np.arange(64.0).reshape(8, 8), cfg)

    assert group.padded
    assert len(group.members) == 6
    # 3 candidates besides the reference, the best one repeats
    assert group.members[4] == group.members[1]
    assert group.members[5] == group.members[1]

def test_match_group_needs_a_patch_position() -> None:
    with pytest.raises(GeometryError):
        match_group((1, 1), np.zeros((12, 12)), PatchConfig(patch_side=2))

def test_local_basis_is_orthogonal(rng: np.random.Generator) -> None:
    group = PatchGroup((0, 0), [], rng.normal(size=(36, 60)))
    basis = local_basis(group)

    np.testing.assert_allclose(basis.T @ basis, np.eye(36), atol=1e-10)
    assert group.basis is basis

def test_local_basis_of_identical_patches(rng: np.random.Generator) -> None:
    patch = rng.uniform(1, 5, 9)
    group = PatchGroup((0, 0), [], np.tile(patch[:, np.newaxis], (1, 5)))
    basis = local_basis(group)

    np.testing.assert_allclose(basis[:, 0], patch / np.linalg.norm(patch), atol=1e-10)
    np.testing.assert_allclose(basis.T @ basis, np.eye(9), atol=1e-10)

def test_local_basis_orders_by_energy(rng: np.random.Generator) -> None:
    data = rng.normal(size=(4, 50)) * np.array([[0.1], [5.0], [1.0], [0.01]])
    basis = local_basis(PatchGroup((0, 0), [], data))

    energy = np.sum((basis.T @ data) ** 2, axis=1)
    assert list(energy) == sorted(energy, reverse=True)

def test_haar_matrix() -> None:
    h = haar_matrix(8)
    np.testing.assert_allclose(h @ h.T, np.eye(8), atol=1e-12)
    np.testing.assert_allclose(h[0], np.full(8, 1 / math.sqrt(8)))
    with pytest.raises(DegenerateInputError):
        haar_matrix(6)

def test_global_transform_round_trip_and_parseval(rng: np.random.Generator) -> None:
    cfg = PatchConfig()
    data = rng.normal(size=(36, 64))

    coefficients = global_transform(data, cfg)
    assert coefficients.shape == (36, 64)
    assert np.sum(coefficients ** 2) == pytest.approx(np.sum(data ** 2), rel=1e-9)
    np.testing.assert_allclose(inverse_global_transform(coefficients, cfg, 64),
            data, atol=1e-10)

def test_global_transform_drops_padding(rng: np.random.Generator) -> None:
    cfg = PatchConfig()
    data = rng.normal(size=(36, 60))

    coefficients = global_transform(data, cfg)
    assert coefficients.shape == (36, 64)
    np.testing.assert_allclose(inverse_global_transform(coefficients, cfg), data,
            atol=1e-10)

def test_constant_group_has_a_single_global_coefficient() -> None:
    cfg = PatchConfig(patch_side=2, group_size=4)
    coefficients = global_transform(np.full((4, 4), 3.0), cfg)

    assert coefficients[0, 0] == pytest.approx(3.0 * math.sqrt(16))
    coefficients[0, 0] = 0.0
    np.testing.assert_allclose(coefficients, 0.0, atol=1e-12)

def test_hard_threshold() -> None:
    out = hard_threshold(np.array([5.0, -0.1, 2.0, 0.05]), 1.0)
    np.testing.assert_array_equal(out, [5.0, 0.0, 2.0, 0.0])

    matrix = np.array([[0.5, 0.2], [0.5, 3.0]])
    np.testing.assert_array_equal(hard_threshold(matrix, 1.0), [[0.5, 0.2], [0.0, 3.0]])

    with pytest.raises(ConfigError):
        hard_threshold(matrix, -1.0)

@pytest.mark.parametrize("mode", [LOCAL, GLOBAL, BOTH])
def test_zero_threshold_keeps_the_image(mode: str, rng: np.random.Generator, small_patches: PatchConfig) -> None:
    pixels = rng.uniform(0, 255, (16, 16))
    out = solve_alpha(pixels, mode, small_patches, 0.0)
    np.testing.assert_allclose(out.pixels, pixels, atol=1e-9)

def test_thresholding_denoises(rng: np.random.Generator, small_patches: PatchConfig) -> None:
    clean = np.full((24, 24), 50.0)
    clean[:, 12:] = 150.0
    noisy = clean + rng.normal(0, 10, clean.shape)

    out = solve_alpha(noisy, BOTH, small_patches, 27.0)
    assert np.mean((out.pixels - clean) ** 2) < np.mean((noisy - clean) ** 2)

def test_unknown_mode(small_patches: PatchConfig) -> None:
    with pytest.raises(ConfigError):
        solve_alpha(np.zeros((16, 16)), "wavelet", small_patches, 1.0)

def test_code_field_synthesizes_like_solve_alpha(rng: np.random.Generator, small_patches: PatchConfig) -> None:
    pixels = rng.uniform(0, 255, (12, 12))

    field = code_groups(pixels, GLOBAL, small_patches, 20.0)

    assert len(field.groups) == 25
    assert field.groups[0].reference == field.groups[0].members[0]
    np.testing.assert_allclose(field.synthesize(pixels.shape).pixels,
            solve_alpha(pixels, GLOBAL, small_patches, 20.0).pixels, atol=1e-9)

def test_noise_estimate(rng: np.random.Generator) -> None:
    assert estimate_noise_sigma(np.full((16, 16), 80.0)) == 0.0

    noisy = 100 + rng.normal(0, 10, (128, 128))
    assert estimate_noise_sigma(noisy) == pytest.approx(10.0, rel=0.1)

def test_threshold_choice(rng: np.random.Generator) -> None:
    noisy = rng.normal(0, 4, (32, 32))
    assert threshold_for(noisy, PatchConfig(tau_hard=5.0)) == 5.0
    assert threshold_for(noisy, PatchConfig()) == pytest.approx(2.7 * estimate_noise_sigma(noisy))

def test_similarity_bound() -> None:
    bound = similarity_bound(1.0, 65536, 0.01)
    assert bound.probability == pytest.approx(0.9445, abs=1e-3)
    assert bound.center == pytest.approx(math.sqrt(2 / math.pi))

    assert similarity_bound(100.0, 1, 0.01).probability == 0.0
    with pytest.raises(DegenerateInputError):
        similarity_bound(1.0, 100, 0.0)

@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_similarity_bound_holds(sigma: float, rng: np.random.Generator) -> None:
    n, epsilon, trials = 4096, 0.05, 200
    bound = similarity_bound(sigma, n, epsilon)

    errors = np.abs(rng.normal(0, sigma, (trials, n))).mean(axis=1)
    frequency = np.mean(np.abs(errors - bound.center) <= epsilon)
    assert frequency >= bound.probability
