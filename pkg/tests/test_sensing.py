import math

import numpy as np
import pytest

from blocs import (BlockGeometry, BlockSensingOperator, DegenerateInputError,
                   DimensionError, GeometryError, MeasurementSet, apply_frame,
                   apply_frame_adjoint, frame_matrix, least_squares_baseline,
                   make_gaussian_operator, mutual_coherence, psnr,
                   rows_for_subrate, sense, welch_bound)

def test_gaussian_operator_is_reproducible() -> None:
    a = make_gaussian_operator(16, 64, seed=7)
    b = make_gaussian_operator(16, 64, seed=7)
    c = make_gaussian_operator(16, 64, seed=8)

    np.testing.assert_array_equal(a.entries, b.entries)
    assert not np.array_equal(a.entries, c.entries)
    assert a.seed == 7
    assert a.subrate == pytest.approx(0.25)

def test_gaussian_operator_scaling() -> None:
    op = make_gaussian_operator(200, 400, seed=0)
    # E ||A x||^2 = ||x||^2 for the 1/sqrt(m) scaling
    column_energy = np.sum(op.entries ** 2, axis=0)
    assert np.mean(column_energy) == pytest.approx(1.0, rel=0.05)

@pytest.mark.parametrize("m, n", [(0, 4), (5, 4)])
def test_invalid_dimensions(m: int, n: int) -> None:
    with pytest.raises(DimensionError):
        make_gaussian_operator(m, n, seed=0)

def test_rows_for_subrate() -> None:
    assert rows_for_subrate(0.1, 1024) == 102
    assert rows_for_subrate(1.0, 64) == 64
    assert rows_for_subrate(0.001, 64) == 1
    with pytest.raises(DimensionError):
        rows_for_subrate(0.0, 64)

def test_sense_shapes(rng: np.random.Generator, geom8: BlockGeometry) -> None:
    op = make_gaussian_operator(20, 64, seed=1)
    b = sense(rng.uniform(0, 255, (16, 16)), op, geom8)

    assert b.per_block.shape == (4, 20)
    assert b.length == 80
    assert b.subrate == pytest.approx(20 / 64)

def test_sense_rejects_wrong_block_size(rng: np.random.Generator, geom8: BlockGeometry) -> None:
    op = make_gaussian_operator(10, 16, seed=1)
    with pytest.raises(GeometryError):
        sense(rng.uniform(0, 255, (16, 16)), op, geom8)

def test_adjoint_identity(rng: np.random.Generator, geom8: BlockGeometry) -> None:
    op = make_gaussian_operator(24, 64, seed=3)
    u = rng.normal(size=(16, 16))
    y = rng.normal(size=4 * 24)

    lhs = float(np.dot(apply_frame(op, geom8, u), y))
    rhs = float(np.dot(u.ravel(), apply_frame_adjoint(op, geom8, y)))
    assert lhs == pytest.approx(rhs, rel=1e-10)

def test_frame_matrix_oracle(rng: np.random.Generator) -> None:
    geom = BlockGeometry.for_shape(4, 6, 2)
    op = make_gaussian_operator(3, 4, seed=5)
    dense = frame_matrix(op, geom)
    u = rng.normal(size=(4, 6))
    y = rng.normal(size=geom.count * 3)

    assert dense.shape == (geom.count * 3, 24)
    np.testing.assert_allclose(dense @ u.ravel(), apply_frame(op, geom, u))
    np.testing.assert_allclose(dense.T @ y, apply_frame_adjoint(op, geom, y))

def test_measurement_set_from_vector() -> None:
    b = MeasurementSet.from_vector(np.arange(6.0), 3, 0.5)
    np.testing.assert_array_equal(b.per_block, [[0, 1], [2, 3], [4, 5]])
    with pytest.raises(GeometryError):
        MeasurementSet.from_vector(np.arange(7.0), 3, 0.5)

def test_measurement_set_check(geom8: BlockGeometry) -> None:
    op = make_gaussian_operator(8, 64, seed=0)
    with pytest.raises(GeometryError):
        MeasurementSet(np.zeros((3, 8)), 0.125).check(op, geom8)

def test_welch_bound() -> None:
    assert welch_bound(16, 64) == pytest.approx(math.sqrt(48 / (16 * 63)))
    assert welch_bound(64, 64) == 0.0

def test_coherence_of_identity_is_zero() -> None:
    assert mutual_coherence(BlockSensingOperator(np.eye(4))) == 0.0

def test_coherence_respects_welch_bound() -> None:
    op = make_gaussian_operator(8, 16, seed=2)
    coherence = mutual_coherence(op)
    assert welch_bound(8, 16) <= coherence <= 1.0

def test_coherence_of_parallel_columns() -> None:
    op = BlockSensingOperator(np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 1.0]]))
    assert mutual_coherence(op) == pytest.approx(1.0)

def test_coherence_rejects_zero_column() -> None:
    op = BlockSensingOperator(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(DegenerateInputError):
        mutual_coherence(op)

def test_least_squares_is_exact_at_full_rate(rng: np.random.Generator, geom8: BlockGeometry) -> None:
    pixels = rng.uniform(0, 255, (16, 16))
    op = make_gaussian_operator(64, 64, seed=4)

    recovered = least_squares_baseline(sense(pixels, op, geom8), op, geom8)

    np.testing.assert_allclose(recovered.pixels, pixels, atol=1e-6)
    assert psnr(pixels, recovered) > 60
