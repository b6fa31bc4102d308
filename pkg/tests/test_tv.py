import os

import numpy as np
import pytest

from blocs import (BlockGeometry, ConfigError, Events, GradientField,
                   GradientScope, Image, MeasurementSet, Operators, TvParams,
                   augmented_lagrangian, bb_direction, bb_step_size,
                   frame_matrix, gradient_matrix, least_squares_baseline,
                   make_gaussian_operator, psnr, read_image, seam_energy,
                   sense, shrink_w, solve_mbtv_nllm)

def flat(g: GradientField) -> np.ndarray:
    return np.concatenate([g.dx.ravel(), g.dy.ravel()])

@pytest.fixture
def small_problem(rng: np.random.Generator) -> dict:
    geom = BlockGeometry.for_shape(4, 4, 2)
    op = make_gaussian_operator(2, 4, seed=11)
    ops = Operators(op, geom)
    return {
            "ops": ops,
            "A": frame_matrix(op, geom),
            "D": gradient_matrix((4, 4), GradientScope.frame()),
            "u": rng.normal(size=(4, 4)),
            "w": GradientField(rng.normal(size=(4, 4)), rng.normal(size=(4, 4))),
            "upsilon": GradientField(rng.normal(size=(4, 4)), rng.normal(size=(4, 4))),
            "lam": rng.normal(size=geom.count * 2),
            "b": rng.normal(size=geom.count * 2),
    }

def test_shrink_closed_form() -> None:
    du = GradientField(np.full((1, 1), 3.0), np.full((1, 1), 4.0))
    w = shrink_w(du, GradientField.zeros((1, 1)), 2.0)
    assert w.dx[0, 0] == pytest.approx(2.7)
    assert w.dy[0, 0] == pytest.approx(3.6)

def test_shrink_zero_and_full_shrinkage(rng: np.random.Generator) -> None:
    zero = GradientField.zeros((3, 3))
    assert shrink_w(zero, zero, 4.0).norm() == 0.0

    small = GradientField(rng.uniform(-0.1, 0.1, (3, 3)), rng.uniform(-0.1, 0.1, (3, 3)))
    assert shrink_w(small, zero, 4.0).norm() == 0.0

def test_shrink_is_the_proximal_map(rng: np.random.Generator) -> None:
    beta = 3.0
    du = GradientField(rng.normal(size=(1, 1)), rng.normal(size=(1, 1)))
    upsilon = GradientField(rng.normal(size=(1, 1)), rng.normal(size=(1, 1)))
    w = shrink_w(du, upsilon, beta)

    def objective(x: float, y: float) -> float:
        r = np.array([du.dx[0, 0] - x, du.dy[0, 0] - y])
        ups = np.array([upsilon.dx[0, 0], upsilon.dy[0, 0]])
        return float(np.hypot(x, y) - ups @ r + beta / 2 * r @ r)

    best = objective(w.dx[0, 0], w.dy[0, 0])
    for dx, dy in rng.normal(scale=0.05, size=(200, 2)):
        assert best <= objective(w.dx[0, 0] + dx, w.dy[0, 0] + dy) + 1e-12

def test_direction_matches_dense_oracle(small_problem: dict) -> None:
    p = small_problem
    beta, mu = 128.0, 32.0
    A, D, u = p["A"], p["D"], p["u"].ravel()

    expected = (beta * D.T @ (D @ u - flat(p["w"])) - D.T @ flat(p["upsilon"])
            + mu * A.T @ (A @ u - p["b"]) - A.T @ p["lam"])
    d = bb_direction(p["u"], p["w"], p["upsilon"], p["lam"], p["b"], beta, mu, p["ops"])

    np.testing.assert_allclose(d.ravel(), expected, rtol=1e-10)

def test_step_size_matches_dense_oracle(small_problem: dict, rng: np.random.Generator) -> None:
    p = small_problem
    beta, mu = 2.0, 5.0
    G = mu * p["A"].T @ p["A"] + beta * p["D"].T @ p["D"]

    for _ in range(20):
        d = rng.normal(size=(4, 4))
        eta = bb_step_size(d, beta, mu, p["ops"])
        assert eta > 0
        assert eta == pytest.approx(float(d.ravel() @ d.ravel() / (d.ravel() @ G @ d.ravel())), rel=1e-10)

def test_step_size_of_zero_direction(small_problem: dict) -> None:
    assert bb_step_size(np.zeros((4, 4)), 1.0, 1.0, small_problem["ops"]) == 0.0

def test_stationary_point(small_problem: dict) -> None:
    p = small_problem
    ops = p["ops"]
    u = p["u"]
    w = ops.gradient(u)
    b = ops.forward(u)
    zero = GradientField.zeros((4, 4))

    d = bb_direction(u, w, zero, np.zeros_like(b), b, 128.0, 32.0, ops)
    np.testing.assert_allclose(d, 0.0, atol=1e-10)

    value = augmented_lagrangian(u, w, zero, np.zeros_like(b), b, 128.0, 32.0, ops)
    assert value == pytest.approx(float(np.hypot(w.dx, w.dy).sum()))

def test_zero_measurements_give_zero_image(geom8: BlockGeometry) -> None:
    op = make_gaussian_operator(16, 64, seed=0)
    b = MeasurementSet(np.zeros((geom8.count, 16)), op.subrate)

    image, trace = solve_mbtv_nllm(b, op, geom8)

    assert np.all(image.pixels == 0)
    assert trace.converged

def test_recovery_improves_on_the_initial_estimate(
        piecewise_image: Image,
        geom8: BlockGeometry,
        quick_tv: TvParams,
        ) -> None:
    op = make_gaussian_operator(32, 64, seed=1)
    b = sense(piecewise_image, op, geom8)
    ops = Operators(op, geom8)
    initial = ops.adjoint(b.vector)

    image, trace = solve_mbtv_nllm(b, op, geom8, quick_tv, reference=piecewise_image)

    initial_misfit = float(np.linalg.norm(ops.forward(initial) - b.vector))
    assert trace.last is not None
    assert trace.last.misfit < initial_misfit
    assert psnr(piecewise_image, image) > psnr(piecewise_image, initial)
    returned = trace.last if trace.converged else min(trace.records, key=lambda r: r.misfit)
    assert returned.psnr == pytest.approx(psnr(piecewise_image, image))

def test_plain_tv_path(piecewise_image: Image, geom8: BlockGeometry) -> None:
    op = make_gaussian_operator(32, 64, seed=1)
    b = sense(piecewise_image, op, geom8)
    params = TvParams(max_outer=3, use_nllm=False)

    image, trace = solve_mbtv_nllm(b, op, geom8, params)

    assert trace.solver == "mbtv"
    assert image.shape == (16, 16)
    assert 1 <= trace.iterations <= 3

def test_events_and_iteration_cap(
        piecewise_image: Image,
        geom8: BlockGeometry,
        quick_tv: TvParams,
        ) -> None:
    op = make_gaussian_operator(16, 64, seed=2)
    b = sense(piecewise_image, op, geom8)
    params = TvParams(max_outer=2, outer_tol=0.0, nlm=quick_tv.nlm)

    records = []
    finished = []
    events = Events()
    events.register("iteration", records.append)
    events.register("finished", finished.append)

    _, trace = solve_mbtv_nllm(b, op, geom8, params, events=events)

    assert not trace.converged
    assert trace.iterations == 2
    assert [r.iteration for r in records] == [1, 2]
    assert finished == [trace]

def test_parameter_validation() -> None:
    with pytest.raises(ConfigError):
        TvParams(beta=0)
    with pytest.raises(ConfigError):
        TvParams(scope_mode="diagonal")

def test_scope_selection(geom8: BlockGeometry) -> None:
    assert TvParams().scope(geom8).mode == GradientScope.FRAME
    assert TvParams(scope_mode="per_block").scope(geom8).period == 8
    assert TvParams(scope_mode="multi_block").scope(geom8).period == 16

@pytest.mark.slow
def test_per_block_scope_has_stronger_seams(rng: np.random.Generator) -> None:
    y, x = np.mgrid[0:64, 0:64]
    truth = np.where(x + 0.5 * y > 40, 170.0, 60.0) + rng.normal(0, 2, (64, 64))
    geom = BlockGeometry.for_shape(64, 64, 16)
    op = make_gaussian_operator(51, 256, seed=3)
    b = sense(truth, op, geom)

    per_block, _ = solve_mbtv_nllm(b, op, geom, TvParams(scope_mode="per_block"))
    multi, _ = solve_mbtv_nllm(b, op, geom, TvParams(scope_mode="multi_block"))

    assert seam_energy(per_block, 16) > seam_energy(multi, 16)

@pytest.mark.slow
def test_piecewise_recovery_beats_least_squares() -> None:
    pixels = np.full((32, 32), 60.0)
    pixels[:, 13:] = 190.0
    geom = BlockGeometry.for_shape(32, 32, 16)
    op = make_gaussian_operator(128, 256, seed=5)
    b = sense(pixels, op, geom)

    image, _ = solve_mbtv_nllm(b, op, geom)
    baseline = least_squares_baseline(b, op, geom)

    assert psnr(pixels, image) >= psnr(pixels, baseline) + 5

@pytest.mark.slow
def test_leaves_at_subrate_0_2(test_images: str) -> None:
    truth = read_image(os.path.join(test_images, "leaves.pgm"))
    geom = BlockGeometry.for_image(truth, 32)
    op = make_gaussian_operator(205, 1024, seed=0)

    image, _ = solve_mbtv_nllm(sense(truth, op, geom), op, geom)

    assert psnr(truth, image) >= 24.5

def two_level_image() -> np.ndarray:
    pixels = np.full((32, 32), 60.0)
    pixels[:, 13:] = 190.0
    return pixels

def test_full_subrate_recovery_is_exact() -> None:
    pixels = two_level_image()
    geom = BlockGeometry.for_shape(32, 32, 16)
    op = make_gaussian_operator(256, 256, seed=4)

    image, _ = solve_mbtv_nllm(sense(pixels, op, geom), op, geom)

    assert psnr(pixels, image) >= 60

def test_misfit_ends_below_the_initial_misfit() -> None:
    pixels = two_level_image()
    geom = BlockGeometry.for_shape(32, 32, 16)
    op = make_gaussian_operator(128, 256, seed=5)
    b = sense(pixels, op, geom)
    ops = Operators(op, geom)

    image, trace = solve_mbtv_nllm(b, op, geom)

    initial_misfit = float(np.linalg.norm(ops.forward(ops.adjoint(b.vector)) - b.vector))
    final_misfit = float(np.linalg.norm(ops.forward(image.pixels) - b.vector))
    assert final_misfit <= initial_misfit
    assert trace.last is not None and trace.last.misfit <= initial_misfit

def test_iteration_cap_keeps_the_best_iterate(
        piecewise_image: Image,
        geom8: BlockGeometry,
        quick_tv: TvParams,
        ) -> None:
    op = make_gaussian_operator(24, 64, seed=8)
    b = sense(piecewise_image, op, geom8)
    ops = Operators(op, geom8)
    params = TvParams(max_outer=3, max_inner=2, outer_tol=0.0, nlm=quick_tv.nlm)

    image, trace = solve_mbtv_nllm(b, op, geom8, params)

    assert not trace.converged
    best = min(record.misfit for record in trace.records)
    misfit = float(np.linalg.norm(ops.forward(image.pixels) - b.vector))
    assert misfit == pytest.approx(best, rel=1e-9)

def test_w_update_never_increases_the_lagrangian(
        piecewise_image: Image,
        geom8: BlockGeometry,
        rng: np.random.Generator,
        ) -> None:
    op = make_gaussian_operator(24, 64, seed=9)
    ops = Operators(op, geom8)
    b = sense(piecewise_image, op, geom8).vector / Image.PEAK
    beta, mu = 128.0, 32.0

    u = ops.adjoint(b)
    w = GradientField(rng.normal(size=(16, 16)), rng.normal(size=(16, 16)))
    upsilon = GradientField(rng.normal(size=(16, 16)), rng.normal(size=(16, 16)))
    lam = rng.normal(size=b.shape)

    for _ in range(10):
        before = augmented_lagrangian(u, w, upsilon, lam, b, beta, mu, ops)
        w = shrink_w(ops.gradient(u), upsilon, beta)
        after = augmented_lagrangian(u, w, upsilon, lam, b, beta, mu, ops)
        assert after <= before + 1e-9 * abs(before)

        d = bb_direction(u, w, upsilon, lam, b, beta, mu, ops)
        u = u - bb_step_size(d, beta, mu, ops) * d

def random_piecewise_image(seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:32, 0:32]
    low, high = rng.uniform(30, 220, 2)
    angle = rng.uniform(0, np.pi)
    offset = rng.uniform(-6, 6)
    pixels = np.where((x - 15.5) * np.cos(angle) + (y - 15.5) * np.sin(angle) > offset,
            high, low)
    top, left = rng.integers(4, 16, 2)
    pixels[top:top + 10, left:left + 10] = rng.uniform(30, 220)
    return pixels

@pytest.mark.slow
def test_nonlocal_multiplier_reduces_the_l1_error() -> None:
    geom = BlockGeometry.for_shape(32, 32, 16)
    wins = 0
    for seed in range(10):
        pixels = random_piecewise_image(seed)
        op = make_gaussian_operator(51, 256, seed=seed)
        b = sense(pixels, op, geom)

        nllm, _ = solve_mbtv_nllm(b, op, geom, TvParams(use_nllm=True))
        plain, _ = solve_mbtv_nllm(b, op, geom, TvParams(use_nllm=False))

        if np.abs(nllm.pixels - pixels).sum() <= np.abs(plain.pixels - pixels).sum():
            wins += 1

    assert wins >= 8
