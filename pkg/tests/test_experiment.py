import io

import numpy as np
import pytest

from blocs import (BlockGeometry, CellResult, ConfigError, ExperimentConfig,
                   ExperimentResults, Image, NlmParams, TvParams,
                   make_gaussian_operator, read_pgm, recover, run_experiment,
                   sense, write_pgm)

@pytest.fixture
def quick_config(tmp_path, textured_image: Image, piecewise_image: Image) -> ExperimentConfig:
    inputs = []
    for name, image in [("textured", textured_image), ("piecewise", piecewise_image)]:
        path = str(tmp_path / f"{name}.pgm")
        write_pgm(path, image)
        inputs.append(path)

    return ExperimentConfig(
            inputs=inputs,
            method="mbtv",
            block_side=8,
            subrates=[0.3, 0.6],
            out=str(tmp_path / "out"),
            workers=2,
            record_runtime=False,
            tv=TvParams(max_outer=3, max_inner=5, nlm=NlmParams(3, 5)),
    )

def test_recover_dispatch(textured_image: Image, geom8: BlockGeometry, quick_tv: TvParams) -> None:
    op = make_gaussian_operator(30, 64, seed=0)
    b = sense(textured_image, op, geom8)
    cfg = ExperimentConfig(tv=quick_tv)

    _, plain = recover("MBTV", b, op, geom8, cfg)
    _, nonlocal_ = recover("mbtv-nllm", b, op, geom8, cfg)

    assert plain.solver == "mbtv"
    assert nonlocal_.solver == "mbtv-nllm"
    assert cfg.tv.use_nllm

    with pytest.raises(ConfigError):
        recover("dcvs", b, op, geom8, cfg)

def test_experiment_table(quick_config: ExperimentConfig, tmp_path) -> None:
    results = run_experiment(quick_config)

    assert len(results) == 4
    assert [(c.image, c.subrate) for c in results.cells] == [
            ("textured", 19 / 64), ("textured", 38 / 64),
            ("piecewise", 19 / 64), ("piecewise", 38 / 64)]
    assert all(c.runtime is None for c in results.cells)
    assert np.isfinite(results.mean_psnr())

    recovered = read_pgm(str(tmp_path / "out" / "textured_mbtv_b8_s0.3.pgm"))
    assert recovered.shape == (16, 16)
    assert (tmp_path / "out" / "piecewise_mbtv_b8_s0.6_trace.csv").exists()

    f = io.StringIO()
    results.write_csv(f)
    lines = f.getvalue().splitlines()
    assert lines[0] == "image,method,block_side,subrate,psnr,fsim,iterations,converged,runtime"
    assert len(lines) == 5
    assert lines[1].startswith("textured,mbtv,8,0.296875,")
    assert lines[1].endswith(",")

def test_experiment_is_deterministic(quick_config: ExperimentConfig) -> None:
    quick_config.save_images = False

    first, second = io.StringIO(), io.StringIO()
    run_experiment(quick_config).write_csv(first)
    quick_config.workers = 1
    run_experiment(quick_config).write_csv(second)

    assert first.getvalue() == second.getvalue()

def test_block_size_sweep(quick_config: ExperimentConfig) -> None:
    quick_config.block_sides = [4, 8]
    quick_config.subrates = [0.5]
    quick_config.inputs = quick_config.inputs[:1]
    quick_config.save_images = False

    results = run_experiment(quick_config)

    assert [c.block_side for c in results.cells] == [4, 8]

def test_experiment_needs_inputs() -> None:
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig())
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(inputs=["a.pgm"], method="dcvs"))

def test_cell_row() -> None:
    cell = CellResult(0, "leaves", "cst", 32, 0.1, 27.123456, 42, True, 1.5)
    assert cell.row() == ["leaves", "cst", "32", "0.1", "27.1235", "", "42",
            "yes", "1.5"]

    results = ExperimentResults([
            CellResult(1, "b", "cst", 32, 0.2, 30.0, 1, False),
            CellResult(0, "a", "cst", 32, 0.1, 20.0, 1, False),
    ])
    assert [c.image for c in results.cells] == ["a", "b"]
    assert results.mean_psnr() == 25.0
