import asyncio
import csv
import itertools
import logging
import os
import time
from typing import IO, List, Optional, Tuple

from .config import ExperimentConfig
from .events import Events
from .exceptions import *
from .fileio import read_image, write_image
from .image import BlockGeometry, Image
from .metrics import psnr
from .refine import recover_still
from .sensing import (BlockSensingOperator, MeasurementSet,
                      make_gaussian_operator, rows_for_subrate, sense)
from .trace import ConvergenceTrace, format_number
from .util import asyncify

logger = logging.getLogger(__name__)

__all__ = ["recover", "CellResult", "ExperimentResults", "run_cell",
        "run_experiment", "run_experiment_async"]

def recover(
        method: str,
        b: MeasurementSet,
        op: BlockSensingOperator,
        geom: BlockGeometry,
        cfg: ExperimentConfig,
        reference: Optional[Image] = None,
        events: Optional[Events] = None,
        ) -> Tuple[Image, ConvergenceTrace]:
    """
    Recover a still image with one of STILL_METHODS, configured by cfg.
    """

    return recover_still(method, b, op, geom, cfg.tv, cfg.refine, reference,
            events)

class CellResult:
    CSV_HEADER = ["image", "method", "block_side", "subrate", "psnr", "fsim",
            "iterations", "converged", "runtime"]

    def __init__(self,
            index: int,
            image: str,
            method: str,
            block_side: int,
            subrate: float,
            psnr: float,
            iterations: int,
            converged: bool,
            runtime: Optional[float] = None,
            ) -> None:
        self.index = index
        self.image = image
        self.method = method
        self.block_side = block_side
        self.subrate = subrate
        self.psnr = psnr
        self.iterations = iterations
        self.converged = converged
        self.runtime = runtime

    def row(self) -> List[str]:
        # fsim stays empty, it is filled in by external tools
        return [self.image, self.method, str(self.block_side),
                format_number(self.subrate), format_number(self.psnr), "",
                str(self.iterations), "yes" if self.converged else "no",
                format_number(self.runtime)]

    def __repr__(self) -> str:
        return (f"CellResult({self.image!r}, {self.method}, block_side="
                f"{self.block_side}, subrate={self.subrate:.4g},"
                f" psnr={self.psnr:.2f})")

class ExperimentResults:
    def __init__(self, cells: List[CellResult]) -> None:
        self.cells = sorted(cells, key=lambda c: c.index)

    def __len__(self) -> int:
        return len(self.cells)

    def mean_psnr(self) -> float:
        if not self.cells:
            raise DegenerateInputError("no results to average")
        return sum(c.psnr for c in self.cells) / len(self.cells)

    def write_csv(self, f: IO[str]) -> None:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CellResult.CSV_HEADER)
        for cell in self.cells:
            writer.writerow(cell.row())

    def save_csv(self, path: str) -> None:
        logger.info(f"Writing {len(self.cells)} results to {path!r}")
        with open(path, "w", newline="") as f:
            self.write_csv(f)

def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]

def run_cell(
        index: int,
        path: str,
        image: Image,
        block_side: int,
        subrate: float,
        cfg: ExperimentConfig,
        events: Optional[Events] = None,
        ) -> CellResult:
    """
    Sense one image with a freshly seeded operator and recover it.
    """

    started = time.perf_counter()

    geom = BlockGeometry.for_image(image, block_side)
    op = make_gaussian_operator(rows_for_subrate(subrate, geom.n), geom.n, cfg.seed)
    b = sense(image, op, geom)
    recovered, trace = recover(cfg.method, b, op, geom, cfg, image, events)

    runtime = time.perf_counter() - started
    quality = psnr(image, recovered)
    logger.info((f"{_stem(path)} ({cfg.method}, block {block_side}, subrate"
            f" {subrate:.4g}): {quality:.2f} dB in {runtime:.1f}s"))

    if cfg.save_images:
        name = f"{_stem(path)}_{cfg.method}_b{block_side}_s{subrate:g}"
        write_image(os.path.join(cfg.out, name + ".pgm"), recovered)
        trace.save_csv(os.path.join(cfg.out, name + "_trace.csv"))

    return CellResult(index, _stem(path), cfg.method, block_side, op.subrate,
            quality, trace.total_iterations, trace.converged,
            runtime if cfg.record_runtime else None)

async def run_experiment_async(
        cfg: ExperimentConfig,
        events: Optional[Events] = None,
        ) -> ExperimentResults:
    """
    Run every (image, block side, subrate) cell, at most cfg.workers at a
    time. The results are ordered by cell, independent of the schedule.
    """

    if cfg.method == "dcvs":
        raise ConfigError("use run_dcvs() for video sequences")
    if not cfg.inputs:
        raise ConfigError("no input images")

    images = [(path, read_image(path)) for path in cfg.inputs]
    os.makedirs(cfg.out, exist_ok=True)

    cells = list(itertools.product(images, cfg.sides, cfg.subrates))
    logger.info((f"Running {len(cells)} cells ({len(images)} images,"
            f" {len(cfg.sides)} block sides, {len(cfg.subrates)} subrates)"
            f" with {cfg.workers} workers"))

    semaphore = asyncio.Semaphore(cfg.workers)

    async def run_one(index: int, path: str, image: Image, side: int,
            subrate: float) -> CellResult:
        async with semaphore:
            return await asyncify(run_cell, index, path, image, side, subrate,
                    cfg, events)

    results = await asyncio.gather(*(
            run_one(i, path, image, side, subrate)
            for i, ((path, image), side, subrate) in enumerate(cells)))
    return ExperimentResults(list(results))

def run_experiment(
        cfg: ExperimentConfig,
        events: Optional[Events] = None,
        ) -> ExperimentResults:
    return asyncio.run(run_experiment_async(cfg, events))
