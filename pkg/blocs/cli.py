import argparse
import logging
import os
from typing import Callable, Dict, List, Optional

from .config import ExperimentConfig, load_config
from .dcvs import run_dcvs
from .events import Events
from .exceptions import *
from .experiment import recover, run_experiment
from .fileio import (export_measurements, export_operator, import_measurements,
                     import_operator, read_frame_dir, read_image,
                     read_raw_video, write_frame_dir, write_image)
from .image import BlockGeometry
from .metrics import psnr
from .sensing import (make_gaussian_operator, mutual_coherence,
                      rows_for_subrate, sense, welch_bound)
from .trace import IterationRecord

logger = logging.getLogger(__name__)

__all__ = ["Cli", "main"]

# Block sides swept by the block size layout
BLOCK_SIZE_SWEEP = [8, 16, 32, 64]

Callback = Callable[[argparse.Namespace, ExperimentConfig], None]

class Cli:
    """
    The blocs command line. Every subcommand is a cmd_<name> method that gets
    the parsed arguments and the experiment config (loaded from --config and
    overridden by the common flags).
    """

    def __init__(self) -> None:
        self._parser = argparse.ArgumentParser(prog="blocs",
                description="Block compressive sensing recovery of images and video")
        self._subparsers = self._parser.add_subparsers(dest="command",
                metavar="COMMAND")
        self._subparsers.required = True
        self._commands: Dict[str, Callback] = {}

        self.events = Events()
        self.events.register("iteration", self.on_iteration)

        sense = self.register("sense", "sense an image", self.cmd_sense)
        sense.add_argument("image", help="image to sense (PGM or PNG)")

        rec = self.register("recover", "recover an image from its measurements",
                self.cmd_recover)
        rec.add_argument("measurements", help="measurement file written by sense")
        rec.add_argument("operator", help="operator file written by sense")
        rec.add_argument("--reference", help="ground truth image for the PSNR")

        dcvs = self.register("dcvs", "sense and recover a video sequence",
                self.cmd_dcvs)
        dcvs.add_argument("sequence",
                help="directory of numbered PGM frames or a raw 8-bit file")
        dcvs.add_argument("--width", type=int, help="frame width of raw files")
        dcvs.add_argument("--height", type=int, help="frame height of raw files")
        dcvs.add_argument("--frames", type=int, help="read at most this many frames")
        dcvs.add_argument("--yuv420", action="store_true",
                help="raw file is YUV 4:2:0 instead of Y only")

        bench = self.register("bench", "run an experiment over images and subrates",
                self.cmd_bench)
        bench.add_argument("images", nargs="*",
                help="images (in addition to the config's inputs section)")
        bench.add_argument("--layout", choices=["table", "blocksize"],
                default="table",
                help="images x subrates, or images x block sides x subrates")
        bench.add_argument("--workers", type=int, help="cells run concurrently")

    def register(self,
            name: str,
            description: str,
            callback: Callback,
            ) -> argparse.ArgumentParser:
        parser = self._subparsers.add_parser(name, help=description)
        parser.add_argument("--config", help="INI config file")
        parser.add_argument("--method", help="recovery method")
        parser.add_argument("--subrate", type=float, action="append",
                help="subrate (repeatable)")
        parser.add_argument("--block-size", type=int, help="block side")
        parser.add_argument("--seed", type=int, help="sensing operator seed")
        parser.add_argument("--out", help="output directory")
        parser.add_argument("-v", "--verbose", action="store_true",
                help="log every solver iteration")

        self._commands[name] = callback
        return parser

    def parse(self, argv: Optional[List[str]] = None) -> argparse.Namespace:
        return self._parser.parse_args(argv)

    def configure(self, args: argparse.Namespace) -> ExperimentConfig:
        cfg = load_config(args.config)

        if args.method is not None:
            cfg.method = args.method
        if args.subrate:
            cfg.subrates = args.subrate
        if args.block_size is not None:
            cfg.block_side = args.block_size
            cfg.block_sides = None
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.dcvs.seed = args.seed
        if args.out is not None:
            cfg.out = args.out

        cfg.validate()
        return cfg

    def run(self, args: argparse.Namespace) -> None:
        cfg = self.configure(args)
        self._commands[args.command](args, cfg)

    def on_iteration(self, record: IterationRecord) -> None:
        logger.debug(f"{record!r}")

    # Commands

    def cmd_sense(self, args: argparse.Namespace, cfg: ExperimentConfig) -> None:
        image = read_image(args.image)
        geom = BlockGeometry.for_image(image, cfg.block_side)
        subrate = cfg.subrates[0]
        op = make_gaussian_operator(rows_for_subrate(subrate, geom.n), geom.n,
                cfg.seed)

        if geom.n >= 2:
            logger.info((f"Operator coherence {mutual_coherence(op):.4f}"
                    f" (Welch bound {welch_bound(op.rows, op.cols):.4f})"))

        b = sense(image, op, geom)
        stem = os.path.splitext(os.path.basename(args.image))[0]
        os.makedirs(cfg.out, exist_ok=True)
        export_operator(os.path.join(cfg.out, stem + ".op"), op)
        export_measurements(os.path.join(cfg.out, stem + ".meas"), b, geom)

    def cmd_recover(self, args: argparse.Namespace, cfg: ExperimentConfig) -> None:
        b, geom = import_measurements(args.measurements)
        op = import_operator(args.operator)
        reference = read_image(args.reference) if args.reference else None

        image, trace = recover(cfg.method, b, op, geom, cfg, reference, self.events)

        stem = os.path.splitext(os.path.basename(args.measurements))[0]
        os.makedirs(cfg.out, exist_ok=True)
        write_image(os.path.join(cfg.out, f"{stem}_{cfg.method}.pgm"), image)
        trace.save_csv(os.path.join(cfg.out, f"{stem}_{cfg.method}_trace.csv"))

        if reference is not None:
            logger.info(f"PSNR {psnr(reference, image):.2f} dB")

    def cmd_dcvs(self, args: argparse.Namespace, cfg: ExperimentConfig) -> None:
        if os.path.isdir(args.sequence):
            sequence = read_frame_dir(args.sequence, args.frames)
        else:
            if args.width is None or args.height is None:
                raise ConfigError("raw sequences need --width and --height")
            sequence = read_raw_video(args.sequence, args.width, args.height,
                    args.frames, args.yuv420)

        dcvs = cfg.dcvs
        if args.method is not None and cfg.method != "dcvs":
            dcvs.key_method = cfg.method
        if args.subrate:
            dcvs.nonkey_subrate = args.subrate[0]
        if args.block_size is not None:
            dcvs.block_side = args.block_size

        result = run_dcvs(sequence, dcvs, self.events)
        write_frame_dir(os.path.join(cfg.out, "frames"), result.frames)
        result.save_csv(os.path.join(cfg.out, "dcvs.csv"))

    def cmd_bench(self, args: argparse.Namespace, cfg: ExperimentConfig) -> None:
        cfg.inputs = cfg.inputs + args.images
        if args.workers is not None:
            cfg.workers = args.workers
        if args.layout == "blocksize" and args.block_size is None:
            cfg.block_sides = BLOCK_SIZE_SWEEP
        cfg.validate()

        results = run_experiment(cfg, self.events)
        results.save_csv(os.path.join(cfg.out, f"bench_{args.layout}.csv"))

def main(argv: Optional[List[str]] = None) -> int:
    """
    Exit codes: 0 on success, 1 if the library or the file system reported an
    error, 2 for usage errors (raised by argparse).
    """

    # Imported here so that blocs.cli can be imported by blocs/__init__.py
    from . import enable_logging

    cli = Cli()
    args = cli.parse(argv)
    enable_logging(level=logging.DEBUG if args.verbose else logging.INFO)

    try:
        cli.run(args)
    except BlocsException as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    except OSError as e:
        logger.error(f"{e}")
        return 1
    return 0
