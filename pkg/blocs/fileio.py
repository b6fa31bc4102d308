import logging
import os
import re
from typing import List, Optional, Tuple

import numpy as np
import PIL.Image

from .exceptions import *
from .image import BlockGeometry, Image
from .sensing import BlockSensingOperator, MeasurementSet

logger = logging.getLogger(__name__)

__all__ = ["read_pgm", "write_pgm", "read_image", "write_image",
        "export_operator", "import_operator", "export_measurements",
        "import_measurements", "read_raw_video",
        "read_frame_dir", "write_frame_dir"]

# PGM

# Pillow opens 16-bit PGMs in one of these modes, scaled to maxval 65535
WIDE_MODES = ["I", "I;16", "I;16B", "I;16L"]
WIDE_PEAK = 65535.0

def _open(path: str) -> PIL.Image.Image:
    """
    Open and load an image with Pillow, turning everything Pillow reports
    about a malformed file into ImageFormatError. A missing file still
    raises FileNotFoundError.
    """

    try:
        picture = PIL.Image.open(path)
    except (PIL.UnidentifiedImageError, SyntaxError, ValueError) as e:
        raise ImageFormatError(path, f"unrecognized image format ({e})")

    try:
        picture.load()
    except (OSError, SyntaxError, ValueError) as e:
        picture.close()
        raise ImageFormatError(path, f"unreadable pixels ({e})")
    return picture

def read_pgm(path: str) -> Image:
    """
    Read an 8- or 16-bit binary or plain PGM. Any maxval is scaled to
    [0, 255].
    """

    with _open(path) as picture:
        if picture.format != "PPM" or picture.mode not in ["L"] + WIDE_MODES:
            raise ImageFormatError(path, (f"not a grayscale PGM ({picture.format}"
                    f" image in mode {picture.mode})"))
        pixels = np.asarray(picture, dtype=np.float64)
        if picture.mode in WIDE_MODES:
            pixels = pixels * (Image.PEAK / WIDE_PEAK)
    return Image(pixels)

def write_pgm(path: str, img: Image) -> None:
    """
    Write an 8-bit binary PGM. Pixels are clamped to [0, 255] and rounded.
    """

    logger.debug(f"Writing {img!r} to {path!r}")
    PIL.Image.fromarray(img.quantized()).save(path, format="PPM")

# Any image format

def _is_pgm(path: str) -> bool:
    return os.path.splitext(path)[1].lower() in [".pgm", ".pnm"]

def read_image(path: str) -> Image:
    """
    Read a grayscale image. PGM files keep their bit depth, everything else
    (PNG, ...) is converted to 8-bit luma.
    """

    if _is_pgm(path):
        return read_pgm(path)

    with _open(path) as picture:
        pixels = np.asarray(picture.convert("L"), dtype=np.float64)
    return Image(pixels)

def write_image(path: str, img: Image) -> None:
    if _is_pgm(path):
        write_pgm(path, img)
        return

    logger.debug(f"Writing {img!r} to {path!r}")
    PIL.Image.fromarray(img.quantized()).save(path)

# Sensing operators

OPERATOR_HEADER = np.dtype("<i8")
OPERATOR_ENTRIES = np.dtype("<f8")

def export_operator(path: str, op: BlockSensingOperator) -> None:
    """
    Store A_B as three little-endian int64 (m, n, seed, with -1 for no seed)
    followed by the m x n entries as little-endian float64 in row-major
    order.
    """

    logger.info(f"Exporting {op!r} to {path!r}")
    seed = -1 if op.seed is None else op.seed
    with open(path, "wb") as f:
        f.write(np.array([op.rows, op.cols, seed], dtype=OPERATOR_HEADER).tobytes())
        f.write(op.entries.astype(OPERATOR_ENTRIES).tobytes())

def import_operator(path: str) -> BlockSensingOperator:
    with open(path, "rb") as f:
        data = f.read()

    header_size = 3 * OPERATOR_HEADER.itemsize
    if len(data) < header_size:
        raise ImageFormatError(path, "truncated operator header")

    m, n, seed = (int(v) for v in np.frombuffer(data[:header_size], OPERATOR_HEADER))
    if m < 1 or n < 1:
        raise ImageFormatError(path, f"invalid operator size {m}x{n}")
    expected = header_size + m * n * OPERATOR_ENTRIES.itemsize
    if len(data) != expected:
        raise ImageFormatError(path, (f"expected {expected} bytes for a {m}x{n}"
                f" operator, found {len(data)}"))

    entries = np.frombuffer(data[header_size:], OPERATOR_ENTRIES).reshape(m, n)
    return BlockSensingOperator(entries, seed=None if seed < 0 else seed)

def export_measurements(path: str, b: MeasurementSet, geom: BlockGeometry) -> None:
    """
    Store the measurements of a frame as four little-endian int64 (height,
    width, block side, m) followed by the G x m measurements as little-endian
    float64, block by block.
    """

    header = [geom.height, geom.width, geom.block_side, b.block_length]
    logger.info(f"Exporting {b.count} measurement blocks to {path!r}")
    with open(path, "wb") as f:
        f.write(np.array(header, dtype=OPERATOR_HEADER).tobytes())
        f.write(b.per_block.astype(OPERATOR_ENTRIES).tobytes())

def import_measurements(path: str) -> Tuple[MeasurementSet, BlockGeometry]:
    with open(path, "rb") as f:
        data = f.read()

    header_size = 4 * OPERATOR_HEADER.itemsize
    if len(data) < header_size:
        raise ImageFormatError(path, "truncated measurement header")

    height, width, side, m = (int(v) for v in
            np.frombuffer(data[:header_size], OPERATOR_HEADER))
    try:
        geom = BlockGeometry.for_shape(height, width, side)
    except BlocsException as e:
        raise ImageFormatError(path, f"invalid geometry: {e}")
    if not 1 <= m <= geom.n:
        raise ImageFormatError(path, f"invalid measurement count {m}")

    expected = header_size + geom.count * m * OPERATOR_ENTRIES.itemsize
    if len(data) != expected:
        raise ImageFormatError(path, (f"expected {expected} bytes of"
                f" measurements, found {len(data)}"))

    per_block = np.frombuffer(data[header_size:], OPERATOR_ENTRIES)
    return MeasurementSet(per_block.reshape(geom.count, m), m / geom.n), geom

# Video

def read_raw_video(
        path: str,
        width: int,
        height: int,
        frames: Optional[int] = None,
        yuv420: bool = False,
        ) -> List[Image]:
    """
    Read 8-bit planar frames. Plain Y-only files hold width * height bytes
    per frame; with yuv420 every frame is followed by its two quarter-size
    chroma planes, which are skipped.

    frames limits the number of frames read (e. g. the first 88).
    """

    if width < 1 or height < 1:
        raise GeometryError(f"invalid frame size {width}x{height}")

    luma = width * height
    frame_size = luma
    if yuv420:
        frame_size += 2 * ((width + 1) // 2) * ((height + 1) // 2)

    with open(path, "rb") as f:
        data = f.read()

    available = len(data) // frame_size
    if len(data) % frame_size != 0:
        logger.warning((f"{path!r} ends with a partial frame,"
                f" {len(data) % frame_size} bytes ignored"))
    if available == 0:
        raise ImageFormatError(path, f"no complete {width}x{height} frame")
    count = available if frames is None else min(frames, available)

    sequence = []
    for i in range(count):
        start = i * frame_size
        plane = np.frombuffer(data[start:start + luma], dtype=np.uint8)
        sequence.append(Image(plane.reshape(height, width)))

    logger.info(f"Read {count} frames from {path!r}")
    return sequence

FRAME_NUMBER = re.compile(r"(\d+)\.pgm$", re.IGNORECASE)

def read_frame_dir(path: str, frames: Optional[int] = None) -> List[Image]:
    """
    Read the numbered PGM files of a directory (frame0.pgm, frame1.pgm, ...
    or 000.pgm, 001.pgm, ...), ordered by their number.
    """

    numbered = []
    for name in os.listdir(path):
        match = FRAME_NUMBER.search(name)
        if match:
            numbered.append((int(match.group(1)), name))

    if not numbered:
        raise ImageFormatError(path, "no numbered PGM frames")

    numbered.sort()
    if frames is not None:
        numbered = numbered[:frames]

    logger.info(f"Reading {len(numbered)} frames from {path!r}")
    return [read_pgm(os.path.join(path, name)) for _, name in numbered]

def write_frame_dir(
        path: str,
        sequence: List[Image],
        pattern: str = "frame{:04d}.pgm",
        ) -> None:
    os.makedirs(path, exist_ok=True)
    logger.info(f"Writing {len(sequence)} frames to {path!r}")
    for i, frame in enumerate(sequence):
        write_pgm(os.path.join(path, pattern.format(i)), frame)
