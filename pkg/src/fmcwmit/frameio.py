"""On-disk formats: baseband frame files, spectrogram dumps, CSV exports.

Frame binary format ("CWF1"): a sequence of records, each a 64-byte
little-endian header followed by the samples as float32 and, when present,
the ground-truth track as float32 of the same length.

    offset  size  field
    0       4     magic b"CWF1"
    4       2     format version (1)
    6       2     header size (64)
    8       8     f_s, float64 Hz
    16      4     sample count, uint32
    20      4     chirp index, uint32
    24      1     ground-truth-present flag
    25      39    reserved (zero)

Spectrogram binary format ("CWS1") is a single 64-byte header followed by
the row-major complex64 matrix.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .hough import DetectedLine, HoughAccumulator
from .radar_sim import BasebandFrame
from .tf_engine import Spectrogram

_FRAME_HDR = struct.Struct("<4sHHdIIB39x")
_FRAME_MAGIC = b"CWF1"
_SPEC_HDR = struct.Struct("<4sHHdIIIII27x")
_SPEC_MAGIC = b"CWS1"


class DataError(ValueError):
    """A data file is malformed or inconsistent with its header."""


def write_frames(path: Union[str, Path], frames: Sequence[BasebandFrame]):
    """Write frames as consecutive CWF1 records."""
    with open(path, "wb") as fh:
        for frame in frames:
            has_gt = frame.ground_truth is not None
            fh.write(_FRAME_HDR.pack(_FRAME_MAGIC, 1, _FRAME_HDR.size, float(frame.f_s),
                                     frame.samples.size, frame.chirp_index, int(has_gt)))
            fh.write(frame.samples.astype("<f4").tobytes())
            if has_gt:
                fh.write(frame.ground_truth.astype("<f4").tobytes())


def read_frames(path: Union[str, Path]) -> list[BasebandFrame]:
    """Read every CWF1 record of a frame file."""
    frames = []
    raw = Path(path).read_bytes()
    pos = 0
    while pos < len(raw):
        if pos + _FRAME_HDR.size > len(raw):
            raise DataError(f"{path}: truncated record header at offset {pos}")
        magic, version, hdr_size, f_s, count, chirp_index, gt_flag = _FRAME_HDR.unpack_from(
            raw, pos)
        if magic != _FRAME_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r} at offset {pos}")
        if version != 1 or hdr_size != _FRAME_HDR.size:
            raise DataError(f"{path}: unsupported frame format version {version}")
        pos += hdr_size
        need = count * 4 * (2 if gt_flag else 1)
        if pos + need > len(raw):
            raise DataError(f"{path}: truncated samples at offset {pos}")
        samples = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).astype(np.float64)
        pos += count * 4
        gt = None
        if gt_flag:
            gt = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).astype(np.float64)
            pos += count * 4
        frames.append(BasebandFrame(samples=samples, f_s=f_s, chirp_index=chirp_index,
                                    ground_truth=gt))
    return frames


def write_frames_csv(path: Union[str, Path], frames: Sequence[BasebandFrame]):
    """Debug CSV: one sample per line, blocks separated by per-frame headers."""
    with open(path, "w") as fh:
        for frame in frames:
            gt_flag = int(frame.ground_truth is not None)
            fh.write(f"# CWF1 f_s={frame.f_s!r} chirp_index={frame.chirp_index} "
                     f"ground_truth={gt_flag}\n")
            if frame.ground_truth is None:
                for v in frame.samples:
                    fh.write(f"{v!r}\n")
            else:
                for v, g in zip(frame.samples, frame.ground_truth):
                    fh.write(f"{v!r},{g!r}\n")


def read_frames_csv(path: Union[str, Path]) -> list[BasebandFrame]:
    frames = []
    f_s = chirp = gt_flag = None
    samples: list[float] = []
    gt: list[float] = []

    def flush():
        if f_s is None:
            return
        frames.append(BasebandFrame(
            samples=np.array(samples), f_s=f_s, chirp_index=chirp,
            ground_truth=np.array(gt) if gt_flag else None))

    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                flush()
                try:
                    fields = dict(tok.split("=") for tok in line.split()[2:])
                    f_s = float(fields["f_s"])
                    chirp = int(fields["chirp_index"])
                    gt_flag = bool(int(fields["ground_truth"]))
                except (KeyError, ValueError) as exc:
                    raise DataError(f"{path}:{lineno}: bad frame header: {exc}") from None
                samples, gt = [], []
                continue
            if f_s is None:
                raise DataError(f"{path}:{lineno}: sample before any frame header")
            parts = line.split(",")
            samples.append(float(parts[0]))
            if gt_flag and len(parts) > 1:
                gt.append(float(parts[1]))
    flush()
    return frames


def write_spectrogram(path: Union[str, Path], spec: Spectrogram):
    """Binary spectrogram dump: CWS1 header + row-major complex64."""
    cfg = spec.cfg
    with open(path, "wb") as fh:
        fh.write(_SPEC_HDR.pack(_SPEC_MAGIC, 1, _SPEC_HDR.size, float(spec.f_s),
                                spec.n_frames, cfg.n_fft, cfg.window_len, cfg.hop,
                                spec.source_len))
        fh.write(spec.data.astype("<c8").tobytes())


def write_spectrogram_csv(path: Union[str, Path], spec: Spectrogram):
    """CSV spectrogram dump: zeta, m, re, im."""
    with open(path, "w") as fh:
        fh.write("zeta,m,re,im\n")
        for z in range(spec.n_frames):
            row = spec.data[z]
            for m in range(row.size):
                fh.write(f"{z},{m},{row[m].real!r},{row[m].imag!r}\n")


def write_accumulator_csv(path: Union[str, Path], acc: HoughAccumulator):
    """CSV accumulator dump: rho, theta, score."""
    with open(path, "w") as fh:
        fh.write("rho,theta,score\n")
        for i, rho in enumerate(acc.rho_axis):
            for j, theta in enumerate(acc.theta_axis):
                fh.write(f"{rho!r},{theta!r},{acc.scores[i, j]!r}\n")


def write_lines_csv(path: Union[str, Path], lines: Sequence[DetectedLine]):
    """CSV line dump: line id, rho, theta, score plus per-cell rows."""
    with open(path, "w") as fh:
        fh.write("line,rho,theta,score,zeta,m\n")
        for i, line in enumerate(lines):
            for zeta, m in line.cells:
                fh.write(f"{i},{line.rho!r},{line.theta!r},{line.score!r},{zeta},{m}\n")
