"""Power-weighted Hough transform for interference-line detection.

Coordinate convention: a spectrogram power matrix ``P[zeta, m]`` is an image
with x = time frame ``zeta`` and y = frequency bin ``m``.  A line is
``rho = zeta cos(theta) + m sin(theta)``; a column (instantaneous event) has
theta = 0 and a constant-frequency target ridge has theta = +-90 deg.
Interference appears as steep lines, so detection excludes an angle band
around +-90 deg and keeps ``|theta| <= 90 - exclusion_half_width``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import radar_sim
from .scenario import RadarParams, TargetSpec

_DEFAULT_THETA = tuple(float(t) for t in range(-90, 90))


@dataclass(frozen=True)
class HoughConfig:
    """Accumulator grid, detection threshold, and footprint parameters.

    The detection threshold is ``max(rel_threshold * accumulator max,
    phys_threshold)``; the accumulator max is taken over the full parameter
    space (excluded angles included) so a strong target ridge suppresses
    incidental diagonal scores on clean frames.  ``phys_threshold`` carries
    an absolute accumulated-power level, typically produced by
    ``physical_threshold`` from a calibrated threshold factor.
    """

    rho_res: float = 1.0
    theta_grid: tuple[float, ...] = _DEFAULT_THETA
    theta_exclusion_half_width: float = 30.0
    rel_threshold: float = 0.3
    phys_threshold: Optional[float] = None
    nms_radius: tuple[int, int] = (8, 4)
    max_lines: int = 8
    dilation_half_width: int = 4

    def __post_init__(self):
        if not (0.0 < self.rel_threshold <= 1.0):
            raise ValueError("rel_threshold must be in (0, 1]")
        if self.rho_res <= 0:
            raise ValueError("rho_res must be positive")
        thetas = np.asarray(self.theta_grid, dtype=np.float64)
        if thetas.size == 0 or np.any(np.diff(thetas) <= 0):
            raise ValueError("theta_grid must be strictly increasing")
        if thetas[0] < -90.0 or thetas[-1] >= 90.0:
            raise ValueError("theta_grid must lie within [-90, 90) degrees")
        if self.max_lines < 1 or self.dilation_half_width < 0:
            raise ValueError("max_lines must be >= 1 and dilation_half_width >= 0")

    def allowed_thetas(self) -> np.ndarray:
        """Boolean mask of grid angles outside the near-horizontal exclusion band."""
        thetas = np.asarray(self.theta_grid)
        return np.abs(thetas) <= 90.0 - self.theta_exclusion_half_width

    @staticmethod
    def default_dilation(stft_window_len: int, stft_hop: int) -> int:
        """Half-width (time cells) covering window-induced ridge smearing."""
        return math.ceil(stft_window_len / (2 * stft_hop))


@dataclass
class HoughAccumulator:
    """Power sums over (rho index, theta index) plus the axes that define them."""

    scores: np.ndarray
    rho_axis: np.ndarray
    theta_axis: np.ndarray
    source_shape: tuple[int, int]


@dataclass
class DetectedLine:
    """One detected interference line and its rasterized TF footprint."""

    rho: float
    theta: float
    score: float
    cells: np.ndarray  # (K, 2) int array of (zeta, m), dilated and clipped


def _rho_bins(shape: tuple[int, int], res: float) -> tuple[int, int]:
    diag = math.hypot(shape[0], shape[1])
    half = int(math.ceil(diag / res))
    return 2 * half + 1, half


_INDEX_CACHE: dict[tuple, list[np.ndarray]] = {}


def _cell_rho_indices(shape: tuple[int, int], thetas: tuple, res: float) -> list[np.ndarray]:
    """Per-theta flattened rho-bin index of every cell (cached; row-major)."""
    key = (shape, thetas, res)
    cached = _INDEX_CACHE.get(key)
    if cached is not None:
        return cached
    zg = np.arange(shape[0], dtype=np.float64)[:, None]
    mg = np.arange(shape[1], dtype=np.float64)[None, :]
    _, offset = _rho_bins(shape, res)
    out = []
    for theta in thetas:
        t = math.radians(theta)
        rho = zg * math.cos(t) + mg * math.sin(t)
        idx = (np.floor(rho / res + 0.5).astype(np.int64) + offset).astype(np.uint32)
        out.append(idx.ravel())
    if len(_INDEX_CACHE) >= 4:
        _INDEX_CACHE.clear()
    _INDEX_CACHE[key] = out
    return out


def hough_accumulate(power: np.ndarray, cfg: HoughConfig) -> HoughAccumulator:
    """Accumulate spectrogram power along every candidate line.

    ``H(rho, theta) = sum of P[zeta, m] over cells whose rounded
    zeta cos(theta) + m sin(theta) falls in the rho bin``.  With 0/1 input
    this reduces to the classical binary Hough accumulator.
    """
    P = np.asarray(power, dtype=np.float64)
    if P.ndim != 2 or P.size == 0:
        raise ValueError("power matrix must be a non-empty 2-D array")
    if np.any(P < 0):
        raise ValueError("power matrix must be non-negative")
    shape = P.shape
    n_rho, offset = _rho_bins(shape, cfg.rho_res)
    thetas = np.asarray(cfg.theta_grid, dtype=np.float64)
    indices = _cell_rho_indices(shape, cfg.theta_grid, cfg.rho_res)
    weights = P.ravel()
    scores = np.empty((n_rho, thetas.size))
    for j, idx in enumerate(indices):
        scores[:, j] = np.bincount(idx, weights=weights, minlength=n_rho)
    rho_axis = (np.arange(n_rho) - offset) * cfg.rho_res
    return HoughAccumulator(scores=scores, rho_axis=rho_axis, theta_axis=thetas,
                            source_shape=shape)


def line_to_cells(line: tuple[float, float], shape: tuple[int, int],
                  dilation: int = 0) -> np.ndarray:
    """Rasterize a (rho, theta-degrees) line onto a TF grid.

    The line is traced both per time frame (m as a function of zeta) and per
    frequency bin (zeta as a function of m) so steep lines stay connected,
    then dilated +-``dilation`` cells along the time axis and clipped.
    Returns a (K, 2) array of (zeta, m) cells, empty if the line misses the
    matrix entirely.
    """
    rho, theta = line
    frames, bins = shape
    t = math.radians(theta)
    s, c = math.sin(t), math.cos(t)
    mask = np.zeros(shape, dtype=bool)

    if abs(s) < 1e-9:  # vertical line: one time frame, every bin
        z0 = int(math.floor(rho / c + 0.5))
        if 0 <= z0 < frames:
            mask[z0, :] = True
    elif abs(c) < 1e-9:  # horizontal line: one bin, every frame
        m0 = int(math.floor(rho / s + 0.5))
        if 0 <= m0 < bins:
            mask[:, m0] = True
    else:
        zs = np.arange(frames)
        ms = np.floor((-c / s) * zs + rho / s + 0.5).astype(np.int64)
        ok = (ms >= 0) & (ms < bins)
        mask[zs[ok], ms[ok]] = True
        ms = np.arange(bins)
        zs = np.floor((rho - ms * s) / c + 0.5).astype(np.int64)
        ok = (zs >= 0) & (zs < frames)
        mask[zs[ok], ms[ok]] = True

    if dilation > 0 and mask.any():
        base = mask.copy()
        for d in range(1, dilation + 1):
            mask[d:, :] |= base[:-d, :]
            mask[:-d, :] |= base[d:, :]
    return np.argwhere(mask)


def detect_lines_sequential(power: np.ndarray, cfg: HoughConfig) -> list[DetectedLine]:
    """Peak extraction with vote removal, for blob-robust multi-line detection.

    A short interference event smeared by the analysis window votes for
    many (rho, theta) pairs, so one physical event can outscore a second,
    weaker event at several spurious angles.  This detector therefore
    accepts the best allowed-angle line, zeroes its dilated footprint in
    the power matrix, subtracts exactly those cells' votes from the
    accumulator, and repeats until the best remaining line falls below the
    threshold.  The relative threshold tracks the current global
    accumulator maximum, so once the interference is removed it is
    referenced to the target ridge and detection stops.
    """
    P = np.array(power, dtype=np.float64)
    if P.ndim != 2 or P.size == 0:
        raise ValueError("power matrix must be a non-empty 2-D array")
    shape = P.shape
    acc = hough_accumulate(P, cfg)
    indices = _cell_rho_indices(shape, cfg.theta_grid, cfg.rho_res)
    n_rho = acc.rho_axis.size
    allowed = cfg.allowed_thetas()
    if not allowed.any():
        return []
    flat = P.ravel()

    lines: list[DetectedLine] = []
    while len(lines) < cfg.max_lines:
        threshold = cfg.rel_threshold * float(acc.scores.max())
        if cfg.phys_threshold is not None:
            threshold = max(threshold, cfg.phys_threshold)
        view = acc.scores[:, allowed]
        r, t_sub = np.unravel_index(int(np.argmax(view)), view.shape)
        score = float(view[r, t_sub])
        if score <= threshold or score <= 0.0:
            break
        t = int(np.flatnonzero(allowed)[t_sub])
        rho = float(acc.rho_axis[r])
        theta = float(acc.theta_axis[t])
        cells = line_to_cells((rho, theta), shape, cfg.dilation_half_width)
        if cells.size == 0:
            break
        lines.append(DetectedLine(rho=rho, theta=theta, score=score, cells=cells))
        cell_flat = cells[:, 0] * shape[1] + cells[:, 1]
        weights = flat[cell_flat]
        for j, idx in enumerate(indices):
            acc.scores[:, j] -= np.bincount(idx[cell_flat], weights=weights,
                                            minlength=n_rho)
        np.maximum(acc.scores, 0.0, out=acc.scores)
        flat[cell_flat] = 0.0
    return lines


def detect_lines(acc: HoughAccumulator, cfg: HoughConfig) -> list[DetectedLine]:
    """Threshold the accumulator, suppress non-maxima, and rasterize peaks.

    Single-pass detection on a precomputed accumulator: candidates above
    ``max(rel_threshold * max(H), phys_threshold)`` at allowed angles are
    greedily kept unless within ``nms_radius`` of an accepted peak.
    Returns at most ``max_lines`` lines sorted by descending score; an empty
    list means the input is interference-free under the configured threshold.
    """
    threshold = cfg.rel_threshold * float(acc.scores.max())
    if cfg.phys_threshold is not None:
        threshold = max(threshold, cfg.phys_threshold)

    allowed = cfg.allowed_thetas()
    if allowed.size != acc.theta_axis.size:
        raise ValueError("accumulator theta axis does not match the config grid")
    cand = acc.scores > threshold
    cand[:, ~allowed] = False
    if not cand.any():
        return []

    ri, ti = np.nonzero(cand)
    vals = acc.scores[ri, ti]
    order = np.lexsort((ti, ri, -vals))  # descending score, deterministic ties
    dr, dt = cfg.nms_radius
    kept: list[tuple[int, int, float]] = []
    for o in order:
        r, t, v = int(ri[o]), int(ti[o]), float(vals[o])
        if any(abs(r - kr) <= dr and abs(t - kt) <= dt for kr, kt, _ in kept):
            continue
        kept.append((r, t, v))
        if len(kept) >= cfg.max_lines:
            break

    lines = []
    for r, t, v in kept:
        rho = float(acc.rho_axis[r])
        theta = float(acc.theta_axis[t])
        cells = line_to_cells((rho, theta), acc.source_shape, cfg.dilation_half_width)
        lines.append(DetectedLine(rho=rho, theta=theta, score=v, cells=cells))
    return lines


def physical_threshold(victim: RadarParams, alpha: float, sigma_max: float,
                       r_ref: float) -> float:
    """Absolute accumulator threshold from a maximum-target-echo power level.

    ``alpha`` absorbs the STFT normalization and line geometry and is
    obtained by calibration on an interference-free scenario (see
    ``pipeline.calibrate_threshold_factor``).
    """
    return alpha * radar_sim.echo_power(victim, TargetSpec(range_m=r_ref, rcs=sigma_max))
