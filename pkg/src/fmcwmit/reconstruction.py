"""Autoregressive repair of interference-flagged spectrogram cells.

Each frequency slice (fixed bin, complex values along the frame axis) is
modelled as ``s(z) = sum_{n=1..q} psi_n s(z - n) + eps``; gaps flagged by
the detector are filled with the model's predictions.  The model is fitted
once per slice on its longest clean run; the default bidirectional mode
blends a forward recursion from the left context with a time-reversed
recursion from the right context under a linear crossfade.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import toeplitz

from .hough import DetectedLine, HoughConfig, detect_lines_sequential
from .radar_sim import BasebandFrame
from .tf_engine import Spectrogram, StftConfig, half_power_spectrogram, istft, stft


@dataclass(frozen=True)
class ArConfig:
    """Model order policy and repair direction.

    ``order_rule`` is ``"aic"`` (order minimizing len*ln(residual variance)
    + 2q over 1..max_order) or ``"fixed"`` (always ``fixed_order``).
    ``min_clean_run`` is the shortest clean segment a model may be fitted
    on; shorter slices degrade to zero-filling the gap.
    """

    max_order: int = 8
    order_rule: str = "aic"
    fixed_order: Optional[int] = None
    direction: str = "bidirectional"
    min_clean_run: int = 16

    def __post_init__(self):
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")
        if self.order_rule not in ("aic", "fixed"):
            raise ValueError("order_rule must be 'aic' or 'fixed'")
        if self.order_rule == "fixed":
            q = self.fixed_order
            if q is None or not (1 <= q <= self.max_order):
                raise ValueError("fixed_order must be in 1..max_order")
        if self.direction not in ("forward", "bidirectional"):
            raise ValueError("direction must be 'forward' or 'bidirectional'")
        if self.min_clean_run < 2 * self.max_order:
            raise ValueError("min_clean_run must be >= 2 * max_order")


@dataclass
class ArFit:
    """Least-squares AR coefficients psi[1..q] and fit diagnostics."""

    psi: np.ndarray
    noise_var: float
    regularized: bool = False

    @property
    def order(self) -> int:
        return self.psi.size


@dataclass
class RepairMask:
    """Boolean matrix congruent to a spectrogram; True marks interference."""

    flags: np.ndarray

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=bool)
        if self.flags.ndim != 2:
            raise ValueError("mask must be two-dimensional")

    @classmethod
    def from_lines(cls, lines: list[DetectedLine], n_frames: int, n_fft: int) -> "RepairMask":
        """Union of line footprints, mirrored onto the conjugate bins."""
        flags = np.zeros((n_frames, n_fft), dtype=bool)
        for line in lines:
            if line.cells.size:
                flags[line.cells[:, 0], line.cells[:, 1]] = True
        for m in range(1, n_fft // 2 + 1):
            mirrored = flags[:, m] | flags[:, (n_fft - m) % n_fft]
            flags[:, m] = mirrored
            flags[:, (n_fft - m) % n_fft] = mirrored
        return cls(flags)


def fit_ar(samples: np.ndarray, order: int) -> ArFit:
    """Least-squares AR(q) fit minimizing sum |s(z) - sum psi_n s(z-n)|^2.

    Rank-deficient normal equations fall back to a ridge solve with factor
    1e-8 * trace and are flagged in the result.
    """
    x = np.asarray(samples)
    if x.ndim != 1:
        raise ValueError("samples must be one-dimensional")
    n = x.size
    if order < 1 or n < 2 * order:
        raise ValueError(f"need at least 2*order={2 * order} samples, got {n}")
    x = x.astype(np.complex128) if np.iscomplexobj(x) else x.astype(np.float64)
    design = toeplitz(x[order - 1 : n - 1], x[order - 1 :: -1][:order])
    target = x[order:]
    psi, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    regularized = False
    if rank < order:
        gram = design.conj().T @ design
        lam = 1e-8 * np.trace(gram).real
        psi = np.linalg.solve(gram + lam * np.eye(order), design.conj().T @ target)
        regularized = True
    resid = target - design @ psi
    noise_var = float(np.mean(np.abs(resid) ** 2)) if resid.size else 0.0
    return ArFit(psi=psi, noise_var=noise_var, regularized=regularized)


def select_order(samples: np.ndarray, cfg: ArConfig) -> int:
    """Pick the AR order by the configured rule (AIC by default)."""
    if cfg.order_rule == "fixed":
        return cfg.fixed_order
    x = np.asarray(samples)
    q_max = min(cfg.max_order, x.size // 2)
    if q_max < 1:
        raise ValueError("sequence too short for any AR order")
    best_q, best_aic = 1, np.inf
    for q in range(1, q_max + 1):
        fit = fit_ar(x, q)
        var = max(fit.noise_var, 1e-300)
        aic = x.size * np.log(var) + 2.0 * q
        if aic < best_aic:
            best_q, best_aic = q, aic
    return best_q


@dataclass
class RepairResult:
    """Repaired slice values plus what the repair had to do to get them."""

    values: np.ndarray
    order: int = 0
    used_fallback: bool = False
    regularized: bool = False


def _clean_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Contiguous [start, stop) runs where mask is False."""
    runs = []
    start = None
    for i, flagged in enumerate(mask):
        if not flagged and start is None:
            start = i
        elif flagged and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, mask.size))
    return runs


def _gaps(mask: np.ndarray) -> list[tuple[int, int]]:
    return _clean_runs(~mask)


def stabilize(psi: np.ndarray) -> np.ndarray:
    """Reflect characteristic roots outside the unit circle back inside.

    A least-squares fit on a low-energy slice can place poles well outside
    the unit circle, and a recursion across a gap then diverges.  Reflecting
    each such root r to 1/conj(r) keeps the predictor's correlation
    structure while bounding the recursion; on-circle roots (pure tones)
    are untouched up to rounding.
    """
    psi = np.asarray(psi)
    roots = np.roots(np.concatenate([[1.0], -psi]))
    outside = np.abs(roots) > 1.0
    if not outside.any():
        return psi
    roots[outside] = 1.0 / np.conj(roots[outside])
    coeffs = np.poly(roots)
    stabilized = -coeffs[1:]
    if not np.iscomplexobj(psi):
        stabilized = stabilized.real
    return stabilized


def _predict_forward(psi: np.ndarray, context: np.ndarray, length: int) -> np.ndarray:
    q = psi.size
    buf = np.concatenate([context[-q:], np.zeros(length, dtype=context.dtype)])
    for i in range(length):
        buf[q + i] = np.dot(psi, buf[q + i - 1 :: -1][:q])
    return buf[q:]


def repair_slice(values: np.ndarray, gap_mask: np.ndarray, cfg: ArConfig) -> RepairResult:
    """Fill masked samples of one frequency slice with AR predictions.

    Clean samples pass through untouched.  Gaps without enough context on
    either side fall back to zero filling, flagged in the result.
    """
    x = np.array(values)
    mask = np.asarray(gap_mask, dtype=bool)
    if x.shape != mask.shape or x.ndim != 1:
        raise ValueError("values and gap_mask must be matching one-dimensional arrays")
    if not mask.any():
        return RepairResult(values=x)

    runs = _clean_runs(mask)
    longest = max(runs, key=lambda r: r[1] - r[0], default=None)
    if longest is None or longest[1] - longest[0] < max(cfg.min_clean_run, 2):
        x[mask] = 0.0
        return RepairResult(values=x, used_fallback=True)

    run = x[longest[0] : longest[1]]
    order = min(select_order(run, cfg), run.size // 2)
    fit_fwd = fit_ar(run, order)
    fit_bwd = fit_ar(run[::-1], order)
    psi_fwd = stabilize(fit_fwd.psi)
    psi_bwd = stabilize(fit_bwd.psi)
    fallback = False

    for g0, g1 in _gaps(mask):
        length = g1 - g0
        fwd = bwd = None
        if g0 >= order and not mask[g0 - order : g0].any():
            fwd = _predict_forward(psi_fwd, x[g0 - order : g0], length)
        if g1 + order <= x.size and not mask[g1 : g1 + order].any():
            bwd = _predict_forward(psi_bwd, x[g1 : g1 + order][::-1], length)[::-1]

        if cfg.direction == "forward" and fwd is not None:
            x[g0:g1] = fwd
        elif fwd is not None and bwd is not None:
            alpha = np.arange(1, length + 1) / (length + 1)
            x[g0:g1] = (1.0 - alpha) * fwd + alpha * bwd
        elif fwd is not None:
            x[g0:g1] = fwd
        elif bwd is not None:
            x[g0:g1] = bwd
            if cfg.direction == "forward":
                fallback = True  # no left context: backward fit stood in
        else:
            x[g0:g1] = 0.0
            fallback = True

    return RepairResult(values=x, order=order, used_fallback=fallback,
                        regularized=fit_fwd.regularized or fit_bwd.regularized)


@dataclass
class MitigationResult:
    """Reconstructed frame plus everything the pipeline decided on the way."""

    frame: BasebandFrame
    lines: list[DetectedLine]
    mask: RepairMask
    ar_orders: dict[int, int]
    stage_seconds: dict[str, float] = field(default_factory=dict)


def mitigate_detailed(frame: BasebandFrame, stft_cfg: StftConfig, hough_cfg: HoughConfig,
                      ar_cfg: ArConfig) -> MitigationResult:
    """Full mitigation chain: STFT, power, Hough detection, per-slice AR
    repair of the detected footprints, and inverse STFT."""
    times: dict[str, float] = {}
    t0 = time.perf_counter()
    spec = stft(frame.samples, stft_cfg, frame.f_s)
    power = half_power_spectrogram(spec)
    times["stft"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lines = detect_lines_sequential(power, hough_cfg)
    times["hough"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    n_fft = stft_cfg.n_fft
    mask = RepairMask.from_lines(lines, spec.n_frames, n_fft)
    data = spec.data.copy()
    ar_orders: dict[int, int] = {}
    for m in range(n_fft // 2 + 1):
        col_mask = mask.flags[:, m]
        if not col_mask.any():
            continue
        result = repair_slice(data[:, m], col_mask, ar_cfg)
        col = result.values
        if m == 0 or 2 * m == n_fft:
            col = col.real.astype(np.complex128)
        data[:, m] = col
        if 0 < m < n_fft - m:
            data[:, n_fft - m] = np.conj(col)
        ar_orders[m] = result.order
    times["repair"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    repaired = Spectrogram(data, spec.cfg, spec.source_len, spec.f_s)
    samples = istft(repaired)
    times["istft"] = time.perf_counter() - t0

    gt = None if frame.ground_truth is None else frame.ground_truth.copy()
    out = BasebandFrame(samples=samples, f_s=frame.f_s, chirp_index=frame.chirp_index,
                        ground_truth=gt)
    return MitigationResult(frame=out, lines=lines, mask=mask, ar_orders=ar_orders,
                            stage_seconds=times)


def mitigate(frame: BasebandFrame, stft_cfg: StftConfig, hough_cfg: HoughConfig,
             ar_cfg: ArConfig) -> BasebandFrame:
    """Reconstruct one frame; see ``mitigate_detailed`` for diagnostics."""
    return mitigate_detailed(frame, stft_cfg, hough_cfg, ar_cfg).frame
