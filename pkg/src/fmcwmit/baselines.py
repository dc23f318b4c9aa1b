"""Reference interference-mitigation methods used for comparison.

Time-domain methods (zeroing, raised-cosine window, time-domain AR, IMAT)
operate on CFAR-flagged baseband samples; TF-domain references are
CFAR-Burg (per-slice CFAR detection plus Burg extrapolation) and STFT-AR
(externally supplied time ranges, all bins repaired).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.signal import hilbert

from .radar_sim import BasebandFrame
from .reconstruction import ArConfig, RepairResult, fit_ar, repair_slice
from .tf_engine import Spectrogram, StftConfig, istft, stft

TIME_METHODS = ("zeroing", "cw", "t_ar", "imat")


@dataclass(frozen=True)
class CfarConfig:
    """Cell-averaging CFAR: training/guard cells per side and target Pfa.

    ``close_gaps``/``dilate`` post-shape the detection mask (fill unflagged
    runs up to ``close_gaps`` cells between detections, then widen each
    region by ``dilate`` cells per side): the anti-aliasing filter rings
    around a strong burst, and blanking a margin around detections is how
    deployed time-domain mitigations handle that skirt.
    """

    n_train: int = 16
    n_guard: int = 4
    pfa: float = 1e-3
    domain: str = "time"
    close_gaps: int = 0
    dilate: int = 0

    def __post_init__(self):
        if self.n_train < 1 or self.n_guard < 0:
            raise ValueError("n_train must be >= 1 and n_guard >= 0")
        if not (0.0 < self.pfa < 1.0):
            raise ValueError("pfa must be in (0, 1)")
        if self.domain not in ("time", "tf_slice"):
            raise ValueError("domain must be 'time' or 'tf_slice'")
        if self.close_gaps < 0 or self.dilate < 0:
            raise ValueError("close_gaps and dilate must be >= 0")


def shape_mask(flags: np.ndarray, cfg: CfarConfig) -> np.ndarray:
    """Close short gaps between detections and dilate each flagged region."""
    out = flags.copy()
    if cfg.close_gaps > 0:
        for g0, g1 in _regions(~out):
            if g0 > 0 and g1 < out.size and g1 - g0 <= cfg.close_gaps:
                out[g0:g1] = True
    if cfg.dilate > 0 and out.any():
        base = out.copy()
        for d in range(1, cfg.dilate + 1):
            out[d:] |= base[:-d]
            out[:-d] |= base[d:]
    return out


@dataclass
class TimeMask:
    """Per-sample interference flags for one baseband frame."""

    flags: np.ndarray

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=bool)
        if self.flags.ndim != 1:
            raise ValueError("time mask must be one-dimensional")


def cfar_detect(x: np.ndarray, cfg: CfarConfig) -> np.ndarray:
    """CA-CFAR over a magnitude sequence; True where |x|^2 beats the local
    threshold N (pfa^(-1/N) - 1) * mean(training powers).

    Training windows shrink near the edges; the threshold factor uses the
    cell count actually available.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n <= 2 * (cfg.n_train + cfg.n_guard) + 1:
        raise ValueError("input shorter than one full CFAR window")
    p = x * x
    csum = np.concatenate([[0.0], np.cumsum(p)])
    i = np.arange(n)
    lead_lo = np.clip(i - cfg.n_guard - cfg.n_train, 0, n)
    lead_hi = np.clip(i - cfg.n_guard, 0, n)
    trail_lo = np.clip(i + cfg.n_guard + 1, 0, n)
    trail_hi = np.clip(i + cfg.n_guard + 1 + cfg.n_train, 0, n)
    train_sum = (csum[lead_hi] - csum[lead_lo]) + (csum[trail_hi] - csum[trail_lo])
    count = (lead_hi - lead_lo) + (trail_hi - trail_lo)
    count = np.maximum(count, 1)
    factor = count * (cfg.pfa ** (-1.0 / count) - 1.0)
    return p > factor * train_sum / count


def time_mask_from_cfar(frame: BasebandFrame, cfg: CfarConfig) -> TimeMask:
    """Detect interfered samples on the frame's analytic envelope."""
    envelope = np.abs(hilbert(frame.samples))
    return TimeMask(shape_mask(cfar_detect(envelope, cfg), cfg))


@dataclass(frozen=True)
class ImatConfig:
    """Iterative method with adaptive thresholding parameters.

    Threshold schedule lambda_k = lambda0 * exp(-decay * k); lambda0
    defaults to the largest FFT magnitude of the zero-filled signal.
    """

    iterations: int = 20
    decay: float = 0.2
    lambda0: Optional[float] = None


def _imat_fill(x: np.ndarray, known: np.ndarray, cfg: ImatConfig) -> np.ndarray:
    est = np.where(known, x, 0.0)
    lam0 = cfg.lambda0 if cfg.lambda0 is not None else float(np.abs(np.fft.fft(est)).max())
    for k in range(cfg.iterations):
        spec = np.fft.fft(est)
        lam = lam0 * np.exp(-cfg.decay * k)
        spec[np.abs(spec) < lam] = 0.0
        est = np.where(known, x, np.fft.ifft(spec).real)
    return est


def _raised_cosine_suppress(x: np.ndarray, mask: np.ndarray, ramp: int = 2) -> np.ndarray:
    """Blank each masked region under a raised-cosine-edged notch.

    The window is zero across the region interior (including its center)
    and rises smoothly to one at the region edges, so the suppression has
    no rectangular discontinuity against the surrounding samples.
    """
    out = x.copy()
    for g0, g1 in _regions(mask):
        length = g1 - g0
        taper = np.zeros(length)
        r = min(ramp, length // 2)
        if r > 0:
            edge = 0.5 * (1.0 + np.cos(np.pi * np.arange(1, r + 1) / (r + 1)))
            taper[:r] = edge
            taper[length - r :] = edge[::-1]
        out[g0:g1] *= taper
    return out


def _regions(mask: np.ndarray) -> list[tuple[int, int]]:
    edges = np.flatnonzero(np.diff(np.concatenate([[0], mask.view(np.int8), [0]])))
    return list(zip(edges[::2], edges[1::2]))


def apply_time_baseline(method: str, frame: BasebandFrame, mask: TimeMask,
                        ar_cfg: Optional[ArConfig] = None,
                        imat_cfg: Optional[ImatConfig] = None) -> BasebandFrame:
    """Suppress or reconstruct the masked samples of one frame.

    zeroing: masked samples set to zero.  cw: each masked region tapered by
    a raised cosine falling to zero at the region center.  t_ar: masked
    samples extrapolated forward by the slice AR model.  imat: iterative
    sparse fill with known samples re-imposed each iteration.
    """
    if method not in TIME_METHODS:
        raise ValueError(f"unknown time-domain method {method!r}; valid: {TIME_METHODS}")
    flags = mask.flags
    if flags.size != frame.samples.size:
        raise ValueError("mask length does not match the frame")
    if flags.all():
        raise ValueError("mask flags every sample; nothing left to fit")

    x = frame.samples
    if method == "zeroing":
        out = np.where(flags, 0.0, x)
    elif method == "cw":
        out = _raised_cosine_suppress(x, flags)
    elif method == "t_ar":
        cfg = ar_cfg or ArConfig()
        out = repair_slice(x, flags, replace(cfg, direction="forward")).values.real
    else:  # imat
        out = _imat_fill(x, ~flags, imat_cfg or ImatConfig())

    gt = None if frame.ground_truth is None else frame.ground_truth.copy()
    return BasebandFrame(samples=out, f_s=frame.f_s, chirp_index=frame.chirp_index,
                         ground_truth=gt)


# --- Burg-method AR estimation (complex-capable) -----------------------------

def burg_path(x: np.ndarray, max_order: int) -> list[tuple[np.ndarray, float]]:
    """Burg recursion up to ``max_order``.

    Returns [(psi, residual variance)] for each order 1..q_max in prediction
    form (x_hat(n) = sum psi_j x(n-j)); the list may stop early if the
    recursion runs out of lattice samples.
    """
    x = np.asarray(x).astype(np.complex128)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    # Forward/backward prediction errors, trimmed by one sample per stage.
    f = x[1:].copy()
    b = x[:-1].copy()
    a = np.zeros(max_order + 1, dtype=np.complex128)
    a[0] = 1.0
    var = float(np.mean(np.abs(x) ** 2))
    path: list[tuple[np.ndarray, float]] = []
    for m in range(1, max_order + 1):
        if f.size < 1:
            break
        den = float(np.sum(np.abs(f) ** 2 + np.abs(b) ** 2))
        k = 0.0 + 0.0j if den == 0.0 else -2.0 * np.sum(f * np.conj(b)) / den
        a_prev = a.copy()
        for j in range(1, m + 1):
            a[j] = a_prev[j] + k * np.conj(a_prev[m - j])
        f_new = f + k * b
        b_new = b + np.conj(k) * f
        f, b = f_new[1:], b_new[:-1]
        var *= max(1.0 - abs(k) ** 2, 0.0)
        path.append((-a[1 : m + 1].copy(), var))
    return path


def burg(x: np.ndarray, order: int) -> tuple[np.ndarray, float]:
    """Burg AR(q) prediction coefficients and residual variance."""
    path = burg_path(x, order)
    if len(path) < order:
        raise ValueError("sequence too short for the requested Burg order")
    return path[order - 1]


def _burg_select(x: np.ndarray, cfg: ArConfig) -> tuple[np.ndarray, int]:
    q_max = min(cfg.max_order, x.size // 2)
    path = burg_path(x, max(q_max, 1))
    if cfg.order_rule == "fixed":
        q = min(cfg.fixed_order, len(path))
        return path[q - 1][0], q
    best_q, best_aic = 1, np.inf
    for q, (_, var) in enumerate(path, start=1):
        aic = x.size * np.log(max(var, 1e-300)) + 2.0 * q
        if aic < best_aic:
            best_q, best_aic = q, aic
    return path[best_q - 1][0], best_q


def _nearest_clean_rms(values: np.ndarray, mask: np.ndarray, g0: int, g1: int,
                       count: int) -> float:
    clean_idx = np.flatnonzero(~mask)
    if clean_idx.size == 0:
        return 0.0
    center = 0.5 * (g0 + g1 - 1)
    nearest = clean_idx[np.argsort(np.abs(clean_idx - center), kind="stable")[:count]]
    return float(np.sqrt(np.mean(np.abs(values[nearest]) ** 2)))


def _burg_repair_slice(values: np.ndarray, mask: np.ndarray, cfg: ArConfig) -> np.ndarray:
    """Zero flagged cells, extrapolate them with a Burg AR model, and scale
    each gap's RMS to its nearest clean neighbors."""
    x = values.copy()
    runs = [(s, e) for s, e in _regions(~mask)]
    longest = max(runs, key=lambda r: r[1] - r[0], default=None)
    if longest is None or longest[1] - longest[0] < max(cfg.min_clean_run, 4):
        x[mask] = 0.0
        return x
    psi, order = _burg_select(x[longest[0] : longest[1]], cfg)
    for g0, g1 in _regions(mask):
        length = g1 - g0
        fwd = bwd = None
        if g0 >= order and not mask[g0 - order : g0].any():
            fwd = _burg_predict(psi, x[g0 - order : g0], length)
        if g1 + order <= x.size and not mask[g1 : g1 + order].any():
            bwd = _burg_predict(np.conj(psi), x[g1 : g1 + order][::-1], length)[::-1]
        if fwd is not None and bwd is not None:
            alpha = np.arange(1, length + 1) / (length + 1)
            pred = (1.0 - alpha) * fwd + alpha * bwd
        else:
            pred = fwd if fwd is not None else bwd
        if pred is None:
            x[g0:g1] = 0.0
            continue
        target_rms = _nearest_clean_rms(x, mask, g0, g1, max(2 * order, 8))
        pred_rms = float(np.sqrt(np.mean(np.abs(pred) ** 2)))
        if pred_rms > 0 and target_rms > 0:
            pred = pred * (target_rms / pred_rms)
        x[g0:g1] = pred
    return x


def _burg_predict(psi: np.ndarray, context: np.ndarray, length: int) -> np.ndarray:
    q = psi.size
    buf = np.concatenate([context[-q:], np.zeros(length, dtype=np.complex128)])
    for i in range(length):
        buf[q + i] = np.dot(psi, buf[q + i - 1 :: -1][:q])
    return buf[q:]


def cfar_burg(frame: BasebandFrame, stft_cfg: StftConfig, cfar_cfg: CfarConfig,
              ar_cfg: Optional[ArConfig] = None) -> BasebandFrame:
    """Per-slice CFAR detection followed by Burg extrapolation (TF domain)."""
    cfg = ar_cfg or ArConfig()
    spec = stft(frame.samples, stft_cfg, frame.f_s)
    n_fft = stft_cfg.n_fft
    data = spec.data.copy()
    for m in range(n_fft // 2 + 1):
        col = data[:, m]
        flags = shape_mask(cfar_detect(np.abs(col), cfar_cfg), cfar_cfg)
        if not flags.any():
            continue
        repaired = _burg_repair_slice(col, flags, cfg)
        if m == 0 or 2 * m == n_fft:
            repaired = repaired.real.astype(np.complex128)
        data[:, m] = repaired
        if 0 < m < n_fft - m:
            data[:, n_fft - m] = np.conj(repaired)
    out = istft(Spectrogram(data, spec.cfg, spec.source_len, spec.f_s))
    gt = None if frame.ground_truth is None else frame.ground_truth.copy()
    return BasebandFrame(samples=out, f_s=frame.f_s, chirp_index=frame.chirp_index,
                         ground_truth=gt)


def stft_ar_manual(frame: BasebandFrame, stft_cfg: StftConfig,
                   time_ranges: Sequence[tuple[int, int]],
                   ar_cfg: Optional[ArConfig] = None) -> BasebandFrame:
    """Repair every frequency bin inside externally supplied frame ranges.

    ``time_ranges`` are [start, stop) STFT frame indices, e.g. manually
    labeled interference spans; they must be sorted and non-overlapping.
    """
    cfg = ar_cfg or ArConfig()
    spec = stft(frame.samples, stft_cfg, frame.f_s)
    n_frames, n_fft = spec.n_frames, stft_cfg.n_fft

    flags = np.zeros(n_frames, dtype=bool)
    prev_end = 0
    for start, end in time_ranges:
        if not (0 <= start < end <= n_frames):
            raise ValueError(f"range ({start}, {end}) outside 0..{n_frames}")
        if start < prev_end:
            raise ValueError("time ranges must be sorted and non-overlapping")
        flags[start:end] = True
        prev_end = end

    data = spec.data.copy()
    if flags.any():
        for m in range(n_fft // 2 + 1):
            repaired = repair_slice(data[:, m], flags, cfg).values
            if m == 0 or 2 * m == n_fft:
                repaired = repaired.real.astype(np.complex128)
            data[:, m] = repaired
            if 0 < m < n_fft - m:
                data[:, n_fft - m] = np.conj(repaired)
    out = istft(Spectrogram(data, spec.cfg, spec.source_len, spec.f_s))
    gt = None if frame.ground_truth is None else frame.ground_truth.copy()
    return BasebandFrame(samples=out, f_s=frame.f_s, chirp_index=frame.chirp_index,
                         ground_truth=gt)
