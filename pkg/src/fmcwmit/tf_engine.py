"""Forward STFT, power spectrogram, and least-squares overlap-add inversion.

The transform uses the absolute-time phase convention
``S(zeta, m) = sum_n x(n) w(n - zeta*D) exp(-j 2 pi m n / N)``:
a tone centred on bin ``m`` appears as a (nearly) constant complex value
along the frame axis, which keeps time-slice models simple.  Frames cover
only full windows (no zero padding); samples past the last full window are
not represented and are zero-filled on inversion.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window


@dataclass(frozen=True)
class StftConfig:
    """Analysis window length, hop, FFT size, and window taper."""

    window_len: int = 32
    hop: int = 4
    n_fft: int = 128
    window_kind: str = "hamming"

    def __post_init__(self):
        if not (0 < self.hop <= self.window_len <= self.n_fft):
            raise ValueError("require 0 < hop <= window_len <= n_fft")
        w = self.window()
        # Least-squares OLA inverts iff every hop-residue class of the
        # squared window has nonzero mass.
        for r in range(self.hop):
            if np.sum(w[r :: self.hop] ** 2) <= 1e-12 * np.max(w**2):
                raise ValueError(
                    f"window/hop pair is not invertible (zero OLA weight at residue {r})"
                )

    def window(self) -> np.ndarray:
        return get_window(self.window_kind, self.window_len, fftbins=False)

    def frame_count(self, source_len: int) -> int:
        if source_len < self.window_len:
            raise ValueError("sequence shorter than one analysis window")
        return (source_len - self.window_len) // self.hop + 1


@dataclass
class Spectrogram:
    """Complex STFT matrix indexed (time frame, frequency bin) with metadata."""

    data: np.ndarray
    cfg: StftConfig
    source_len: int
    f_s: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        expected = (self.cfg.frame_count(self.source_len), self.cfg.n_fft)
        if self.data.shape != expected:
            raise ValueError(f"spectrogram shape {self.data.shape} != expected {expected}")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def frame_times(self) -> np.ndarray:
        """Window start time of each frame (s)."""
        return np.arange(self.n_frames) * self.cfg.hop / self.f_s

    @property
    def bin_freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.cfg.n_fft, d=1.0 / self.f_s)

    def copy(self) -> "Spectrogram":
        return Spectrogram(self.data.copy(), self.cfg, self.source_len, self.f_s)


def _twiddle(cfg: StftConfig, n_frames: int) -> np.ndarray:
    # exp(-j 2 pi m (zeta D) / N): converts frame-local FFT phase to the
    # absolute-time convention.
    starts = cfg.hop * np.arange(n_frames)
    bins = np.arange(cfg.n_fft)
    return np.exp(-2j * np.pi * np.outer(starts, bins) / cfg.n_fft)


def stft(x: np.ndarray, cfg: StftConfig, f_s: float = 1.0) -> Spectrogram:
    """Short-time Fourier transform of a real sequence."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("stft input must be one-dimensional")
    n_frames = cfg.frame_count(x.size)
    frames = sliding_window_view(x, cfg.window_len)[:: cfg.hop][:n_frames]
    spec = np.fft.fft(frames * cfg.window(), n=cfg.n_fft, axis=1)
    spec *= _twiddle(cfg, n_frames)
    return Spectrogram(data=spec, cfg=cfg, source_len=x.size, f_s=f_s)


def power_spectrogram(spec: Spectrogram) -> np.ndarray:
    """Elementwise |S|^2, linear scale."""
    return np.abs(spec.data) ** 2


def half_power_spectrogram(spec: Spectrogram) -> np.ndarray:
    """|S|^2 restricted to the non-negative-frequency bins 0..N/2."""
    return np.abs(spec.data[:, : spec.cfg.n_fft // 2 + 1]) ** 2


def enforce_conjugate_symmetry(data: np.ndarray) -> np.ndarray:
    """Project a spectrogram matrix onto conjugate-symmetric (real) form."""
    n_fft = data.shape[1]
    mirror = (-np.arange(n_fft)) % n_fft
    return 0.5 * (data + np.conj(data[:, mirror]))


def ola_weight(cfg: StftConfig, source_len: int) -> np.ndarray:
    """Per-sample sum of squared analysis windows (the LS-OLA denominator)."""
    w2 = cfg.window() ** 2
    n_frames = cfg.frame_count(source_len)
    weight = np.zeros(source_len)
    for z in range(n_frames):
        start = z * cfg.hop
        weight[start : start + cfg.window_len] += w2
    return weight


def istft(spec: Spectrogram) -> np.ndarray:
    """Invert a (possibly modified) spectrogram back to a real sequence.

    Uses the dual-window least-squares overlap-add synthesis
    ``w_i(n) = w(n) / sum_z w(n - zD)^2``, which reconstructs unmodified
    spectrograms exactly wherever at least one window covers the sample.
    Conjugate symmetry is enforced first so the output is real.
    """
    cfg = spec.cfg
    data = enforce_conjugate_symmetry(spec.data)
    data *= np.conj(_twiddle(cfg, spec.n_frames))
    frames = np.fft.ifft(data, axis=1)[:, : cfg.window_len].real

    w = cfg.window()
    num = np.zeros(spec.source_len)
    for z in range(spec.n_frames):
        start = z * cfg.hop
        num[start : start + cfg.window_len] += w * frames[z]

    den = ola_weight(cfg, spec.source_len)
    valid = den > 1e-6 * den.max()
    if not np.all(valid):
        # Weak-coverage samples are renormalized with the nearest valid
        # weight; samples past the last full window come out zero.
        good = np.flatnonzero(valid)
        if good.size == 0:
            raise ValueError("no sample has usable overlap-add weight")
        idx = np.flatnonzero(~valid)
        pos = np.searchsorted(good, idx)
        left = good[np.clip(pos - 1, 0, good.size - 1)]
        right = good[np.clip(pos, 0, good.size - 1)]
        nearest = np.where(idx - left <= right - idx, left, right)
        den = den.copy()
        den[idx] = den[nearest]
        warnings.warn(
            f"{idx.size} samples had weak overlap-add weight and were "
            "renormalized with the nearest valid weight",
            RuntimeWarning,
            stacklevel=2,
        )
    return num / den
