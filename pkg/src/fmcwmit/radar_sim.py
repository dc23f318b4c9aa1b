"""FMCW scene synthesis, dechirp, anti-aliasing filtering, and ADC decimation.

Carrier handling
----------------
Sampling a 77 GHz carrier directly is pointless: the mixer output depends
only on phase differences.  Every signal here therefore carries the phase
``phi(t) - (f_c_victim - f_offset) * t``, i.e. the whole scene is shifted
down so the victim sweep starts at ``f_offset`` (default ``analog_rate / 5``)
instead of at its RF carrier.  Mixer difference terms are then numerically
identical to the RF formulation, while sum terms live at ``>= ~2*f_offset -
B_i`` and are removed by the anti-aliasing filter exactly as the RF sum
terms would be.  A zero offset would let the sum term of a near target
sweep through baseband early in the ramp, which the RF system never sees.

Amplitude bookkeeping: mixing ``sqrt(2*P_t) cos(a)`` with
``sqrt(2*P_e) cos(b)`` and low-pass filtering leaves
``sqrt(P_t * P_e) cos(a - b)``, so a clean single-target frame is a tone of
mean-square power ``P_t * P_e / 2``.  That analytic level is also the SNR
reference: for ``NoiseSpec.snr_db = s`` the injected analog-rate white
noise has variance ``P_echo_adc * 10**(-s/10)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.signal import fftconvolve, firwin, kaiserord

from .scenario import (
    ConfigError,
    InterfererSpec,
    RadarParams,
    ScenarioConfig,
    TargetSpec,
)

# Interference can sit ~60 dB above the echo (one-way propagation), so a
# 60 dB stopband would leave echo-level leakage across every interferer
# chirp.  100 dB keeps that floor ~40 dB under the echo.
LPF_STOPBAND_DB = 100.0
_FOUR_PI = 4.0 * math.pi


@dataclass
class BasebandFrame:
    """One chirp's real-valued ADC output plus sampling metadata."""

    samples: np.ndarray
    f_s: float
    chirp_index: int = 0
    ground_truth: Optional[np.ndarray] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("frame samples must be one-dimensional")
        if self.ground_truth is not None:
            self.ground_truth = np.asarray(self.ground_truth, dtype=np.float64)
            if self.ground_truth.shape != self.samples.shape:
                raise ValueError("ground_truth must match the frame length")

    def __len__(self) -> int:
        return self.samples.size


@dataclass
class ReceivedRecord:
    """One sweep of the analog-rate scene.

    ``received`` is echo + interference + noise; ``echo`` is the clean
    target-echo track carried alongside as ground truth.
    """

    received: np.ndarray
    echo: np.ndarray
    f_s: float
    chirp_index: int = 0


def chirp_phase(params: RadarParams, t) -> np.ndarray:
    """Transmit phase in cycles at sweep-local time ``t``: f_c*t + k*t^2/2.

    Raises ValueError outside the sweep interval [0, sweep_time].
    """
    t = np.asarray(t, dtype=np.float64)
    tol = 1e-12 * params.sweep_time
    if np.any(t < -tol) or np.any(t > params.sweep_time + tol):
        raise ValueError("t outside the sweep interval [0, T]")
    return params.f_c * t + 0.5 * params.chirp_rate * t * t


def echo_power(radar: RadarParams, target: TargetSpec) -> float:
    """Received echo power: P_t G^2 lambda^2 sigma / ((4 pi)^3 R^4)."""
    lam = radar.wavelength
    return (
        radar.transmit_power
        * radar.antenna_gain**2
        * lam**2
        * target.rcs
        / (_FOUR_PI**3 * target.range_m**4)
    )


def interference_power(victim: RadarParams, intf: InterfererSpec) -> float:
    """Received interference power: P_t G^2 lambda^2 / ((4 pi)^2 R_i^2).

    One-way propagation; uses the interferer's transmit power, gain, and
    wavelength (identical to the victim's in the symmetric-radar case).
    """
    r = intf.radar
    lam = r.wavelength
    return (
        r.transmit_power * r.antenna_gain**2 * lam**2 / (_FOUR_PI**2 * intf.distance_m**2)
    )


def sir(range_m: float, interferer_range_m: float, rcs: float) -> float:
    """Signal-to-interference ratio in dB: 10 log10(R_i^2 sigma / (4 pi R^4))."""
    if range_m <= 0 or interferer_range_m <= 0 or rcs <= 0:
        raise ValueError("ranges and RCS must be positive")
    return 10.0 * math.log10(interferer_range_m**2 * rcs / (_FOUR_PI * range_m**4))


def beat_frequency(victim: RadarParams, target: TargetSpec) -> float:
    """Target beat frequency k*tau at the sweep start (Doppler excluded)."""
    return victim.chirp_rate * 2.0 * target.range_m / SPEED_OF_LIGHT


def echo_power_at_adc(cfg: ScenarioConfig) -> float:
    """Analytic mean-square power of the clean echo at the ADC output.

    Each target contributes a tone of power P_t * P_e / 2 after dechirp and
    filtering.  Scenarios without targets use 1.0 as the SNR reference.
    """
    v = cfg.victim
    total = sum(v.transmit_power * echo_power(v, t) / 2.0 for t in cfg.targets)
    return total if total > 0 else 1.0


def noise_variance(cfg: ScenarioConfig) -> float:
    """Variance of the analog-rate white noise for the configured SNR."""
    if cfg.noise.snr_db is None:
        return 0.0
    return echo_power_at_adc(cfg) * 10.0 ** (-cfg.noise.snr_db / 10.0)


def _sweep_axis(victim: RadarParams) -> np.ndarray:
    n = int(round(victim.sweep_time * victim.analog_rate))
    return np.arange(n) / victim.analog_rate


def synthesize_received(cfg: ScenarioConfig, chirp_index: int = 0) -> ReceivedRecord:
    """Build the analog-rate received signal for one victim sweep.

    Target delays use global time (chirp_index * prt + local time) so the
    Doppler phase advances coherently across a chirp sequence.  Interferer
    chirp trains repeat at their own PRT; every interferer chirp overlapping
    the victim sweep window is synthesized.  Noise is white Gaussian at the
    analog rate, drawn from an independent per-chirp substream of the seed.
    """
    if chirp_index < 0 or chirp_index >= cfg.n_chirps:
        raise ValueError(f"chirp_index {chirp_index} outside 0..{cfg.n_chirps - 1}")
    v = cfg.victim
    u = _sweep_axis(v)
    t0 = chirp_index * v.prt
    f_shift = v.f_c - cfg.offset_hz

    echo = np.zeros_like(u)
    for tg in cfg.targets:
        tau = 2.0 * (tg.range_m + tg.velocity * (t0 + u)) / SPEED_OF_LIGHT
        x = u - tau
        phase = v.f_c * x + 0.5 * v.chirp_rate * x * x - f_shift * u
        amp = math.sqrt(2.0 * echo_power(v, tg))
        echo += np.where(u >= tau, amp * np.cos(2.0 * np.pi * phase), 0.0)

    interf = np.zeros_like(u)
    for it in cfg.interferers:
        r = it.radar
        tau_i = it.distance_m / SPEED_OF_LIGHT
        amp = math.sqrt(2.0 * interference_power(v, it))
        # interferer chirp j arrives over global t in
        # [t_offset + j*prt_i + tau_i, ... + sweep_time_i]
        j_lo = math.ceil((t0 - it.t_offset - tau_i - r.sweep_time) / r.prt)
        j_hi = math.floor((t0 + v.sweep_time - it.t_offset - tau_i) / r.prt)
        for j in range(j_lo, j_hi + 1):
            start = it.t_offset + j * r.prt + tau_i - t0
            x = u - start
            sel = (x >= 0.0) & (x <= r.sweep_time)
            if not np.any(sel):
                continue
            xs = x[sel]
            phase = r.f_c * xs + 0.5 * r.chirp_rate * xs * xs - f_shift * u[sel]
            chirp = amp * np.cos(2.0 * np.pi * phase)
            if it.edge_ramp > 0:
                ramp_in = np.minimum(xs / it.edge_ramp, 1.0)
                ramp_out = np.minimum((r.sweep_time - xs) / it.edge_ramp, 1.0)
                envelope = 0.5 * (1.0 - np.cos(np.pi * ramp_in))
                envelope *= 0.5 * (1.0 - np.cos(np.pi * ramp_out))
                chirp *= envelope
            interf[sel] += chirp

    received = echo + interf
    sigma2 = noise_variance(cfg)
    if sigma2 > 0:
        rng = np.random.default_rng([cfg.noise.seed, chirp_index])
        received = received + rng.normal(0.0, math.sqrt(sigma2), u.size)

    return ReceivedRecord(received=received, echo=echo, f_s=v.analog_rate, chirp_index=chirp_index)


_LPF_CACHE: dict[tuple, np.ndarray] = {}


def design_lpf(analog_rate: float, cutoff: float, transition: float) -> np.ndarray:
    """Linear-phase Kaiser FIR anti-aliasing filter, passband edge at
    ``cutoff`` and stopband edge at ``cutoff + transition``."""
    key = (analog_rate, cutoff, transition)
    h = _LPF_CACHE.get(key)
    if h is None:
        numtaps, beta = kaiserord(LPF_STOPBAND_DB, transition / (analog_rate / 2.0))
        numtaps += (numtaps + 1) % 2  # odd length -> integer group delay
        h = firwin(numtaps, cutoff + transition / 2.0, window=("kaiser", beta), fs=analog_rate)
        _LPF_CACHE[key] = h
    return h


def lpf_power_gain(cfg: ScenarioConfig) -> float:
    """Sum of squared filter taps: white-noise variance gain of the LPF."""
    cutoff, transition = cfg.lpf.resolve(cfg.victim.if_rate)
    h = design_lpf(cfg.victim.analog_rate, cutoff, transition)
    return float(np.sum(h * h))


def lpf_decimate(cfg: ScenarioConfig, x: np.ndarray) -> np.ndarray:
    """Filter an analog-rate record and decimate to the IF rate.

    The filter's group delay is compensated so output sample i corresponds
    to sweep time i / f_if.
    """
    v = cfg.victim
    cutoff, transition = cfg.lpf.resolve(v.if_rate)
    if cutoff > v.if_rate / 2.0:
        raise ConfigError("LPF cutoff above the IF Nyquist frequency would alias")
    h = design_lpf(v.analog_rate, cutoff, transition)
    y = fftconvolve(np.asarray(x, dtype=np.float64), h, mode="full")
    delay = (h.size - 1) // 2
    n_if = int(round(v.sweep_time * v.if_rate))
    idx = delay + np.arange(n_if) * v.decimation
    return y[idx]


def reference_chirp(cfg: ScenarioConfig) -> np.ndarray:
    """The victim's dechirp reference at the simulation offset."""
    v = cfg.victim
    u = _sweep_axis(v)
    phase = cfg.offset_hz * u + 0.5 * v.chirp_rate * u * u
    return math.sqrt(2.0 * v.transmit_power) * np.cos(2.0 * np.pi * phase)


def dechirp(cfg: ScenarioConfig, record: Union[ReceivedRecord, np.ndarray],
            chirp_index: Optional[int] = None) -> BasebandFrame:
    """Mix one analog record with the reference chirp, filter, and decimate.

    A ``ReceivedRecord``'s echo track is run through the identical chain and
    attached as the frame's ground truth.
    """
    if isinstance(record, ReceivedRecord):
        received, echo = record.received, record.echo
        if chirp_index is None:
            chirp_index = record.chirp_index
    else:
        received, echo = np.asarray(record, dtype=np.float64), None
        if chirp_index is None:
            chirp_index = 0
    v = cfg.victim
    n = int(round(v.sweep_time * v.analog_rate))
    if received.size != n:
        raise ValueError(f"analog record must hold one sweep ({n} samples), got {received.size}")

    ref = reference_chirp(cfg)
    samples = lpf_decimate(cfg, received * ref)
    gt = lpf_decimate(cfg, echo * ref) if echo is not None else None
    return BasebandFrame(samples=samples, f_s=v.if_rate, chirp_index=chirp_index, ground_truth=gt)


def simulate_scenario(cfg: ScenarioConfig) -> list[BasebandFrame]:
    """Synthesize and dechirp every chirp of the scenario."""
    return [dechirp(cfg, synthesize_received(cfg, i)) for i in range(cfg.n_chirps)]
