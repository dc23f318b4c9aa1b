"""Scenario descriptions: victim radar, targets, interferers, noise, sampling.

A scenario fully determines the simulated scene.  Scenario files are YAML
documents whose nested sections mirror these dataclasses; the field-by-field
reference (with units) lives in ``configs/scenario_schema.md``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from scipy.constants import c as SPEED_OF_LIGHT


class ConfigError(ValueError):
    """A scenario or processing configuration is inconsistent or incomplete."""


@dataclass(frozen=True)
class RadarParams:
    """One radar's waveform and front-end parameters.

    ``f_c`` is the sweep start frequency: the instantaneous frequency of a
    chirp is ``f_c + chirp_rate * t`` for ``t`` in ``[0, sweep_time]``.
    ``analog_rate`` is the rate used for the continuous-time portion of the
    simulation, ``if_rate`` the ADC output rate; their ratio must be an
    integer so decimation needs no resampling.
    """

    f_c: float = 77.0e9
    bandwidth: float = 300.0e6
    sweep_time: float = 100.0e-6
    direction: str = "up"
    transmit_power: float = 1.0
    antenna_gain: float = 1.0
    prt: Optional[float] = None
    analog_rate: float = 2.0e9
    if_rate: float = 50.0e6

    def __post_init__(self):
        if self.f_c <= 0:
            raise ConfigError("radar.f_c_hz must be positive")
        if self.bandwidth <= 0:
            raise ConfigError("radar.bandwidth_hz must be positive")
        if self.sweep_time <= 0:
            raise ConfigError("radar.sweep_time_s must be positive")
        if self.direction not in ("up", "down"):
            raise ConfigError(f"radar.direction must be 'up' or 'down', got {self.direction!r}")
        if self.transmit_power <= 0 or self.antenna_gain <= 0:
            raise ConfigError("radar.transmit_power_w and radar.antenna_gain must be positive")
        if self.prt is None:
            object.__setattr__(self, "prt", self.sweep_time)
        if self.prt < self.sweep_time:
            raise ConfigError("radar.prt_s must be >= radar.sweep_time_s")
        if self.analog_rate <= 0 or self.if_rate <= 0:
            raise ConfigError("radar sampling rates must be positive")
        ratio = self.analog_rate / self.if_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(
                f"analog_rate_hz / if_rate_hz must be an integer decimation factor, got {ratio}"
            )

    @property
    def chirp_rate(self) -> float:
        """Signed chirp rate k = +-B/T in Hz/s."""
        k = self.bandwidth / self.sweep_time
        return k if self.direction == "up" else -k

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def decimation(self) -> int:
        return int(round(self.analog_rate / self.if_rate))


@dataclass(frozen=True)
class TargetSpec:
    """A point target: initial range, radial velocity (positive = receding), RCS."""

    range_m: float
    velocity: float = 0.0
    rcs: float = 1.0

    def __post_init__(self):
        if self.range_m <= 0:
            raise ConfigError("target.range_m must be positive")
        if self.rcs <= 0:
            raise ConfigError("target.rcs_m2 must be positive")


@dataclass(frozen=True)
class InterfererSpec:
    """An interfering radar: its waveform, distance, and chirp-train timing.

    ``t_offset`` is the global start time of interferer chirp 0 relative to
    the start of victim chirp 0; the train repeats at the interferer's PRT.
    ``edge_ramp`` is a raised-cosine amplitude ramp applied over each chirp's
    first and last samples: an instantaneous keying step of a strong
    interferer would splash broadband energy through the victim's LPF, which
    real transmitters and front ends do not produce.
    """

    radar: RadarParams
    distance_m: float
    t_offset: float = 0.0
    edge_ramp: float = 0.5e-6

    def __post_init__(self):
        if self.distance_m <= 0:
            raise ConfigError("interferer.distance_m must be positive")
        if self.edge_ramp < 0 or 2 * self.edge_ramp > self.radar.sweep_time:
            raise ConfigError("interferer.edge_ramp_s must be in [0, sweep_time/2]")


@dataclass(frozen=True)
class NoiseSpec:
    """Receiver noise level and RNG seed.

    ``snr_db`` references the clean target-echo power at the ADC output to
    the variance of the white noise injected at the analog rate (see
    radar_sim module notes); ``None`` disables noise entirely.
    """

    snr_db: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError("noise.seed must be non-negative")


@dataclass(frozen=True)
class LpfSpec:
    """Anti-aliasing low-pass filter: passband edge and transition width (Hz).

    Unset fields default to 0.8x and 0.2x of the IF Nyquist frequency.
    """

    cutoff: Optional[float] = None
    transition: Optional[float] = None

    def resolve(self, if_rate: float) -> tuple[float, float]:
        nyq = if_rate / 2.0
        cutoff = 0.8 * nyq if self.cutoff is None else self.cutoff
        transition = 0.2 * nyq if self.transition is None else self.transition
        if cutoff <= 0 or transition <= 0:
            raise ConfigError("lpf.cutoff_hz and lpf.transition_hz must be positive")
        if cutoff > nyq:
            raise ConfigError(
                f"lpf.cutoff_hz={cutoff:g} exceeds the IF Nyquist frequency {nyq:g}"
            )
        return cutoff, transition


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete scene description for one simulation run."""

    victim: RadarParams
    targets: tuple[TargetSpec, ...] = ()
    interferers: tuple[InterfererSpec, ...] = ()
    noise: NoiseSpec = NoiseSpec()
    n_chirps: int = 1
    lpf: LpfSpec = LpfSpec()
    baseband_offset: Optional[float] = None

    def __post_init__(self):
        if self.n_chirps < 1:
            raise ConfigError("n_chirps must be >= 1")
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "interferers", tuple(self.interferers))
        for i, intf in enumerate(self.interferers):
            if abs(intf.t_offset) >= self.victim.prt:
                raise ConfigError(
                    f"interferers[{i}].t_offset_s must satisfy |t_offset| < victim prt"
                )
        self.lpf.resolve(self.victim.if_rate)
        off = self.offset_hz
        cutoff, _ = self.lpf.resolve(self.victim.if_rate)
        if off <= 4 * cutoff:
            raise ConfigError(
                "baseband_offset_hz must exceed 4x the LPF cutoff so mixer sum "
                "terms stay out of band"
            )
        if off >= self.victim.analog_rate / 2:
            raise ConfigError("baseband_offset_hz must be below the analog Nyquist frequency")

    @property
    def offset_hz(self) -> float:
        """Common simulation carrier offset (see radar_sim module notes)."""
        if self.baseband_offset is not None:
            return self.baseband_offset
        return self.victim.analog_rate / 5.0

    def without_interference(self) -> "ScenarioConfig":
        return replace(self, interferers=())

    def without_noise(self) -> "ScenarioConfig":
        return replace(self, noise=replace(self.noise, snr_db=None))


# --- dict -> dataclass parsing with dotted-path diagnostics ------------------

def _get(d: dict, key: str, path: str, required: bool = False, default=None):
    if key in d:
        return d[key]
    if required:
        raise ConfigError(f"missing required field: {path}.{key}")
    return default


def _num(d: dict, key: str, path: str, required: bool = False, default=None):
    raw = _get(d, key, path, required, default)
    if raw is None:
        return None
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}: expected a number, got {raw!r}") from None


def _intval(d: dict, key: str, path: str, required: bool = False, default=None):
    raw = _get(d, key, path, required, default)
    if raw is None:
        return None
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}: expected an integer, got {raw!r}") from None
    if val != int(val):
        raise ConfigError(f"{path}.{key}: expected an integer, got {raw!r}")
    return int(val)


def radar_from_dict(d: dict, path: str = "radar") -> RadarParams:
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a mapping")
    kwargs = dict(
        f_c=_num(d, "f_c_hz", path, required=True),
        bandwidth=_num(d, "bandwidth_hz", path, required=True),
        sweep_time=_num(d, "sweep_time_s", path, required=True),
        direction=str(_get(d, "direction", path, default="up")),
        transmit_power=_num(d, "transmit_power_w", path, default=1.0),
        antenna_gain=_num(d, "antenna_gain", path, default=1.0),
        prt=_num(d, "prt_s", path),
        analog_rate=_num(d, "analog_rate_hz", path, default=2.0e9),
        if_rate=_num(d, "if_rate_hz", path, default=50.0e6),
    )
    return RadarParams(**kwargs)


def scenario_from_dict(d: dict, path: str = "scenario") -> ScenarioConfig:
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a mapping")
    victim_d = _get(d, "victim", path, required=True)
    victim = radar_from_dict(victim_d, f"{path}.victim")

    targets = []
    for i, td in enumerate(d.get("targets") or []):
        tpath = f"{path}.targets[{i}]"
        targets.append(
            TargetSpec(
                range_m=_num(td, "range_m", tpath, required=True),
                velocity=_num(td, "velocity_mps", tpath, default=0.0),
                rcs=_num(td, "rcs_m2", tpath, default=1.0),
            )
        )

    interferers = []
    for i, idict in enumerate(d.get("interferers") or []):
        ipath = f"{path}.interferers[{i}]"
        radar_d = _get(idict, "radar", ipath, required=True)
        radar = radar_from_dict(radar_d, f"{ipath}.radar")
        # Interferer front-end rates are unused; inherit the victim's so the
        # decimation invariant cannot reject them spuriously.
        radar = replace(radar, analog_rate=victim.analog_rate, if_rate=victim.if_rate)
        interferers.append(
            InterfererSpec(
                radar=radar,
                distance_m=_num(idict, "distance_m", ipath, required=True),
                t_offset=_num(idict, "t_offset_s", ipath, default=0.0),
                edge_ramp=_num(idict, "edge_ramp_s", ipath, default=0.5e-6),
            )
        )

    noise_d = d.get("noise") or {}
    noise = NoiseSpec(
        snr_db=_num(noise_d, "snr_db", f"{path}.noise"),
        seed=_intval(noise_d, "seed", f"{path}.noise", default=0),
    )

    lpf_d = d.get("lpf") or {}
    lpf = LpfSpec(
        cutoff=_num(lpf_d, "cutoff_hz", f"{path}.lpf"),
        transition=_num(lpf_d, "transition_hz", f"{path}.lpf"),
    )

    return ScenarioConfig(
        victim=victim,
        targets=tuple(targets),
        interferers=tuple(interferers),
        noise=noise,
        n_chirps=_intval(d, "n_chirps", path, default=1),
        lpf=lpf,
        baseband_offset=_num(d, "baseband_offset_hz", path),
    )
