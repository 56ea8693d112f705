"""Synthetic multipath CSI generator for two room profiles.

Each sample is a sum of propagation taps: a line-of-sight path shared by
both rooms plus wall/ceiling reflections whose delays follow the room
dimensions. Per-subcarrier phases rotate with tap delay, so the taps
interfere into a frequency-selective amplitude pattern that is specific to
the room. Posture only attenuates the line-of-sight tap (a body standing,
sitting, or lying between the antennas shadows different receive rows and
subcarrier bands), which makes posture learnable inside a room while the
room's own interference pattern dominates absolute amplitudes.

All constants below are frozen calibration outputs; regenerating a dataset
with the same seed is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import (
    N_RX,
    N_SUBCARRIERS,
    N_TIME_SLOTS,
    N_TX,
    CsiSample,
    Dataset,
    PostureLabel,
)
from .errors import DataError
from .rng import derive_seed, make_generator

SPEED_OF_LIGHT = 2.99792458e8  # m/s
CARRIER_HZ = 2.412e9  # 2.4 GHz band, channel 1
SUBCARRIER_SPACING_HZ = 625e3  # 30 reported bins across ~18 MHz

# f_k for k = 0..29, centered on the carrier.
SUBCARRIER_FREQS_HZ = CARRIER_HZ + (np.arange(N_SUBCARRIERS) - 14.5) * SUBCARRIER_SPACING_HZ

DEFAULT_SNR_DB = 25.0
SLOT_JITTER = 0.015  # relative complex gain wobble between the 5 time slots


@dataclass(frozen=True)
class MultipathTap:
    gain: float  # linear amplitude, in (0, 1]
    delay_ns: float
    pair_phase: np.ndarray  # (3, 3) per (tx, rx) phase offset, radians

    def __post_init__(self):
        if not 0.0 < self.gain <= 1.0:
            raise DataError("tap gain must be in (0, 1]")
        phases = np.asarray(self.pair_phase, dtype=np.float64)
        if phases.shape != (N_TX, N_RX):
            raise DataError("pair_phase must be (3, 3)")
        object.__setattr__(self, "pair_phase", phases)


@dataclass(frozen=True)
class EnvProfile:
    env_id: str
    room_dims: tuple[float, float, float]  # width, length, height in meters
    taps: tuple[MultipathTap, ...]
    snr_db: float = DEFAULT_SNR_DB
    slot_jitter: float = SLOT_JITTER  # relative gain wobble between time slots

    def __post_init__(self):
        if not self.taps:
            raise DataError("environment needs at least one tap")
        gains = [t.gain for t in self.taps]
        if gains[0] < max(gains):
            raise DataError("first tap must be the strongest (line of sight)")
        if not math.isfinite(self.snr_db):
            raise DataError("SNR must be finite")
        if self.slot_jitter < 0:
            raise DataError("slot jitter must be >= 0")


@dataclass(frozen=True)
class PostureEffect:
    name: str
    los_attenuation: np.ndarray  # (3, 30) factor per (rx, subcarrier), in (0, 1]

    def __post_init__(self):
        att = np.asarray(self.los_attenuation, dtype=np.float64)
        if att.shape != (N_RX, N_SUBCARRIERS):
            raise DataError("los_attenuation must be (3, 30)")
        if np.any(att <= 0.0) or np.any(att > 1.0):
            raise DataError("attenuation factors must lie in (0, 1]")
        object.__setattr__(self, "los_attenuation", att)


def _dip(depths: tuple[float, float, float], center: float, width: float) -> np.ndarray:
    """Smooth per-(rx, subcarrier) attenuation: 1 - depth * gaussian(k)."""
    k = np.arange(N_SUBCARRIERS, dtype=np.float64)
    profile = np.exp(-0.5 * ((k - center) / width) ** 2)
    att = 1.0 - np.outer(np.asarray(depths), profile)
    return np.clip(att, 1e-3, 1.0)


# Receive rows are a vertical array: rx 0 low, rx 1 mid, rx 2 high.
# Standing bodies shadow the high row across the whole band, seated bodies
# the mid row, lying bodies the low row over a narrow band.
POSTURE_EFFECTS: dict[PostureLabel, PostureEffect] = {
    PostureLabel.STAND: PostureEffect(
        name="stand", los_attenuation=_dip((0.08, 0.22, 0.60), center=14.5, width=30.0)
    ),
    PostureLabel.SIT: PostureEffect(
        name="sit", los_attenuation=_dip((0.15, 0.58, 0.12), center=14.5, width=13.0)
    ),
    PostureLabel.LIE_DOWN: PostureEffect(
        name="lie_down", los_attenuation=_dip((0.62, 0.15, 0.06), center=10.0, width=4.5)
    ),
}

# Fixed key for the frozen per-pair tap phase constants.
_PHASE_KEY = 0x5EED_CAB1E


def _tap(env_id: str, index: int, gain: float, path_m: float) -> MultipathTap:
    phases = make_generator(derive_seed(_PHASE_KEY, env_id, index)).uniform(
        0.0, 2.0 * math.pi, size=(N_TX, N_RX)
    )
    return MultipathTap(gain=gain, delay_ns=path_m / SPEED_OF_LIGHT * 1e9, pair_phase=phases)


_LOS_PATH_M = 2.0  # tx-rx separation, identical in both rooms


def _env_a() -> EnvProfile:
    w, l, h = 5.0, 3.0, 2.5
    paths = [
        (1.00, _LOS_PATH_M),
        (0.78, math.hypot(_LOS_PATH_M, w)),  # side-wall bounce
        (0.66, math.hypot(_LOS_PATH_M, l)),  # end-wall bounce
        (0.55, math.hypot(_LOS_PATH_M, 2.0 * (h - 1.0))),  # ceiling bounce
        (0.42, 2.0 * w + l),  # double bounce
    ]
    return EnvProfile(
        env_id="A",
        room_dims=(w, l, h),
        taps=tuple(_tap("A", i, g, p) for i, (g, p) in enumerate(paths)),
    )


def _env_b() -> EnvProfile:
    w, l, h = 6.6, 4.7, 2.6
    paths = [
        (1.00, _LOS_PATH_M),
        (0.78, math.hypot(_LOS_PATH_M, w)),
        (0.66, math.hypot(_LOS_PATH_M, l)),
        (0.55, math.hypot(_LOS_PATH_M, 2.0 * (h - 1.0))),
        (0.42, 2.0 * w + l),
    ]
    return EnvProfile(
        env_id="B",
        room_dims=(w, l, h),
        taps=tuple(_tap("B", i, g, p) for i, (g, p) in enumerate(paths)),
    )


def default_envs() -> tuple[EnvProfile, EnvProfile]:
    """The two frozen room profiles (shared posture effects and geometry)."""
    return _env_a(), _env_b()


def env_by_id(env_id: str) -> EnvProfile:
    a, b = default_envs()
    if env_id.upper() == "A":
        return a
    if env_id.upper() == "B":
        return b
    raise DataError(f"unknown environment {env_id!r}; pick A or B")


def _clean_channel(env: EnvProfile, posture: PostureLabel) -> np.ndarray:
    """Noise-free (subcarrier, tx, rx) complex channel for one posture."""
    att = POSTURE_EFFECTS[posture].los_attenuation  # (rx, k)
    h = np.zeros((N_SUBCARRIERS, N_TX, N_RX), dtype=np.complex128)
    for index, tap in enumerate(env.taps):
        theta = -2.0 * math.pi * SUBCARRIER_FREQS_HZ * tap.delay_ns * 1e-9
        rotation = np.exp(1j * (theta[:, None, None] + tap.pair_phase[None, :, :]))
        contribution = tap.gain * rotation
        if index == 0:
            contribution = contribution * att.T[:, None, :]  # (k, 1, rx)
        h += contribution
    return h


def gen_sample(
    env: EnvProfile, posture: PostureLabel, rng: np.random.Generator
) -> CsiSample:
    """One capture: clean channel + per-slot jitter + complex Gaussian noise."""
    clean = _clean_channel(env, posture)
    jitter = 1.0 + env.slot_jitter * (
        rng.standard_normal(N_TIME_SLOTS) + 1j * rng.standard_normal(N_TIME_SLOTS)
    )
    h = clean[None, :, :, :] * jitter[:, None, None, None]
    power = float(np.mean(np.abs(clean) ** 2))
    sigma = math.sqrt(power * 10.0 ** (-env.snr_db / 10.0) / 2.0)
    noise = sigma * (
        rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    )
    h = h + noise
    tensor = np.stack([np.abs(h), np.angle(h)], axis=-1)
    return CsiSample(tensor, posture)


def gen_dataset(
    env: EnvProfile,
    per_class: tuple[int, int, int] | int,
    seed: int,
) -> Dataset:
    """Labeled dataset with exact per-class counts, deterministically shuffled."""
    if isinstance(per_class, int):
        per_class = (per_class, per_class, per_class)
    if len(per_class) != 3 or any(c < 0 for c in per_class):
        raise DataError("per_class must be three non-negative counts")
    samples: list[CsiSample] = []
    for label in PostureLabel:
        for i in range(per_class[int(label)]):
            rng = make_generator(derive_seed(seed, env.env_id, int(label), i))
            samples.append(gen_sample(env, label, rng))
    order = make_generator(derive_seed(seed, env.env_id, "order")).permutation(len(samples))
    return Dataset((samples[i] for i in order), env.env_id)
