"""Analog uplink model: Rayleigh block fading, linear modulation, coherent decoding.

Each feature vector is sent entry by entry over one fading block, so every
entry of the received vector sees the same complex gain and an independent
complex Gaussian noise term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateChannelError(ValueError):
    """Fading coefficient has zero magnitude, so coherent decoding is undefined."""


@dataclass(frozen=True)
class ChannelRealization:
    """One block-fading draw together with the link's power budget.

    ``gain`` is the complex fading coefficient, ``transmit_power`` the per-entry
    transmit power and ``noise_variance`` the variance of the complex receiver
    noise (split evenly between real and imaginary parts).
    """

    gain: complex
    transmit_power: float = 1.0
    noise_variance: float = 1.0

    def __post_init__(self) -> None:
        if not self.transmit_power > 0.0:
            raise ValueError(f"transmit_power must be positive, got {self.transmit_power}")
        if not self.noise_variance > 0.0:
            raise ValueError(f"noise_variance must be positive, got {self.noise_variance}")


def sample_fading(
    rng: np.random.Generator,
    transmit_power: float = 1.0,
    noise_variance: float = 1.0,
) -> ChannelRealization:
    """Draw a circularly symmetric unit-variance complex gain.

    Real and imaginary parts are independent N(0, 1/2), so E[|gain|^2] = 1.
    The measure-zero event of an exactly zero draw is re-sampled.
    """
    while True:
        re, im = rng.standard_normal(2) * np.sqrt(0.5)
        if re != 0.0 or im != 0.0:
            return ChannelRealization(complex(re, im), transmit_power, noise_variance)


def receive_snr(ch: ChannelRealization) -> float:
    r"""Post-decoding SNR of the real data dimension, 2 P |h|^2 / \sigma^2.

    Only the in-phase half of the complex noise lands on the decoded value,
    hence the factor 2 relative to the naive P |h|^2 / \sigma^2.
    """
    power_gain = abs(ch.gain) ** 2
    if power_gain == 0.0:
        raise DegenerateChannelError("zero fading gain has no defined receive SNR")
    return 2.0 * ch.transmit_power * power_gain / ch.noise_variance


def _complex_awgn(ch: ChannelRealization, shape, rng: np.random.Generator) -> np.ndarray:
    scale = np.sqrt(ch.noise_variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def transmit_and_decode(
    x: np.ndarray,
    ch: ChannelRealization,
    rng: np.random.Generator,
) -> np.ndarray:
    r"""Send ``x`` over the block and return the coherently decoded estimate.

    The receiver observes y = \sqrt{P} h x + z with z complex white noise and
    recovers \hat{x} = Re(h^* y / |h|^2) / \sqrt{P}, i.e. the true vector plus
    real Gaussian noise of variance 1 / receive_snr per entry.
    """
    x = np.asarray(x, dtype=float)
    power_gain = abs(ch.gain) ** 2
    if power_gain == 0.0:
        raise DegenerateChannelError("cannot decode through a zero fading gain")
    amplitude = np.sqrt(ch.transmit_power)
    y = amplitude * ch.gain * x + _complex_awgn(ch, x.shape, rng)
    return np.real(np.conj(ch.gain) * y / power_gain) / amplitude


def decode_noise(
    ch: ChannelRealization,
    shape,
    rng: np.random.Generator,
) -> np.ndarray:
    """Residual noise of :func:`transmit_and_decode` for a zero input.

    Provided so Monte Carlo studies of the decoded-domain statistics can skip
    the modulation arithmetic; the draw distribution is identical.
    """
    power_gain = abs(ch.gain) ** 2
    if power_gain == 0.0:
        raise DegenerateChannelError("cannot decode through a zero fading gain")
    z = _complex_awgn(ch, shape, rng)
    return np.real(np.conj(ch.gain) * z / power_gain) / np.sqrt(ch.transmit_power)
