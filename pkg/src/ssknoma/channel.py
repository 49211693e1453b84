"""Rayleigh MIMO fading, AWGN and received-signal synthesis.

Normalization: the noise power is fixed to N_0 = 1 so the transmit power
equals the linear SNR (P = rho) and the MRC output SNR is exactly
rho * ||h||^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, keys...): identical draws for the
    same key regardless of how many other streams exist."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def complex_normal(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian, variance split evenly per axis."""
    if variance == 0.0:
        return np.zeros(shape, dtype=complex)
    s = np.sqrt(variance / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class FadingProfile:
    """Per-user large-scale fading powers, ascending with distance order."""

    variances: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.variances)
        object.__setattr__(self, "variances", v)
        if not v or any(x < 0 for x in v):
            raise ConfigError("fading variances must be nonnegative")
        if any(a > b for a, b in zip(v, v[1:])):
            raise ConfigError("fading variances must be in ascending order")

    @property
    def n_users(self) -> int:
        return len(self.variances)


def default_profile(n_users: int, sigma1_sq: float = 1.0) -> FadingProfile:
    """Geometric profile sigma_i^2 = 2 * sigma_{i-1}^2 with sigma_1^2 = 0 dB."""
    return FadingProfile(tuple(sigma1_sq * 2.0**i for i in range(n_users)))


@dataclass(frozen=True)
class SnrConfig:
    """Average SNR per antenna; internally P = rho and N_0 = 1."""

    rho: float

    def __post_init__(self):
        if self.rho <= 0:
            raise ConfigError("rho must be positive")

    @property
    def power(self) -> float:
        return self.rho

    @property
    def noise_power(self) -> float:
        return 1.0

    @classmethod
    def from_db(cls, snr_db: float) -> "SnrConfig":
        return cls(10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class ChannelRealization:
    """Per-user fading matrices of shape (N_t, N_r)."""

    matrices: tuple

    def user(self, i: int) -> np.ndarray:
        """Matrix H_i for user i (1-based)."""
        return self.matrices[i - 1]

    def column(self, i: int, v: int) -> np.ndarray:
        """Column h_{i,v}: the channel of antenna v (1-based) to user i."""
        return self.matrices[i - 1][v - 1]


@dataclass(frozen=True)
class ReceivedVector:
    samples: np.ndarray
    owner: int

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=complex))


def sample_channel(profile: FadingProfile, n_t: int, n_r: int,
                   rng: np.random.Generator) -> ChannelRealization:
    """Draw i.i.d. CN(0, sigma_i^2) matrices for every user."""
    if n_t < 1 or n_r < 1:
        raise InputError("antenna counts must be >= 1")
    mats = tuple(complex_normal(rng, (n_t, n_r), var) for var in profile.variances)
    return ChannelRealization(mats)


def transmit(h_col: np.ndarray, chi: complex, snr: SnrConfig,
             rng: np.random.Generator, owner: int = 1,
             noise: bool = True) -> ReceivedVector:
    """Received vector r = sqrt(P) * h * chi + w with w ~ CN(0, N_0) per entry."""
    h_col = np.asarray(h_col, dtype=complex)
    r = np.sqrt(snr.power) * h_col * chi
    if noise:
        r = r + complex_normal(rng, h_col.shape, snr.noise_power)
    return ReceivedVector(r, owner)


def mrc_snr(h_col: np.ndarray, rho: float) -> float:
    """MRC output SNR rho * sum|h_k|^2."""
    if rho <= 0:
        raise InputError("rho must be positive")
    h_col = np.asarray(h_col, dtype=complex)
    return float(rho * np.sum(np.abs(h_col) ** 2))


def chi2_sample_check(profile: FadingProfile, user: int, n_r: int, rho: float,
                      n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted MRC-SNR samples for user ``user`` (1-based): the empirical CDF
    support for a Kolmogorov-Smirnov comparison against the chi-square CDF."""
    if n_draws < 10_000:
        raise InputError("need at least 1e4 draws for a meaningful CDF")
    var = profile.variances[user - 1]
    h = complex_normal(rng, (n_draws, n_r), var)
    gamma = rho * np.sum(np.abs(h) ** 2, axis=1)
    return np.sort(gamma)
