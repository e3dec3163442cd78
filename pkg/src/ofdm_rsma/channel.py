"""Doubly-dispersive MIMO-OFDM channel synthesis.

Builds the time-domain channel matrix of each (user, antenna) link from
multipath parameters (gain, delay, Doppler, departure angle) and converts it
to the exact frequency-domain equivalent seen after the OFDM chain
(IFFT -> CP addition -> channel -> CP removal -> FFT). With Doppler the
equivalent matrix is non-diagonal: its off-diagonal entries are the
inter-carrier interference couplings everything downstream works with.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

SPEED_OF_LIGHT = 3.0e8  # m/s, propagation constant used for Doppler limits


class ConfigurationError(ValueError):
    """Raised when dimensions or parameters are inconsistent."""


@dataclass(frozen=True)
class SystemConfig:
    """Static system parameters shared by channel synthesis and precoding.

    Attributes
    ----------
    K : number of single-antenna users (also the number of RF chains).
    Nt : transmit antennas at the base station (half-wavelength ULA).
    Nc : OFDM subcarriers.
    delta_f : subcarrier spacing in Hz.
    cp_len : cyclic-prefix length in samples.
    fc : carrier frequency in Hz.
    n_paths : multipath components per user.
    v_max : maximum relative speed in m/s.
    beta : raised-cosine roll-off of the transmit pulse.
    Pt : total transmit power across all subcarriers.
    sigma2 : noise variance per frequency-domain sample.
    r_min : per-user minimum rate in bps/Hz (length K).
    n_clusters : subcarrier clusters used by the hybrid SIC receiver.
    """

    K: int
    Nt: int
    Nc: int
    delta_f: float
    cp_len: int
    fc: float
    n_paths: int
    v_max: float
    beta: float
    Pt: float
    sigma2: float
    r_min: tuple[float, ...]
    n_clusters: int

    def __post_init__(self):
        if self.Nc < 1 or self.cp_len < 0 or self.K < 1:
            raise ConfigurationError("need Nc >= 1, cp_len >= 0, K >= 1")
        if self.Nt < self.K:
            raise ConfigurationError("need Nt >= K (one analog column per RF chain)")
        if not 1 <= self.n_clusters <= self.Nc:
            raise ConfigurationError("n_clusters must lie in [1, Nc]")
        if self.delta_f <= 0 or self.Pt <= 0 or self.sigma2 <= 0:
            raise ConfigurationError("delta_f, Pt and sigma2 must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError("roll-off beta must lie in [0, 1]")
        r_min = tuple(float(r) for r in np.atleast_1d(self.r_min))
        if len(r_min) != self.K:
            raise ConfigurationError("r_min must have one entry per user")
        object.__setattr__(self, "r_min", r_min)

    @property
    def Fs(self) -> float:
        """Sampling frequency Nc * delta_f."""
        return self.Nc * self.delta_f

    @property
    def nu_max(self) -> float:
        """Maximum Doppler shift v_max * fc / c."""
        return self.v_max * self.fc / SPEED_OF_LIGHT

    @property
    def r_min_array(self) -> np.ndarray:
        return np.asarray(self.r_min, dtype=float)


@dataclass(frozen=True)
class PathParams:
    """One multipath component: complex gain, delay (s), Doppler (Hz), AoD (rad)."""

    gain: complex
    delay: float
    doppler: float
    angle: float


@dataclass(frozen=True)
class ChannelRealization:
    """Multipath parameter sets for all users, each array shaped (K, n_paths)."""

    gain: np.ndarray
    delay: np.ndarray
    doppler: np.ndarray
    angle: np.ndarray

    def __post_init__(self):
        shape = self.gain.shape
        if len(shape) != 2:
            raise ConfigurationError("path arrays must be (K, n_paths)")
        for name in ("delay", "doppler", "angle"):
            if getattr(self, name).shape != shape:
                raise ConfigurationError(f"{name} shape differs from gain shape")
        if np.any(self.delay < 0):
            raise ConfigurationError("delays must be nonnegative")

    @property
    def n_users(self) -> int:
        return self.gain.shape[0]

    @property
    def n_paths(self) -> int:
        return self.gain.shape[1]

    def path(self, k: int, i: int) -> PathParams:
        return PathParams(
            gain=complex(self.gain[k, i]),
            delay=float(self.delay[k, i]),
            doppler=float(self.doppler[k, i]),
            angle=float(self.angle[k, i]),
        )


@dataclass(frozen=True)
class FreqChannel:
    """Equivalent frequency-domain channel H[k, m] for every user/antenna pair.

    ``H`` has shape (K, Nt, Nc, Nc); entry (n, n') of H[k, m] couples transmit
    subcarrier n' into receive subcarrier n.
    """

    H: np.ndarray

    def __post_init__(self):
        if self.H.ndim != 4 or self.H.shape[2] != self.H.shape[3]:
            raise ConfigurationError("H must be (K, Nt, Nc, Nc)")

    @property
    def n_users(self) -> int:
        return self.H.shape[0]

    @property
    def n_tx(self) -> int:
        return self.H.shape[1]

    @property
    def n_sc(self) -> int:
        return self.H.shape[2]

    def coupling(self, k: int, n: int, n2: int) -> np.ndarray:
        """Length-Nt channel vector for the (n', n) subcarrier coupling of user k.

        Entry m is the conjugate of [H[k, m]]_{n, n'}, so that
        ``coupling(k, n, n2).conj() @ x`` is the contribution of the antenna
        vector x sent on subcarrier n2 to the receive sample at subcarrier n.
        """
        return np.conj(self.H[k, :, n, n2])


def build_dft_matrix(nc: int) -> np.ndarray:
    """Unitary DFT matrix: F @ x equals fft(x) / sqrt(nc)."""
    if nc < 1:
        raise ConfigurationError("nc must be >= 1")
    idx = np.arange(nc)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / nc) / np.sqrt(nc)


def build_cp_matrices(nc: int, cp_len: int) -> tuple[np.ndarray, np.ndarray]:
    """CP addition matrix A ((nc+L) x nc) and removal matrix B (nc x (nc+L)).

    A prepends the last ``cp_len`` samples of a block, B drops the first
    ``cp_len`` received samples; B @ A is the identity.
    """
    total = nc + cp_len
    add = np.zeros((total, nc))
    add[np.arange(total), (np.arange(total) - cp_len) % nc] = 1.0
    rem = np.zeros((nc, total))
    rem[:, cp_len:] = np.eye(nc)
    return add, rem


def doppler_matrix(nu: float, size: int, fs: float) -> np.ndarray:
    """Diagonal Doppler progression, entry n = exp(j 2 pi nu n / fs)."""
    if fs <= 0:
        raise ConfigurationError("fs must be positive")
    return np.diag(_doppler_phases(nu, size, fs))


def _doppler_phases(nu: float, size: int, fs: float) -> np.ndarray:
    return np.exp(2j * np.pi * nu * np.arange(size) / fs)


def raised_cosine(t, beta: float, period: float):
    """Raised-cosine impulse response g(t) with symbol period ``period``.

    The removable singularities at t = +/- period/(2 beta) are evaluated by
    their analytic limit (pi/4) sinc(1/(2 beta)); g(0) = 1 and g vanishes at
    every other integer multiple of the period.
    """
    if not 0.0 <= beta <= 1.0:
        raise ConfigurationError("beta must lie in [0, 1]")
    if period <= 0:
        raise ConfigurationError("period must be positive")
    x = np.asarray(t, dtype=float) / period
    if beta == 0.0:
        out = np.sinc(x)
        return out if out.ndim else float(out)
    denom = 1.0 - (2.0 * beta * x) ** 2
    singular = np.isclose(np.abs(x), 1.0 / (2.0 * beta), rtol=1e-12, atol=1e-12)
    safe = np.where(singular, 1.0, denom)
    out = np.sinc(x) * np.cos(np.pi * beta * x) / safe
    out = np.where(singular, np.pi / 4.0 * np.sinc(1.0 / (2.0 * beta)), out)
    return out if out.ndim else float(out)


def delay_matrix(
    tau: float, size: int, fs: float, pulse: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """Dense delay-filter matrix, entry (p, q) = pulse((p - q)/fs - tau)."""
    if fs <= 0:
        raise ConfigurationError("fs must be positive")
    lags = (np.arange(size)[:, None] - np.arange(size)[None, :]) / fs - tau
    return np.asarray(pulse(lags), dtype=float)


def sample_channel(cfg: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw one multipath realization.

    Per user and path: gain ~ CN(0, 1/n_paths), delay ~ U(0, 4/Fs) so the CP
    always covers the delay spread at the stock cp_len, Doppler
    ~ U(-nu_max, nu_max), departure angle ~ U(-pi/2, pi/2).
    """
    shape = (cfg.K, cfg.n_paths)
    scale = np.sqrt(0.5 / cfg.n_paths)
    gain = rng.normal(scale=scale, size=shape) + 1j * rng.normal(scale=scale, size=shape)
    delay = rng.uniform(0.0, 4.0 / cfg.Fs, size=shape)
    doppler = rng.uniform(-cfg.nu_max, cfg.nu_max, size=shape)
    angle = rng.uniform(-np.pi / 2.0, np.pi / 2.0, size=shape)
    return ChannelRealization(gain=gain, delay=delay, doppler=doppler, angle=angle)


def _path_matrices(real: ChannelRealization, cfg: SystemConfig, k: int) -> np.ndarray:
    """Per-path Doppler * delay matrices of user k, shape (n_paths, S, S)."""
    size = cfg.Nc + cfg.cp_len
    fs = cfg.Fs
    pulse = lambda t: raised_cosine(t, cfg.beta, 1.0 / fs)
    out = np.empty((real.n_paths, size, size), dtype=complex)
    for i in range(real.n_paths):
        gamma = delay_matrix(real.delay[k, i], size, fs, pulse)
        out[i] = _doppler_phases(real.doppler[k, i], size, fs)[:, None] * gamma
    return out


def _steering(real: ChannelRealization, cfg: SystemConfig, k: int) -> np.ndarray:
    """ULA phase factors exp(j pi m sin(theta)) per antenna/path, shape (Nt, n_paths)."""
    m = np.arange(cfg.Nt)[:, None]
    return np.exp(1j * np.pi * m * np.sin(real.angle[k][None, :]))


def time_domain_channel(
    real: ChannelRealization, cfg: SystemConfig, k: int, m: int
) -> np.ndarray:
    """Time-domain channel matrix of user k, antenna m (both 0-based).

    Sum over paths of gain * steering phase * Doppler progression * delay
    filter, acting on one CP-extended OFDM symbol.
    """
    if not 0 <= k < cfg.K or not 0 <= m < cfg.Nt:
        raise ConfigurationError("user or antenna index out of range")
    mats = _path_matrices(real, cfg, k)
    coeff = real.gain[k] * np.exp(1j * np.pi * m * np.sin(real.angle[k]))
    return np.tensordot(coeff, mats, axes=(0, 0))


def freq_equiv_channel(h_time: np.ndarray, nc: int, cp_len: int) -> np.ndarray:
    """Frequency-domain equivalent F B H A F^H of a time-domain channel matrix."""
    size = nc + cp_len
    if h_time.shape != (size, size):
        raise ConfigurationError("h_time must be (nc+cp_len) square")
    dft = build_dft_matrix(nc)
    add, rem = build_cp_matrices(nc, cp_len)
    return dft @ rem @ h_time @ add @ dft.conj().T


def freq_channel(real: ChannelRealization, cfg: SystemConfig) -> FreqChannel:
    """Equivalent frequency-domain channel tensor for all users and antennas."""
    if real.n_users != cfg.K:
        raise ConfigurationError("realization user count differs from config")
    dft = build_dft_matrix(cfg.Nc)
    add, rem = build_cp_matrices(cfg.Nc, cfg.cp_len)
    front = dft @ rem
    back = add @ dft.conj().T
    out = np.empty((cfg.K, cfg.Nt, cfg.Nc, cfg.Nc), dtype=complex)
    for k in range(cfg.K):
        mats = _path_matrices(real, cfg, k)
        coeff = real.gain[k][None, :] * _steering(real, cfg, k)
        h_time = np.tensordot(coeff, mats, axes=(1, 0))
        out[k] = front @ h_time @ back
    return FreqChannel(H=out)
