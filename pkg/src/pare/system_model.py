"""Ground-truth generation and received-signal synthesis for a BD-RIS link.

The noiseless received block ``k`` is

    Y_k = Hbar @ D_k(P) @ G @ D_k(W) @ X.T,     Hbar = H @ S,

with ``H`` (M_R x N) the RIS-receiver channel, ``G`` (N x M_T) the
transmitter-RIS channel, ``S`` the fixed block-diagonal scattering matrix,
``P`` (K x N) the per-block phase rotations, ``W`` (K x M_T) the transmit
coding and ``X`` (T x M_T) the data symbols.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.linalg

from .tensor_core import SignalTensor, dft_matrix

__all__ = [
    "ConfigError",
    "SystemConfig",
    "ChannelRealization",
    "CONSTELLATIONS",
    "constellation",
    "gen_rayleigh",
    "design_scattering",
    "design_rotation",
    "design_coding",
    "gen_symbols",
    "synthesize",
    "add_noise",
    "realize",
]


class ConfigError(ValueError):
    """Invalid system configuration."""


def _qam16() -> np.ndarray:
    levels = np.array([-3.0, -1.0, 1.0, 3.0])
    pts = (levels[None, :] + 1j * levels[:, None]).ravel()
    return pts / np.sqrt(10.0)


# Unit average energy alphabets. Index order is the demapping tie-break order.
CONSTELLATIONS: dict[str, np.ndarray] = {
    "qpsk": np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2.0),
    "16qam": _qam16(),
}


def constellation(name: str) -> np.ndarray:
    try:
        return CONSTELLATIONS[name.lower()]
    except KeyError:
        raise ConfigError(
            f"unknown constellation {name!r}; choose from {sorted(CONSTELLATIONS)}"
        ) from None


@dataclass(frozen=True)
class SystemConfig:
    """Dimensions and protocol parameters of one link.

    ``N`` must be a multiple of ``Q``. ``snr_db=math.inf`` disables noise.
    The DFT rotation/coding designs additionally need ``K >= N`` and
    ``K >= M_T``; that is checked when the designs are built.
    """

    M_R: int = 5
    M_T: int = 2
    N: int = 16
    Q: int = 4
    K: int = 20
    T: int = 10
    snr_db: float = 20.0
    constellation: str = "qpsk"
    seed: int = 0
    pilot_row: bool = True

    def __post_init__(self):
        for name in ("M_R", "M_T", "N", "Q", "K", "T"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.N % self.Q:
            raise ConfigError(f"N={self.N} is not divisible by Q={self.Q}")
        constellation(self.constellation)

    @property
    def group_size(self) -> int:
        return self.N // self.Q

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class ChannelRealization:
    """Ground-truth channels, fixed designs and symbols for one run."""

    H: np.ndarray
    G: np.ndarray
    S: np.ndarray
    P: np.ndarray
    W: np.ndarray
    X: np.ndarray
    Hbar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "Hbar", self.H @ self.S)


def gen_rayleigh(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. CN(0, 1) entries (real and imaginary parts each of variance 1/2)."""
    z = rng.standard_normal((rows, cols, 2)) / np.sqrt(2.0)
    return z[..., 0] + 1j * z[..., 1]


def design_scattering(N: int, Q: int) -> np.ndarray:
    """Block-diagonal scattering matrix with ``Q`` unitary ``N/Q``-point DFT blocks."""
    if Q < 1 or N % Q:
        raise ConfigError(f"N={N} is not divisible by Q={Q}")
    block = dft_matrix(N // Q)
    return scipy.linalg.block_diag(*([block] * Q)).astype(np.complex128)


def _dft_columns(K: int, ncols: int, what: str) -> np.ndarray:
    if K < ncols:
        raise ConfigError(
            f"{what} design needs K >= {ncols} for full column rank, got K={K}"
        )
    k = np.arange(K)[:, None]
    n = np.arange(ncols)[None, :]
    return np.exp(-2j * np.pi * k * n / K)


def design_rotation(K: int, N: int) -> np.ndarray:
    """Phase-rotation schedule ``P``: first ``N`` columns of the K-point DFT (unit modulus)."""
    return _dft_columns(K, N, "rotation")


def design_coding(K: int, M_T: int) -> np.ndarray:
    """Transmit coding ``W``: first ``M_T`` columns of the K-point DFT (unit modulus)."""
    return _dft_columns(K, M_T, "coding")


def gen_symbols(
    T: int,
    M_T: int,
    constellation_name: str,
    pilot_row: bool,
    rng: np.random.Generator,
) -> np.ndarray:
    """Uniform i.i.d. symbols; with ``pilot_row`` the first row is all ones."""
    if T < 1 or M_T < 1:
        raise ConfigError(f"symbol matrix needs positive dimensions, got {T}x{M_T}")
    alphabet = constellation(constellation_name)
    x = alphabet[rng.integers(0, alphabet.size, size=(T, M_T))]
    if pilot_row:
        x[0, :] = 1.0
    return x


def synthesize(cfg: SystemConfig, real: ChannelRealization) -> SignalTensor:
    """Noiseless received tensor, slice ``k`` = ``Hbar D_k(P) G D_k(W) X^T``."""
    expected = {
        "H": (cfg.M_R, cfg.N),
        "G": (cfg.N, cfg.M_T),
        "S": (cfg.N, cfg.N),
        "P": (cfg.K, cfg.N),
        "W": (cfg.K, cfg.M_T),
        "X": (cfg.T, cfg.M_T),
    }
    for name, shape in expected.items():
        got = getattr(real, name).shape
        if got != shape:
            raise ConfigError(f"{name} has shape {got}, configuration requires {shape}")
    return SignalTensor(slices_from_factors(real.Hbar, real.G, real.X, real.P, real.W))


def slices_from_factors(hbar, g, x, p, w) -> np.ndarray:
    """Stack of ``hbar @ D_k(p) @ g @ D_k(w) @ x.T`` over k, shape ``(K, M_R, T)``."""
    # (D_k(p) g D_k(w))[n, m] = p[k, n] g[n, m] w[k, m]
    core = p[:, :, None] * g[None, :, :] * w[:, None, :]
    return hbar[None, :, :] @ core @ x.T[None, :, :]


def add_noise(y: SignalTensor, snr_db: float, rng: np.random.Generator) -> SignalTensor:
    """Add circularly-symmetric white Gaussian noise at the given per-entry SNR.

    The noise variance is the empirical mean of ``|y|^2`` divided by the linear SNR.
    ``snr_db = inf`` returns ``y`` unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return y
    power = float(np.mean(np.abs(y.data) ** 2))
    sigma2 = power / 10.0 ** (snr_db / 10.0)
    z = rng.standard_normal(y.data.shape + (2,)) * np.sqrt(sigma2 / 2.0)
    return SignalTensor(y.data + z[..., 0] + 1j * z[..., 1])


def realize(
    cfg: SystemConfig,
    rng: np.random.Generator,
    designs: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> ChannelRealization:
    """Draw fresh channels and symbols; designs ``(S, P, W)`` are reused when given."""
    if designs is None:
        designs = (
            design_scattering(cfg.N, cfg.Q),
            design_rotation(cfg.K, cfg.N),
            design_coding(cfg.K, cfg.M_T),
        )
    S, P, W = designs
    H = gen_rayleigh(cfg.M_R, cfg.N, rng)
    G = gen_rayleigh(cfg.N, cfg.M_T, rng)
    X = gen_symbols(cfg.T, cfg.M_T, cfg.constellation, cfg.pilot_row, rng)
    return ChannelRealization(H=H, G=G, S=S, P=P, W=W, X=X)
