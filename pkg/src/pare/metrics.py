"""Perfect-CSI zero-forcing baseline, hard decisions, NMSE and SER."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .receiver import build_E
from .system_model import ChannelRealization, constellation
from .tensor_core import SignalTensor, kron, pinv, unfold2

__all__ = [
    "MetricSample",
    "zf_perfect_csi",
    "demap",
    "symbol_errors",
    "nmse",
    "nmse_cascaded",
    "binomial_se",
]


@dataclass(frozen=True)
class MetricSample:
    """Aggregated metrics of one ``(snr, q)`` grid cell."""

    snr_db: float
    q: int
    nmse_H: float
    nmse_G: float
    nmse_cascaded: float
    ser_pare: float
    ser_zf: float
    mean_iterations: float
    mean_runtime_ms: float
    runs: int
    symbols_counted: int = 0
    median_iterations: float = float("nan")

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("a metric sample needs at least one run")
        for name in ("nmse_H", "nmse_G", "nmse_cascaded"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("ser_pare", "ser_zf"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def as_dict(self) -> dict:
        return asdict(self)


def zf_perfect_csi(Y: SignalTensor, real: ChannelRealization) -> np.ndarray:
    """LS/ZF symbol estimate with the true ``Hbar`` and ``G``: ``unfold2(Y) pinv(E^T)``."""
    E = build_E(real.Hbar, real.G, real.P, real.W)
    return unfold2(Y) @ pinv(E.T)


def demap(x_hat, constellation_name: str = "qpsk") -> np.ndarray:
    """Nearest-neighbour symbol indices; ties go to the lowest alphabet index."""
    alphabet = constellation(constellation_name)
    x_hat = np.asarray(x_hat)
    dist = np.abs(x_hat[..., None] - alphabet)
    # argmin returns the first minimum, which gives the lowest-index tie-break.
    return np.argmin(dist, axis=-1)


def symbol_errors(x_hat, x_true, constellation_name: str = "qpsk", skip_pilot: bool = True):
    """Return ``(errors, counted)``; the known pilot row is excluded by default."""
    est = demap(x_hat, constellation_name)
    ref = demap(x_true, constellation_name)
    if skip_pilot:
        est, ref = est[1:], ref[1:]
    return int(np.sum(est != ref)), int(est.size)


def _nmse_one(truth: np.ndarray, est: np.ndarray) -> float:
    den = np.sum(np.abs(truth) ** 2)
    if den == 0:
        raise ZeroDivisionError("NMSE undefined for an all-zero reference")
    return float(np.sum(np.abs(truth - est) ** 2) / den)


def nmse(truth, estimates) -> float:
    """``(1/R) sum_r ||Pi_r - Pihat_r||_F^2 / ||Pi_r||_F^2``.

    ``truth`` and ``estimates`` are either single matrices or equal-length
    sequences of per-run matrices. A single ``truth`` with a sequence of
    estimates compares every estimate against that one reference.
    """
    if isinstance(estimates, np.ndarray) and estimates.ndim == 2:
        return _nmse_one(np.asarray(truth), estimates)
    estimates = list(estimates)
    if not estimates:
        raise ValueError("need at least one estimate")
    if isinstance(truth, np.ndarray) and truth.ndim == 2:
        truths = [truth] * len(estimates)
    else:
        truths = list(truth)
        if len(truths) != len(estimates):
            raise ValueError("truth and estimates must have the same run count")
    return float(np.mean([_nmse_one(np.asarray(t), np.asarray(e)) for t, e in zip(truths, estimates)]))


def nmse_cascaded(H, G, H_hat, G_hat) -> float:
    """NMSE of the BD-RIS cascaded channel ``kron(G^T, H)``.

    The Kronecker form only cancels a common scalar between ``H_hat`` and
    ``G_hat``; per-element diagonal ambiguities must be removed beforehand
    (``resolve_ambiguity(..., "oracle_scaling")``).
    """
    return _nmse_one(kron(np.asarray(G).T, H), kron(np.asarray(G_hat).T, H_hat))


def binomial_se(p: float, n: int) -> float:
    if n <= 0:
        return float("nan")
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / n))
