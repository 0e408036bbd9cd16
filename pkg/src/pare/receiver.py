"""Semi-blind PARATUCK receiver: trilinear alternating least squares (TALS).

The received tensor follows ``Y_k = Hbar D_k(P) G D_k(W) X^T``. Each of
``Hbar``, ``G`` and ``X`` enters linearly once the other two are fixed, so the
receiver cycles through three least-squares problems built on the mode-1,
mode-3 and mode-2 unfoldings respectively.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .system_model import SystemConfig, gen_rayleigh, slices_from_factors
from .tensor_core import (
    SignalTensor,
    khatri_rao,
    kron,
    pinv,
    unfold1,
    unfold2,
    unfold3,
    unvec,
    vec,
)

__all__ = [
    "DivergenceError",
    "AmbiguityError",
    "RankWarning",
    "TalsResult",
    "check_identifiability",
    "build_F",
    "build_E",
    "build_Psi",
    "build_Theta",
    "update_H",
    "update_X",
    "update_G",
    "fit_error",
    "tals",
    "resolve_ambiguity",
    "rescale_factors",
]

log = logging.getLogger(__name__)

DEFAULT_DELTA = 1e-5
DEFAULT_MAX_ITER = 500
DEFAULT_RESTARTS = 5


class DivergenceError(ArithmeticError):
    """The fit error became non-finite."""

    def __init__(self, iteration: int, value: float):
        super().__init__(f"fit error became {value} at iteration {iteration}")
        self.iteration = iteration


class AmbiguityError(ValueError):
    """Scaling ambiguity cannot be removed (e.g. zero entry in the pilot row)."""


class RankWarning(UserWarning):
    """A least-squares subproblem is rank deficient."""


@dataclass(frozen=True)
class TalsResult:
    H_hat: np.ndarray
    Hbar_hat: np.ndarray
    G_hat: np.ndarray
    X_hat: np.ndarray
    fit_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    restarts_used: int = 0
    rank_deficient: bool = False
    attempt_traces: tuple[tuple[float, ...], ...] = ()

    @property
    def final_fit(self) -> float:
        return self.fit_trace[-1] if self.fit_trace else float("inf")


def check_identifiability(cfg: SystemConfig) -> list[str]:
    """Return the violated uniqueness conditions; empty when all hold."""
    violations = []
    tk = cfg.T * cfg.K
    if tk < cfg.N:
        violations.append(f"T*K >= N violated: {tk} < {cfg.N}")
    tkm = cfg.T * cfg.K * cfg.M_R
    if tkm < cfg.M_T * cfg.N:
        violations.append(f"T*K*M_R >= M_T*N violated: {tkm} < {cfg.M_T * cfg.N}")
    mk = cfg.M_R * cfg.K
    if mk < cfg.M_T:
        violations.append(f"M_R*K >= M_T violated: {mk} < {cfg.M_T}")
    return violations


def identifiability_report(cfg: SystemConfig) -> list[tuple[str, int, int, bool]]:
    """Each condition as ``(label, lhs, rhs, holds)``."""
    rows = [
        ("T*K >= N", cfg.T * cfg.K, cfg.N),
        ("T*K*M_R >= M_T*N", cfg.T * cfg.K * cfg.M_R, cfg.M_T * cfg.N),
        ("M_R*K >= M_T", cfg.M_R * cfg.K, cfg.M_T),
    ]
    return [(label, lhs, rhs, lhs >= rhs) for label, lhs, rhs in rows]


def _cores(g, p, w) -> np.ndarray:
    # core[k] = D_k(P) @ G @ D_k(W), shape (K, N, M_T)
    g, p, w = np.asarray(g), np.asarray(p), np.asarray(w)
    if p.shape[0] != w.shape[0]:
        raise ValueError(f"P has {p.shape[0]} rows but W has {w.shape[0]}")
    if g.shape != (p.shape[1], w.shape[1]):
        raise ValueError(
            f"G has shape {g.shape}, expected {(p.shape[1], w.shape[1])} from P and W"
        )
    return p[:, :, None] * g[None, :, :] * w[:, None, :]


def build_F(G, X, P, W) -> np.ndarray:
    """Vertical stack of ``X D_k(W) G^T D_k(P)`` over k, shape ``TK x N``.

    On noiseless data ``unfold1(Y) == Hbar @ F.T``.
    """
    core = _cores(G, P, W)
    X = np.asarray(X)
    if X.shape[1] != core.shape[2]:
        raise ValueError(f"X has {X.shape[1]} columns, expected {core.shape[2]}")
    return (X[None, :, :] @ core.transpose(0, 2, 1)).reshape(-1, core.shape[1])


def build_E(Hbar, G, P, W) -> np.ndarray:
    """Vertical stack of ``Hbar D_k(P) G D_k(W)`` over k, shape ``M_R K x M_T``.

    On noiseless data ``unfold2(Y) == X @ E.T``.
    """
    core = _cores(G, P, W)
    Hbar = np.asarray(Hbar)
    if Hbar.shape[1] != core.shape[1]:
        raise ValueError(f"Hbar has {Hbar.shape[1]} columns, expected {core.shape[1]}")
    return (Hbar[None, :, :] @ core).reshape(-1, core.shape[2])


def build_Psi(P, W) -> np.ndarray:
    """``W^T`` Khatri-Rao ``P^T``; column k is ``kron(w_k, p_k)``, shape ``M_T N x K``."""
    P, W = np.asarray(P), np.asarray(W)
    if P.shape[0] != W.shape[0]:
        raise ValueError(f"P has {P.shape[0]} rows but W has {W.shape[0]}")
    return khatri_rao(W.T, P.T)


def build_Theta(Hbar, X, Psi) -> np.ndarray:
    """System matrix of the G subproblem, ``Psi^T`` Khatri-Rao ``(X kron Hbar)``."""
    return khatri_rao(np.asarray(Psi).T, kron(X, Hbar))


def _ls_right(lhs: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, bool]:
    """``lhs @ pinv(a.T)`` plus a rank-deficiency flag for ``a``."""
    a_pinv, rank = pinv(a.T, return_rank=True)
    return lhs @ a_pinv, rank < a.shape[1]


def update_H(Y: SignalTensor, F, S=None, *, return_flag: bool = False):
    """Least-squares ``Hbar = unfold1(Y) pinv(F^T)``; ``H = Hbar S^H``.

    Returns ``(Hbar_hat, H_hat)``; ``H_hat`` is ``None`` when ``S`` is omitted.
    """
    F = np.asarray(F)
    if F.shape[0] != Y.T * Y.K:
        raise ValueError(f"F has {F.shape[0]} rows, expected T*K={Y.T * Y.K}")
    hbar, deficient = _ls_right(unfold1(Y), F)
    h = None if S is None else hbar @ np.asarray(S).conj().T
    if return_flag:
        return hbar, h, deficient
    return hbar, h


def update_X(Y: SignalTensor, E, *, return_flag: bool = False):
    """Least-squares ``X = unfold2(Y) pinv(E^T)``."""
    E = np.asarray(E)
    if E.shape[0] != Y.M_R * Y.K:
        raise ValueError(f"E has {E.shape[0]} rows, expected M_R*K={Y.M_R * Y.K}")
    x, deficient = _ls_right(unfold2(Y), E)
    return (x, deficient) if return_flag else x


def update_G(Y: SignalTensor, Hbar, X, Psi, *, return_flag: bool = False):
    """Least-squares ``vec(G) = pinv(Theta) vec(unfold3(Y))``, reshaped to ``N x M_T``."""
    Hbar, X, Psi = np.asarray(Hbar), np.asarray(X), np.asarray(Psi)
    N, M_T = Hbar.shape[1], X.shape[1]
    if Psi.shape != (M_T * N, Y.K):
        raise ValueError(f"Psi has shape {Psi.shape}, expected {(M_T * N, Y.K)}")
    theta = build_Theta(Hbar, X, Psi)
    if theta.shape[0] != Y.K * Y.T * Y.M_R:
        raise ValueError("Hbar/X dimensions do not match the tensor")
    theta_pinv, rank = pinv(theta, return_rank=True)
    g = unvec(theta_pinv @ vec(unfold3(Y)), N, M_T)
    return (g, rank < theta.shape[1]) if return_flag else g


def fit_error(Y: SignalTensor, Hbar, G, X, P, W) -> float:
    """Sum over blocks of ``||Y_k - Yhat_k||_F^2 / ||Y_k||_F^2``."""
    den = np.sum(np.abs(Y.data) ** 2, axis=(1, 2))
    if np.any(den == 0):
        raise ZeroDivisionError("fit error undefined: tensor has an all-zero slice")
    resid = Y.data - slices_from_factors(np.asarray(Hbar), G, np.asarray(X), P, W)
    return float(np.sum(np.sum(np.abs(resid) ** 2, axis=(1, 2)) / den))


def _single_run(Yn, Y, S, P, Wn, W, Psi, g0, x0, delta, max_iter):
    g, x = g0, x0
    trace: list[float] = []
    prev = np.inf
    converged = False
    deficient = False
    hbar = h = None
    for it in range(1, max_iter + 1):
        hbar, h, d1 = update_H(Yn, build_F(g, x, P, Wn), S, return_flag=True)
        g, d2 = update_G(Yn, hbar, x, Psi, return_flag=True)
        x, d3 = update_X(Yn, build_E(hbar, g, P, Wn), return_flag=True)
        deficient = d1 or d2 or d3
        eps = fit_error(Y, hbar, g, x, P, W)
        if not np.isfinite(eps):
            raise DivergenceError(it, eps)
        trace.append(eps)
        if abs(eps - prev) <= delta:
            converged = True
            break
        prev = eps
    return TalsResult(
        H_hat=h,
        Hbar_hat=hbar,
        G_hat=g,
        X_hat=x,
        fit_trace=trace,
        iterations=len(trace),
        converged=converged,
        rank_deficient=deficient,
    )


def tals(
    Y: SignalTensor,
    S,
    P,
    W,
    cfg: SystemConfig | None = None,
    init: tuple[np.ndarray, np.ndarray] | None = None,
    *,
    delta: float = DEFAULT_DELTA,
    max_iter: int = DEFAULT_MAX_ITER,
    restarts: int = DEFAULT_RESTARTS,
    accept_fit: float | None = None,
    pilot_row: bool | None = None,
    rng: np.random.Generator | int | None = None,
) -> TalsResult:
    """Jointly estimate ``Hbar``, ``G`` and ``X`` from the received tensor.

    Parameters
    ----------
    Y : SignalTensor
        Received tensor, ``K`` slices of ``M_R x T``.
    S, P, W : ndarray
        Scattering matrix (N x N), phase rotations (K x N) and coding (K x M_T).
    cfg : SystemConfig, optional
        Used for the identifiability check and the ``pilot_row`` default.
    init : (G0, X0), optional
        Starting point of the first attempt. Restarts draw CN(0, 1) factors.
    delta : float
        Stop when consecutive fit errors differ by at most ``delta``.
    max_iter : int
        Iteration cap per attempt.
    restarts : int
        Extra random initializations tried when an attempt is not accepted.
        An attempt is accepted when it converged and, if ``accept_fit`` is
        given, its final fit error is at most ``accept_fit``. The attempt with
        the lowest final fit error is returned.
    pilot_row : bool, optional
        Anchor the column scaling of ``X`` on a known all-ones first row.
        Defaults to ``cfg.pilot_row`` (or ``True`` without a config).

    Notes
    -----
    Slices are scaled to unit Frobenius norm before the LS updates (the scale
    is folded into the coding rows), so every update minimizes exactly the
    normalized fit error that drives the stopping rule and the trace is
    non-increasing. Per-iteration cost is dominated by the pseudo-inverse of
    the ``TKM_R x M_T N`` matrix in the G update, i.e. ``O(T K M_R (M_T N)^2)``.
    """
    if cfg is not None:
        violated = check_identifiability(cfg)
        if violated:
            warnings.warn("; ".join(violated), RankWarning, stacklevel=2)
        if pilot_row is None:
            pilot_row = cfg.pilot_row
    if pilot_row is None:
        pilot_row = True
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    rng = np.random.default_rng(rng)
    S, P, W = (np.asarray(a, dtype=np.complex128) for a in (S, P, W))
    N, M_T = P.shape[1], W.shape[1]

    norms = np.sqrt(np.sum(np.abs(Y.data) ** 2, axis=(1, 2)))
    if np.any(norms == 0):
        raise ZeroDivisionError("fit error undefined: tensor has an all-zero slice")
    Yn = SignalTensor(Y.data / norms[:, None, None])
    Wn = W / norms[:, None]
    Psi = build_Psi(P, Wn)

    best: TalsResult | None = None
    traces = []
    for attempt in range(restarts + 1):
        if attempt == 0 and init is not None:
            g0, x0 = (np.asarray(a, dtype=np.complex128) for a in init)
        else:
            g0 = gen_rayleigh(N, M_T, rng)
            x0 = gen_rayleigh(Y.T, M_T, rng)
        res = _single_run(Yn, Y, S, P, Wn, W, Psi, g0, x0, delta, max_iter)
        traces.append(tuple(res.fit_trace))
        if best is None or res.final_fit < best.final_fit:
            best = res
        accepted = res.converged and (accept_fit is None or res.final_fit <= accept_fit)
        log.debug(
            "attempt %d: %d iterations, fit %.3e, accepted=%s",
            attempt, res.iterations, res.final_fit, accepted,
        )
        if accepted:
            break
    best = replace(best, restarts_used=attempt, attempt_traces=tuple(traces))
    if best.rank_deficient:
        warnings.warn("rank-deficient least-squares subproblem", RankWarning, stacklevel=2)
    if pilot_row:
        best = resolve_ambiguity(best, "pilot_row")
    return best


def rescale_factors(Hbar, G, X, a, b):
    """Apply the diagonal ambiguity ``(Hbar Da, Da^-1 G Db, X Db^-1)``."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    return Hbar * a[None, :], G / a[:, None] * b[None, :], X / b[None, :]


def resolve_ambiguity(result: TalsResult, mode: str = "pilot_row", reference=None) -> TalsResult:
    """Remove the diagonal scaling ambiguity of a TALS estimate.

    ``pilot_row`` rescales the columns of ``X_hat`` so that its first row is
    all ones and moves the inverse scaling into ``G_hat``.

    ``oracle_scaling`` (metrics only) needs ``reference``, an object with
    ``Hbar``, ``X`` and ``S`` attributes such as a ``ChannelRealization``.
    Per-column complex scalars are fitted in least squares to map
    ``Hbar_hat`` onto ``Hbar`` and ``X_hat`` onto ``X``; ``G_hat`` receives
    the compensating inverse scalings so the reconstructed tensor is unchanged.
    """
    if mode == "pilot_row":
        pilot = result.X_hat[0, :]
        if np.any(np.abs(pilot) < np.finfo(np.float64).tiny ** 0.5):
            raise AmbiguityError("pilot row of X_hat has a zero entry")
        x = result.X_hat / pilot[None, :]
        g = result.G_hat * pilot[None, :]
        return replace(result, X_hat=x, G_hat=g)
    if mode == "oracle_scaling":
        if reference is None:
            raise ValueError("oracle_scaling needs the ground-truth reference")
        a = _column_scalars(result.Hbar_hat, reference.Hbar)
        b = _column_scalars(result.X_hat, reference.X)
        # X' = X_hat diag(b) is the ambiguity map with Db = diag(1/b).
        hbar, g, x = rescale_factors(result.Hbar_hat, result.G_hat, result.X_hat, a, 1.0 / b)
        h = hbar @ np.asarray(reference.S).conj().T
        return replace(result, Hbar_hat=hbar, H_hat=h, G_hat=g, X_hat=x)
    raise ValueError(f"unknown ambiguity mode {mode!r}")


def _column_scalars(est: np.ndarray, truth: np.ndarray) -> np.ndarray:
    num = np.sum(est.conj() * truth, axis=0)
    den = np.sum(np.abs(est) ** 2, axis=0)
    if np.any(den == 0):
        raise AmbiguityError("cannot align an all-zero estimated column")
    return num / den
