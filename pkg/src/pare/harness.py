"""Monte-Carlo driver: SNR / group-count sweeps of the TALS receiver and the ZF baseline."""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .metrics import MetricSample, nmse_cascaded, symbol_errors, zf_perfect_csi
from .receiver import (
    DEFAULT_DELTA,
    DEFAULT_MAX_ITER,
    check_identifiability,
    resolve_ambiguity,
    tals,
)
from .system_model import (
    ConfigError,
    SystemConfig,
    add_noise,
    design_coding,
    design_rotation,
    design_scattering,
    realize,
    synthesize,
)

__all__ = [
    "CSV_HEADER",
    "ExperimentSpec",
    "RunOutcome",
    "run_once",
    "run_cell",
    "run_experiment",
    "emit_csv",
    "read_csv",
    "load_spec",
    "noise_floor_fit",
]

log = logging.getLogger(__name__)

CSV_HEADER = (
    "snr_db",
    "q",
    "nmse_H",
    "nmse_G",
    "nmse_cascaded",
    "ser_pare",
    "ser_zf",
    "mean_iterations",
    "mean_runtime_ms",
    "runs",
)

REFERENCE_CONFIG = SystemConfig(M_R=5, M_T=2, N=16, Q=4, K=20, T=10)


@dataclass(frozen=True)
class ExperimentSpec:
    base: SystemConfig = REFERENCE_CONFIG
    snr_grid_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    q_values: tuple[int, ...] = (4, 8)
    runs: int = 200
    restarts: int = 5
    delta: float = DEFAULT_DELTA
    max_iter: int = DEFAULT_MAX_ITER
    output_path: str = "results.csv"
    master_seed: int = 0
    record_timing: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, "q_values", tuple(int(q) for q in self.q_values))
        if self.runs < 1:
            raise ConfigError(f"runs must be at least 1, got {self.runs}")
        if not self.snr_grid_db:
            raise ConfigError("snr_grid_db must not be empty")
        if not self.q_values:
            raise ConfigError("q_values must not be empty")
        for q in self.q_values:
            if q < 1 or self.base.N % q:
                raise ConfigError(f"Q={q} does not divide N={self.base.N}")
        if self.restarts < 0:
            raise ConfigError("restarts must be non-negative")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


@dataclass(frozen=True)
class RunOutcome:
    nmse_H: float
    nmse_G: float
    nmse_cascaded: float
    errors_pare: int
    errors_zf: int
    counted: int
    iterations: int
    runtime_ms: float
    final_fit: float
    fit_trace: tuple[float, ...] = field(default=(), repr=False)


def _snr_key(snr_db: float) -> int:
    # Exact, non-negative integer identity of the SNR value.
    return int.from_bytes(struct.pack(">d", float(snr_db)), "big")


def run_streams(master_seed: int, q: int, run: int, snr_db: float):
    """Return ``(realization_rng, receiver_rng, noise_rng)`` for one run.

    Channels, symbols and receiver initializations depend on
    ``(master_seed, q, run)`` only, so the same realizations are reused at
    every SNR; the noise stream also depends on the SNR value.
    """
    base = [int(master_seed), int(q), int(run)]
    return (
        np.random.default_rng(np.random.SeedSequence(base + [0])),
        np.random.default_rng(np.random.SeedSequence(base + [1])),
        np.random.default_rng(np.random.SeedSequence(base + [2, _snr_key(snr_db)])),
    )


def noise_floor_fit(K: int, snr_db: float) -> float:
    """Fit error expected at convergence, ``K / (1 + snr)``."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return K / (1.0 + 10.0 ** (snr_db / 10.0))


def run_once(
    cfg: SystemConfig,
    designs,
    snr_db: float,
    streams,
    *,
    restarts: int = 5,
    delta: float = DEFAULT_DELTA,
    max_iter: int = DEFAULT_MAX_ITER,
    record_timing: bool = False,
) -> RunOutcome:
    """One Monte-Carlo realization: synthesize, run TALS and ZF, score both."""
    real_rng, rx_rng, noise_rng = streams
    real = realize(cfg, real_rng, designs)
    y = add_noise(synthesize(cfg, real), snr_db, noise_rng)

    # Restart only when the fit is clearly above the noise floor.
    accept = 1.5 * noise_floor_fit(cfg.K, snr_db) + 1e-4 * cfg.K
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = tals(
            y, real.S, real.P, real.W, cfg,
            delta=delta, max_iter=max_iter, restarts=restarts,
            accept_fit=accept, rng=rx_rng,
        )
    runtime_ms = (time.perf_counter() - t0) * 1e3 if record_timing else float("nan")

    err_pare, counted = symbol_errors(res.X_hat, real.X, cfg.constellation, cfg.pilot_row)
    x_zf = zf_perfect_csi(y, real)
    err_zf, _ = symbol_errors(x_zf, real.X, cfg.constellation, cfg.pilot_row)

    aligned = resolve_ambiguity(res, "oracle_scaling", real)
    h_err = np.sum(np.abs(real.H - aligned.H_hat) ** 2) / np.sum(np.abs(real.H) ** 2)
    g_err = np.sum(np.abs(real.G - aligned.G_hat) ** 2) / np.sum(np.abs(real.G) ** 2)
    return RunOutcome(
        nmse_H=float(h_err),
        nmse_G=float(g_err),
        nmse_cascaded=nmse_cascaded(real.H, real.G, aligned.H_hat, aligned.G_hat),
        errors_pare=err_pare,
        errors_zf=err_zf,
        counted=counted,
        iterations=res.iterations,
        runtime_ms=runtime_ms,
        final_fit=res.final_fit,
        fit_trace=tuple(res.fit_trace),
    )


def _designs(cfg: SystemConfig):
    return (
        design_scattering(cfg.N, cfg.Q),
        design_rotation(cfg.K, cfg.N),
        design_coding(cfg.K, cfg.M_T),
    )


def _cell_worker(args):
    cfg, designs, snr_db, master_seed, q, r, opts = args
    return run_once(cfg, designs, snr_db, run_streams(master_seed, q, r, snr_db), **opts)


def run_cell(spec: ExperimentSpec, snr_db: float, q: int, executor=None) -> list[RunOutcome]:
    """All runs of one ``(snr, q)`` grid cell, ordered by run index."""
    cfg = spec.base.with_(Q=q, snr_db=snr_db)
    designs = _designs(cfg)
    opts = dict(
        restarts=spec.restarts,
        delta=spec.delta,
        max_iter=spec.max_iter,
        record_timing=spec.record_timing,
    )
    jobs = [(cfg, designs, snr_db, spec.master_seed, q, r, opts) for r in range(spec.runs)]
    if executor is None:
        return [_cell_worker(j) for j in jobs]
    return list(executor.map(_cell_worker, jobs))


def aggregate(snr_db: float, q: int, outcomes: list[RunOutcome]) -> MetricSample:
    counted = sum(o.counted for o in outcomes)
    its = np.array([o.iterations for o in outcomes], dtype=float)
    return MetricSample(
        snr_db=float(snr_db),
        q=int(q),
        nmse_H=float(np.mean([o.nmse_H for o in outcomes])),
        nmse_G=float(np.mean([o.nmse_G for o in outcomes])),
        nmse_cascaded=float(np.mean([o.nmse_cascaded for o in outcomes])),
        ser_pare=sum(o.errors_pare for o in outcomes) / counted if counted else 0.0,
        ser_zf=sum(o.errors_zf for o in outcomes) / counted if counted else 0.0,
        mean_iterations=float(its.mean()),
        mean_runtime_ms=float(np.mean([o.runtime_ms for o in outcomes])),
        runs=len(outcomes),
        symbols_counted=counted,
        median_iterations=float(np.median(its)),
    )


def run_experiment(spec: ExperimentSpec, *, keep_outcomes: dict | None = None) -> list[MetricSample]:
    """Sweep every ``(q, snr)`` combination of ``spec``.

    Combinations that violate identifiability or the design constraints are
    skipped with a warning. Output depends only on ``spec`` (including the
    worker count being irrelevant). If ``keep_outcomes`` is a dict it is
    filled with the per-run outcomes keyed by ``(snr_db, q)``.
    """
    samples = []
    executor = ProcessPoolExecutor(spec.workers) if spec.workers > 1 else None
    try:
        for q in spec.q_values:
            cfg = spec.base.with_(Q=q)
            problems = check_identifiability(cfg)
            if cfg.K < cfg.N or cfg.K < cfg.M_T:
                problems.append(f"DFT designs need K >= N and K >= M_T (K={cfg.K})")
            if problems:
                msg = f"skipping Q={q}: " + "; ".join(problems)
                log.warning(msg)
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
                continue
            for snr in spec.snr_grid_db:
                outcomes = run_cell(spec, snr, q, executor)
                if keep_outcomes is not None:
                    keep_outcomes[(snr, q)] = outcomes
                sample = aggregate(snr, q, outcomes)
                log.info(
                    "Q=%d SNR=%g dB: NMSE(H)=%.3e NMSE(G)=%.3e SER=%.3e/%.3e it=%.1f",
                    q, snr, sample.nmse_H, sample.nmse_G,
                    sample.ser_pare, sample.ser_zf, sample.mean_iterations,
                )
                samples.append(sample)
    finally:
        if executor is not None:
            executor.shutdown()
    return samples


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def emit_csv(samples: list[MetricSample], path) -> None:
    """Write the metric table with the fixed ``CSV_HEADER`` column order."""
    if not samples:
        raise ValueError("no samples to write")
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for s in samples:
                writer.writerow([_fmt(getattr(s, name)) for name in CSV_HEADER])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path) -> list[dict]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(
            {k: (int(v) if k in ("q", "runs") else float(v)) for k, v in row.items()}
        )
    return out


_BASE_FIELDS = {f.name for f in fields(SystemConfig)}
_SPEC_FIELDS = {f.name for f in fields(ExperimentSpec)} - {"base"}
_LIST_FIELDS = {"snr_grid_db": float, "q_values": int}


def _coerce(name: str, raw):
    if name in _LIST_FIELDS:
        kind = _LIST_FIELDS[name]
        if isinstance(raw, str):
            raw = [p for p in raw.replace(";", ",").split(",") if p.strip()]
        elif not isinstance(raw, (list, tuple)):
            raw = [raw]
        return tuple(kind(float(p)) if kind is int else kind(p) for p in raw)
    if name in ("pilot_row", "record_timing"):
        if isinstance(raw, str):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return bool(raw)
    if name in ("constellation", "output_path"):
        return str(raw).strip()
    if name in ("snr_db", "delta"):
        return float(raw)
    return int(raw)


def spec_from_mapping(data: dict, base_spec: ExperimentSpec | None = None) -> ExperimentSpec:
    """Build a spec from flat (or ``{"base": {...}}``-nested) field names."""
    base_spec = base_spec or ExperimentSpec()
    flat = dict(data)
    nested = flat.pop("base", None) or {}
    flat = {**nested, **flat}
    base_changes, spec_changes = {}, {}
    for key, value in flat.items():
        if key in _BASE_FIELDS:
            base_changes[key] = _coerce(key, value)
        elif key in _SPEC_FIELDS:
            spec_changes[key] = _coerce(key, value)
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    try:
        base = replace(base_spec.base, **base_changes)
        return replace(base_spec, base=base, **spec_changes)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def parse_config_text(text: str) -> dict:
    """Parse JSON or flat ``key = value`` / ``key: value`` lines (``#`` comments)."""
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            return json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
    data = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, value = line.split(sep, 1)
                data[key.strip()] = value.strip()
                break
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
    return data


def load_spec(path, base_spec: ExperimentSpec | None = None) -> ExperimentSpec:
    text = Path(path).read_text(encoding="utf-8")
    return spec_from_mapping(parse_config_text(text), base_spec)
