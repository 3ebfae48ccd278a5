"""Monte Carlo strong-error estimation with coupled Brownian paths.

Every path is drawn once at the reference resolution ``N_ref``; coarse runs
use its dyadic block sums, so all resolutions see the same Brownian path. The
reference solution is the same scheme at ``N_ref``. The per-path error at
resolution ``N`` is the largest distance between the coarse iterates and the
reference at the coarse grid nodes, and the reported error is
``(mean error^p)^(1/p)`` over the paths that stayed finite.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import SdaeProblem, get_problem
from .scheme import SchemeKind, integrate
from .wiener import coarsen_increments, generate, is_power_of_two

__all__ = [
    "ConfigError",
    "ConvergenceConfig",
    "ConvergenceRow",
    "ConvergenceReport",
    "strong_error",
    "fit_slope",
    "write_report_csv",
    "write_report_svg",
    "DEMO_CONFIG",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ConvergenceConfig:
    problem: str
    scheme: SchemeKind
    N_ref: int
    N_list: tuple
    M_paths: int
    p: float = 2.0
    seed: int = 0
    # required N_ref / max(N_list); 1 allows comparing the reference with itself
    min_refinement: int = 4

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeKind.parse(self.scheme))
        object.__setattr__(self, "N_list", tuple(sorted(int(n) for n in self.N_list)))
        if not is_power_of_two(self.N_ref):
            raise ConfigError(f"N_ref must be a power of two, got {self.N_ref}")
        if not self.N_list:
            raise ConfigError("N_list must not be empty")
        for n in self.N_list:
            if not is_power_of_two(n) or self.N_ref % n:
                raise ConfigError(f"every N in N_list must be a power of two dividing N_ref={self.N_ref}; got {n}")
        if self.N_ref < self.min_refinement * max(self.N_list):
            raise ConfigError(f"N_ref / max(N_list) must be at least {self.min_refinement}")
        if self.M_paths < 1:
            raise ConfigError("M_paths must be at least 1")
        if not self.p >= 1:
            raise ConfigError(f"p must be >= 1, got {self.p}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must lie in [0, 2**64)")

    def describe(self) -> str:
        return (f"model={self.problem} scheme={self.scheme.value} nref={self.N_ref} "
                f"nlist={','.join(map(str, self.N_list))} paths={self.M_paths} p={self.p:g} "
                f"seed={self.seed}")


DEMO_CONFIG = ConvergenceConfig(
    problem="paper-example", scheme=SchemeKind.DIRECT_TAMED, N_ref=2**14,
    N_list=tuple(2**k for k in range(6, 12)), M_paths=128, p=2.0, seed=2024,
)


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    h: float
    error_p: float
    stderr: float
    diverged_fraction: float

    @property
    def usable(self) -> bool:
        return bool(np.isfinite(self.error_p))


@dataclass
class ConvergenceReport:
    config: ConvergenceConfig
    rows: list
    slope: float = math.nan
    intercept: float = math.nan
    residual: float = math.nan
    per_path_errors: Optional[np.ndarray] = field(default=None, repr=False)


def fit_slope(rows: Sequence) -> tuple:
    """Least-squares line through ``(log2 h, log2 error)``.

    Returns ``(slope, intercept, residual)`` with ``residual`` the root mean
    square deviation of the fit in log2 units.
    """
    data = np.asarray(rows, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 2:
        raise ValueError("need at least two (h, error) rows")
    bad = [i for i, (h, e) in enumerate(data) if not (h > 0 and e > 0)]
    if bad:
        raise ValueError(f"rows {bad} have non-positive step or error")
    x = np.log2(data[:, 0])
    y = np.log2(data[:, 1])
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return slope, intercept, residual


def _chunk(problem, cfg, indices):
    """Grid-sup errors of paths ``indices`` at each N (shape (len(N_list), k))
    and whether either run of the pair diverged."""
    inc = np.stack([generate(cfg.seed, int(i), problem.m, cfg.N_ref, problem.T).increments
                    for i in indices])
    n_max = cfg.N_list[-1]
    ref = integrate(problem, cfg.scheme, inc, record_every=cfg.N_ref // n_max)
    errors = np.empty((len(cfg.N_list), len(indices)))
    diverged = np.empty_like(errors, dtype=bool)
    with np.errstate(invalid="ignore"):
        for r, N in enumerate(cfg.N_list):
            run = integrate(problem, cfg.scheme, coarsen_increments(inc, cfg.N_ref // N))
            ref_nodes = ref.states[:, ::n_max // N]
            # hypot keeps huge but finite pre-divergence states from overflowing
            dist = np.hypot.reduce(ref_nodes - run.states, axis=2)
            errors[r] = dist.max(axis=1)
            diverged[r] = ref.diverged | run.diverged
    return errors, diverged


def strong_error(cfg: ConvergenceConfig, workers: Optional[int] = None,
                 problem: Optional[SdaeProblem] = None) -> ConvergenceReport:
    """Estimate the strong error at every ``N`` in ``cfg.N_list``.

    Paths are split into contiguous blocks, one per worker thread; results
    are assembled in path order and do not depend on ``workers``.
    ``problem`` overrides the registry lookup of ``cfg.problem``.
    """
    if problem is None:
        problem = get_problem(cfg.problem)
    workers = max(1, min(workers or os.cpu_count() or 1, cfg.M_paths))
    blocks = [b for b in np.array_split(np.arange(cfg.M_paths), workers) if b.size]
    if len(blocks) == 1:
        parts = [_chunk(problem, cfg, blocks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            parts = list(pool.map(lambda b: _chunk(problem, cfg, b), blocks))
    errors = np.concatenate([e for e, _ in parts], axis=1)
    diverged = np.concatenate([d for _, d in parts], axis=1)

    rows = []
    for r, N in enumerate(cfg.N_list):
        ok = ~diverged[r]
        k = int(ok.sum())
        err_p = stderr = math.nan
        if k:
            moments = errors[r, ok] ** cfg.p
            mean = float(np.mean(moments))
            err_p = mean ** (1.0 / cfg.p)
            if k > 1 and mean > 0:
                # delta method for the p-th root of a sample mean
                se_mean = float(np.std(moments, ddof=1)) / math.sqrt(k)
                stderr = se_mean * mean ** (1.0 / cfg.p - 1.0) / cfg.p
            elif k > 1:
                stderr = 0.0
        rows.append(ConvergenceRow(N=N, h=problem.T / N, error_p=err_p, stderr=stderr,
                                   diverged_fraction=1.0 - k / cfg.M_paths))
    report = ConvergenceReport(config=cfg, rows=rows, per_path_errors=errors)
    fit_rows = [(row.h, row.error_p) for row in rows if row.usable and row.error_p > 0]
    if len(fit_rows) >= 2:
        report.slope, report.intercept, report.residual = fit_slope(fit_rows)
    return report


def _fmt(x):
    return "n/a" if not np.isfinite(x) else repr(float(x))


def write_report_csv(report: ConvergenceReport, path) -> None:
    """Columns ``N, h, error_p, stderr, diverged_fraction`` and a
    ``# slope=... intercept=... residual=...`` footer; undefined values are
    written as ``n/a``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["N", "h", "error_p", "stderr", "diverged_fraction"])
        for row in report.rows:
            out.writerow([row.N, repr(row.h), _fmt(row.error_p), _fmt(row.stderr),
                          repr(row.diverged_fraction)])
        fh.write(f"# slope={_fmt(report.slope)} intercept={_fmt(report.intercept)} "
                 f"residual={_fmt(report.residual)}\n")


def write_report_svg(report: ConvergenceReport, path) -> None:
    """Log-log plot of the errors, the fitted line and a slope-1/2 guide."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [r for r in report.rows if r.usable and r.error_p > 0]
    h = np.array([r.h for r in rows])
    err = np.array([r.error_p for r in rows])
    with matplotlib.rc_context({"svg.hashsalt": "semitamed", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        ax.loglog(h, err, "ko", label=f"error (p={report.config.p:g})")
        if np.isfinite(report.slope):
            ax.loglog(h, 2.0 ** (report.slope * np.log2(h) + report.intercept), "k--",
                      label=f"fit, slope {report.slope:.3f}")
            guide = err[-1] * np.sqrt(h / h[-1])
            ax.loglog(h, guide, ":", color="0.5", label="slope 1/2")
        ax.set_xlabel("h")
        ax.set_ylabel("strong error")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(loc="upper left")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
