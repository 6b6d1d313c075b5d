"""Timing sweep comparing exact and Nystrom KRR on synthetic sin-regression."""
from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .kernels import Gaussian
from .oracles import RegressionTask, generate_regression
from .ridge import fit_krr, fit_nystrom

__all__ = ["BenchRow", "BenchReport", "run_bench", "format_table"]


@dataclass(frozen=True)
class BenchRow:
    method: str
    n: int
    M: int | None
    fit_time_ms: float
    predict_time_ms: float
    peak_alloc_estimate: int
    test_rmse: float


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    speedup: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "speedup": self.speedup}


def _median_time(fn, reps):
    times, result = [], None
    for _ in range(reps):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times) * 1e3, result


def _data(n, seed, noise):
    task = RegressionTask("sin", noise, seed=seed)
    X, y = generate_regression(task, n)
    Xt, _ = generate_regression(RegressionTask("sin", 0.0, seed=seed + 1), 1000)
    return X, y, Xt, task.f_star(Xt)


def _row(method, n, m, fit_ms, model, Xt, ft, reps):
    pred_ms, pred = _median_time(lambda: model.predict(Xt), reps)
    rmse = float(np.sqrt(np.mean((pred - ft) ** 2)))
    mem = 8 * (n * n if m is None else n * m + m * m)
    return BenchRow(method, n, m, fit_ms, pred_ms, mem, rmse)


def run_bench(n_grid=(500, 1000, 2000), m_grid=(50, 200, 800), fixed_n=4000, gamma=10.0,
              lam=1e-3, noise=0.1, seed=0, reps=3, max_exact_n=20000) -> BenchReport:
    """Exact KRR over ``n_grid`` and Nystrom over ``m_grid`` at ``fixed_n``.

    Exact KRR is also timed at ``fixed_n`` so ``speedup[M]`` gives the ratio
    exact_fit_time / nystrom_fit_time for each M.
    """
    kernel = Gaussian(gamma)
    report = BenchReport()
    sizes = sorted(set(n_grid) | {fixed_n})
    too_big = [n for n in sizes if n > max_exact_n]
    if too_big:
        raise ConfigError(f"refusing exact KRR for n={too_big[0]} > cap {max_exact_n}")
    exact_ms = {}
    for n in sizes:
        X, y, Xt, ft = _data(n, seed, noise)
        fit_ms, model = _median_time(lambda: fit_krr(X, y, kernel, lam), reps)
        exact_ms[n] = fit_ms
        report.rows.append(_row("exact", n, None, fit_ms, model, Xt, ft, reps))
    X, y, Xt, ft = _data(fixed_n, seed, noise)
    for m in m_grid:
        if m > fixed_n:
            raise ConfigError(f"M exceeds sample size ({m} > {fixed_n})")
        fit_ms, model = _median_time(lambda: fit_nystrom(X, y, kernel, lam, m, seed), reps)
        report.rows.append(_row("nystrom", fixed_n, m, fit_ms, model, Xt, ft, reps))
        report.speedup[str(m)] = exact_ms[fixed_n] / fit_ms
    return report


def format_table(report: BenchReport) -> str:
    lines = [f"{'method':<8} {'n':>6} {'M':>6} {'fit_ms':>10} {'pred_ms':>9} {'mem_bytes':>12} {'rmse':>9}"]
    for r in report.rows:
        m = "-" if r.M is None else str(r.M)
        lines.append(
            f"{r.method:<8} {r.n:>6} {m:>6} {r.fit_time_ms:>10.2f} {r.predict_time_ms:>9.2f} "
            f"{r.peak_alloc_estimate:>12} {r.test_rmse:>9.4f}"
        )
    for m, s in report.speedup.items():
        lines.append(f"speedup exact/nystrom at M={m}: {s:.2f}x")
    return "\n".join(lines)
