"""Metrics and report output: MSE, Spearman correlation, regression-line fit,
fold aggregation, and the report bundle (summary.json / scatter.csv / lines.csv)."""

import csv
import itertools
import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import stats as scipy_stats

EXACT_P_MAX_N = 9  # full permutation enumeration up to 9! = 362880


@dataclass
class ScorePair:
    speaker_id: str
    predicted: float
    target: float


@dataclass
class EvalReport:
    n: int
    mse: float
    rmse: float
    spearman_rho: float
    p_value: float
    regression_slope: float
    regression_intercept: float

    def to_dict(self):
        return {
            "n": self.n,
            "mse": self.mse,
            "rmse": self.rmse,
            "spearman_rho": self.spearman_rho,
            "p_value": self.p_value,
            "slope": self.regression_slope,
            "intercept": self.regression_intercept,
        }


@dataclass
class FoldAggregate:
    per_fold_mse: list
    mean: float
    std: float  # population std over folds

    @classmethod
    def from_mses(cls, mses):
        if not mses:
            raise ValueError("empty fold list")
        arr = np.asarray(mses, dtype=np.float64)
        return cls(per_fold_mse=list(map(float, arr)), mean=float(arr.mean()), std=float(arr.std()))

    def render(self):
        return f"{self.mean:.2f} ± {self.std:.2f}"


def mse(pairs):
    if not pairs:
        raise ValueError("empty pair list")
    residuals = np.array([p.predicted - p.target for p in pairs])
    return float(np.mean(residuals ** 2))


def average_ranks(values):
    """Ranks starting at 1; tied values get the mean of their rank block."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x, y):
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.sum(xc ** 2))
    sy = np.sqrt(np.sum(yc ** 2))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("degenerate ranks: constant predictions or targets")
    return float(np.dot(xc, yc) / (sx * sy))


def spearman(pairs):
    """Spearman rho with average-rank tie handling and a two-sided p-value.

    p-value: exact permutation distribution for n <= 9, t-approximation
    t = rho*sqrt((n-2)/(1-rho^2)) above that.
    """
    n = len(pairs)
    if n < 3:
        raise ValueError("spearman needs n >= 3")
    rx = average_ranks([p.predicted for p in pairs])
    ry = average_ranks([p.target for p in pairs])
    rho = _pearson(rx, ry)
    if abs(abs(rho) - 1.0) < 1e-12:  # snap float dust at perfect correlation
        rho = math.copysign(1.0, rho)
    if n <= EXACT_P_MAX_N:
        p = _exact_permutation_p(rx, ry, rho)
    else:
        if abs(rho) >= 1.0:
            p = 0.0
        else:
            t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
            p = float(2.0 * scipy_stats.t.sf(abs(t), df=n - 2))
    return rho, p


def _exact_permutation_p(rx, ry, rho):
    """Two-sided p: fraction of pairings with |rho_perm| >= |rho| over all n! permutations."""
    n = len(rx)
    xc = rx - rx.mean()
    yc = ry - ry.mean()
    denom = np.sqrt(np.sum(xc ** 2)) * np.sqrt(np.sum(yc ** 2))
    perms = np.array(list(itertools.permutations(range(n))))
    rhos = xc[perms] @ yc / denom
    hits = np.count_nonzero(np.abs(rhos) >= abs(rho) - 1e-12)
    return float(hits / len(perms))


def fit_regression_line(pairs):
    """OLS of predicted on target (perceptual score on the x-axis)."""
    if len(pairs) < 2:
        raise ValueError("regression needs n >= 2")
    t = np.array([p.target for p in pairs])
    y = np.array([p.predicted for p in pairs])
    tc = t - t.mean()
    var = np.sum(tc ** 2)
    if var == 0.0:
        raise ValueError("zero target variance")
    slope = float(np.dot(tc, y - y.mean()) / var)
    intercept = float(y.mean() - slope * t.mean())
    return slope, intercept


def aggregate_folds(mses):
    return FoldAggregate.from_mses(mses)


def evaluate(pairs):
    """Full EvalReport over one prediction set."""
    m = mse(pairs)
    rho, p = spearman(pairs)
    slope, intercept = fit_regression_line(pairs)
    return EvalReport(
        n=len(pairs),
        mse=m,
        rmse=float(math.sqrt(m)),
        spearman_rho=rho,
        p_value=p,
        regression_slope=slope,
        regression_intercept=intercept,
    )


def emit_report(report, pairs, out_dir):
    """Write summary.json, scatter.csv and lines.csv; deterministic output."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, "scatter.csv"), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["speaker_id", "target", "predicted"])
        for p in pairs:
            writer.writerow([p.speaker_id, repr(float(p.target)), repr(float(p.predicted))])
    with open(os.path.join(out_dir, "lines.csv"), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["line", "x0", "y0", "x1", "y1"])
        writer.writerow(["identity", "0.0", "0.0", "10.0", "10.0"])
        y0 = report.regression_intercept
        y1 = report.regression_slope * 10.0 + report.regression_intercept
        writer.writerow(["regression", "0.0", repr(float(y0)), "10.0", repr(float(y1))])
