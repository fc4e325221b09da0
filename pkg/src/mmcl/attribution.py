"""Integrated-gradients feature attribution and per-modality aggregation."""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ContractError


@dataclass
class AttributionReport:
    per_feature: np.ndarray
    baseline: np.ndarray
    completeness_residual: float
    output_at_input: float
    output_at_baseline: float
    per_modality: np.ndarray = None


def integrated_gradients(model_fn, x, baseline=None, steps=256):
    """Path-integral attribution from baseline to x.

    `model_fn` maps a Tensor of shape (f,) to a scalar Tensor (one logit).
    Uses a right-endpoint Riemann sum over `steps` points; the completeness
    residual |sum(attributions) - (f(x) - f(baseline))| is recorded."""
    x = np.asarray(x, dtype=np.float64)
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if x.shape != baseline.shape or x.ndim != 1:
        raise ContractError(f"input {x.shape} and baseline {baseline.shape} must be matching vectors")
    if steps < 2:
        raise ContractError("integrated gradients needs steps >= 2")

    def scalar_output(point):
        t = Tensor(point, requires_grad=True)
        out = model_fn(t)
        if out.values.size != 1:
            raise ContractError("attributed model output must be scalar")
        return t, out

    grad_sum = np.zeros_like(x)
    for s in range(1, steps + 1):
        point = baseline + (s / steps) * (x - baseline)
        t, out = scalar_output(point)
        out.backward()
        grad_sum += t.grad
    per_feature = (x - baseline) * grad_sum / steps

    _, out_x = scalar_output(x)
    _, out_b = scalar_output(baseline)
    f_x, f_b = float(out_x.values), float(out_b.values)
    residual = abs(per_feature.sum() - (f_x - f_b))
    return AttributionReport(per_feature, baseline, residual, f_x, f_b)


def modality_aggregate(report, layout):
    """Collapse per-feature attributions to one nonnegative score per
    modality: sum of absolute values within each slice, normalized to a
    probability vector.

    `layout` is an ordered list of (modality_name, start, stop) slices that
    must partition the feature axis."""
    f = report.per_feature.size
    covered = np.zeros(f, dtype=bool)
    for name, start, stop in layout:
        if start < 0 or stop > f or start >= stop:
            raise ContractError(f"bad slice for {name!r}: [{start}, {stop})")
        if covered[start:stop].any():
            raise ContractError(f"slice for {name!r} overlaps another modality")
        covered[start:stop] = True
    if not covered.all():
        raise ContractError("layout does not cover the whole feature axis")
    raw = np.array([np.abs(report.per_feature[start:stop]).sum() for _, start, stop in layout])
    total = raw.sum()
    scores = raw / total if total > 0 else np.full(len(layout), 1.0 / len(layout))
    report.per_modality = scores
    return scores


def _midranks(x):
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    xs = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rank_correlation(a, b):
    """Spearman rho via Pearson correlation of midranks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ContractError("spearman needs two equal-length vectors of size >= 2")
    ra, rb = _midranks(a), _midranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra**2).sum() * (rb**2).sum())
    if denom == 0:
        return 0.0
    return float((ra * rb).sum() / denom)
