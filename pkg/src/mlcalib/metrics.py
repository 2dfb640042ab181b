"""Discrimination and calibration metrics for multi-label predictions.

Calibration treats each class as an independent binary problem: a class
column of confidences is partitioned into equal-width bins, each bin
compares its mean confidence against the empirical positive frequency, and
the four bin-weighted scores are

    ECE = sum_m (|B_m|/N) * |acc_m - conf_m|     (absolute gap)
    MCS = sum_m (|B_m|/N) * (conf_m - acc_m)     (signed; > 0 overconfident)
    OCS = sum_m (|B_m|/N) * max(conf_m - acc_m, 0)
    UCS = sum_m (|B_m|/N) * |min(conf_m - acc_m, 0)|

Scores are assembled from the over/under components (ECE = OCS + UCS,
MCS = OCS - UCS), so the two identities hold exactly in float64, not just
to rounding.  Multi-label aggregation weights per-class scores by each
class's positive-label count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EvalDataset, ValidationError, pos_counts


@dataclass(frozen=True)
class BinStats:
    """One confidence bin: [lower, upper) except the last bin, closed at 1.

    ``conf`` and ``acc`` are None for empty bins; an empty bin contributes
    nothing to any score.
    """

    index: int
    lower: float
    upper: float
    count: int
    conf: float | None
    acc: float | None


@dataclass(frozen=True)
class ReliabilityCurve:
    bins: tuple
    n: int
    scope: str


@dataclass(frozen=True)
class CalibrationScores:
    """The {ECE, MCS, OCS, UCS} quadruple for one scope.

    ``weight`` is the positive-count mass behind the scope (used when
    aggregating across classes).  Construction via ``from_components``
    guarantees ECE = OCS + UCS and MCS = OCS - UCS exactly.
    """

    ece: float
    mcs: float
    ocs: float
    ucs: float
    scope: str
    weight: float

    @classmethod
    def from_components(cls, ocs: float, ucs: float, scope: str = "", weight: float = 0.0):
        """Assemble the quadruple from its over/under components.

        Unit-agnostic: accepts fractions or percent, so published table
        rows can be checked for internal consistency directly.
        """
        if ocs < 0 or ucs < 0:
            raise ValidationError(f"components must be >= 0, got ocs={ocs}, ucs={ucs}")
        return cls(ece=ocs + ucs, mcs=ocs - ucs, ocs=ocs, ucs=ucs, scope=scope, weight=weight)


@dataclass(frozen=True)
class ClassMetrics:
    """Per-class summary: AP (absent without positives), scores, weight."""

    class_id: str
    ap: float | None
    scores: CalibrationScores
    n_pos: int


def average_precision(scores, labels) -> float | None:
    """AP of one class: mean precision at each positive's rank.

    Ranking is by score descending with ties broken by ascending original
    index (stable), so results are identical across platforms.  Returns
    None when there are no positives.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape or s.ndim != 1:
        raise ValidationError(f"length mismatch: scores {s.shape}, labels {y.shape}")
    if s.shape[0] == 0:
        raise ValidationError("average_precision needs at least one sample")
    order = np.argsort(-s, kind="stable")
    ranked = y[order]
    if ranked.sum() == 0:
        return None
    cum_pos = np.cumsum(ranked)
    ranks = np.arange(1, s.shape[0] + 1, dtype=np.float64)
    precision = cum_pos / ranks
    return float(np.mean(precision[ranked == 1.0]))


def cmap(d: EvalDataset, probs: np.ndarray) -> float:
    """Macro-average AP over classes that have at least one positive."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != d.labels.shape:
        raise ValidationError(
            f"shape mismatch: probs {probs.shape}, labels {d.labels.shape}"
        )
    aps = []
    for c in range(d.c):
        ap = average_precision(probs[:, c], d.labels[:, c])
        if ap is not None:
            aps.append(ap)
    if not aps:
        raise ValidationError("cmAP undefined: no class has a positive label")
    return float(np.mean(aps))


def _bin_edges(m_bins: int) -> np.ndarray:
    return np.arange(m_bins + 1, dtype=np.float64) / m_bins


def _bin_sums(conf: np.ndarray, labels: np.ndarray, m_bins: int):
    """Sequential-order bin sums: (counts, conf sums, positive sums).

    np.bincount accumulates weights in input order, so these sums are
    bit-reproducible and match a plain per-element loop.
    """
    edges = _bin_edges(m_bins)
    idx = np.searchsorted(edges, conf, side="right") - 1
    idx = np.clip(idx, 0, m_bins - 1)
    counts = np.bincount(idx, minlength=m_bins)
    conf_sums = np.bincount(idx, weights=conf, minlength=m_bins)
    pos_sums = np.bincount(idx, weights=labels, minlength=m_bins)
    return counts, conf_sums, pos_sums


def _curve_from_sums(counts, conf_sums, pos_sums, m_bins: int, scope: str) -> ReliabilityCurve:
    edges = _bin_edges(m_bins)
    bins = []
    for m in range(m_bins):
        cnt = int(counts[m])
        if cnt > 0:
            stats = BinStats(
                index=m + 1,
                lower=float(edges[m]),
                upper=float(edges[m + 1]),
                count=cnt,
                conf=float(conf_sums[m] / cnt),
                acc=float(pos_sums[m] / cnt),
            )
        else:
            stats = BinStats(m + 1, float(edges[m]), float(edges[m + 1]), 0, None, None)
        bins.append(stats)
    return ReliabilityCurve(bins=tuple(bins), n=int(counts.sum()), scope=scope)


def bin_class(confidences, labels, m_bins: int, scope: str = "class") -> ReliabilityCurve:
    """Partition one class's confidences into M equal-width bins.

    Bins are [(m-1)/M, m/M) with the last bin closed at 1.  ``acc`` is the
    empirical positive frequency of the bin (the one-vs-rest reading of
    accuracy for a binary column).
    """
    conf = np.asarray(confidences, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if m_bins < 1:
        raise ValidationError(f"M must be >= 1, got {m_bins}")
    if conf.shape != y.shape or conf.ndim != 1:
        raise ValidationError(f"length mismatch: conf {conf.shape}, labels {y.shape}")
    if conf.size and (conf.min() < 0.0 or conf.max() > 1.0):
        raise ValidationError("confidences must lie in [0, 1]")
    counts, conf_sums, pos_sums = _bin_sums(conf, y, m_bins)
    return _curve_from_sums(counts, conf_sums, pos_sums, m_bins, scope)


def calibration_scores(curve: ReliabilityCurve, weight: float = 0.0) -> CalibrationScores:
    """Bin-weighted calibration scores of one reliability curve.

    OCS and UCS are accumulated bin by bin; ECE and MCS are their sum and
    difference, so the identities are exact.
    """
    if curve.n == 0:
        raise ValidationError(f"empty scope {curve.scope!r}")
    ocs = 0.0
    ucs = 0.0
    for b in curve.bins:
        if b.count == 0:
            continue
        gap = b.conf - b.acc
        share = b.count / curve.n
        if gap > 0.0:
            ocs += share * gap
        elif gap < 0.0:
            ucs += share * (-gap)
    return CalibrationScores.from_components(ocs, ucs, scope=curve.scope, weight=weight)


def per_class_scores(d: EvalDataset, probs: np.ndarray, m_bins: int) -> list:
    """Bin and score every class column; weight = positive count."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != d.labels.shape:
        raise ValidationError(
            f"shape mismatch: probs {probs.shape}, labels {d.labels.shape}"
        )
    counts = pos_counts(d)
    out = []
    for c, name in enumerate(d.classes):
        curve = bin_class(probs[:, c], d.labels[:, c], m_bins, scope=name)
        n_pos = int(counts[c])
        scores = calibration_scores(curve, weight=float(n_pos))
        ap = average_precision(probs[:, c], d.labels[:, c])
        out.append(ClassMetrics(class_id=name, ap=ap, scores=scores, n_pos=n_pos))
    return out


def aggregate_multilabel(per_class, scope: str = "weighted") -> CalibrationScores:
    """Positive-count weighted average of per-class calibration scores.

    OCS and UCS are averaged first and the quadruple is rebuilt from them,
    which keeps the ECE/MCS identities exact after aggregation.
    """
    items = list(per_class)
    if not items:
        raise ValidationError("no classes to aggregate")
    w = np.array([m.n_pos for m in items], dtype=np.float64)
    total = float(w.sum())
    if total <= 0.0:
        raise ValidationError("all classes have zero positives; aggregate undefined")
    ocs_vals = np.array([m.scores.ocs for m in items], dtype=np.float64)
    ucs_vals = np.array([m.scores.ucs for m in items], dtype=np.float64)
    ocs = float((w * ocs_vals).sum() / total)
    ucs = float((w * ucs_vals).sum() / total)
    return CalibrationScores.from_components(ocs, ucs, scope=scope, weight=total)


def pooled_reliability(
    d: EvalDataset, probs: np.ndarray, m_bins: int, scope: str = "pooled"
) -> ReliabilityCurve:
    """Pool all N*C (sample, class) pairs into a single binary binning.

    This is the curve drawn in reliability diagrams; the weighted per-class
    scores remain the tabulated numbers.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != d.labels.shape:
        raise ValidationError(
            f"shape mismatch: probs {probs.shape}, labels {d.labels.shape}"
        )
    counts, conf_sums, pos_sums = _bin_sums(probs.ravel(), d.labels.ravel(), m_bins)
    return _curve_from_sums(counts, conf_sums, pos_sums, m_bins, scope)
