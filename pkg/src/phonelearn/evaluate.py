"""Evaluation: prediction records, success tables, rank agreement, spread.

A prediction record is one scored test event.  Aggregations: per-phone
success tables, confusion matrices, Kendall tau-b rank agreement between
success profiles, and median absolute deviation summaries across sessions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .corpus import FrameDataset, PhoneInventory
from .errors import DataError, UndefinedResultError

#: 1 / Phi^-1(3/4): rescales the MAD of a normal sample to its SD.
MAD_CONSISTENCY = float(1.0 / scipy.stats.norm.ppf(0.75))


@dataclass(frozen=True)
class PredictionRecord:
    """One scored test event."""

    trial_index: int
    word_id: str
    true_phone: str
    predicted_phone: str
    score: float
    learner: str
    regime: str
    session: int | None = None
    known: bool | None = None


def predict_records(estimator, dataset: FrameDataset, learner: str,
                    regime: str, session: int | None = None,
                    known_words=None) -> list[PredictionRecord]:
    """Run a fitted classifier over a dataset, one record per frame.

    ``known_words``, when given, marks each record as coming from a word
    inside (known) or outside (new) that set.
    """
    labels, scores = estimator.predict_with_score(dataset.cues)
    true = dataset.phone_labels
    records = []
    for i in range(len(dataset)):
        known = None
        if known_words is not None:
            known = dataset.word_ids[i] in known_words
        records.append(PredictionRecord(
            trial_index=int(dataset.trial_index[i]),
            word_id=dataset.word_ids[i],
            true_phone=true[i],
            predicted_phone=labels[i],
            score=float(scores[i]),
            learner=learner,
            regime=regime,
            session=session,
            known=known,
        ))
    return records


@dataclass(frozen=True)
class SuccessTable:
    """Per-phone success percentages for one (learner, regime) cell."""

    labels: tuple[str, ...]
    per_phone: np.ndarray = field(repr=False)   # percent, NaN when absent
    counts: np.ndarray = field(repr=False)
    overall: float
    sampling_probability: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, self.per_phone.tolist()))


def success_rates(records, inventory: PhoneInventory | None = None,
                  sampling_probability=None) -> SuccessTable:
    """Per-phone and overall percent-correct over prediction records.

    Phones of the inventory with no test records get NaN (absent), and do
    not contribute to the overall rate.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot compute success rates without records")
    if inventory is None:
        labels = tuple(sorted({r.true_phone for r in records}))
        index = {lab: i for i, lab in enumerate(labels)}
    else:
        labels = inventory.labels
        index = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros(len(labels), dtype=np.int64)
    hits = np.zeros(len(labels), dtype=np.int64)
    for r in records:
        try:
            i = index[r.true_phone]
        except KeyError:
            raise DataError(
                f"record phone {r.true_phone!r} not in inventory") from None
        counts[i] += 1
        hits[i] += r.true_phone == r.predicted_phone
    per_phone = np.full(len(labels), np.nan)
    present = counts > 0
    per_phone[present] = 100.0 * hits[present] / counts[present]
    overall = 100.0 * hits.sum() / counts.sum()
    sp = None
    if sampling_probability is not None:
        sp = np.asarray(sampling_probability, dtype=np.float64)
        if sp.shape != (len(labels),):
            raise ValueError("sampling_probability must have one entry per "
                             "inventory phone")
    return SuccessTable(labels=labels, per_phone=per_phone, counts=counts,
                        overall=float(overall), sampling_probability=sp)


def write_success_csv(table: SuccessTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        cols = ["phone", "n", "success_pct"]
        if table.sampling_probability is not None:
            cols.append("sampling_pct")
        writer.writerow(cols)
        for i, lab in enumerate(table.labels):
            row = [lab, int(table.counts[i]), "%.17g" % table.per_phone[i]]
            if table.sampling_probability is not None:
                row.append("%.17g" % table.sampling_probability[i])
            writer.writerow(row)


def confusion_matrix(records, inventory: PhoneInventory) -> tuple[np.ndarray, np.ndarray]:
    """(counts, row-normalized) confusion matrices in inventory order.

    ``counts[i, j]`` is the number of records with true phone i predicted
    as phone j.  Rows of the normalized matrix sum to 1 where the true
    phone occurs at all, and stay all-zero otherwise.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot compute a confusion matrix without records")
    n = len(inventory)
    counts = np.zeros((n, n), dtype=np.int64)
    for r in records:
        counts[inventory.index(r.true_phone),
               inventory.index(r.predicted_phone)] += 1
    row_sums = counts.sum(axis=1, keepdims=True)
    normalized = np.divide(counts, row_sums, where=row_sums > 0,
                           out=np.zeros((n, n)))
    return counts, normalized


def write_confusion_csv(matrix: np.ndarray, inventory: PhoneInventory,
                        path) -> None:
    """Write a confusion matrix with phone-labeled header row and column."""
    matrix = np.asarray(matrix)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true"] + list(inventory.labels))
        integral = np.issubdtype(matrix.dtype, np.integer)
        for i, lab in enumerate(inventory.labels):
            vals = [int(v) if integral else "%.17g" % v for v in matrix[i]]
            writer.writerow([lab] + vals)


def _strict_inversions(values) -> int:
    """Count pairs i < j with values[i] > values[j] by merge counting."""
    a = list(values)
    n = len(a)
    buf = a[:]
    count = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    count += mid - i
                    buf[k] = a[j]
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            while i < mid:
                buf[k] = a[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = a[j]
                j += 1
                k += 1
        a, buf = buf, a
        width *= 2
    return count


def _tied_pairs(values) -> int:
    _, counts = np.unique(values, return_counts=True)
    return sum(int(t) * (int(t) - 1) // 2 for t in counts)


def kendall_tau_b(x, y) -> float:
    """Kendall rank correlation with the tie-aware tau-b normalizer.

    Concordant/discordant and tie counts are exact integers (discordance
    by merge counting over the y values sorted by (x, y)), so perfect
    agreement returns exactly 1.0 and perfect reversal exactly -1.0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if x.shape[0] < 2:
        raise UndefinedResultError("tau-b needs at least 2 observations")
    if np.isnan(x).any() or np.isnan(y).any():
        raise UndefinedResultError("tau-b input contains NaN")
    n = x.shape[0]
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n0 = n * (n - 1) // 2
    n1 = _tied_pairs(x)
    n2 = _tied_pairs(y)
    denom_sq = (n0 - n1) * (n0 - n2)
    if denom_sq == 0:
        raise UndefinedResultError(
            "tau-b is undefined when one ranking is completely tied")
    same = (np.diff(xs) == 0) & (np.diff(ys) == 0)
    starts = np.concatenate(([0], np.flatnonzero(~same) + 1, [n]))
    joint = sum(int(t) * (int(t) - 1) // 2 for t in np.diff(starts))
    discordant = _strict_inversions(ys)
    con_minus_dis = n0 - n1 - n2 + joint - 2 * discordant
    root = math.isqrt(denom_sq)
    if root * root == denom_sq:
        tau = con_minus_dis / root
    else:
        tau = con_minus_dis / math.sqrt(denom_sq)
    return max(-1.0, min(1.0, tau))


def mad(values, consistency: bool = False) -> float:
    """Median absolute deviation around the median.

    With ``consistency=True`` the raw MAD is multiplied by
    1/Phi^-1(3/4) ~= 1.4826 so it estimates the SD under normality.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] < 1:
        raise ValueError("mad needs a non-empty 1-d array")
    if np.isnan(values).any():
        raise UndefinedResultError("mad input contains NaN")
    raw = float(np.median(np.abs(values - np.median(values))))
    return raw * MAD_CONSISTENCY if consistency else raw


@dataclass(frozen=True)
class SessionSummary:
    """Cross-session consistency summary."""

    labels: tuple[str, ...]
    success_by_session: np.ndarray = field(repr=False)  # (n_sessions, n_phones)
    session_medians: np.ndarray = field(repr=False)
    per_phone_mad: np.ndarray = field(repr=False)
    flagged_sessions: tuple[int, ...]


def session_summary(tables: list[SuccessTable]) -> SessionSummary:
    """Summarize per-session success tables.

    Produces the median success over phones per session, the MAD of each
    phone's success across sessions, and flags sessions whose median drops
    below 1 percent (collapsed runs).
    """
    if len(tables) < 2:
        raise ValueError("need at least 2 sessions to summarize")
    labels = tables[0].labels
    if any(t.labels != labels for t in tables):
        raise ValueError("session tables use different inventories")
    grid = np.stack([t.per_phone for t in tables])
    medians = np.full(len(tables), np.nan)
    for s in range(len(tables)):
        row = grid[s][~np.isnan(grid[s])]
        if row.size:
            medians[s] = np.median(row)
    per_phone_mad = np.full(len(labels), np.nan)
    for j in range(len(labels)):
        col = grid[:, j][~np.isnan(grid[:, j])]
        if col.size:
            per_phone_mad[j] = mad(col)
    flagged = tuple(int(s) for s in range(len(tables)) if medians[s] < 1.0)
    return SessionSummary(labels=labels, success_by_session=grid,
                          session_medians=medians,
                          per_phone_mad=per_phone_mad,
                          flagged_sessions=flagged)


_TIDY_COLUMNS = ("phone", "learner", "regime", "session", "n", "success_pct",
                 "confidence_mean")


def tidy_rows(records) -> list[dict]:
    """Aggregate records by (phone, learner, regime, session)."""
    groups: dict[tuple, list[PredictionRecord]] = {}
    for r in records:
        groups.setdefault(
            (r.learner, r.regime, r.session, r.true_phone), []).append(r)
    rows = []
    for key in sorted(groups,
                      key=lambda k: (k[0], k[1], -1 if k[2] is None else k[2],
                                     k[3])):
        learner, regime, session, phone = key
        members = groups[key]
        hits = sum(m.true_phone == m.predicted_phone for m in members)
        rows.append({
            "phone": phone,
            "learner": learner,
            "regime": regime,
            "session": session,
            "n": len(members),
            "success_pct": 100.0 * hits / len(members),
            "confidence_mean": float(np.mean([m.score for m in members])),
        })
    return rows


def export_tidy(records, path) -> None:
    """Write aggregated records as a tidy CSV, one row per cell.

    Columns: phone, learner, regime, session, n, success_pct,
    confidence_mean.  Floats carry 17 significant digits so reading the
    file back reproduces the exact values.
    """
    rows = tidy_rows(records)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# columns: " + ",".join(_TIDY_COLUMNS) + "\n")
        writer = csv.writer(fh)
        writer.writerow(_TIDY_COLUMNS)
        for row in rows:
            writer.writerow([
                row["phone"], row["learner"], row["regime"],
                "" if row["session"] is None else row["session"],
                row["n"],
                "%.17g" % row["success_pct"],
                "%.17g" % row["confidence_mean"],
            ])


def read_tidy(path) -> list[dict]:
    """Read a tidy CSV written by :func:`export_tidy`."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.reader(lines)
        header = next(reader, None)
        if header is None or tuple(header) != _TIDY_COLUMNS:
            raise DataError(f"{path}: not a tidy results file")
        for row in reader:
            rows.append({
                "phone": row[0],
                "learner": row[1],
                "regime": row[2],
                "session": None if row[3] == "" else int(row[3]),
                "n": int(row[4]),
                "success_pct": float(row[5]),
                "confidence_mean": float(row[6]),
            })
    return rows
