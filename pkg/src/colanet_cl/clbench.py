"""Sequential-task orchestration and continual-learning metrics.

A sequential run over tasks 1..n produces a *degradation profile*: a
lower-triangular matrix ``a[k][j]`` holding accuracy on task j's test set
after training through task k (j <= k). From a profile the standard
continual-learning metrics are computed:

* ``AA_k``   — average accuracy: mean of row k over tasks 1..k.
* ``AIA_k``  — average incremental accuracy: running mean of AA_1..AA_k.
* ``f_jk``   — per-task forgetting: best past accuracy on task j minus the
  current accuracy (not clamped, so a task that improved contributes a
  negative value).
* ``FM_k``   — forgetting measure: mean of f_jk over previous tasks.
* ``BWT_k``  — backward transfer: mean of (a[k][j] - a[j][j]); negative
  values indicate forgetting.
* ``FWT_k``  — forward transfer: mean of (a[j][j] - baseline_j) for
  j = 2..k, where baseline_j is a fresh model trained on task j alone.

Accuracies are stored as fractions in [0, 1] and rendered as percentages
with two decimals in CSV/text reports.

Aggregate summaries (the avg/max/std rows) follow the conventions of the
bundled reference summaries, which were verified cell-by-cell against the
reference degradation profiles:

* The k=1 entries of FM/BWT/FWT, where the metric is undefined, enter the
  aggregated series as zero.
* ``std`` is the population standard deviation.
* The ``max`` row reports the series extreme: the maximum for AA/AIA/FM/FWT
  and the minimum (strongest backward influence) for BWT.
* The summary's AIA row aggregates the *padded* variant (see
  ``average_incremental_accuracy_padded``), which counts tasks not yet
  trained as zero accuracy; the plain running-mean-of-AA variant is also
  computed and reported in the metrics CSV.
* Rendered values are truncated (not rounded) to two decimals.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .dataset import TaskSpec

METRIC_NAMES = ("AA", "AIA", "FM", "BWT")


class ProfileFormatError(Exception):
    """Raised when a profile CSV fails to parse; message carries row/col."""


class SequenceError(Exception):
    """Raised when a model adapter fails mid-sequence.

    Attributes:
        task_index: 1-based index of the task being processed.
    """

    def __init__(self, task_index: int, stage: str, cause: Exception):
        self.task_index = task_index
        super().__init__(f"task {task_index} ({stage}): {cause}")


@dataclass(frozen=True)
class DegradationProfile:
    """Lower-triangular accuracy record of a sequential run.

    Attributes:
        a: float64 matrix of shape (k, k); ``a[i, j]`` (0-based) holds
            accuracy on task j+1 after training through task i+1, as a
            fraction in [0, 1]; the upper triangle is NaN.
    """

    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("profile matrix must be square")
        lower = np.tril_indices(a.shape[0])
        vals = a[lower]
        if np.isnan(vals).any():
            raise ValueError("profile lower triangle must be fully populated")
        if (vals < 0).any() or (vals > 1).any():
            raise ValueError("accuracies must be fractions in [0, 1]")
        upper = np.triu_indices(a.shape[0], k=1)
        if a[upper].size and not np.isnan(a[upper]).all():
            raise ValueError("profile upper triangle must be absent (NaN)")
        object.__setattr__(self, "a", a)

    @property
    def k(self) -> int:
        """Number of tasks recorded."""
        return self.a.shape[0]

    def accuracy(self, after_task: int, on_task: int) -> float:
        """Return a(k, j) with 1-based indices."""
        return float(self.a[after_task - 1, on_task - 1])


@dataclass(frozen=True)
class MetricsReport:
    """All metric series computed from one degradation profile.

    Series are indexed by k = 1..n (position 0 is k=1). The undefined k=1
    entries of fm/bwt/fwt are stored as 0.0. ``fwt`` and ``baseline_acc``
    are None unless a baseline accuracy series was supplied.
    """

    n: int
    aa: np.ndarray
    aia: np.ndarray
    aia_padded: np.ndarray
    fm: np.ndarray
    bwt: np.ndarray
    fwt: np.ndarray | None = None
    baseline_acc: np.ndarray | None = None


def average_accuracy(p: DegradationProfile, k: int) -> float:
    """Average accuracy after training through task k (mean of row k).

    Args:
        p: Degradation profile.
        k: 1-based training-iteration index.

    Returns:
        Mean of ``a[k][1..k]`` as a fraction.
    """
    _check_k(p, k)
    return float(p.a[k - 1, :k].mean())


def average_incremental_accuracy(p: DegradationProfile, k: int) -> float:
    """Running mean of AA_1..AA_k.

    Args:
        p: Degradation profile.
        k: 1-based training-iteration index.

    Returns:
        ``mean(AA_1, ..., AA_k)`` as a fraction; equals AA_1 at k=1.
    """
    _check_k(p, k)
    return float(np.mean([average_accuracy(p, i) for i in range(1, k + 1)]))


def average_accuracy_padded(p: DegradationProfile, k: int) -> float:
    """Row-k accuracy averaged over the full task roster.

    Like ``average_accuracy`` but divides by the total task count n rather
    than by k, so tasks not yet trained count as zero accuracy. This is the
    row statistic underlying the reference AIA summaries.
    """
    _check_k(p, k)
    return float(p.a[k - 1, :k].sum() / p.k)


def average_incremental_accuracy_padded(p: DegradationProfile, k: int) -> float:
    """Running mean of the padded average accuracy over iterations 1..k."""
    _check_k(p, k)
    return float(np.mean([average_accuracy_padded(p, i) for i in range(1, k + 1)]))


def per_task_forgetting(p: DegradationProfile, k: int) -> np.ndarray:
    """Per-task forgetting values f_jk for j = 1..k-1.

    ``f_jk = max_{i < k} a[i][j] - a[k][j]``: the gap between the best past
    accuracy on task j and the current one. Not clamped at zero, so a task
    whose accuracy improved contributes a negative value.

    Args:
        p: Degradation profile.
        k: 1-based training-iteration index (k >= 2 for a non-empty result).

    Returns:
        float64 array of length k-1 (empty at k=1).
    """
    _check_k(p, k)
    if k == 1:
        return np.empty(0, dtype=np.float64)
    past = p.a[: k - 1, : k - 1]
    cols = np.arange(k - 1)
    best_past = np.array([np.nanmax(past[j:, j]) for j in cols])
    return best_past - p.a[k - 1, : k - 1]


def forgetting_measure(p: DegradationProfile, k: int) -> float:
    """Forgetting measure FM_k: mean per-task forgetting over tasks < k.

    Args:
        p: Degradation profile.
        k: 1-based training-iteration index.

    Returns:
        Mean of the f_jk values; 0.0 at k=1 where the metric is undefined.
    """
    values = per_task_forgetting(p, k)
    if values.size == 0:
        return 0.0
    return float(values.mean())


def backward_transfer(p: DegradationProfile, k: int) -> float:
    """Backward transfer BWT_k: mean of (a[k][j] - a[j][j]) over j < k.

    Negative values indicate forgetting; 0.0 at k=1 where the metric is
    undefined.
    """
    _check_k(p, k)
    if k == 1:
        return 0.0
    j = np.arange(k - 1)
    return float((p.a[k - 1, : k - 1] - p.a[j, j]).mean())


def forward_transfer(
    p: DegradationProfile, baseline_acc: np.ndarray, k: int
) -> float:
    """Forward transfer FWT_k against fresh-model baseline accuracies.

    ``FWT_k = mean over j = 2..k of (a[j][j] - baseline_j)`` where
    ``baseline_j`` is the accuracy of a freshly initialized model of the
    same architecture trained on task j alone.

    Args:
        p: Degradation profile.
        baseline_acc: Fractions of length >= k; entry j-1 is the fresh-model
            accuracy on task j.
        k: 1-based training-iteration index.

    Returns:
        FWT_k as a fraction; 0.0 at k=1 where the metric is undefined.
    """
    _check_k(p, k)
    baseline_acc = np.asarray(baseline_acc, dtype=np.float64)
    if len(baseline_acc) < k:
        raise ValueError("baseline accuracy series shorter than k")
    if k == 1:
        return 0.0
    j = np.arange(1, k)
    return float((p.a[j, j] - baseline_acc[1:k]).mean())


def compute_report(
    p: DegradationProfile, baseline_acc: np.ndarray | None = None
) -> MetricsReport:
    """Compute every metric series for a profile.

    Args:
        p: Degradation profile.
        baseline_acc: Optional fresh-model accuracy series enabling FWT.

    Returns:
        MetricsReport with series indexed k = 1..n.
    """
    n = p.k
    ks = range(1, n + 1)
    fwt = None
    if baseline_acc is not None:
        baseline_acc = np.asarray(baseline_acc, dtype=np.float64)
        fwt = np.array([forward_transfer(p, baseline_acc, k) for k in ks])
    return MetricsReport(
        n=n,
        aa=np.array([average_accuracy(p, k) for k in ks]),
        aia=np.array([average_incremental_accuracy(p, k) for k in ks]),
        aia_padded=np.array(
            [average_incremental_accuracy_padded(p, k) for k in ks]
        ),
        fm=np.array([forgetting_measure(p, k) for k in ks]),
        bwt=np.array([backward_transfer(p, k) for k in ks]),
        fwt=fwt,
        baseline_acc=baseline_acc,
    )


def summarize(report: MetricsReport) -> dict[str, dict[str, float]]:
    """Aggregate each metric series into avg/max/std rows.

    Follows the reference-summary conventions documented in the module
    docstring: undefined k=1 entries count as zero, std is the population
    standard deviation, the AIA row aggregates the padded variant, and the
    BWT extreme is the series minimum.

    Args:
        report: Metric series from ``compute_report``.

    Returns:
        Mapping metric name -> {"avg", "max", "std"} in fractions. Includes
        an "FWT" entry when the report carries one.
    """

    def rows(series: np.ndarray, extreme=np.max) -> dict[str, float]:
        return {
            "avg": float(series.mean()),
            "max": float(extreme(series)),
            "std": float(series.std()),
        }

    summary = {
        "AA": rows(report.aa),
        "AIA": rows(report.aia_padded),
        "FM": rows(report.fm),
        "BWT": rows(report.bwt, extreme=np.min),
    }
    if report.fwt is not None:
        summary["FWT"] = rows(report.fwt)
    return summary


def truncate_percent(fraction: float) -> float:
    """Render a fraction as a percentage truncated to two decimals.

    Truncation is toward zero, matching the reference summaries (e.g. a
    computed -1.1897 renders as -1.18). Values within 1e-6 of an exact
    two-decimal boundary are snapped to it first so binary floating-point
    noise cannot flip the truncation.
    """
    scaled = fraction * 100.0 * 100.0
    snapped = round(scaled)
    if abs(scaled - snapped) < 1e-6:
        scaled = snapped
    return math.trunc(scaled) / 100.0


def _check_k(p: DegradationProfile, k: int) -> None:
    if not 1 <= k <= p.k:
        raise ValueError(f"k must be in [1, {p.k}], got {k}")


# ---------------------------------------------------------------------------
# Sequential orchestration
# ---------------------------------------------------------------------------


def run_sequence(
    adapter, tasks: list[TaskSpec], state_dir: str | None = None
) -> DegradationProfile:
    """Train sequentially and evaluate on every task seen so far.

    For k = 1..n: load the checkpoint of iteration k-1 (when k > 1), train
    one epoch on task k, save the iteration-k checkpoint, then evaluate on
    tasks 1..k to fill profile row k. A run over n tasks therefore performs
    exactly n(n+1)/2 evaluations.

    Args:
        adapter: Model adapter exposing ``train_task(task)``,
            ``evaluate_task(task) -> float``, ``save(path)`` and
            ``load(path)``.
        tasks: The task stream (at least one task).
        state_dir: Directory for per-iteration checkpoints; a temporary
            directory is created when omitted.

    Returns:
        DegradationProfile of shape n x n.

    Raises:
        SequenceError: An adapter call failed; carries the task index.
    """
    if not tasks:
        raise ValueError("run_sequence requires at least one task")
    if state_dir is None:
        state_dir = tempfile.mkdtemp(prefix="clbench-state-")
    os.makedirs(state_dir, exist_ok=True)
    n = len(tasks)
    a = np.full((n, n), np.nan)

    def state_path(iteration: int) -> str:
        return os.path.join(state_dir, f"state_{iteration:03d}.bin")

    for k, task in enumerate(tasks, start=1):
        if k > 1:
            _run_stage(adapter.load, k, "load", state_path(k - 1))
        _run_stage(adapter.train_task, k, "train", task)
        _run_stage(adapter.save, k, "save", state_path(k))
        for j in range(1, k + 1):
            a[k - 1, j - 1] = _run_stage(
                adapter.evaluate_task, k, f"evaluate task {j}", tasks[j - 1]
            )
    return DegradationProfile(a)


def _run_stage(fn, task_index: int, stage: str, *args):
    try:
        return fn(*args)
    except Exception as exc:  # noqa: BLE001 - context is re-raised
        raise SequenceError(task_index, stage, exc) from exc


# ---------------------------------------------------------------------------
# CSV / text reports
# ---------------------------------------------------------------------------


def write_profile_csv(p: DegradationProfile, path: str) -> None:
    """Write a profile as CSV: header task_1..task_n, percent, blank upper.

    Args:
        p: Degradation profile.
        path: Output path (UTF-8, comma-separated, dot decimal).
    """
    n = p.k
    lines = [",".join(f"task_{j}" for j in range(1, n + 1))]
    for i in range(n):
        cells = [f"{p.a[i, j] * 100.0:.2f}" for j in range(i + 1)]
        cells += [""] * (n - i - 1)
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def read_profile_csv(path: str) -> DegradationProfile:
    """Parse a profile CSV written by ``write_profile_csv``.

    Values are percentages; blank cells form the upper triangle.

    Args:
        path: CSV path.

    Returns:
        DegradationProfile with fractions.

    Raises:
        ProfileFormatError: Structural problems, with row/column context.
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f if line.strip() != ""]
    if not lines:
        raise ProfileFormatError(f"{path}: empty profile")
    header = [h.strip() for h in lines[0].split(",")]
    n = len(header)
    expected_header = [f"task_{j}" for j in range(1, n + 1)]
    if header != expected_header:
        raise ProfileFormatError(
            f"{path}: row 1: header must be task_1..task_{n}, got {header}"
        )
    if len(lines) - 1 != n:
        raise ProfileFormatError(
            f"{path}: expected {n} data rows to match {n} header columns, "
            f"got {len(lines) - 1}"
        )
    a = np.full((n, n), np.nan)
    for i, line in enumerate(lines[1:], start=1):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != n:
            raise ProfileFormatError(
                f"{path}: row {i + 1}: expected {n} cells, got {len(cells)}"
            )
        for j, cell in enumerate(cells, start=1):
            if j <= i:
                if cell == "":
                    raise ProfileFormatError(
                        f"{path}: row {i + 1}, col {j}: "
                        "missing lower-triangle value"
                    )
                try:
                    value = float(cell)
                except ValueError:
                    raise ProfileFormatError(
                        f"{path}: row {i + 1}, col {j}: not a number: {cell!r}"
                    ) from None
                a[i - 1, j - 1] = value / 100.0
            elif cell != "":
                raise ProfileFormatError(
                    f"{path}: row {i + 1}, col {j}: "
                    "upper-triangle cell must be empty"
                )
    return DegradationProfile(a)


def write_metrics_csv(report: MetricsReport, path: str) -> None:
    """Write metric series as CSV (percent, two decimals).

    Columns: k, AA, AIA, AIA_padded, FM, BWT and FWT when available. The
    k=1 cells of FM/BWT/FWT are left empty because the metrics are
    undefined there.
    """
    cols = ["k", "AA", "AIA", "AIA_padded", "FM", "BWT"]
    series = {
        "AA": report.aa,
        "AIA": report.aia,
        "AIA_padded": report.aia_padded,
        "FM": report.fm,
        "BWT": report.bwt,
    }
    if report.fwt is not None:
        cols.append("FWT")
        series["FWT"] = report.fwt
    undefined_at_1 = {"FM", "BWT", "FWT"}
    lines = [",".join(cols)]
    for k in range(1, report.n + 1):
        cells = [str(k)]
        for name in cols[1:]:
            if k == 1 and name in undefined_at_1:
                cells.append("")
            else:
                cells.append(f"{series[name][k - 1] * 100.0:.2f}")
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def render_summary(report: MetricsReport) -> str:
    """Render the avg/max/std summary as aligned plain text.

    Values are percentages truncated to two decimals. For a single-task
    profile the FM/BWT/FWT rows read ``undefined``.
    """
    summary = summarize(report)
    names = list(summary.keys())
    lines = [f"{'metric':<8}{'avg':>10}{'max':>10}{'std':>10}"]
    for name in names:
        if report.n == 1 and name in ("FM", "BWT", "FWT"):
            lines.append(
                f"{name:<8}{'undefined':>10}{'undefined':>10}{'undefined':>10}"
            )
            continue
        row = summary[name]
        cells = "".join(
            f"{truncate_percent(row[stat]):>10.2f}" for stat in ("avg", "max", "std")
        )
        lines.append(f"{name:<8}{cells}")
    return "\n".join(lines) + "\n"
