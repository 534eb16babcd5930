"""Clustering of subject-days and concentration-based evaluation.

Clusterings are scored by class concentration (dominant-label fraction per
cluster, size-weighted) and subject concentration (same, counting each
subject once).  Significance comes from clustering random distance
matrices: symmetric, zero-diagonal, entries i.i.d. uniform on
[0, max(observed distance)].  The empirical CDF over those null
concentrations gives p = 1 - ECDF(observed); samples equal to the observed
value count toward the ECDF.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .cluster import cut_to_n, ward_cluster
from .matrix import DayId, DistanceMatrix
from .mismatch import mismatch_matrix
from .symbolize import SymbolVector


@dataclass
class ClusterAssignment:
    n: int
    ids: list[DayId]
    labels: np.ndarray  # cluster index per id, in [0, n)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.ids) != self.labels.size:
            raise ValueError("ids and labels disagree")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n):
            raise ValueError("cluster indices out of range")

    def assignment(self) -> dict[tuple[str, int], int]:
        return {i.key(): int(c) for i, c in zip(self.ids, self.labels)}

    def members(self, cluster: int) -> list[DayId]:
        return [i for i, c in zip(self.ids, self.labels) if c == cluster]


def cluster_subject_days(dm: DistanceMatrix, n: int) -> ClusterAssignment:
    """Ward agglomeration of the distance matrix, cut to exactly n clusters."""
    q = len(dm)
    if n < 1 or n > q:
        raise ValueError(f"cannot form {n} clusters from {q} subject-days")
    dend = ward_cluster(dm.values)
    labels = cut_to_n(dend, n)
    return ClusterAssignment(n=n, ids=list(dm.ids), labels=labels)


def _dominant(counter: Counter) -> tuple[str, int]:
    """Dominant label; ties resolve to the lexicographically first class."""
    label, count = min(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    return label, count


def class_concentration(members: list[DayId]) -> float:
    """Dominant-label fraction among a cluster's subject-days."""
    if not members:
        raise ValueError("empty cluster")
    counts = Counter(m.class_label for m in members)
    return max(counts.values()) / len(members)


def subject_concentration(members: list[DayId]) -> float:
    """Dominant-label fraction among unique (subject, label) pairs."""
    if not members:
        raise ValueError("empty cluster")
    unique = {(m.subject_id, m.class_label) for m in members}
    counts = Counter(label for _, label in unique)
    return max(counts.values()) / len(unique)


def total_concentration(assign: ClusterAssignment, metric: str = "class") -> float:
    """Size-weighted mean of per-cluster concentrations (weights |c_i| / Q).

    The division by Q happens once at the end so that singleton clusterings
    (n = Q) score exactly 1.0.  For the class metric the numerator is the
    integer count of dominant-label members across clusters.
    """
    if metric not in ("class", "subject"):
        raise ValueError(f"unknown concentration metric {metric!r}")
    q = len(assign.ids)
    total = 0.0
    for c in range(assign.n):
        members = assign.members(c)
        if not members:
            continue
        if metric == "class":
            total += max(Counter(m.class_label for m in members).values())
        else:
            total += subject_concentration(members) * len(members)
    return total / q


def _labels_concentration(cluster_labels: np.ndarray, class_labels: list[str]) -> float:
    """total class concentration from parallel label arrays (hot path)."""
    q = len(class_labels)
    total = 0
    for c in np.unique(cluster_labels):
        idx = np.nonzero(cluster_labels == c)[0]
        counts = Counter(class_labels[i] for i in idx)
        total += max(counts.values())
    return total / q


# -- RRDM significance ------------------------------------------------------


@dataclass
class RrdmResult:
    observed: float
    p_value: float
    samples: np.ndarray
    trials: int

    @property
    def p_display(self) -> str:
        if self.p_value == 0.0:
            return f"< {1.0 / self.trials:g}"
        return f"{self.p_value:g}"


def _random_distance_matrix(rng: np.random.Generator, q: int, dmax: float) -> np.ndarray:
    vals = np.zeros((q, q))
    iu = np.triu_indices(q, k=1)
    draws = rng.uniform(0.0, dmax, size=iu[0].size)
    vals[iu] = draws
    vals.T[iu] = draws
    return vals


def null_concentrations(
    dmax: float,
    class_labels: list[str],
    n_values: list[int],
    trials: int,
    seed,
) -> np.ndarray:
    """(trials, len(n_values)) total class concentrations of random matrices.

    Each trial draws one matrix, agglomerates once, and cuts at every
    requested cluster count.  Trial seeds are spawned from the master seed,
    so results do not depend on evaluation order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    q = len(class_labels)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(trials)
    out = np.empty((trials, len(n_values)))
    for t, child in enumerate(children):
        rng = np.random.default_rng(child)
        vals = _random_distance_matrix(rng, q, dmax)
        dend = ward_cluster(vals)
        for ni, n in enumerate(n_values):
            labels = cut_to_n(dend, n)
            out[t, ni] = _labels_concentration(labels, class_labels)
    return out


def rrdm_significance(
    dm: DistanceMatrix, n: int, trials: int = 5000, seed=0
) -> RrdmResult:
    """p-value of the observed total class concentration against the null."""
    assign = cluster_subject_days(dm, n)
    observed = total_concentration(assign, "class")
    dmax = float(dm.values.max())
    samples = null_concentrations(dmax, dm.labels(), [n], trials, seed)[:, 0]
    p = 1.0 - float(np.count_nonzero(samples <= observed)) / trials
    return RrdmResult(observed=observed, p_value=p, samples=samples, trials=trials)


# -- reports ----------------------------------------------------------------


@dataclass
class ClusterStats:
    size: int
    class_concentration: float
    subject_concentration: float
    dominant_label: str
    class_counts: dict[str, int]


@dataclass
class ConcentrationReport:
    n: int
    clusters: list[ClusterStats]
    total_class_conc: float
    total_subj_conc: float
    p_value: float | None = None
    trials: int | None = None
    rrdm_samples: np.ndarray | None = None  # null concentrations, for ECDF dumps

    @property
    def p_display(self) -> str | None:
        if self.p_value is None:
            return None
        if self.p_value == 0.0 and self.trials:
            return f"< {1.0 / self.trials:g}"
        return f"{self.p_value:g}"

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "total_class_concentration": self.total_class_conc,
            "total_subject_concentration": self.total_subj_conc,
            "p_value": self.p_value,
            "p_display": self.p_display,
            "trials": self.trials,
            "clusters": [
                {
                    "size": c.size,
                    "class_concentration": c.class_concentration,
                    "subject_concentration": c.subject_concentration,
                    "dominant_label": c.dominant_label,
                    "class_counts": c.class_counts,
                }
                for c in self.clusters
            ],
        }


def evaluate_clustering(
    dm: DistanceMatrix, n: int, trials: int | None = None, seed=0
) -> ConcentrationReport:
    """Cluster, score, and (optionally) test significance in one shot."""
    assign = cluster_subject_days(dm, n)
    clusters = []
    for c in range(n):
        members = assign.members(c)
        if not members:
            continue
        counts = Counter(m.class_label for m in members)
        dominant, _ = _dominant(counts)
        clusters.append(
            ClusterStats(
                size=len(members),
                class_concentration=class_concentration(members),
                subject_concentration=subject_concentration(members),
                dominant_label=dominant,
                class_counts=dict(sorted(counts.items())),
            )
        )
    report = ConcentrationReport(
        n=n,
        clusters=clusters,
        total_class_conc=total_concentration(assign, "class"),
        total_subj_conc=total_concentration(assign, "subject"),
    )
    if trials is not None:
        rrdm = rrdm_significance(dm, n, trials, seed)
        report.p_value = rrdm.p_value
        report.trials = trials
        report.rrdm_samples = rrdm.samples
    return report


# -- sensitivity sweep --------------------------------------------------------


@dataclass
class SweepRow:
    n: int
    concentration: dict[str, float]
    p_value: dict[str, float]
    threshold_p05: dict[str, float]
    threshold_p01: dict[str, float]
    d: float | None = None


@dataclass
class SweepResult:
    rows: list[SweepRow]
    d_pair: tuple[str, str] | None = None
    argmax_d_n: int | None = None
    selected_n: int | None = None
    d_halfwidth: float | None = None
    notes: dict = field(default_factory=dict)


def sensitivity_sweep(
    dms: dict[str, DistanceMatrix],
    n_values: list[int],
    trials: int = 5000,
    seed=0,
    d_pair: tuple[str, str] = ("PreTx/Control", "PostTx/Control"),
) -> SweepResult:
    """Concentrations, null thresholds and the pre/post gap across cluster counts.

    d(n) is the concentration difference between the two comparisons in
    ``d_pair`` (when both are present).  The selected cluster count is the
    smallest n whose d is within the null-derived 95% half-width of the
    maximum d; that operationalizes "not significantly lower than max(d)".
    """
    n_values = sorted(set(int(n) for n in n_values))
    if not n_values:
        raise ValueError("n_values must be nonempty")
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    comparison_seeds = base.spawn(max(1, len(dms)))
    observed: dict[str, dict[int, float]] = {}
    nulls: dict[str, np.ndarray] = {}
    for idx, (name, dm) in enumerate(dms.items()):
        q = len(dm)
        ns = [n for n in n_values if n <= q]
        dend = ward_cluster(dm.values)
        labels_of = {n: cut_to_n(dend, n) for n in ns}
        observed[name] = {
            n: _labels_concentration(labels_of[n], dm.labels()) for n in ns
        }
        nulls[name] = null_concentrations(
            float(dm.values.max()), dm.labels(), ns, trials, comparison_seeds[idx]
        )

    rows = []
    have_d = d_pair[0] in dms and d_pair[1] in dms
    for n in n_values:
        conc, pval, thr05, thr01 = {}, {}, {}, {}
        for name in dms:
            if n not in observed[name]:
                continue
            ni = [m for m in n_values if m <= len(dms[name])].index(n)
            samples = nulls[name][:, ni]
            conc[name] = observed[name][n]
            pval[name] = 1.0 - float(np.count_nonzero(samples <= conc[name])) / trials
            thr05[name] = float(np.quantile(samples, 0.95))
            thr01[name] = float(np.quantile(samples, 0.99))
        d = None
        if have_d and d_pair[0] in conc and d_pair[1] in conc:
            d = conc[d_pair[0]] - conc[d_pair[1]]
        rows.append(
            SweepRow(
                n=n,
                concentration=conc,
                p_value=pval,
                threshold_p05=thr05,
                threshold_p01=thr01,
                d=d,
            )
        )

    result = SweepResult(rows=rows, d_pair=d_pair if have_d else None)
    d_rows = [r for r in rows if r.d is not None]
    if d_rows:
        best = max(d_rows, key=lambda r: r.d)
        result.argmax_d_n = best.n
        pre_ns = [n for n in n_values if n <= len(dms[d_pair[0]])]
        post_ns = [n for n in n_values if n <= len(dms[d_pair[1]])]
        if best.n in pre_ns and best.n in post_ns:
            d_null = (
                nulls[d_pair[0]][:, pre_ns.index(best.n)]
                - nulls[d_pair[1]][:, post_ns.index(best.n)]
            )
            lo, hi = np.quantile(d_null, [0.025, 0.975])
            half = float(hi - lo) / 2.0
            result.d_halfwidth = half
            for r in d_rows:
                if r.d >= best.d - half:
                    result.selected_n = r.n
                    break
        result.notes["selection_rule"] = (
            "smallest n with d within the null 95% half-width of max d"
        )
    return result


# -- intra-subject comparison -------------------------------------------------


def intra_subject_compare(
    vectors: list[SymbolVector],
    n: int = 3,
    trials: int = 5000,
    seed=0,
    band_radius_frac: float = 0.1,
    return_matrices: bool = False,
):
    """Per-patient PreTx vs PostTx clustering at a fixed cluster count.

    Each patient needs at least two days in each condition and at least n
    days overall.  Returns {patient: ConcentrationReport}; with
    ``return_matrices`` also the per-patient mismatch matrices.
    """
    by_subject: dict[str, list[SymbolVector]] = {}
    for v in vectors:
        if v.class_label in ("PreTx", "PostTx"):
            by_subject.setdefault(v.subject_id, []).append(v)
    reports: dict[str, ConcentrationReport] = {}
    matrices: dict[str, DistanceMatrix] = {}
    subjects = sorted(by_subject)
    children = np.random.SeedSequence(seed).spawn(max(1, len(subjects)))
    for child, subject in zip(children, subjects):
        days = by_subject[subject]
        n_pre = sum(1 for v in days if v.class_label == "PreTx")
        n_post = sum(1 for v in days if v.class_label == "PostTx")
        if len(days) < n:
            raise ValueError(
                f"patient {subject} has {len(days)} days, fewer than {n} clusters"
            )
        if n_pre < 2 or n_post < 2:
            raise ValueError(
                f"patient {subject} needs >=2 days per condition "
                f"(has {n_pre} PreTx, {n_post} PostTx)"
            )
        dm = mismatch_matrix(days, band_radius_frac)
        matrices[subject] = dm
        reports[subject] = evaluate_clustering(dm, n, trials=trials, seed=child)
    if return_matrices:
        return reports, matrices
    return reports
