"""Synthetic trial generation and design-stage follow-up simulation."""
from __future__ import annotations

import csv
import warnings as _warnings
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from ._parallel import parallel_map
from .distribution import PweModel, sample as pwe_sample
from .rng import derive_rng
from .survdata import SurvSample

__all__ = [
    "Sampler",
    "ArmModel",
    "TrialDesign",
    "TrialRecord",
    "TrialFrame",
    "simulate_trial",
    "sim_followup",
    "SimFollowup",
    "prop_above",
]

# a sampler hook draws n nonnegative times from an arbitrary distribution
Sampler = Callable[[int, np.random.Generator], np.ndarray]

FOLLOWUP_ENDPOINTS = ("cut", "drop_out", "death", "event")


@dataclass(frozen=True)
class ArmModel:
    """Event, drop-out, and death distributions for one group/stratum cell.

    Each entry is a :class:`PweModel` or a sampler hook ``f(n, rng)``;
    ``None`` means the outcome never occurs.
    """

    event: PweModel | Sampler
    dropout: PweModel | Sampler | None = None
    death: PweModel | Sampler | None = None


@dataclass(frozen=True)
class TrialDesign:
    """Enrollment, allocation, and outcome distributions for one trial.

    Enrollment is either a constant ``rand_rate`` (subjects/month) with
    ``total_sample``, or explicit per-month counts ``n_rand``. ``drop_rate``
    is the monthly drop-out probability, converted to an exponential hazard
    -log(1 - drop_rate) for cells without an explicit drop-out model.
    """

    rand_rate: float | None = None
    total_sample: int | None = None
    n_rand: tuple[int, ...] | None = None
    groups: tuple[tuple[str, float], ...] = (("all", 1.0),)
    strata: tuple[tuple[str, float], ...] = (("all", 1.0),)
    dists: ArmModel | Mapping = None  # type: ignore[assignment]
    drop_rate: float | None = None
    iid_allocation: bool = False

    def __post_init__(self):
        rate_form = self.rand_rate is not None or self.total_sample is not None
        curve_form = self.n_rand is not None
        if rate_form == curve_form:
            raise ValueError("specify either (rand_rate, total_sample) or n_rand, not both")
        if rate_form:
            if self.rand_rate is None or self.total_sample is None:
                raise ValueError("rate-form enrollment needs both rand_rate and total_sample")
            if self.rand_rate <= 0 or self.total_sample < 0:
                raise ValueError("rand_rate must be positive and total_sample nonnegative")
        else:
            counts = tuple(int(c) for c in self.n_rand)
            if any(c < 0 for c in counts):
                raise ValueError("n_rand counts must be nonnegative")
            object.__setattr__(self, "n_rand", counts)
        for name, pairs in (("groups", self.groups), ("strata", self.strata)):
            pairs = tuple((str(n), float(w)) for n, w in pairs)
            if not pairs or any(w <= 0 for _, w in pairs):
                raise ValueError(f"{name} must be nonempty with positive weights")
            object.__setattr__(self, name, pairs)
        if self.drop_rate is not None and not 0.0 <= self.drop_rate < 1.0:
            raise ValueError("drop_rate must lie in [0, 1)")
        if self.dists is None:
            raise ValueError("dists is required (an ArmModel or a mapping by group/stratum)")
        for g, _ in self.groups:
            for s, _ in self.strata:
                self.cell_model(g, s)

    @property
    def total(self) -> int:
        return int(self.total_sample) if self.n_rand is None else int(sum(self.n_rand))

    def cell_model(self, group: str, stratum: str) -> ArmModel:
        """Distributions for one cell, with the drop_rate fallback applied."""
        d = self.dists
        if not isinstance(d, ArmModel):
            if (group, stratum) in d:
                d = d[(group, stratum)]
            elif group in d:
                d = d[group]
            else:
                raise ValueError(f"no distributions for group={group!r}, stratum={stratum!r}")
        dropout = d.dropout
        if dropout is None and self.drop_rate is not None and self.drop_rate > 0.0:
            dropout = PweModel((-np.log1p(-self.drop_rate),))
        return ArmModel(event=d.event, dropout=dropout, death=d.death)


@dataclass(frozen=True)
class TrialRecord:
    id: int
    group: str
    stratum: str
    randT: float
    eventT: float
    dropT: float
    deathT: float
    followT: float
    followT_abs: float
    event: int
    censor: int
    censor_reason: str | None


@dataclass(frozen=True)
class TrialFrame:
    """Columnar trial dataset; one entry per subject in every array."""

    id: np.ndarray
    group: np.ndarray
    stratum: np.ndarray
    randT: np.ndarray
    eventT: np.ndarray
    dropT: np.ndarray
    deathT: np.ndarray
    followT: np.ndarray
    followT_abs: np.ndarray
    event: np.ndarray
    censor: np.ndarray
    censor_reason: np.ndarray

    def __len__(self) -> int:
        return len(self.id)

    def rows(self) -> Iterator[TrialRecord]:
        for i in range(len(self)):
            yield TrialRecord(
                id=int(self.id[i]),
                group=str(self.group[i]),
                stratum=str(self.stratum[i]),
                randT=float(self.randT[i]),
                eventT=float(self.eventT[i]),
                dropT=float(self.dropT[i]),
                deathT=float(self.deathT[i]),
                followT=float(self.followT[i]),
                followT_abs=float(self.followT_abs[i]),
                event=int(self.event[i]),
                censor=int(self.censor[i]),
                censor_reason=self.censor_reason[i],
            )

    def to_surv_sample(self) -> SurvSample:
        return SurvSample(
            time=self.followT,
            event=self.event,
            rand_time=self.randT,
            follow_abs_time=self.followT_abs,
            censor_reason=self.censor_reason,
            ids=self.id,
        )

    def write_csv(self, path):
        """CSV with one row per subject; infinities as the literal ``Inf``."""

        def fmt(v):
            if isinstance(v, float):
                return "Inf" if np.isposinf(v) else repr(v)
            return "NA" if v is None else v

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["ID", "randT", "eventT", "dropT", "deathT", "censor_reason",
                 "event", "followT", "followT_abs", "censor", "group", "stratum"]
            )
            for r in self.rows():
                w.writerow(
                    [r.id, fmt(r.randT), fmt(r.eventT), fmt(r.dropT), fmt(r.deathT),
                     fmt(r.censor_reason), r.event, fmt(r.followT), fmt(r.followT_abs),
                     r.censor, r.group, r.stratum]
                )


def _draw(d, n: int, rng: np.random.Generator) -> np.ndarray:
    if d is None:
        return np.full(n, np.inf)
    if isinstance(d, PweModel):
        return pwe_sample(d, n, rng)
    out = np.asarray(d(n, rng), dtype=float)
    if out.shape != (n,):
        raise ValueError("sampler hook must return exactly n values")
    if np.any(np.isnan(out)) or np.any(out < 0.0):
        raise ValueError("sampler hook returned negative or NaN times")
    return out


def _allocate_exact(month: np.ndarray, weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Exact allocation to weighted cells, month block by month block.

    Each block tops every cell up to its cumulative quota (largest-remainder
    rounding, ties broken at random), so running totals never drift more
    than one subject from the target ratio.
    """
    w = weights / weights.sum()
    cell = np.empty(len(month), dtype=int)
    alloc = np.zeros(len(w))
    done = 0
    for m in np.unique(month):
        block = np.flatnonzero(month == m)
        need = w * (done + len(block)) - alloc
        base = np.maximum(np.floor(need).astype(int), 0)
        short = len(block) - base.sum()
        order = np.lexsort((rng.random(len(w)), -(need - base)))
        counts = base.copy()
        counts[order[:short]] += 1
        cell[block] = np.repeat(np.arange(len(w)), counts)[rng.permutation(len(block))]
        alloc += counts
        done += len(block)
    return cell


def _enroll(design: TrialDesign, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    total = design.total
    if design.n_rand is None:
        month = np.floor(np.arange(total) / design.rand_rate)
    else:
        month = np.repeat(np.arange(len(design.n_rand), dtype=float), design.n_rand)
    # uniform enrollment within each accrual month
    return month + rng.random(total), month


def simulate_trial(design: TrialDesign, seed: int | np.random.Generator) -> TrialFrame:
    """Generate one synthetic trial with unbounded follow-up.

    Subjects enroll uniformly within their accrual month; groups and strata
    fill by exact weight allocation within each month (or i.i.d. draws when
    ``design.iid_allocation``). Latent event/drop-out/death times come from
    the cell distributions; the follow-up time is their minimum and the
    event flag marks whether the event came first. Cut the result with
    :func:`pwexp.survdata.cut_data` to mimic a data cut-off.
    """
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed, 0)
    total = design.total
    if total == 0:
        empty_f = np.empty(0)
        empty_i = np.empty(0, dtype=int)
        empty_o = np.empty(0, dtype=object)
        return TrialFrame(empty_i, empty_o, empty_o, empty_f, empty_f, empty_f,
                          empty_f, empty_f, empty_f, empty_i.astype(np.int8),
                          empty_i.astype(np.int8), empty_o)
    randT, month = _enroll(design, rng)

    group_names = [g for g, _ in design.groups]
    strat_names = [s for s, _ in design.strata]
    weights = np.array(
        [gw * sw for _, gw in design.groups for _, sw in design.strata], dtype=float
    )
    n_cells = len(weights)
    if design.iid_allocation:
        cell = rng.choice(n_cells, size=total, p=weights / weights.sum())
    else:
        cell = _allocate_exact(month, weights, rng)

    eventT = np.empty(total)
    dropT = np.empty(total)
    deathT = np.empty(total)
    for c in range(n_cells):
        idx = np.flatnonzero(cell == c)
        if len(idx) == 0:
            continue
        arm = design.cell_model(group_names[c // len(strat_names)],
                                strat_names[c % len(strat_names)])
        eventT[idx] = _draw(arm.event, len(idx), rng)
        dropT[idx] = _draw(arm.dropout, len(idx), rng)
        deathT[idx] = _draw(arm.death, len(idx), rng)

    followT = np.minimum(np.minimum(eventT, dropT), deathT)
    event = ((eventT <= dropT) & (eventT <= deathT) & np.isfinite(eventT)).astype(np.int8)
    reason = np.full(total, None, dtype=object)
    dropped = (event == 0) & np.isfinite(dropT) & (dropT <= deathT)
    died = (event == 0) & ~dropped & np.isfinite(deathT)
    never = ~np.isfinite(followT)
    reason[dropped] = "drop_out"
    reason[died] = "death"
    reason[never] = "never_event"
    censor = (dropped | died).astype(np.int8)

    return TrialFrame(
        id=np.arange(1, total + 1),
        group=np.array(group_names, dtype=object)[cell // len(strat_names)],
        stratum=np.array(strat_names, dtype=object)[cell % len(strat_names)],
        randT=randT,
        eventT=eventT,
        dropT=dropT,
        deathT=deathT,
        followT=followT,
        followT_abs=randT + followT,
        event=event,
        censor=censor,
        censor_reason=reason,
    )


class prop_above:
    """Summary statistic: share of values >= a threshold (name ``prop_<t>``)."""

    def __init__(self, threshold: float):
        self.threshold = float(threshold)
        self.__name__ = f"prop_{threshold:g}"

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.mean(x >= self.threshold)) if len(x) else np.nan


@dataclass
class SimFollowup:
    """Mean-over-replicates summaries at each requested milestone."""

    columns: tuple[str, ...]
    overall: list[dict]
    by_group: list[dict] | None
    n_unreached: int

    def save_csv(self, path, by_group: bool = False):
        rows = self.by_group if by_group else self.overall
        if rows is None:
            raise ValueError("no by-group table was requested")
        cols = list(rows[0].keys())
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in rows:
                w.writerow([r[c] if isinstance(r[c], str) else repr(float(r[c])) for c in cols])


def _resolve_cut(frame: TrialFrame, milestone: float, kind: str) -> tuple[float, bool]:
    if kind == "calendar":
        return float(milestone), True
    if kind == "event":
        k = max(int(round(milestone)), 1)
        ev_abs = np.sort(frame.followT_abs[frame.event == 1])
        if k <= len(ev_abs):
            return float(ev_abs[k - 1]), True
    elif kind == "sample":
        k = max(int(round(milestone)), 1)
        rt = np.sort(frame.randT)
        if k <= len(rt):
            return float(rt[k - 1]), True
    else:
        raise ValueError("type must be 'calendar', 'event', or 'sample'")
    finite = frame.followT_abs[np.isfinite(frame.followT_abs)]
    horizon = float(finite.max()) if len(finite) else float(frame.randT.max())
    return horizon, False


def _followup_times(frame: TrialFrame, keep: np.ndarray, cut: float, endpoints) -> np.ndarray:
    parts = []
    if "cut" in endpoints:
        parts.append(cut - frame.randT[keep])
    if "drop_out" in endpoints:
        parts.append(frame.dropT[keep])
    if "death" in endpoints:
        parts.append(frame.deathT[keep])
    if "event" in endpoints:
        parts.append(frame.eventT[keep])
    out = parts[0]
    for p in parts[1:]:
        out = np.minimum(out, p)
    return out


def _followup_worker(payload):
    design, seed, r, at, kind, endpoints, stats, group_names = payload
    frame = simulate_trial(design, derive_rng(seed, 20, r))
    n_at = len(at)
    width = 3 + len(stats)
    overall = np.empty((n_at, width))
    grouped = np.empty((n_at, len(group_names), width)) if group_names else None
    unreached = 0
    for j, milestone in enumerate(at):
        cut, ok = _resolve_cut(frame, milestone, kind)
        unreached += 0 if ok else 1
        masks = [np.ones(len(frame), dtype=bool)]
        outs = [overall[j]]
        if group_names:
            masks += [frame.group == g for g in group_names]
            outs += [grouped[j, gi] for gi in range(len(group_names))]
        for mask, out in zip(masks, outs):
            keep = mask & (frame.randT <= cut)
            n_event = int(np.sum(keep & (frame.event == 1) & (frame.followT_abs <= cut)))
            fu = _followup_times(frame, keep, cut, endpoints)
            out[0] = cut
            out[1] = n_event
            out[2] = int(keep.sum())
            for si, f in enumerate(stats):
                out[3 + si] = f(fu) if len(fu) else np.nan
    return overall, grouped, unreached


def sim_followup(
    design: TrialDesign,
    at: Sequence[float],
    type: str = "calendar",
    stats: Sequence[Callable] = (),
    by_group: bool = False,
    rep: int = 100,
    seed: int = 0,
    follow_up_endpoint: Sequence[str] = ("cut", "drop_out", "death"),
    threads: int = 1,
) -> SimFollowup:
    """Simulate ``rep`` trials and summarize them at each milestone.

    A milestone is a calendar time, a cumulative event count, or an
    enrollment count depending on ``type``; each replicate resolves it to a
    cut time, truncates there, and reports the event count, subject count,
    and the requested statistics of the follow-up time (the time from
    randomization to the earliest endpoint in ``follow_up_endpoint``).
    Values are means over replicates. A replicate that never reaches a
    milestone contributes its end-of-horizon state and triggers a warning.
    """
    if rep < 1:
        raise ValueError("rep must be >= 1")
    at = [float(a) for a in at]
    if any(a <= 0 for a in at):
        raise ValueError("milestones must be positive")
    bad = set(follow_up_endpoint) - set(FOLLOWUP_ENDPOINTS)
    if bad:
        raise ValueError(f"unknown follow-up endpoints: {sorted(bad)}")
    group_names = [g for g, _ in design.groups] if by_group else []
    payloads = [
        (design, seed, r, at, type, tuple(follow_up_endpoint), tuple(stats), group_names)
        for r in range(rep)
    ]
    results = parallel_map(_followup_worker, payloads, threads)
    overall = np.mean([r[0] for r in results], axis=0)
    grouped = np.mean([r[1] for r in results], axis=0) if by_group else None
    n_unreached = sum(r[2] for r in results)
    if n_unreached:
        _warnings.warn(
            f"{n_unreached} replicate-milestone pairs never reached the milestone; "
            "their end-of-horizon state was used",
            stacklevel=2,
        )
    stat_names = [getattr(f, "__name__", str(f)) for f in stats]
    cols = ("at", "analysis_time", "event", "subjects", *stat_names)

    def make_rows(mat, group=None):
        rows = []
        for j, milestone in enumerate(at):
            row: dict = {"at": milestone}
            if group is not None:
                row["group"] = group
            row["analysis_time"] = mat[j, 0]
            row["event"] = mat[j, 1]
            row["subjects"] = mat[j, 2]
            for si, name in enumerate(stat_names):
                row[name] = mat[j, 3 + si]
            rows.append(row)
        return rows

    overall_rows = make_rows(overall)
    group_rows = None
    if by_group:
        group_rows = []
        for gi, g in enumerate(group_names):
            group_rows.extend(make_rows(grouped[:, gi, :], group=g))
    return SimFollowup(columns=cols, overall=overall_rows, by_group=group_rows,
                       n_unreached=n_unreached)
