"""Monte Carlo event-count and timeline prediction with bootstrap bands.

Predicted cumulative events decompose as: events already observed, plus the
expected events among subjects still at risk (simulated conditionally on
their elapsed follow-up), plus expected events among subjects yet to enroll
(simulated unconditionally under the accrual plan). Averaging the per-draw
indicators gives the expected curve; keeping each single generation gives
the predictive draws, whose spread adds event-level noise on top of the
parameter uncertainty carried by bootstrap replicates.
"""
from __future__ import annotations

import csv
import warnings as _warnings
from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .distribution import PweModel, conditional_sample, sample
from .errors import PwexpError
from .estimation import FitResult
from .resampling import BootFit
from .rng import derive_rng
from .survdata import SurvSample

__all__ = [
    "AccrualPlan",
    "TrialSnapshot",
    "PredictionEnsemble",
    "predict_events",
    "event_interval",
    "timeline_for_events",
    "write_interval_csv",
]


@dataclass(frozen=True)
class AccrualPlan:
    """Future enrollment: ``n_remaining`` subjects at a monthly ``rate`` or
    following per-month ``monthly_counts`` (months count from the analysis
    time). Enrollment is uniform within each month."""

    n_remaining: int
    rate: float | None = None
    monthly_counts: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_remaining < 0:
            raise ValueError("n_remaining must be nonnegative")
        if self.n_remaining == 0:
            return
        if (self.rate is None) == (self.monthly_counts is None):
            raise ValueError("specify exactly one of rate or monthly_counts")
        if self.rate is not None and self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.monthly_counts is not None:
            counts = tuple(int(c) for c in self.monthly_counts)
            if any(c < 0 for c in counts):
                raise ValueError("monthly counts must be nonnegative")
            if sum(counts) < self.n_remaining:
                raise PwexpError(
                    f"accrual plan provides {sum(counts)} slots for {self.n_remaining} remaining subjects"
                )
            object.__setattr__(self, "monthly_counts", counts)

    @property
    def last_month(self) -> float:
        """Month index (from the analysis time) in which accrual finishes."""
        if self.n_remaining == 0:
            return 0.0
        if self.rate is not None:
            return float(np.floor((self.n_remaining - 1) / self.rate)) + 1.0
        used = np.searchsorted(np.cumsum(self.monthly_counts), self.n_remaining, side="left")
        return float(used) + 1.0

    def draw_times(self, t0: float, rng: np.random.Generator) -> np.ndarray:
        """Calendar enrollment times of the remaining subjects."""
        n = self.n_remaining
        if n == 0:
            return np.empty(0)
        if self.rate is not None:
            month = np.floor(np.arange(n) / self.rate)
        else:
            month = np.repeat(np.arange(len(self.monthly_counts), dtype=float),
                              self.monthly_counts)[:n]
        return t0 + month + rng.random(n)


@dataclass(frozen=True)
class TrialSnapshot:
    """State of a trial at one analysis time.

    ``enroll_times`` lists the calendar enrollment of subjects still
    event-free and uncensored at the analysis time; their elapsed follow-up
    is ``analysis_time - enroll_times``.
    """

    analysis_time: float
    n_events: int
    enroll_times: np.ndarray
    accrual: AccrualPlan | None = None

    def __post_init__(self):
        enroll = np.asarray(self.enroll_times, dtype=float)
        if self.n_events < 0:
            raise ValueError("n_events must be nonnegative")
        if np.any(enroll > self.analysis_time):
            raise ValueError("at-risk subjects must have enrolled by the analysis time")
        object.__setattr__(self, "enroll_times", enroll)

    @property
    def elapsed(self) -> np.ndarray:
        return self.analysis_time - self.enroll_times

    @property
    def max_new_events(self) -> int:
        extra = self.accrual.n_remaining if self.accrual is not None else 0
        return self.n_events + len(self.enroll_times) + extra

    @classmethod
    def from_cut_sample(
        cls, data: SurvSample, analysis_time: float, accrual: AccrualPlan | None = None
    ) -> "TrialSnapshot":
        """Snapshot from a sample already truncated at the analysis time.

        The at-risk set is the subjects whose censor reason is ``"cut"``
        (administratively censored at the cut, hence still being followed).
        """
        if data.rand_time is None or data.censor_reason is None:
            raise ValueError("snapshot needs rand_time and censor_reason fields")
        at_risk = np.array([r == "cut" for r in data.censor_reason], dtype=bool)
        return cls(
            analysis_time=float(analysis_time),
            n_events=int(data.event.sum()),
            enroll_times=data.rand_time[at_risk],
            accrual=accrual,
        )


@dataclass
class PredictionEnsemble:
    """Expected and predictive event-count curves on a calendar grid.

    ``expected`` holds one expected curve per parameter set (one row for a
    plain fit, one per replicate for a bootstrap fit); ``predictive`` holds
    every single-generation draw. All curves start at the observed event
    count at the analysis time and never decrease.
    """

    grid: np.ndarray
    point: np.ndarray
    expected: np.ndarray
    predictive: np.ndarray
    n_each: int
    analysis_time: float
    base_events: int
    total_subjects: int


def _param_sets(model) -> tuple[list[PweModel], PweModel | None]:
    if model is None:
        return [], None
    if isinstance(model, PweModel):
        return [model], model
    if isinstance(model, FitResult):
        return [model.model], model.model
    if isinstance(model, BootFit):
        reps = [r.model for r in model.replicates]
        point = model.base.model if model.base is not None else None
        return reps, point
    raise TypeError("model must be a PweModel, FitResult, or BootFit")


def _simulate_curves(event_m, censor_m, snapshot, n_each, grid, rng):
    """(expected, predictive) curves for one parameter set."""
    counts = np.zeros((n_each, len(grid)), dtype=np.int32)

    def add_events(ecal: np.ndarray, observed: np.ndarray):
        gi = np.searchsorted(grid, ecal[observed], side="left")
        rows = np.flatnonzero(observed)
        inside = gi < len(grid)
        np.add.at(counts, (rows[inside], gi[inside]), 1)

    for u, r in zip(snapshot.enroll_times, snapshot.elapsed):
        t = conditional_sample(event_m, n_each, r, rng)
        c = conditional_sample(censor_m, n_each, r, rng) if censor_m is not None else np.full(n_each, np.inf)
        add_events(u + t, t < c)
    if snapshot.accrual is not None and snapshot.accrual.n_remaining > 0:
        for u in snapshot.accrual.draw_times(snapshot.analysis_time, rng):
            t = sample(event_m, n_each, rng)
            c = sample(censor_m, n_each, rng) if censor_m is not None else np.full(n_each, np.inf)
            add_events(u + t, t < c)
    ped = counts.cumsum(axis=1) + snapshot.n_events
    return ped.mean(axis=0), ped


def _predict_worker(payload):
    event_m, censor_m, snapshot, n_each, seed, tag, grid = payload
    rng = derive_rng(seed, 10, tag)
    return _simulate_curves(event_m, censor_m, snapshot, n_each, grid, rng)


def predict_events(
    event_model,
    censor_model,
    snapshot: TrialSnapshot,
    n_each: int,
    seed: int,
    horizon: float | None = None,
    grid_points: int = 200,
    threads: int = 1,
) -> PredictionEnsemble:
    """Simulate future event accrual under fitted (or known) models.

    ``event_model`` and optional ``censor_model`` may each be a
    :class:`PweModel`, :class:`FitResult`, or :class:`BootFit`; bootstrap
    replicates produce one expected curve per parameter set, which is what
    the percentile intervals consume. Each at-risk subject contributes
    ``n_each`` conditional event/censor draws, each future subject an
    enrollment draw plus ``n_each`` unconditional draws. The default horizon
    is the end of accrual plus the longest elapsed follow-up.
    """
    if n_each < 1:
        raise ValueError("n_each must be >= 1")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    event_sets, event_point = _param_sets(event_model)
    censor_sets, censor_point = _param_sets(censor_model)
    if not event_sets:
        raise ValueError("an event model is required")
    t0 = snapshot.analysis_time
    if horizon is None:
        accrual_end = t0 + (snapshot.accrual.last_month if snapshot.accrual else 0.0)
        span = float(snapshot.elapsed.max()) if len(snapshot.enroll_times) else 1.0
        horizon = accrual_end + max(span, 1.0)
    if horizon <= t0:
        raise ValueError("horizon must exceed the analysis time")
    grid = np.linspace(t0, float(horizon), grid_points + 1)

    payloads = []
    for b, m in enumerate(event_sets):
        cm = censor_sets[b % len(censor_sets)] if censor_sets else None
        payloads.append((m, cm, snapshot, n_each, seed, b + 1, grid))
    results = parallel_map(_predict_worker, payloads, threads)
    expected = np.vstack([ed for ed, _ in results])
    predictive = np.vstack([ped for _, ped in results])

    if event_point is not None and len(event_sets) > 1:
        point, _ = _simulate_curves(
            event_point, censor_point, snapshot, n_each, grid, derive_rng(seed, 10, 0)
        )
    else:
        point = expected.mean(axis=0) if len(event_sets) > 1 else expected[0]
    return PredictionEnsemble(
        grid=grid,
        point=point,
        expected=expected,
        predictive=predictive,
        n_each=n_each,
        analysis_time=t0,
        base_events=snapshot.n_events,
        total_subjects=snapshot.max_new_events,
    )


def _percentile_rows(curves: np.ndarray, point: np.ndarray, grid, times, level):
    lo_q, hi_q = level / 2.0, 1.0 - level / 2.0
    rows = np.empty((len(times), 4))
    for i, t in enumerate(times):
        vals = np.array([np.interp(t, grid, c) for c in curves])
        rows[i] = (t, np.interp(t, grid, point),
                   np.quantile(vals, lo_q), np.quantile(vals, hi_q))
    return rows


def event_interval(
    ens: PredictionEnsemble, times, level: float = 0.05, kind: str = "confidence"
) -> np.ndarray:
    """Rows of (time, point, lower, upper) predicted event counts.

    ``confidence`` takes percentiles of the expected curves across bootstrap
    replicates (model uncertainty only, so a bootstrap ensemble is
    required); ``predictive`` takes percentiles of the pooled
    single-generation draws and is never narrower.
    """
    if not 0.0 < level <= 1.0:
        raise ValueError("level must be in (0, 1]")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if kind == "confidence":
        if len(ens.expected) < 2:
            raise PwexpError(
                "confidence intervals need a bootstrap ensemble; fit with boot_fit "
                "or request kind='predictive'"
            )
        return _percentile_rows(ens.expected, ens.point, ens.grid, times, level)
    if kind == "predictive":
        return _percentile_rows(ens.predictive, ens.point, ens.grid, times, level)
    raise ValueError("kind must be 'confidence' or 'predictive'")


def _crossing_times(curves: np.ndarray, grid: np.ndarray, target: float) -> np.ndarray:
    """First time each non-decreasing curve reaches ``target`` (inf if never)."""
    curves = np.atleast_2d(curves)
    n, g = curves.shape
    idx = (curves < target).sum(axis=1)
    out = np.empty(n)
    never = idx >= g
    at_start = idx == 0
    mid = ~never & ~at_start
    out[never] = np.inf
    out[at_start] = grid[0]
    if mid.any():
        i = idx[mid]
        c0 = curves[mid, i - 1]
        c1 = curves[mid, i]
        out[mid] = grid[i - 1] + (target - c0) * (grid[i] - grid[i - 1]) / (c1 - c0)
    return out


def timeline_for_events(
    ens: PredictionEnsemble, targets, level: float = 0.05, kind: str = "confidence"
) -> np.ndarray:
    """Rows of (n_event, time, lower, upper): when each target count is hit.

    Each curve is inverted by linear interpolation on the grid; percentile
    summaries run over the per-replicate (or per-draw) crossing times. A
    bound is NaN when the corresponding percentile of curves never reaches
    the target within the horizon. Targets at or below the observed count
    return the analysis time.
    """
    if not 0.0 < level <= 1.0:
        raise ValueError("level must be in (0, 1]")
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if kind == "confidence":
        if len(ens.expected) < 2:
            raise PwexpError(
                "confidence intervals need a bootstrap ensemble; fit with boot_fit "
                "or request kind='predictive'"
            )
        curves = ens.expected
    elif kind == "predictive":
        curves = ens.predictive
    else:
        raise ValueError("kind must be 'confidence' or 'predictive'")
    lo_q, hi_q = level / 2.0, 1.0 - level / 2.0
    rows = np.empty((len(targets), 4))
    for i, target in enumerate(targets):
        if target < ens.base_events:
            _warnings.warn(
                f"target {target:g} is below the {ens.base_events} events already "
                "observed; returning the analysis time",
                stacklevel=2,
            )
            rows[i] = (target, ens.analysis_time, ens.analysis_time, ens.analysis_time)
            continue
        point = _crossing_times(ens.point[None, :], ens.grid, target)[0]
        cross = _crossing_times(curves, ens.grid, target)
        with np.errstate(invalid="ignore"):
            # interpolating against never-reached (inf) crossings yields
            # inf/nan, both reported as a missing bound
            lo = np.quantile(cross, lo_q)
            hi = np.quantile(cross, hi_q)
        rows[i] = (
            target,
            point if np.isfinite(point) else np.nan,
            lo if np.isfinite(lo) else np.nan,
            hi if np.isfinite(hi) else np.nan,
        )
    return rows


def write_interval_csv(rows: np.ndarray, path, timeline: bool = False):
    """CSV with header time,n_event,lower,upper (swapped for timeline mode);
    missing bounds are written as ``NA``."""
    header = ["n_event", "time", "lower", "upper"] if timeline else ["time", "n_event", "lower", "upper"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["NA" if not np.isfinite(v) else repr(float(v)) for v in row])
