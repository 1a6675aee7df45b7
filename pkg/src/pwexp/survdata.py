"""Right-censored samples, Kaplan-Meier estimation, and data cuts."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["SurvSample", "KmCurve", "km_fit", "cut_data", "read_survival_csv"]

NEVER_EVENT = "never_event"


@dataclass(frozen=True)
class SurvSample:
    """Right-censored observations: follow-up time and event indicator.

    Calendar fields (``rand_time``, ``follow_abs_time``) and the reason a
    subject was censored are optional; they are required only by
    :func:`cut_data`. Times must be finite except for subjects that would
    never have an event (``censor_reason == "never_event"``), which may carry
    ``inf`` until a data cut re-censors them.
    """

    time: np.ndarray
    event: np.ndarray
    rand_time: np.ndarray | None = None
    follow_abs_time: np.ndarray | None = None
    censor_reason: np.ndarray | None = None
    ids: np.ndarray | None = None

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float)
        event = np.asarray(self.event, dtype=np.int8)
        if time.ndim != 1 or event.shape != time.shape:
            raise ValueError("time and event must be 1-D arrays of equal length")
        if np.any(time < 0.0) or np.any(np.isnan(time)):
            raise ValueError("times must be nonnegative")
        if not np.isin(event, (0, 1)).all():
            raise ValueError("event indicator must be 0 or 1")
        reasons = self.censor_reason
        if reasons is not None:
            reasons = np.asarray(reasons, dtype=object)
            if reasons.shape != time.shape:
                raise ValueError("censor_reason length mismatch")
        inf_mask = np.isinf(time)
        if inf_mask.any():
            if reasons is None or not all(reasons[inf_mask] == NEVER_EVENT):
                raise ValueError("infinite time allowed only with censor_reason == 'never_event'")
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "censor_reason", reasons)
        for name in ("rand_time", "follow_abs_time"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=float)
                if val.shape != time.shape:
                    raise ValueError(f"{name} length mismatch")
                object.__setattr__(self, name, val)
        if self.ids is not None:
            object.__setattr__(self, "ids", np.asarray(self.ids))

    def __len__(self) -> int:
        return len(self.time)

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    def subset(self, idx) -> "SurvSample":
        """New sample containing the rows selected by ``idx`` (any numpy index)."""
        pick = lambda a: None if a is None else a[idx]
        return SurvSample(
            time=self.time[idx],
            event=self.event[idx],
            rand_time=pick(self.rand_time),
            follow_abs_time=pick(self.follow_abs_time),
            censor_reason=pick(self.censor_reason),
            ids=pick(self.ids),
        )


@dataclass(frozen=True)
class KmCurve:
    """Product-limit survival estimate: one step per distinct event time."""

    time: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    n_event: np.ndarray

    def log_points(self) -> tuple[np.ndarray, np.ndarray]:
        """(event time, log survival) pairs at steps with positive survival.

        These are the regression points for the log-survival change-point
        search; the final step is dropped when the estimate reaches 0.
        """
        keep = self.survival > 0.0
        return self.time[keep], np.log(self.survival[keep])


def km_fit(data: SurvSample) -> KmCurve:
    """Kaplan-Meier estimate of the survival function.

    Ties between an event and a censoring at the same time are resolved by
    processing events first (censored subjects at time t are still at risk
    for the event step at t).
    """
    if len(data) == 0:
        raise ValueError("cannot fit a KM curve to an empty sample")
    ev_times = np.unique(data.time[data.event == 1])
    sorted_all = np.sort(data.time)
    surv = np.empty(ev_times.shape)
    at_risk = np.empty(ev_times.shape, dtype=np.int64)
    d = np.empty(ev_times.shape, dtype=np.int64)
    s = 1.0
    for k, t in enumerate(ev_times):
        n_risk = len(sorted_all) - np.searchsorted(sorted_all, t, side="left")
        n_ev = int(np.sum((data.time == t) & (data.event == 1)))
        s *= 1.0 - n_ev / n_risk
        surv[k], at_risk[k], d[k] = s, n_risk, n_ev
    return KmCurve(time=ev_times, survival=surv, at_risk=at_risk, n_event=d)


def cut_data(data: SurvSample, cut: float) -> SurvSample:
    """Truncate a sample at a clinical cut-off time.

    Subjects randomized after ``cut`` are dropped. Retained subjects whose
    absolute follow-up end exceeds ``cut`` are re-censored there: time
    becomes ``cut - rand_time``, the event flag clears, and the censor
    reason is set to ``"cut"``. Everyone else is returned unchanged, so
    cutting twice at the same time is a no-op.
    """
    if data.rand_time is None or data.follow_abs_time is None:
        raise ValueError("cut_data requires rand_time and follow_abs_time fields")
    if not (np.isfinite(cut) and cut > 0.0):
        raise ValueError("cut must be a positive finite time")
    keep = data.rand_time <= cut
    kept = data.subset(keep)
    recensor = kept.follow_abs_time > cut
    time = np.where(recensor, cut - kept.rand_time, kept.time)
    event = np.where(recensor, 0, kept.event).astype(np.int8)
    follow_abs = np.where(recensor, cut, kept.follow_abs_time)
    reasons = (
        kept.censor_reason.copy()
        if kept.censor_reason is not None
        else np.full(len(kept), None, dtype=object)
    )
    reasons[recensor] = "cut"
    return SurvSample(
        time=time,
        event=event,
        rand_time=kept.rand_time,
        follow_abs_time=follow_abs,
        censor_reason=reasons,
        ids=kept.ids,
    )


def _parse_float(text: str) -> float:
    if text.strip().lower() in ("inf", "+inf", "infinity"):
        return np.inf
    return float(text)


def read_survival_csv(
    path,
    time_col: str = "time",
    event_col: str = "event",
    rand_time_col: str | None = None,
    follow_abs_time_col: str | None = None,
    censor_reason_col: str | None = None,
    id_col: str | None = None,
) -> SurvSample:
    """Load a sample from a CSV file with configurable column names.

    Infinite times may be written as the literal ``Inf``. Empty censor-reason
    cells (or the literal ``NA``) become ``None``.
    """
    cols: dict[str, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty CSV")
        needed = [c for c in (time_col, event_col, rand_time_col, follow_abs_time_col,
                              censor_reason_col, id_col) if c is not None]
        missing = [c for c in needed if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}; found {reader.fieldnames}")
        for c in needed:
            cols[c] = []
        for row in reader:
            for c in needed:
                cols[c].append(row[c])
    reasons = None
    if censor_reason_col is not None:
        reasons = np.array(
            [None if r.strip() in ("", "NA") else r.strip() for r in cols[censor_reason_col]],
            dtype=object,
        )
    as_floats = lambda c: np.array([_parse_float(v) for v in cols[c]])
    return SurvSample(
        time=as_floats(time_col),
        event=np.array([int(float(v)) for v in cols[event_col]], dtype=np.int8),
        rand_time=as_floats(rand_time_col) if rand_time_col else None,
        follow_abs_time=as_floats(follow_abs_time_col) if follow_abs_time_col else None,
        censor_reason=reasons,
        ids=np.array(cols[id_col]) if id_col else None,
    )
