"""PWE model estimation: log-likelihood, closed-form hazard MLEs given
change-points, and change-point search (brute force, log-survival OLS
segmentation, and the hybrid of the two) with tail-robustness controls."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from math import comb
from typing import Sequence

import numpy as np

from . import distribution as dist
from ._parallel import parallel_map
from .distribution import PweModel
from .errors import EmptyPieceError, NoFeasibleModelError
from .rng import derive_rng
from .survdata import SurvSample, km_fit

__all__ = [
    "PieceTally",
    "FitConfig",
    "FitResult",
    "piece_tally",
    "loglik",
    "mle_given_breakpoints",
    "validate_breakpoints",
    "fit_bfs",
    "fit_ols",
    "fit_hybrid",
    "fit",
    "fit_segmented_line",
    "SegmentedFit",
]

OPTIMIZERS = ("bfs", "ols", "hybrid")


# ---------------------------------------------------------------------------
# tallies, likelihood, closed-form MLE


@dataclass(frozen=True)
class PieceTally:
    """Per-piece sufficient statistics for a set of change-points.

    ``n_events[k]`` counts events in piece k, ``exposure[k]`` the total
    at-risk time spent inside piece k, and ``n_suffix[k]`` the subjects whose
    follow-up ends in piece k or later.
    """

    breakpoints: tuple[float, ...]
    n_events: np.ndarray
    exposure: np.ndarray
    n_suffix: np.ndarray


def _check_sample(data: SurvSample, need_event: bool = True):
    if len(data) == 0:
        raise ValueError("sample is empty")
    if not np.isfinite(data.time).all():
        raise ValueError("estimation requires finite follow-up times (cut the data first)")
    if need_event and data.n_events == 0:
        raise ValueError("estimation requires at least one observed event")


def _check_breakpoints(breakpoints) -> np.ndarray:
    b = np.asarray(breakpoints, dtype=float).ravel()
    if len(b) and (np.any(~np.isfinite(b)) or np.any(b <= 0.0) or np.any(np.diff(b) <= 0.0)):
        raise ValueError("breakpoints must be strictly increasing, positive, finite")
    return b


def piece_tally(breakpoints, data: SurvSample) -> PieceTally:
    """Event counts, exposure times, and suffix counts per hazard piece."""
    _check_sample(data, need_event=False)
    b = _check_breakpoints(breakpoints)
    idx = np.searchsorted(b, data.time, side="right")
    n_pieces = len(b) + 1
    n_ev = np.bincount(idx[data.event == 1], minlength=n_pieces)
    n_all = np.bincount(idx, minlength=n_pieces)
    n_suffix = n_all[::-1].cumsum()[::-1]
    # exposure in piece k is sum_i [min(T_i, d_k) - min(T_i, d_{k-1})]
    acc = np.array([np.minimum(data.time, d).sum() for d in b] + [data.time.sum()])
    exposure = np.diff(np.concatenate(([0.0], acc)))
    return PieceTally(
        breakpoints=tuple(float(x) for x in b),
        n_events=n_ev,
        exposure=exposure,
        n_suffix=n_suffix,
    )


def loglik(m: PweModel, data: SurvSample) -> float:
    """Log-likelihood of right-censored data under a PWE model.

    Computed as sum of log-hazard over events minus the cumulative hazard of
    every subject, which is the dataset log-likelihood in a numerically
    stable form.
    """
    _check_sample(data, need_event=False)
    ev = data.event == 1
    lam = np.atleast_1d(dist.hazard(m, data.time[ev]))
    H = np.atleast_1d(dist.cumulative_hazard(m, data.time))
    return float(np.log(lam).sum() - H.sum())


@dataclass
class FitResult:
    """A fitted PWE model with its likelihood and information criteria."""

    model: PweModel
    loglik: float
    aic: float
    bic: float
    n_obs: int
    n_param: int
    optimizer: str
    warnings: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rates": list(self.model.rates),
            "breakpoints": list(self.model.breakpoints),
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "n_obs": self.n_obs,
            "optimizer": self.optimizer,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        model = PweModel(tuple(d["rates"]), tuple(d["breakpoints"]))
        return cls(
            model=model,
            loglik=float(d["loglik"]),
            aic=float(d["aic"]),
            bic=float(d["bic"]),
            n_obs=int(d["n_obs"]),
            n_param=2 * len(model.breakpoints) + 1,
            optimizer=str(d["optimizer"]),
            warnings=list(d.get("warnings", [])),
        )

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "FitResult":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _make_result(model: PweModel, data: SurvSample, optimizer: str) -> FitResult:
    ll = loglik(model, data)
    k = 2 * len(model.breakpoints) + 1
    n = len(data)
    return FitResult(
        model=model,
        loglik=ll,
        aic=-2.0 * ll + 2.0 * k,
        bic=-2.0 * ll + k * np.log(n),
        n_obs=n,
        n_param=k,
        optimizer=optimizer,
    )


def mle_given_breakpoints(breakpoints, data: SurvSample) -> FitResult:
    """Closed-form hazard MLEs for known change-points.

    The rate of piece k is (events in piece k) / (exposure time in piece k).
    Raises :class:`EmptyPieceError` when a piece holds no events, which
    search loops treat as an infeasible candidate.
    """
    _check_sample(data)
    tally = piece_tally(breakpoints, data)
    for k, (n, e) in enumerate(zip(tally.n_events, tally.exposure)):
        if n == 0:
            raise EmptyPieceError(k + 1)
        if e <= 0.0:
            raise EmptyPieceError(k + 1, "no exposure time")
    rates = tally.n_events / tally.exposure
    model = PweModel(tuple(rates), tally.breakpoints)
    return _make_result(model, data, "fixed")


def validate_breakpoints(breakpoints, data: SurvSample) -> tuple[tuple[float, ...], list[str]]:
    """Drop or merge change-points that would leave a piece without events.

    A change-point with no events before it (when first) or at/after it
    (when last) is deleted; two adjacent change-points with no events
    between them are replaced by their average. The cleaned vector always
    satisfies the precondition of :func:`mle_given_breakpoints`.
    """
    ev = np.sort(data.time[data.event == 1])
    if len(ev) == 0:
        raise ValueError("breakpoint validation requires at least one event")
    b = list(np.unique(_check_breakpoints(breakpoints)))
    warnings: list[str] = []
    if len(b) < len(np.asarray(breakpoints, dtype=float).ravel()):
        warnings.append("duplicate breakpoints collapsed")
    changed = True
    while changed and b:
        changed = False
        if np.searchsorted(ev, b[0], side="left") == 0:
            warnings.append(f"breakpoint {b[0]:g} dropped: no events before it")
            del b[0]
            changed = True
            continue
        if np.searchsorted(ev, b[-1], side="left") == len(ev):
            warnings.append(f"breakpoint {b[-1]:g} dropped: no events at or after it")
            del b[-1]
            changed = True
            continue
        for i in range(len(b) - 1):
            lo = np.searchsorted(ev, b[i], side="left")
            hi = np.searchsorted(ev, b[i + 1], side="left")
            if lo == hi:
                mid = 0.5 * (b[i] + b[i + 1])
                warnings.append(
                    f"breakpoints {b[i]:g} and {b[i + 1]:g} merged to {mid:g}: no events between them"
                )
                b[i : i + 2] = [mid]
                changed = True
                break
    return tuple(b), warnings


# ---------------------------------------------------------------------------
# search machinery


class _SearchGrid:
    """Precomputed cumulative statistics for fast profile-likelihood sweeps.

    For a breakpoint vector d, the per-piece event count and exposure are
    differences of #(events < d) and sum_i min(T_i, d), so each candidate
    combination is evaluated with a handful of array lookups.
    """

    def __init__(self, data: SurvSample):
        self.all_sorted = np.sort(data.time)
        self.prefix = np.concatenate(([0.0], np.cumsum(self.all_sorted)))
        self.ev_sorted = np.sort(data.time[data.event == 1])
        self.n_total = len(data)
        self.n_events = len(self.ev_sorted)
        # taken from the same running sum as exposure_to(), so that a
        # candidate at the largest observed time yields exactly zero tail
        # exposure instead of accumulation noise
        self.total_exposure = float(self.prefix[-1])

    def exposure_to(self, d):
        k = np.searchsorted(self.all_sorted, d, side="left")
        return self.prefix[k] + d * (self.n_total - k)

    def events_before(self, d):
        return np.searchsorted(self.ev_sorted, d, side="left")

    def profile(self, B: np.ndarray, min_pt_tail: int):
        """Profile log-likelihood of each row of sorted breakpoints ``B``.

        Returns (loglik, feasible); infeasible rows (an empty piece, zero
        exposure, or a tail with fewer than ``min_pt_tail`` events) get
        ``-inf``.
        """
        B = np.atleast_2d(np.asarray(B, dtype=float))
        k = self.events_before(B)
        a = self.exposure_to(B)
        counts = np.concatenate(
            [k[:, :1], np.diff(k, axis=1), self.n_events - k[:, -1:]], axis=1
        )
        expos = np.concatenate(
            [a[:, :1], np.diff(a, axis=1), self.total_exposure - a[:, -1:]], axis=1
        )
        feasible = (
            (counts >= 1).all(axis=1)
            & (expos > 0.0).all(axis=1)
            & (counts[:, -1] >= min_pt_tail)
        )
        safe_c = np.where(counts > 0, counts, 1)
        safe_e = np.where(expos > 0.0, expos, 1.0)
        ll = (counts * (np.log(safe_c / safe_e) - 1.0)).sum(axis=1)
        return np.where(feasible, ll, -np.inf), feasible


def _profile_worker(payload):
    grid_state, B, min_pt_tail = payload
    g = _SearchGrid.__new__(_SearchGrid)
    g.__dict__.update(grid_state)
    ll, _ = g.profile(B, min_pt_tail)
    return ll


def _profile_all(grid: _SearchGrid, B: np.ndarray, min_pt_tail: int, threads: int) -> np.ndarray:
    if threads <= 1 or len(B) < 4 * threads:
        return grid.profile(B, min_pt_tail)[0]
    chunks = np.array_split(B, threads)
    payloads = [(grid.__dict__, c, min_pt_tail) for c in chunks if len(c)]
    return np.concatenate(parallel_map(_profile_worker, payloads, threads))


def _best_row(B: np.ndarray, ll: np.ndarray) -> int:
    """Index of the max-loglik row; equal values break to the
    lexicographically smallest breakpoint vector for determinism."""
    best = ll.max()
    sel = np.flatnonzero(ll == best)
    if len(sel) == 1:
        return int(sel[0])
    order = np.lexsort(B[sel].T[::-1])
    return int(sel[order[0]])


def _candidate_values(data: SurvSample, config: "FitConfig") -> np.ndarray:
    """Distinct event times eligible as change-point candidates."""
    cands = np.unique(data.time[data.event == 1])
    if config.exclude_int is not None:
        lo, hi = config.exclude_int
        cands = cands[(cands < lo) | (cands >= hi)]
    if config.fixed_breakpoints:
        cands = cands[~np.isin(cands, np.asarray(config.fixed_breakpoints))]
    return cands


def _sub_sample(cands: np.ndarray, free: int, max_set: int, rng: np.random.Generator) -> np.ndarray:
    """Bisect down the candidate pool until the number of combinations is
    near ``max_set``, then keep a random subset of that size."""
    if comb(len(cands), free) <= max_set:
        return cands
    nl, nr = 1, len(cands)
    while nr - nl >= 1.5:
        mid = (nl + nr) // 2
        if comb(mid, free) > max_set:
            nr = mid
        else:
            nl = mid
    return np.sort(rng.choice(cands, size=nr, replace=False))


def _candidate_combos(
    cands: np.ndarray, free: int, max_set: int, rng: np.random.Generator
) -> np.ndarray:
    """All ``free``-combinations of candidate values, capped at ``max_set``
    randomly chosen ones (enumeration order kept for tie-break stability)."""
    cands = _sub_sample(cands, free, max_set, rng)
    combos = np.array(list(itertools.combinations(cands, free)), dtype=float)
    if len(combos) > max_set:
        keep = np.sort(rng.choice(len(combos), size=max_set, replace=False))
        combos = combos[keep]
    return combos


def _merge_fixed(combos: np.ndarray, fixed: Sequence[float]) -> np.ndarray:
    if not len(fixed):
        return combos
    tiled = np.tile(np.asarray(fixed, dtype=float), (len(combos), 1))
    return np.sort(np.concatenate([combos, tiled], axis=1), axis=1)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class FitConfig:
    """Options controlling a PWE fit.

    ``nbreak`` is the total number of change-points (defaults to the number
    of fixed ones); ``fixed_breakpoints`` pins known positions;
    ``exclude_int`` is a half-open interval [lo, hi) that may not contain a
    searched change-point; ``min_pt_tail`` is the minimum number of events
    that must remain in the last piece.
    """

    nbreak: int | None = None
    fixed_breakpoints: tuple[float, ...] = ()
    optimizer: str = "hybrid"
    max_set: int = 10000
    min_pt_tail: int = 5
    exclude_int: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        fixed = tuple(float(b) for b in np.sort(np.asarray(self.fixed_breakpoints, dtype=float).ravel()))
        _check_breakpoints(fixed)
        object.__setattr__(self, "fixed_breakpoints", fixed)
        nbreak = len(fixed) if self.nbreak is None else int(self.nbreak)
        if nbreak < len(fixed):
            raise ValueError("nbreak must be at least the number of fixed breakpoints")
        object.__setattr__(self, "nbreak", nbreak)
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.max_set < 1:
            raise ValueError("max_set must be >= 1")
        if self.min_pt_tail < 1:
            raise ValueError("min_pt_tail must be >= 1")
        if self.exclude_int is not None:
            lo, hi = (float(v) for v in self.exclude_int)
            if not lo < hi:
                raise ValueError("exclude_int must be (lo, hi) with lo < hi")
            object.__setattr__(self, "exclude_int", (lo, hi))
            if any(lo <= b < hi for b in fixed):
                raise ValueError("a fixed breakpoint lies inside exclude_int")
        object.__setattr__(self, "seed", int(self.seed))


# ---------------------------------------------------------------------------
# brute-force search


def fit_bfs(data: SurvSample, config: FitConfig, threads: int = 1) -> FitResult:
    """Brute-force change-point search over distinct event times.

    When the number of combinations exceeds ``max_set`` the candidate pool
    is first randomly thinned (bisection on the pool size), then at most
    ``max_set`` random combinations are evaluated. Each combination's
    hazards come from the closed-form MLE; infeasible combinations (empty
    piece, excluded interval, thin tail) are skipped.
    """
    _check_sample(data)
    free = config.nbreak - len(config.fixed_breakpoints)
    if free < 1:
        raise ValueError("fit_bfs requires at least one unknown change-point")
    cands = _candidate_values(data, config)
    if len(np.unique(data.time[data.event == 1])) <= config.nbreak:
        raise ValueError("need more distinct event times than change-points")
    if len(cands) < free:
        raise NoFeasibleModelError("not enough candidate event times outside the excluded interval")
    rng = derive_rng(config.seed, 101)
    combos = _candidate_combos(cands, free, config.max_set, rng)
    B = _merge_fixed(combos, config.fixed_breakpoints)
    grid = _SearchGrid(data)
    ll = _profile_all(grid, B, config.min_pt_tail, threads)
    if not np.isfinite(ll).any():
        raise NoFeasibleModelError("every change-point combination was infeasible")
    i = _best_row(B, ll)
    res = mle_given_breakpoints(B[i], data)
    res.optimizer = "bfs"
    res.diagnostics = {
        "n_combinations": int(len(B)),
        "n_feasible": int(np.isfinite(ll).sum()),
        "n_candidates": int(len(cands)),
    }
    return res


# ---------------------------------------------------------------------------
# OLS on the log survival function (segmented regression)


@dataclass
class SegmentedFit:
    """Result of the iterative piecewise-linear (broken-line) fit."""

    psi: tuple[float, ...]
    se: tuple[float, ...]
    slope: float
    sse: float
    converged: bool
    n_iter: int


def _segmented_design(x, fixed_psi, psi, with_steps=True):
    cols = [x]
    cols += [np.maximum(x - f, 0.0) for f in fixed_psi]
    cols += [np.maximum(x - p, 0.0) for p in psi]
    if with_steps:
        cols += [(x > p).astype(float) for p in psi]
    return np.column_stack(cols)


def fit_segmented_line(
    x,
    y,
    npsi: int,
    fixed_psi: Sequence[float] = (),
    rng: np.random.Generator | None = None,
    max_iter: int = 50,
    tol_frac: float = 1e-8,
    n_restarts: int = 5,
) -> SegmentedFit:
    """Continuous piecewise-linear regression through the origin.

    Fits y = b*x + sum_k c_k (x - psi_k)_+ by iterative linearization of the
    break positions: each pass adds a step covariate per free break and
    moves the break by (step coefficient) / (ramp coefficient). Breaks in
    ``fixed_psi`` contribute ramp terms but are never moved. Standard errors
    of the fitted breaks come from the step-coefficient delta method.

    The first start places the breaks at equally spaced quantiles of x; the
    remaining starts are random. The best converged start by residual sum
    of squares wins. ``converged=False`` means no start converged.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if npsi == 0:
        d = _segmented_design(x, fixed_psi, (), with_steps=False)
        coef, *_ = np.linalg.lstsq(d, y, rcond=None)
        resid = y - d @ coef
        return SegmentedFit((), (), float(coef[0]), float(resid @ resid), True, 0)
    if rng is None:
        rng = np.random.default_rng(0)
    span = x[-1] - x[0]
    starts = [np.quantile(x, (np.arange(npsi) + 1) / (npsi + 1))]
    for _ in range(n_restarts - 1):
        starts.append(np.quantile(x, np.sort(rng.uniform(0.05, 0.95, size=npsi))))
    best: SegmentedFit | None = None
    for start in starts:
        out = _run_segmented(x, y, np.sort(start), fixed_psi, max_iter, tol_frac * span)
        if out is None:
            continue
        if best is None or out.sse < best.sse:
            best = out
    if best is None:
        return SegmentedFit((), (), 0.0, np.inf, False, max_iter)
    return best


def _sse_continuous(x, y, fixed_psi, psi) -> float:
    D = _segmented_design(x, fixed_psi, psi, with_steps=False)
    coef, *_ = np.linalg.lstsq(D, y, rcond=None)
    r = y - D @ coef
    return float(r @ r)


def _run_segmented(x, y, psi, fixed_psi, max_iter, tol) -> SegmentedFit | None:
    npsi = len(psi)
    nfix = len(fixed_psi)
    fixed_arr = np.asarray(fixed_psi, dtype=float)
    margin = 1e-9 * (x[-1] - x[0])
    lo, hi = x[0] + margin, x[-1] - margin
    sse = _sse_continuous(x, y, fixed_psi, psi)
    converged = False
    it = 0
    for it in range(max_iter):
        D = _segmented_design(x, fixed_psi, psi)
        coef, *_ = np.linalg.lstsq(D, y, rcond=None)
        c = coef[1 + nfix : 1 + nfix + npsi]
        g = coef[1 + nfix + npsi :]
        # a vanishing ramp coefficient means that break is unidentified at
        # this iterate; freeze it and let the others move
        step = np.where(np.abs(c) > 1e-10, g / np.where(c == 0.0, 1.0, c), 0.0)
        if not np.all(np.isfinite(step)):
            return None
        moved = False
        delta = 0.0
        # damped line search on the proposal, accepting only SSE progress
        for h in (1.0, 0.5, 0.25, 0.125, 0.0625):
            cand = np.sort(np.clip(psi - h * step, lo, hi))
            merged = np.sort(np.concatenate([cand, fixed_arr]))
            if len(merged) > 1 and np.any(np.diff(merged) <= 0.0):
                continue
            cand_sse = _sse_continuous(x, y, fixed_psi, cand)
            if cand_sse <= sse * (1.0 + 1e-12) + 1e-300:
                delta = float(np.max(np.abs(cand - psi)))
                psi, sse = cand, cand_sse
                moved = True
                break
        if not moved:
            converged = bool(np.max(np.abs(step)) < tol)
            break
        if delta < tol:
            converged = True
            break
    if not converged:
        return None
    # delta-method SEs from the final working design
    D = _segmented_design(x, fixed_psi, psi)
    coef, *_ = np.linalg.lstsq(D, y, rcond=None)
    c = coef[1 + nfix : 1 + nfix + npsi]
    g = coef[1 + nfix + npsi :]
    resid = y - D @ coef
    dof = len(x) - D.shape[1]
    se = np.full(npsi, np.nan)
    if dof > 0:
        sigma2 = float(resid @ resid) / dof
        cov = sigma2 * np.linalg.pinv(D.T @ D)
        var_g = np.diag(cov)[1 + nfix + npsi :]
        with np.errstate(divide="ignore", invalid="ignore"):
            se = np.sqrt(np.maximum(var_g, 0.0)) / np.abs(c)
    Dp = _segmented_design(x, fixed_psi, psi, with_steps=False)
    coefp, *_ = np.linalg.lstsq(Dp, y, rcond=None)
    residp = y - Dp @ coefp
    return SegmentedFit(
        psi=tuple(float(p) for p in np.sort(psi)),
        se=tuple(float(s) for s in se),
        slope=float(coefp[0]),
        sse=float(residp @ residp),
        converged=True,
        n_iter=it + 1,
    )


def _tail_ok(data: SurvSample, bps: np.ndarray, min_pt_tail: int) -> bool:
    ev = data.time[data.event == 1]
    return int((ev >= bps[-1]).sum()) >= min_pt_tail


def _ols_grid_fallback(
    data: SurvSample, config: FitConfig, x, y, rng
) -> tuple[np.ndarray, int]:
    """Least-squares grid search over event-time candidates (used when the
    iterative segmentation fails or lands on an infeasible model)."""
    free = config.nbreak - len(config.fixed_breakpoints)
    cands = _candidate_values(data, config)
    if len(cands) < free:
        raise NoFeasibleModelError("not enough candidates for the OLS grid fallback")
    combos = _candidate_combos(cands, free, config.max_set, rng)
    B = _merge_fixed(combos, config.fixed_breakpoints)
    grid = _SearchGrid(data)
    _, feasible = grid.profile(B, config.min_pt_tail)
    if not feasible.any():
        raise NoFeasibleModelError("every OLS fallback combination was infeasible")
    B = B[feasible]
    sse = np.empty(len(B))
    for i, row in enumerate(B):
        D = _segmented_design(x, row, (), with_steps=False)
        coef, *_ = np.linalg.lstsq(D, y, rcond=None)
        r = y - D @ coef
        sse[i] = r @ r
    i = _best_row(B, -sse)
    return B[i], int(len(B))


def fit_ols(data: SurvSample, config: FitConfig, threads: int = 1) -> FitResult:
    """Change-points by segmented least squares on the log KM curve.

    The log survival function of a PWE model is continuous piecewise linear
    in t, so the change-points are estimated by broken-line regression on
    (event time, log KM estimate) points; hazards are then re-estimated at
    the found change-points with the closed-form MLE (the OLS slopes are
    discarded). Not a likelihood maximizer. Break standard errors are kept
    in ``diagnostics`` for the hybrid search.
    """
    _check_sample(data)
    free = config.nbreak - len(config.fixed_breakpoints)
    x, y = km_fit(data).log_points()
    if len(x) < 2 * (config.nbreak + 1):
        raise ValueError(
            f"need at least {2 * (config.nbreak + 1)} positive-survival event steps, got {len(x)}"
        )
    rng = derive_rng(config.seed, 202)
    warnings: list[str] = []
    if free == 0:
        res = mle_given_breakpoints(config.fixed_breakpoints, data)
        res.optimizer = "ols"
        seg = fit_segmented_line(x, y, 0, config.fixed_breakpoints)
        res.diagnostics = {"free_breakpoints": [], "breakpoint_se": [], "slope": seg.slope}
        return res

    seg = fit_segmented_line(x, y, free, config.fixed_breakpoints, rng=rng)
    bps: np.ndarray | None = None
    se: list[float] | None = None
    psi: list[float] = []
    if seg.converged:
        psi = list(seg.psi)
        cand = np.sort(np.concatenate([psi, config.fixed_breakpoints]))
        ok = np.all(np.diff(cand) > 0.0) if len(cand) > 1 else True
        if ok and config.exclude_int is not None:
            lo, hi = config.exclude_int
            ok = not any(lo <= p < hi for p in psi)
        if ok:
            ok = _tail_ok(data, cand, config.min_pt_tail)
        if ok:
            try:
                mle_given_breakpoints(cand, data)
                bps = cand
                se = list(seg.se)
            except EmptyPieceError:
                ok = False
        if not ok:
            warnings.append("segmented solution violated feasibility constraints; grid fallback used")
    else:
        warnings.append("segmented regression did not converge; grid fallback used")
    if bps is None:
        bps, _ = _ols_grid_fallback(data, config, x, y, rng)
        fixed_set = set(config.fixed_breakpoints)
        psi = [b for b in bps if b not in fixed_set]
        se = None
    res = mle_given_breakpoints(bps, data)
    res.optimizer = "ols"
    res.warnings = warnings
    res.diagnostics = {
        "free_breakpoints": [float(p) for p in psi],
        "breakpoint_se": None if se is None else [float(s) for s in se],
        "segmented_converged": seg.converged,
    }
    return res


# ---------------------------------------------------------------------------
# hybrid search


def _nearest(values: np.ndarray, target: float, k: int = 1) -> np.ndarray:
    order = np.argsort(np.abs(values - target), kind="stable")
    return values[np.sort(order[:k])]


def _snap_row(cands: np.ndarray, psi: Sequence[float]) -> np.ndarray | None:
    """OLS breaks snapped to distinct candidate values, kept ordered."""
    used: list[float] = []
    for p in sorted(psi):
        pool = cands[~np.isin(cands, used)]
        pool = pool[pool > (used[-1] if used else -np.inf)]
        if len(pool) == 0:
            return None
        used.append(float(pool[np.argmin(np.abs(pool - p))]))
    return np.asarray(used)


def fit_hybrid(data: SurvSample, config: FitConfig, threads: int = 1) -> FitResult:
    """OLS segmentation followed by an exhaustive search near its solution.

    Candidate sets are the event times inside the 95% CI of each OLS break
    (at least the 3 nearest event times when the CI is empty or the SE is
    unavailable); their cross product, capped at ``max_set`` rows, is scored
    by the closed-form MLE log-likelihood. The row snapping the OLS breaks
    to the grid is always evaluated, so the result never scores below the
    snapped OLS model.
    """
    _check_sample(data)
    free = config.nbreak - len(config.fixed_breakpoints)
    if free < 1:
        raise ValueError("fit_hybrid requires at least one unknown change-point")
    ols_res = fit_ols(data, config)
    psi = list(ols_res.diagnostics.get("free_breakpoints", []))
    se = ols_res.diagnostics.get("breakpoint_se")
    cands = _candidate_values(data, config)
    if len(cands) < free:
        raise NoFeasibleModelError("not enough candidate event times for the hybrid search")
    spacing = (cands[-1] - cands[0]) / max(len(cands) - 1, 1) if len(cands) > 1 else 1.0
    rng = derive_rng(config.seed, 303)

    sets: list[np.ndarray] = []
    for k, p in enumerate(psi):
        s_k = se[k] if se is not None else np.nan
        win = 1.96 * s_k if np.isfinite(s_k) and s_k > 0.0 else 3.0 * spacing
        inside = cands[(cands >= p - win) & (cands <= p + win)]
        if len(inside) < 3:
            inside = _nearest(cands, p, k=min(3, len(cands)))
        sets.append(np.unique(inside))

    total = int(np.prod([len(s) for s in sets], dtype=object))
    if total <= 4 * config.max_set:
        rows = np.array(list(itertools.product(*sets)), dtype=float)
    else:
        picks = [s[rng.integers(0, len(s), size=config.max_set)] for s in sets]
        rows = np.column_stack(picks)
    keep = np.ones(len(rows), dtype=bool)
    if free > 1:
        keep = (np.diff(rows, axis=1) > 0.0).all(axis=1)
    rows = rows[keep]
    if len(rows) > config.max_set:
        sel = np.sort(rng.choice(len(rows), size=config.max_set, replace=False))
        rows = rows[sel]
    snapped = _snap_row(cands, psi)
    if snapped is not None:
        rows = np.vstack([rows, snapped[None, :]]) if len(rows) else snapped[None, :]
    if len(rows) == 0:
        raise NoFeasibleModelError("hybrid candidate set is empty")

    B = _merge_fixed(rows, config.fixed_breakpoints)
    grid = _SearchGrid(data)
    ll = _profile_all(grid, B, config.min_pt_tail, threads)
    if not np.isfinite(ll).any():
        raise NoFeasibleModelError("every hybrid candidate row was infeasible")
    i = _best_row(B, ll)
    res = mle_given_breakpoints(B[i], data)
    res.optimizer = "hybrid"
    res.warnings = list(ols_res.warnings)
    res.diagnostics = {
        "n_rows": int(len(B)),
        "ols_breakpoints": psi,
        "ols_se": se,
        "candidate_set_sizes": [int(len(s)) for s in sets],
    }
    return res


# ---------------------------------------------------------------------------
# front door


def fit(data: SurvSample, config: FitConfig, threads: int = 1) -> FitResult:
    """Fit a PWE model per the configuration.

    Dispatch: no change-points -> exponential MLE; all change-points fixed ->
    validation then closed-form MLE; otherwise the configured search with
    any fixed change-points pinned. Exclusion-interval and tail constraints
    apply to every searched candidate.
    """
    _check_sample(data)
    warnings: list[str] = []
    cfg = config
    if config.fixed_breakpoints:
        cleaned, warnings = validate_breakpoints(config.fixed_breakpoints, data)
        if cleaned != config.fixed_breakpoints:
            # cleaning shrinks the pinned set; the number of searched
            # change-points stays what the caller asked for
            free0 = config.nbreak - len(config.fixed_breakpoints)
            cfg = replace(config, fixed_breakpoints=cleaned, nbreak=len(cleaned) + free0)
    free = cfg.nbreak - len(cfg.fixed_breakpoints)
    if cfg.nbreak == 0:
        res = mle_given_breakpoints((), data)
    elif free == 0:
        res = mle_given_breakpoints(cfg.fixed_breakpoints, data)
    elif cfg.optimizer == "bfs":
        res = fit_bfs(data, cfg, threads=threads)
    elif cfg.optimizer == "ols":
        res = fit_ols(data, cfg, threads=threads)
    else:
        res = fit_hybrid(data, cfg, threads=threads)
    res.warnings = warnings + res.warnings
    return res
