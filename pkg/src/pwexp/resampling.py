"""Bootstrap parameter uncertainty and cross-validated log-likelihood."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from ._parallel import parallel_map
from .errors import EmptyPieceError, NoFeasibleModelError, PwexpError
from .estimation import FitConfig, FitResult, fit, loglik
from .rng import derive_rng, derive_seed
from .survdata import SurvSample

__all__ = ["BootFit", "CvResult", "boot_fit", "cv_loglik"]


@dataclass
class BootFit:
    """Per-replicate fits from case resampling with replacement.

    ``base`` is the fit on the original data (absent after a JSON
    round-trip, whose schema carries only the replicates).
    """

    replicates: list[FitResult]
    config: FitConfig | None
    nsim: int
    seed: int
    base: FitResult | None = None
    failures: list[str] = field(default_factory=list)

    def breakpoint_matrix(self) -> np.ndarray:
        """(n_replicates, r) array of fitted change-points."""
        return np.array([r.model.breakpoints for r in self.replicates], dtype=float)

    def rate_matrix(self) -> np.ndarray:
        return np.array([r.model.rates for r in self.replicates], dtype=float)

    def to_dict(self) -> dict:
        return {
            "replicates": [r.to_dict() for r in self.replicates],
            "seed": self.seed,
            "nsim": self.nsim,
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "BootFit":
        return cls(
            replicates=[FitResult.from_dict(r) for r in d["replicates"]],
            config=None,
            nsim=int(d["nsim"]),
            seed=int(d["seed"]),
        )

    @classmethod
    def load_json(cls, path) -> "BootFit":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class CvResult:
    """Held-out log-likelihoods from repeated random-split validation."""

    values: np.ndarray
    split_fraction: float
    nsim: int
    seed: int
    n_failed: int = 0

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cv_loglik"])
            for v in self.values:
                w.writerow([repr(float(v))])


def _resample_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, n, size=n)


def _boot_worker(payload):
    data, config, seed, b = payload
    rng = derive_rng(seed, 1, b)
    idx = _resample_indices(rng, len(data))
    resampled = data.subset(idx)
    cfg = replace(config, seed=derive_seed(seed, 2, b))
    try:
        return True, fit(resampled, cfg)
    except (EmptyPieceError, NoFeasibleModelError, ValueError) as exc:
        return False, f"replicate {b}: {exc}"


def boot_fit(
    data: SurvSample, config: FitConfig, nsim: int, seed: int, threads: int = 1
) -> BootFit:
    """Fit ``nsim`` case resamples of ``data`` (size n, with replacement).

    Replicate b draws its resample and its search stream from child streams
    of (seed, b), so the result is identical for any worker count.
    Replicates whose fit is infeasible are recorded and skipped; more than
    50% failures is an error.
    """
    if nsim < 1:
        raise ValueError("nsim must be >= 1")
    base = fit(data, config)
    out = parallel_map(_boot_worker, [(data, config, seed, b) for b in range(nsim)], threads)
    replicates = [val for ok, val in out if ok]
    failures = [val for ok, val in out if not ok]
    if len(failures) > nsim / 2:
        raise NoFeasibleModelError(
            f"{len(failures)} of {nsim} bootstrap replicates failed to fit"
        )
    return BootFit(
        replicates=replicates,
        config=config,
        nsim=nsim,
        seed=int(seed),
        base=base,
        failures=failures,
    )


def _stratified_split(rng: np.random.Generator, data: SurvSample, frac: float, min_train_events: int):
    """Hold out ``frac`` of the records, preserving the event/censor mix."""
    test_mask = np.zeros(len(data), dtype=bool)
    for value in (1, 0):
        idx = np.flatnonzero(data.event == value)
        if len(idx) == 0:
            continue
        n_test = int(round(frac * len(idx)))
        if value == 1:
            n_test = min(n_test, len(idx) - min_train_events)
        n_test = max(n_test, 0)
        test_mask[rng.permutation(idx)[:n_test]] = True
    if not test_mask.any():
        # tiny samples: always hold out something so the value is defined
        test_mask[int(rng.integers(0, len(data)))] = True
    return test_mask


def _cv_worker(payload):
    data, config, seed, i, frac = payload
    rng = derive_rng(seed, 3, i)
    min_train_events = config.nbreak + 1
    for attempt in range(6):
        test_mask = _stratified_split(rng, data, frac, min_train_events)
        train = data.subset(~test_mask)
        test = data.subset(test_mask)
        cfg = replace(config, seed=derive_seed(seed, 4, i, attempt))
        try:
            res = fit(train, cfg)
        except (EmptyPieceError, NoFeasibleModelError, ValueError):
            continue
        return True, loglik(res.model, test)
    return False, f"repetition {i}: no feasible training fit in 6 draws"


def cv_loglik(
    data: SurvSample,
    config: FitConfig,
    nsim: int,
    seed: int,
    threads: int = 1,
    test_fraction: float = 0.2,
) -> CvResult:
    """Repeated random-split cross-validated log-likelihood.

    Each repetition holds out ``test_fraction`` of the records (stratified
    by event status), fits on the remainder, and scores the held-out
    records. Split streams are derived from (seed, repetition) alone, so
    two models compared under the same seed see identical splits. A failed
    training fit is redrawn up to five times, then recorded as a failure.
    """
    if nsim < 1:
        raise ValueError("nsim must be >= 1")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    if data.n_events < config.nbreak + 2:
        raise ValueError("too few events to retain nbreak + 1 in every training split")
    out = parallel_map(
        _cv_worker, [(data, config, seed, i, test_fraction) for i in range(nsim)], threads
    )
    values = np.array([val for ok, val in out if ok], dtype=float)
    n_failed = sum(1 for ok, _ in out if not ok)
    if len(values) == 0:
        raise PwexpError("every cross-validation repetition failed")
    return CvResult(
        values=values,
        split_fraction=test_fraction,
        nsim=nsim,
        seed=int(seed),
        n_failed=n_failed,
    )
