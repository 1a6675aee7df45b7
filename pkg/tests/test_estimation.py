import itertools

import numpy as np
import pytest
from scipy import optimize

import pwexp as pw
from pwexp.distribution import PweModel
from pwexp.errors import EmptyPieceError, NoFeasibleModelError
from pwexp.estimation import (
    FitConfig,
    FitResult,
    fit,
    fit_bfs,
    fit_hybrid,
    fit_ols,
    fit_segmented_line,
    loglik,
    mle_given_breakpoints,
    piece_tally,
    validate_breakpoints,
)
from pwexp.survdata import SurvSample


def random_sample(rng, n=40, censor_frac=0.25) -> SurvSample:
    times = rng.exponential(10.0, size=n)
    event = (rng.random(n) > censor_frac).astype(int)
    if event.sum() == 0:
        event[0] = 1
    return SurvSample(times, event)


def numeric_rate_mle(breakpoints, data, lo=1e-8, hi=50.0):
    """Per-piece golden-section maximization of loglik; the likelihood is
    separable in the rates, so each coordinate is exactly optimal."""
    r = len(breakpoints)
    rates = np.full(r + 1, data.n_events / data.time.sum())

    def ll_with(k, lam):
        trial = rates.copy()
        trial[k] = lam
        return loglik(PweModel(tuple(trial), tuple(breakpoints)), data)

    for k in range(r + 1):
        res = optimize.minimize_scalar(
            lambda lam: -ll_with(k, lam), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-12},
        )
        rates[k] = res.x
    return rates


def fd_score(model: PweModel, data: SurvSample) -> np.ndarray:
    """Central finite-difference gradient of loglik in each rate."""
    out = np.empty(model.n_pieces)
    for k, lam in enumerate(model.rates):
        h = 1e-5 * lam
        up = list(model.rates)
        dn = list(model.rates)
        up[k] += h
        dn[k] -= h
        out[k] = (
            loglik(PweModel(tuple(up), model.breakpoints), data)
            - loglik(PweModel(tuple(dn), model.breakpoints), data)
        ) / (2.0 * h)
    return out


class TestLoglik:
    def test_exponential_hand_value(self):
        d = SurvSample([1.0, 2.0, 3.0], [1, 1, 1])
        assert loglik(PweModel((0.5,)), d) == pytest.approx(-5.079441541679836, rel=1e-12)

    def test_censored_at_zero_is_free(self):
        d1 = SurvSample([1.0, 2.0, 3.0], [1, 1, 1])
        d2 = SurvSample([1.0, 2.0, 3.0, 0.0], [1, 1, 1, 0])
        m = PweModel((0.1, 0.3), (2.5,))
        assert loglik(m, d1) == loglik(m, d2)

    def test_infinite_times_rejected(self):
        d = SurvSample([np.inf], [0], censor_reason=np.array(["never_event"], dtype=object))
        with pytest.raises(ValueError):
            loglik(PweModel((0.5,)), d)


class TestPieceTally:
    def test_counts_and_exposure(self):
        d = SurvSample([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 1])
        t = piece_tally([2.5], d)
        assert list(t.n_events) == [2, 2]
        assert np.allclose(t.exposure, [1.0 + 2.0 + 2 * 2.5, 0.5 + 1.5])
        assert list(t.n_suffix) == [4, 2]

    def test_event_total_preserved(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            d = random_sample(rng)
            bps = np.sort(rng.uniform(1.0, 20.0, size=rng.integers(1, 4)))
            t = piece_tally(bps, d)
            assert t.n_events.sum() == d.n_events
            assert np.all(t.exposure >= 0.0)
            assert t.exposure.sum() == pytest.approx(d.time.sum(), rel=1e-12)


class TestMleGivenBreakpoints:
    def test_hand_example(self):
        d = SurvSample([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 1])
        res = mle_given_breakpoints([2.5], d)
        assert res.model.rates == pytest.approx((0.25, 1.0), rel=1e-14)

    def test_no_breakpoints_exponential(self):
        d = SurvSample([2.0, 5.0, 4.0], [1, 0, 1])
        res = mle_given_breakpoints([], d)
        assert res.model.rates[0] == pytest.approx(2.0 / 11.0, rel=1e-14)

    def test_matches_numeric_maximization(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            d = random_sample(rng, n=60)
            ev = np.sort(d.time[d.event == 1])
            bps = [float(np.quantile(ev, 0.5))]
            res = mle_given_breakpoints(bps, d)
            oracle = numeric_rate_mle(bps, d)
            assert np.allclose(res.model.rates, oracle, rtol=1e-6)

    def test_score_vanishes_at_solution(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            d = random_sample(rng, n=60)
            ev = np.sort(d.time[d.event == 1])
            res = mle_given_breakpoints([float(np.quantile(ev, 0.6))], d)
            assert np.all(np.abs(fd_score(res.model, d)) < 1e-6)

    def test_empty_piece_error_names_piece(self):
        d = SurvSample([0.5, 10.0, 11.0, 12.0], [1, 1, 1, 1])
        with pytest.raises(EmptyPieceError) as err:
            mle_given_breakpoints([1.0, 2.0], d)
        assert err.value.piece == 2

    def test_rate_exposure_identity(self):
        rng = np.random.default_rng(9)
        d = random_sample(rng, n=80)
        ev = np.sort(d.time[d.event == 1])
        bps = [float(ev[10]), float(ev[25])]
        res = mle_given_breakpoints(bps, d)
        t = piece_tally(bps, d)
        assert np.allclose(np.asarray(res.model.rates) * t.exposure, t.n_events, rtol=1e-15)

    def test_information_criteria_identities(self):
        rng = np.random.default_rng(10)
        d = random_sample(rng, n=50)
        ev = np.sort(d.time[d.event == 1])
        res = mle_given_breakpoints([float(np.median(ev))], d)
        k = 2 * len(res.model.breakpoints) + 1
        assert res.n_param == k
        assert res.aic == -2.0 * res.loglik + 2.0 * k
        assert res.bic == -2.0 * res.loglik + k * np.log(res.n_obs)


class TestValidateBreakpoints:
    def test_too_early_dropped(self):
        d = SurvSample([1.0, 2.0, 3.0], [1, 1, 1])
        cleaned, warns = validate_breakpoints([0.1], d)
        assert cleaned == ()
        assert warns

    def test_close_pair_merged(self):
        d = SurvSample([1.0, 2.0, 3.0], [1, 1, 1])
        cleaned, warns = validate_breakpoints([1.4, 1.6], d)
        assert cleaned == (1.5,)
        assert len(warns) == 1

    def test_too_late_dropped(self):
        d = SurvSample([1.0, 2.0, 3.0], [1, 1, 1])
        cleaned, _ = validate_breakpoints([3.5], d)
        assert cleaned == ()

    def test_well_separated_untouched(self):
        d = SurvSample([1.0, 2.0, 3.0], [1, 1, 1])
        cleaned, warns = validate_breakpoints([1.5, 2.5], d)
        assert cleaned == (1.5, 2.5)
        assert warns == []

    def test_result_always_feasible(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            d = random_sample(rng, n=15)
            bps = np.sort(rng.uniform(0.01, 40.0, size=rng.integers(1, 5)))
            cleaned, _ = validate_breakpoints(bps, d)
            mle_given_breakpoints(cleaned, d)  # must not raise


def enumerate_bfs_oracle(data: SurvSample, nbreak: int, min_pt_tail: int):
    """Independent full enumeration over all event-time combinations."""
    cands = np.unique(data.time[data.event == 1])
    best = None
    for combo in itertools.combinations(cands, nbreak):
        ev = data.time[data.event == 1]
        if np.sum(ev >= combo[-1]) < min_pt_tail:
            continue
        try:
            res = mle_given_breakpoints(list(combo), data)
        except EmptyPieceError:
            continue
        key = (-res.loglik, combo)
        if best is None or key < best[0]:
            best = (key, res)
    return best[1] if best else None


class TestFitBfs:
    def test_matches_enumeration_oracle_one_break(self):
        rng = np.random.default_rng(21)
        times = rng.exponential(8.0, size=20)
        d = SurvSample(times, np.ones(20, dtype=int))
        cfg = FitConfig(nbreak=1, optimizer="bfs", min_pt_tail=2, seed=0)
        res = fit_bfs(d, cfg)
        oracle = enumerate_bfs_oracle(d, 1, 2)
        assert res.model.breakpoints == oracle.model.breakpoints
        assert res.loglik == oracle.loglik

    def test_dominates_snapped_truth(self, true_event_model):
        rng = np.random.default_rng(22)
        times = np.asarray(pw.sample(true_event_model, 50, rng))
        d = SurvSample(times, np.ones(50, dtype=int))
        cfg = FitConfig(nbreak=2, optimizer="bfs", min_pt_tail=1, max_set=100000, seed=0)
        res = fit_bfs(d, cfg)
        ev = np.unique(times)
        snapped = [float(ev[np.argmin(np.abs(ev - b))]) for b in (5.0, 14.0)]
        if snapped[0] < snapped[1]:
            ref = mle_given_breakpoints(snapped, d)
            assert res.loglik >= ref.loglik

    def test_no_feasible_model(self):
        d = SurvSample([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 1])
        cfg = FitConfig(nbreak=1, optimizer="bfs", min_pt_tail=10, seed=0)
        with pytest.raises(NoFeasibleModelError):
            fit_bfs(d, cfg)

    def test_subsampling_respects_max_set(self):
        rng = np.random.default_rng(23)
        times = rng.exponential(8.0, size=300)
        d = SurvSample(times, np.ones(300, dtype=int))
        cfg = FitConfig(nbreak=2, optimizer="bfs", max_set=500, min_pt_tail=2, seed=4)
        res = fit_bfs(d, cfg)
        assert res.diagnostics["n_combinations"] <= 500


class TestSegmentedLine:
    def test_recovers_exact_breakpoint(self):
        # noiseless points from a 2-piece log-survival curve
        x = np.linspace(0.2, 20.0, 60)
        y = -0.3 * x + (0.3 - 0.05) * np.maximum(x - 7.3, 0.0)
        seg = fit_segmented_line(x, y, npsi=1, rng=np.random.default_rng(0))
        assert seg.converged
        assert seg.psi[0] == pytest.approx(7.3, abs=1e-6)

    def test_recovers_two_breakpoints(self):
        x = np.linspace(0.1, 30.0, 120)
        y = -0.1 * x
        y += (0.1 - 0.01) * np.maximum(x - 5.0, 0.0)
        y += (0.01 - 0.2) * np.maximum(x - 14.0, 0.0)
        seg = fit_segmented_line(x, y, npsi=2, rng=np.random.default_rng(0))
        assert seg.converged
        assert np.allclose(seg.psi, (5.0, 14.0), atol=1e-6)

    def test_fixed_break_held(self):
        x = np.linspace(0.1, 30.0, 120)
        y = -0.1 * x
        y += (0.1 - 0.01) * np.maximum(x - 5.0, 0.0)
        y += (0.01 - 0.2) * np.maximum(x - 14.0, 0.0)
        seg = fit_segmented_line(x, y, npsi=1, fixed_psi=(14.0,), rng=np.random.default_rng(0))
        assert seg.converged
        assert seg.psi[0] == pytest.approx(5.0, abs=1e-6)


class TestFitOls:
    def test_zero_breaks_degenerates_to_exponential_mle(self):
        rng = np.random.default_rng(31)
        d = random_sample(rng, n=30)
        res = fit_ols(d, FitConfig(nbreak=0, optimizer="ols", seed=0))
        assert res.model.rates[0] == pytest.approx(d.n_events / d.time.sum(), rel=1e-12)

    def test_fixed_breakpoint_present_exactly(self, scenario_train):
        cfg = FitConfig(nbreak=2, fixed_breakpoints=(14.0,), optimizer="ols",
                        min_pt_tail=5, seed=1)
        res = fit_ols(scenario_train, cfg)
        assert 14.0 in res.model.breakpoints

    def test_hazards_reestimated_by_mle(self, scenario_train):
        cfg = FitConfig(nbreak=2, optimizer="ols", seed=1)
        res = fit_ols(scenario_train, cfg)
        ref = mle_given_breakpoints(res.model.breakpoints, scenario_train)
        assert res.model.rates == ref.model.rates

    def test_too_few_steps_rejected(self):
        d = SurvSample([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 1])
        with pytest.raises(ValueError):
            fit_ols(d, FitConfig(nbreak=2, optimizer="ols", seed=0))


class TestFitHybrid:
    def test_never_below_snapped_ols(self):
        rng = np.random.default_rng(41)
        wins = 0
        for _ in range(15):
            d = random_sample(rng, n=60, censor_frac=0.2)
            cfg = FitConfig(nbreak=1, optimizer="hybrid", min_pt_tail=1, seed=3)
            try:
                hyb = fit_hybrid(d, cfg)
                ols = fit_ols(d, cfg)
            except NoFeasibleModelError:
                continue
            ev = np.unique(d.time[d.event == 1])
            snapped = [float(ev[np.argmin(np.abs(ev - b))]) for b in ols.diagnostics["free_breakpoints"]]
            try:
                ref = mle_given_breakpoints(snapped, d)
            except EmptyPieceError:
                continue
            assert hyb.loglik >= ref.loglik - 1e-9
            wins += 1
        assert wins >= 10

    def test_never_beats_exhaustive_on_tiny_data(self):
        rng = np.random.default_rng(42)
        compared = 0
        for _ in range(12):
            times = rng.exponential(6.0, size=10)
            d = SurvSample(times, np.ones(10, dtype=int))
            try:
                hyb = fit_hybrid(d, FitConfig(nbreak=1, optimizer="hybrid", min_pt_tail=1, seed=5))
                exh = fit_bfs(d, FitConfig(nbreak=1, optimizer="bfs", min_pt_tail=1, seed=5))
            except NoFeasibleModelError:
                continue
            assert hyb.loglik <= exh.loglik + 1e-9
            compared += 1
        assert compared >= 8

    def test_matches_exhaustive_when_windows_cover_all_candidates(self):
        # few distinct event times: the 3-nearest widening makes every
        # candidate set the full grid, so hybrid == exhaustive exactly
        rng = np.random.default_rng(43)
        for _ in range(6):
            times = rng.choice([2.0, 5.0, 7.0, 9.0], size=12)
            times[:4] = [2.0, 5.0, 7.0, 9.0]
            event = np.ones(14, dtype=int)
            event[12:] = 0
            d = SurvSample(np.concatenate([times, [11.0, 12.0]]), event)
            hyb = fit_hybrid(d, FitConfig(nbreak=1, optimizer="hybrid", min_pt_tail=1, seed=5))
            exh = fit_bfs(d, FitConfig(nbreak=1, optimizer="bfs", min_pt_tail=1, seed=5))
            assert hyb.model.breakpoints == exh.model.breakpoints
            assert hyb.loglik == exh.loglik


class TestFitDispatch:
    def test_nbreak_zero_exponential(self):
        d = SurvSample([2.0, 3.0, 7.0], [1, 1, 0])
        res = fit(d, FitConfig(nbreak=0, seed=0))
        assert res.model.breakpoints == ()
        assert res.model.rates[0] == pytest.approx(2.0 / 12.0, rel=1e-14)

    def test_all_fixed_uses_mle_path(self, scenario_train):
        res = fit(scenario_train, FitConfig(fixed_breakpoints=(5.0, 14.0), seed=0))
        ref = mle_given_breakpoints((5.0, 14.0), scenario_train)
        assert res.model == ref.model
        assert res.optimizer == "fixed"

    def test_exclude_interval_honored(self, scenario_train):
        cfg = FitConfig(nbreak=2, optimizer="hybrid", exclude_int=(23.0, np.inf), seed=2)
        res = fit(scenario_train, cfg)
        assert all(b < 23.0 for b in res.model.breakpoints)

    def test_min_pt_tail_honored(self, scenario_train):
        cfg = FitConfig(nbreak=2, optimizer="hybrid", min_pt_tail=40, seed=2)
        res = fit(scenario_train, cfg)
        ev = scenario_train.time[scenario_train.event == 1]
        assert np.sum(ev >= res.model.breakpoints[-1]) >= 40

    def test_fixed_inside_exclude_rejected(self):
        with pytest.raises(ValueError):
            FitConfig(nbreak=2, fixed_breakpoints=(25.0,), exclude_int=(23.0, np.inf))

    def test_invalid_fixed_cleaned_with_warning(self):
        d = SurvSample([1.0, 2.0, 3.0, 4.0, 5.0], [1, 1, 1, 1, 1])
        res = fit(d, FitConfig(fixed_breakpoints=(0.1, 2.5), seed=0))
        assert res.model.breakpoints == (2.5,)
        assert any("dropped" in w for w in res.warnings)


class TestSearchProperties:
    def test_nesting_over_breakpoint_count(self):
        rng = np.random.default_rng(51)
        times = rng.exponential(5.0, size=30)
        d = SurvSample(times, np.ones(30, dtype=int))
        lls = []
        for r in (1, 2):
            cfg = FitConfig(nbreak=r, optimizer="bfs", min_pt_tail=1,
                            max_set=10**6, seed=0)
            lls.append(fit_bfs(d, cfg).loglik)
        assert lls[1] >= lls[0] - 1e-9

    def test_affine_equivariance(self):
        d = SurvSample([1.0, 2.0, 3.0, 5.0, 8.0, 13.0], [1, 1, 1, 1, 0, 1])
        c = 2.5
        scaled = SurvSample(d.time * c, d.event)
        res1 = mle_given_breakpoints([4.0], d)
        res2 = mle_given_breakpoints([4.0 * c], scaled)
        assert np.allclose(np.asarray(res2.model.rates) * c, res1.model.rates, rtol=1e-12)
        assert res2.loglik == pytest.approx(res1.loglik - d.n_events * np.log(c), rel=1e-12)
        # search path: exhaustive brute force scales the same way
        cfg = FitConfig(nbreak=1, optimizer="bfs", min_pt_tail=1, seed=0)
        b1 = fit_bfs(d, cfg)
        b2 = fit_bfs(scaled, cfg)
        assert b2.model.breakpoints[0] == pytest.approx(b1.model.breakpoints[0] * c, rel=1e-12)

    def test_threads_do_not_change_result(self, scenario_train):
        cfg = FitConfig(nbreak=2, optimizer="hybrid", seed=6)
        a = fit(scenario_train, cfg, threads=1)
        b = fit(scenario_train, cfg, threads=2)
        assert a.model == b.model
        assert a.loglik == b.loglik

    def test_json_roundtrip(self, tmp_path, scenario_train):
        res = fit(scenario_train, FitConfig(nbreak=2, optimizer="hybrid", seed=7))
        path = tmp_path / "fit.json"
        res.save_json(path)
        back = FitResult.load_json(path)
        assert back.model == res.model
        assert back.loglik == res.loglik
        assert back.n_obs == res.n_obs
