import pytest

from codesmooth.certification import beta_factor, beta_quantile
from codesmooth.code_model import snippet_from_source
from codesmooth.errors import NumericsError
from codesmooth.oracle import (
    OracleReport,
    _soundness_sweep_detailed,
    beta_quantile_oracle,
    coverage_experiment,
    enumerate_beta,
    exact_smoothed_score,
    make_report,
    mc_beta_estimate,
    soundness_sweep,
)
from codesmooth.perturbation import SmoothingConfig


def declarations(names) -> str:
    return " ".join(f"int {name};" for name in names)


class TestOracleReport:
    def test_abs_error_filled(self):
        report = make_report("beta", 0.5, 0.503, 1000)
        assert report.abs_error == pytest.approx(0.003, abs=1e-15)
        assert report.quantity == "beta"
        assert report.trials_or_enumerated == 1000

    def test_direct_construction_recomputes(self):
        report = OracleReport("q", 1.0, 0.25, 10, abs_error=99.0)
        assert report.abs_error == 0.75


class TestMCBeta:
    def test_hand_examples(self):
        assert mc_beta_estimate(3, 2, 1, 300_000, 7) == pytest.approx(2 / 3, abs=0.005)
        assert mc_beta_estimate(10, 3, 2, 300_000, 7) == pytest.approx(8 / 15, abs=0.005)

    def test_degenerate_cases_exact(self):
        assert mc_beta_estimate(5, 3, 0, 10, 0) == 0.0
        assert mc_beta_estimate(5, 0, 2, 10, 0) == 0.0
        assert mc_beta_estimate(5, 5, 2, 10, 0) == 1.0

    def test_seed_determinism(self):
        a = mc_beta_estimate(8, 3, 2, 50_000, 42)
        b = mc_beta_estimate(8, 3, 2, 50_000, 42)
        c = mc_beta_estimate(8, 3, 2, 50_000, 43)
        assert a == b
        assert a != c

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            mc_beta_estimate(3, 4, 1, 10, 0)
        with pytest.raises(ValueError):
            mc_beta_estimate(3, 1, 4, 10, 0)
        with pytest.raises(ValueError):
            mc_beta_estimate(3, 1, 1, 0, 0)


class TestEnumerateBeta:
    def test_hand_examples(self):
        assert enumerate_beta(3, 2, 1) == pytest.approx(2 / 3, abs=1e-15)
        assert enumerate_beta(10, 3, 2) == pytest.approx(8 / 15, abs=1e-15)

    def test_matches_running_product(self):
        for h in range(1, 11):
            for k in range(0, h + 1):
                for r in range(0, h + 1):
                    assert enumerate_beta(h, k, r) == pytest.approx(
                        beta_factor(h, k, r), abs=1e-13
                    )

    def test_enumeration_size_guard(self):
        with pytest.raises(ValueError):
            enumerate_beta(21, 2, 1)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            enumerate_beta(3, -1, 1)
        with pytest.raises(ValueError):
            enumerate_beta(3, 1, 5)


class TestExactSmoothedScore:
    def test_watch_everything_always_hits(self):
        snippet = snippet_from_source(declarations(["a", "b", "c"]), "c")
        score = exact_smoothed_score(snippet, 1, 1, {"a", "b", "c"})
        assert score == 1.0

    def test_empty_watch_always_misses(self):
        snippet = snippet_from_source(declarations(["a", "b"]), "c")
        assert exact_smoothed_score(snippet, 0, 1, set()) == 1.0
        assert exact_smoothed_score(snippet, 1, 1, set()) == 0.0

    def test_single_watched_of_four_at_k_two(self):
        snippet = snippet_from_source(declarations(["w", "b", "c", "d"]), "c")
        # 1 - C(3,2)/C(4,2) = 1/2
        assert exact_smoothed_score(snippet, 1, 2, {"w"}) == pytest.approx(0.5)
        assert exact_smoothed_score(snippet, 0, 2, {"w"}) == pytest.approx(0.5)

    def test_outside_table_watch_is_constant_hit(self):
        snippet = snippet_from_source('int a; printf("x");', "c")
        assert "printf" not in snippet.identifiers.names()
        assert exact_smoothed_score(snippet, 1, 0, {"printf"}) == 1.0

    def test_unknown_label_scores_zero(self):
        snippet = snippet_from_source(declarations(["a"]), "c")
        assert exact_smoothed_score(snippet, 5, 1, {"a"}) == 0.0

    def test_size_guard(self):
        snippet = snippet_from_source(declarations([f"v{i}" for i in range(21)]), "c")
        with pytest.raises(ValueError):
            exact_smoothed_score(snippet, 1, 1, {"v0"})

    def test_k_out_of_range(self):
        snippet = snippet_from_source(declarations(["a", "b"]), "c")
        with pytest.raises(ValueError):
            exact_smoothed_score(snippet, 1, 3, {"a"})


class TestSoundnessSweep:
    def fixture(self, h: int):
        return snippet_from_source(declarations([f"v{i}" for i in range(h)]), "c")

    def test_default_fixture_sound(self):
        snippet = self.fixture(8)
        config = SmoothingConfig(n_samples=100, perturb_fraction=0.9)
        violations, enumerated, radius = _soundness_sweep_detailed(
            snippet, config, {"v0"}
        )
        assert violations == 0
        assert radius == 2
        # C(8,1) + C(8,2) adversaries
        assert enumerated == 36

    def test_negative_control_caught(self):
        snippet = self.fixture(8)
        config = SmoothingConfig(n_samples=100, perturb_fraction=0.9)
        halved = lambda h, k, r: beta_factor(h, k, r) / 2.0
        violations = soundness_sweep(snippet, config, {"v0"}, beta_fn=halved)
        assert violations >= 1

    def test_empty_watch_certifies_miss_label(self):
        snippet = self.fixture(8)
        config = SmoothingConfig(n_samples=100, perturb_fraction=0.9)
        assert soundness_sweep(snippet, config, set()) == 0

    def test_varied_retention_sound(self):
        for h, k in ((6, 1), (6, 2), (9, 3), (10, 1)):
            snippet = self.fixture(h)
            config = SmoothingConfig(n_samples=200, perturb_fraction=(h - k) / h)
            assert soundness_sweep(snippet, config, {"v0", "v1"} if k > 1 else {"v0"}) == 0

    def test_size_guard(self):
        snippet = self.fixture(13)
        with pytest.raises(ValueError):
            soundness_sweep(snippet, SmoothingConfig(), {"v0"})

    def test_watch_outside_table_rejected(self):
        snippet = snippet_from_source('int a; printf("x");', "c")
        with pytest.raises(ValueError):
            soundness_sweep(snippet, SmoothingConfig(), {"printf"})

    def test_equal_labels_rejected(self):
        snippet = self.fixture(3)
        with pytest.raises(ValueError):
            soundness_sweep(snippet, SmoothingConfig(), {"v0"}, hit_label=1, miss_label=1)

    def test_empty_snippet_trivially_sound(self):
        snippet = snippet_from_source("return 0;", "c")
        assert soundness_sweep(snippet, SmoothingConfig(), set()) == 0


class TestQuantileOracle:
    def test_uniform_identity(self):
        for p in (0.001, 0.5, 0.999):
            assert beta_quantile_oracle(p, 1, 1) == pytest.approx(p, abs=1e-9)

    def test_symmetric_median(self):
        assert beta_quantile_oracle(0.5, 2, 2) == pytest.approx(0.5, abs=1e-9)

    def test_power_form(self):
        assert beta_quantile_oracle(0.001, 100, 1) == pytest.approx(
            0.001 ** (1.0 / 100.0), abs=1e-9
        )

    def test_agrees_with_continued_fraction(self):
        for a in (1, 10, 1000):
            for b in (1, 10, 1000):
                for p in (0.001, 0.5, 0.999):
                    analytic = beta_quantile(p, a, b)
                    oracle = beta_quantile_oracle(p, a, b)
                    assert abs(analytic - oracle) <= 1e-7

    def test_domain_errors(self):
        for p in (0.0, 1.0, 2.0):
            with pytest.raises(NumericsError):
                beta_quantile_oracle(p, 2, 2)


class TestCoverage:
    def test_high_confidence_bounds_cover(self):
        assert coverage_experiment(0.9, 100, 0.001, 4000, 1) >= 0.997
        assert coverage_experiment(0.6, 100, 0.001, 4000, 1) >= 0.997

    def test_half_alpha_point_interval_never_covers(self):
        assert coverage_experiment(0.5, 100, 0.5, 4000, 1) <= 0.01

    def test_coverage_increases_as_alpha_shrinks(self):
        by_alpha = [
            coverage_experiment(0.9, 100, alpha, 4000, 1)
            for alpha in (0.1, 0.01, 0.001)
        ]
        assert by_alpha[0] < by_alpha[1] < by_alpha[2]

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            coverage_experiment(0.0, 100, 0.001, 10, 0)
        with pytest.raises(ValueError):
            coverage_experiment(1.0, 100, 0.001, 10, 0)
        with pytest.raises(ValueError):
            coverage_experiment(0.5, 0, 0.001, 10, 0)
        with pytest.raises(ValueError):
            coverage_experiment(0.5, 10, 0.001, 0, 0)
