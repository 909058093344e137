import math

import numpy as np
import pytest

from symreg.simlab import (
    COLUMNS,
    ConfigError,
    SimDesign,
    SimResult,
    SimulationError,
    bundled_designs,
    load_design,
    power_study,
    size_study,
    table_report,
)


def small(**kw):
    base = dict(family="normal", n=20, p=4, q=3, replicates=600, alphas=(0.1, 0.05, 0.01))
    base.update(kw)
    return SimDesign(**base)


class TestDesign:
    def test_defaults(self):
        d = small()
        assert d.test == (1, 2, 3)
        assert d.beta10 == (0.0, 0.0, 0.0)
        assert d.beta_true == (1.0, 0.0, 0.0, 0.0)
        assert d.family == "normal"

    def test_covariates_fixed(self):
        X = small().covariates()
        np.testing.assert_array_equal(X, small(noise_seed=99).covariates())
        assert np.all(X[:, 0] == 1)
        assert np.all((X[:, 1:] > 0) & (X[:, 1:] < 1))
        assert not np.array_equal(X, small(covariate_seed=7).covariates())

    def test_errors_collected(self):
        with pytest.raises(ConfigError) as exc:
            SimDesign(family="nonsense", n=3, p=4, q=5, phi=-1.0, alphas=(1.5,))
        msgs = " ".join(exc.value.errors)
        assert len(exc.value.errors) >= 3
        assert "family" in msgs and "phi" in msgs and "alphas" in msgs

    def test_ini_errors_collected(self):
        text = "[design]\nfamily = normal\nn = twenty\np = 4\nreps = 0\ncolour = red\n"
        with pytest.raises(ConfigError) as exc:
            load_design(text)
        msgs = " ".join(exc.value.errors)
        assert "n: cannot parse" in msgs
        assert "colour: unknown key" in msgs
        assert "q: required" in msgs

    def test_bundled(self):
        names = bundled_designs()
        assert {"table1_q3_n20", "table4_q2_n20", "table6_q4_n20", "power_n30"} <= set(names)
        for name in names:
            assert load_design(name).n > 0

    def test_override(self):
        d = load_design("table1_q3_n20", replicates=10)
        assert d.replicates == 10 and d.n == 20

    def test_unknown_source(self):
        with pytest.raises(ConfigError):
            load_design("no_such_design")

    def test_with_tested(self):
        assert small().with_tested(2.5).beta_true == (1.0, 2.5, 2.5, 2.5)


class TestSize:
    def test_self_test_calibration(self):
        res = size_study(small(replicates=3000), self_test=True)
        for a in res.design.alphas:
            r, se = res.rates["chi2_draw"][a], res.mc_se["chi2_draw"][a]
            assert abs(r - 100 * a) <= 3 * se

    def test_single_replicate(self):
        res = size_study(small(replicates=1))
        for k in ("s_w", "s_lr", "s_r", "s_t", "s_lr_star"):
            for a in res.design.alphas:
                assert res.rates[k][a] in (0.0, 100.0)

    def test_mc_se(self):
        res = size_study(small())
        for k in ("s_w", "s_r"):
            for a in res.design.alphas:
                r = res.rates[k][a] / 100
                assert res.mc_se[k][a] == pytest.approx(100 * math.sqrt(r * (1 - r) / 600))

    def test_normal_score_gradient_columns(self):
        res = size_study(small())
        assert res.rates["s_r"] == res.rates["s_t"]
        assert res.rates["s_r_star"] == res.rates["s_t_star"]

    def test_threads_bitwise(self):
        d = small(family="student-t:4", replicates=1200)
        a = size_study(d, threads=1)
        b = size_study(d, threads=2)
        assert a.rates == b.rates and a.critical_values == b.critical_values
        for k in a.values:
            np.testing.assert_array_equal(a.values[k], b.values[k])

    def test_failures_abort(self):
        # near-Laplace errors: most fits cannot reach the score tolerance
        with pytest.raises(SimulationError, match="pexp:0.9"):
            size_study(SimDesign(family="pexp:0.9", n=30, p=3, q=1, replicates=50, phi=1.0))

    def test_uncorrectable_family(self):
        res = size_study(SimDesign(family="pexp:0.5", n=30, p=3, q=1, replicates=100, phi=1.0))
        assert all(math.isnan(v) for v in res.rates["s_t_star"].values())
        assert not math.isnan(res.rates["s_w"][0.05])
        assert "NA" in table_report(res)

    def test_unsupported_correction_is_na(self):
        res = SimResult(small(), 1, 0, {"s_t_star": {a: math.nan for a in (0.1, 0.05, 0.01)}}, {}, {})
        rows = table_report(res, fmt="csv").strip().splitlines()[1:]
        assert all(r.split(",")[10] == "NA" for r in rows)

    def test_bootstrap_columns(self):
        res = size_study(small(replicates=20, bootstrap_B=49))
        for k in ("boot_w", "boot_lr", "boot_r", "boot_t"):
            assert 0 <= res.rates[k][0.05] <= 100


class TestPower:
    def test_monotone_and_calibrated(self):
        d = small(n=30, replicates=3000, alphas=(0.1,), delta_grid=(-6.0, -3.0, 0.0, 3.0, 6.0))
        res = power_study(d, calibration=20000)
        for k in ("s_w", "s_lr", "s_r", "s_t"):
            r = np.array(res.rates[k][0.1])
            se = np.array(res.mc_se[k][0.1])
            assert abs(r[2] - 10) <= 3 * max(se[2], math.sqrt(0.09 / 3000) * 100)
            assert r[1] >= r[2] - 3 * se[2] and r[0] >= r[1] - 3 * se[1]
            assert r[3] >= r[2] - 3 * se[2] and r[4] >= r[3] - 3 * se[3]
            assert r[0] > 95 and r[4] > 95

    def test_needs_grid(self):
        with pytest.raises(ConfigError):
            power_study(small())

    def test_csv(self):
        d = small(replicates=100, alphas=(0.1, 0.05), delta_grid=(0.0, 1.0))
        lines = power_study(d, calibration=500).to_csv().strip().splitlines()
        assert len(lines) == 1 + 2 * 2
        assert lines[0].startswith("delta,alpha,S_W")


class TestTable:
    def test_header_only(self):
        res = size_study(small(replicates=10, alphas=()))
        out = table_report(res, fmt="csv").strip().splitlines()
        assert len(out) == 1
        assert len(out[0].split(",")) == 4 + len(COLUMNS) == 15

    def test_one_row(self):
        res = size_study(small(replicates=10, alphas=(0.05,)))
        out = table_report(res, fmt="csv").strip().splitlines()
        assert len(out) == 2
        cells = out[1].split(",")
        assert cells[:4] == ["normal", "3", "20", "5"]
        assert cells[-4:] == ["NA"] * 4

    def test_layout(self):
        res = size_study(small(replicates=10))
        text = table_report([res, res]).strip().splitlines()
        assert len(text) == 1 + 6
        assert "S^b_T" in text[0]

    def test_bad_format(self):
        with pytest.raises(ValueError):
            table_report(size_study(small(replicates=5)), fmt="xml")
