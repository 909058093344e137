import json
import math
from importlib import resources

import jsonschema
import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import FAMILIES, random_design
from symreg.design import DesignPartition
from symreg.distcore import constants_from_deltas, correction_constants, delta_constants, kernel
from symreg.estimate import ConvergenceError, ModelSpec, fit, fit_restricted
from symreg.testsuite import (
    apply_corrections,
    bartlett_lr,
    bartlett_type_gradient,
    bartlett_type_score,
    chisq_pvalue,
    correction_coefficients,
    run_tests,
    statistics,
)

CORRECTABLE = [f for f in FAMILIES]


def schema(name):
    return json.loads((resources.files("symreg") / "schemas" / f"{name}.schema.json").read_text())


def normal_f_identities(report, n, p, q):
    rss1 = np.sum(report.unrestricted.residuals**2)
    rss0 = np.sum(report.restricted.residuals**2)
    u = rss0 / rss1
    return n * (u - 1), n * math.log(u), n * (1 - 1 / u)


class TestStatistics:
    def test_hand_example(self):
        spec = ModelSpec([0.0, 2.0], np.ones((2, 1)), "normal", test=[0], beta10=[0.0])
        r = run_tests(spec)
        assert r.s_w == pytest.approx(2.0)
        assert r.s_lr == pytest.approx(2 * math.log(2))
        assert r.s_lr == pytest.approx(1.3863, abs=1e-4)
        assert r.s_r == pytest.approx(1.0)
        assert r.s_t == pytest.approx(1.0)

    @pytest.mark.parametrize("fam", ["normal", "student-t:4", "logistic1", "logistic2"])
    def test_zero_when_estimate_equals_null(self, fam):
        x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0, -1.5, 1.5])
        y = np.array([1.0, 3.0, 2.5, 3.0, 1.0, 0.2, 0.2])
        X = np.column_stack([np.ones(7), x])
        r = run_tests(ModelSpec(y, X, fam, test=[1]))
        for k in ("s_w", "s_lr", "s_r", "s_t"):
            assert abs(getattr(r, k)) < 1e-8, k

    @given(seed=st.integers(0, 10**6), q=st.integers(1, 3))
    def test_normal_score_equals_gradient(self, seed, q):
        rng = np.random.default_rng(seed)
        X = random_design(rng, 15, 4)
        y = rng.standard_normal(15) * 2 + X[:, 0]
        r = run_tests(ModelSpec(y, X, "normal", test=list(range(4 - q, 4))))
        assert r.s_r == pytest.approx(r.s_t, abs=1e-8)
        w, lr, sc = normal_f_identities(r, 15, 4, q)
        assert r.s_w == pytest.approx(w, rel=1e-9)
        assert r.s_lr == pytest.approx(lr, rel=1e-9, abs=1e-12)
        assert r.s_r == pytest.approx(sc, rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_nonnegative(self, fam):
        rng = np.random.default_rng(3)
        X = random_design(rng, 20, 4)
        for _ in range(5):
            y = X @ [1.0, 0, 0, 0] + 3 * kernel(fam).sample(rng, 20)
            r = run_tests(ModelSpec(y, X, fam, test=[1, 2]), force=True)
            assert r.s_w >= 0 and r.s_r >= 0 and r.s_lr >= -1e-8

    @pytest.mark.parametrize("fam", FAMILIES)
    @given(c=st.floats(0.01, 100.0), seed=st.integers(0, 1000))
    def test_scale_invariance(self, fam, c, seed):
        rng = np.random.default_rng(seed)
        X = random_design(rng, 20, 4)
        y = X @ [1.0, 0.5, 0, 0] + 3 * kernel(fam).sample(rng, 20)
        # rare Cauchy samples sit on a flat ridge and hit the iteration cap;
        # the trajectory is equivariant either way
        a = run_tests(ModelSpec(y, X, fam, test=[2, 3]), force=True)
        b = run_tests(ModelSpec(c * y, X, fam, test=[2, 3]), force=True)
        for k in ("s_w", "s_lr", "s_r", "s_t"):
            assert getattr(b, k) == pytest.approx(getattr(a, k), rel=1e-8, abs=1e-8), k
        assert a.coefficients == b.coefficients

    def test_refuses_unconverged(self):
        X = np.column_stack([np.ones(6), np.arange(6.0)])
        y = X @ [1.0, 2.0]
        spec = ModelSpec(y, X, "normal", test=[1], beta10=[2.0])
        with pytest.raises(ConvergenceError):
            run_tests(spec)

    def test_single_fit_path_matches_report(self, rng):
        X = random_design(rng, 20, 3)
        y = rng.standard_normal(20)
        spec = ModelSpec(y, X, "logistic2", test=[2])
        r = run_tests(spec)
        raw = statistics(fit(spec), fit_restricted(spec), spec.partition, spec.family, spec.y)
        assert raw == pytest.approx((r.s_w, r.s_lr, r.s_r, r.s_t))


class TestCoefficients:
    def part(self, n=20, p=4, q=3, seed=0):
        rng = np.random.default_rng(seed)
        return DesignPartition(random_design(rng, n, p), list(range(1, q + 1)))

    def test_normal_worked_example(self):
        cc = correction_coefficients(self.part(), "normal")
        assert cc.a_lr == pytest.approx(0.175, abs=1e-15)
        assert cc.c_r == pytest.approx(0.175, abs=1e-15)
        assert cc.c_t == pytest.approx(0.175, abs=1e-15)
        assert cc.b_r == pytest.approx(-0.025, abs=1e-15)
        assert cc.b_t == pytest.approx(-0.025, abs=1e-15)
        assert cc.A_R1_bp == pytest.approx(1.8)
        assert cc.A_R2_bp == pytest.approx(-4.5)

    @given(seed=st.integers(0, 10**6), n=st.integers(8, 60), p=st.integers(1, 6), data=st.data())
    def test_normal_score_and_gradient_agree(self, seed, n, p, data):
        q = data.draw(st.integers(1, p))
        rng = np.random.default_rng(seed)
        part = DesignPartition(rng.standard_normal((n, p)), q)
        cc = correction_coefficients(part, "normal")
        assert cc.b_r == pytest.approx(cc.b_t, abs=1e-12)
        assert cc.c_r == pytest.approx(cc.c_t, abs=1e-12)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_cubic_terms_vanish(self, fam):
        for phi_known in (False, True):
            cc = correction_coefficients(self.part(seed=4), fam, phi_known=phi_known)
            assert cc.a_r == 0.0 and cc.a_t == 0.0

    def test_normal_phi_known(self):
        cc = correction_coefficients(self.part(), "normal", phi_known=True)
        assert cc.a_lr == 0.0
        assert (cc.a_t, cc.b_t, cc.c_t) == (0.0, 0.0, 0.0)
        s_star, a = bartlett_lr(3.2, self.part(), constants=correction_constants("normal"), phi_known=True)
        assert s_star == 3.2 and a == 0.0

    def test_phi_known_full_test_uses_second_term_only(self, rng):
        part = DesignPartition(random_design(rng, 15, 3), 3)
        c = correction_constants("student-t:4")
        cc = correction_coefficients(part, c, phi_known=True)
        rho = part.projections()
        a2 = -9 * c.b0 / 15 * rho.rho_ZZ
        assert cc.A_R1 == 0.0
        assert cc.A_R2 == pytest.approx(a2)
        assert cc.b_r == pytest.approx(a2 / (12 * 3 * 5))
        assert cc.c_r == pytest.approx(-a2 / 36)

    def test_student_lr_by_hand(self):
        part = self.part(seed=9)
        rho = part.projections()
        v = 4.0
        d0 = 6 * (v + 2) * (v + 3) ** 2 / (4 * v * (v + 1) * (v + 5) * (v + 7))
        d1 = (v + 3) * (v**3 + 11 * v**2 + 20 * v + 4) / (v * (v + 7) * (v + 5) ** 2)
        d2 = (v + 3) * (v + 2) ** 2 / (v * (v + 5) ** 2)
        n, p, q = 20, 4, 3
        expected = d0 / (n * q) * (rho.rho_ZZ - rho.rho_Z2Z2) + d1 / n + d2 * (2 * p - q) / (2 * n)
        assert correction_coefficients(part, "student-t:4").a_lr == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_dual_path(self, fam):
        part = self.part(n=25, p=5, q=2, seed=2)
        a = correction_coefficients(part, correction_constants(fam))
        b = correction_coefficients(part, constants_from_deltas(delta_constants(kernel(fam))))
        for k, v in a.as_dict().items():
            assert v == pytest.approx(getattr(b, k), abs=1e-6), k

    @pytest.mark.parametrize("fam", FAMILIES)
    @pytest.mark.parametrize("phi_known", [False, True])
    def test_row_duplication_halves(self, fam, phi_known):
        rng = np.random.default_rng(5)
        X = random_design(rng, 12, 4)
        a = correction_coefficients(DesignPartition(X, [1, 3]), fam, phi_known=phi_known)
        b = correction_coefficients(DesignPartition(np.vstack([X, X]), [1, 3]), fam, phi_known=phi_known)
        for k in ("A_lr", "A_lr_bp", "A_R1", "A_R2", "A_R1_bp", "A_R2_bp", "A_T1", "A_T2", "A_T1_bp", "A_T2_bp"):
            assert getattr(b, k) == pytest.approx(getattr(a, k) / 2, abs=1e-10), k

    def test_polynomial_fixes_origin(self):
        part = self.part()
        c = correction_constants("logistic2")
        assert bartlett_type_score(0.0, part, constants=c)[0] == 0.0
        assert bartlett_type_gradient(0.0, part, constants=c)[0] == 0.0

    def test_apply_matches_helpers(self):
        part = self.part()
        c = correction_constants("student-t:4")
        cc = correction_coefficients(part, c)
        s = np.array([0.5, 3.0, 9.0])
        out = apply_corrections({"s_lr": s, "s_r": s, "s_t": s}, cc)
        np.testing.assert_allclose(out["s_lr_star"], bartlett_lr(s, part, constants=c)[0])
        np.testing.assert_allclose(out["s_r_star"], bartlett_type_score(s, part, constants=c)[0])
        np.testing.assert_allclose(out["s_t_star"], bartlett_type_gradient(s, part, constants=c)[0])


class TestPvalues:
    def test_values(self):
        assert chisq_pvalue(0.0, 3) == 1.0
        assert chisq_pvalue(3.84146, 1) == pytest.approx(0.05, abs=1e-5)
        assert chisq_pvalue(math.inf, 2) == 0.0
        assert chisq_pvalue(-1.0, 2) == 1.0

    def test_q_positive(self):
        with pytest.raises(ValueError):
            chisq_pvalue(1.0, 0)

    @given(s=st.floats(-10, 1e4), q=st.integers(1, 10))
    def test_range(self, s, q):
        assert 0.0 <= chisq_pvalue(s, q) <= 1.0


class TestReport:
    def test_json_schema(self, rng):
        X = random_design(rng, 20, 4)
        y = X @ [1, 2, 0, 0] + rng.standard_normal(20)
        r = run_tests(ModelSpec(y, X, "student-t:4", test=[2, 3]))
        payload = r.to_json()
        jsonschema.validate(payload, schema("test_report"))
        json.dumps(payload, allow_nan=False)

    def test_unsupported_correction(self, rng):
        X = random_design(rng, 30, 3)
        y = X @ [1, 2, 0] + rng.laplace(size=30)
        r = run_tests(ModelSpec(y, X, "pexp:0.5", test=[2]), force=True)
        assert r.coefficients is None
        assert math.isnan(r.s_t_star)
        jsonschema.validate(r.to_json(), schema("test_report"))

    def test_clamp_flag(self):
        # a huge statistic drives the linear-in-S factor negative
        rng = np.random.default_rng(0)
        X = random_design(rng, 8, 4)
        y = X @ [0, 40, 40, 40] + 0.1 * rng.standard_normal(8)
        r = run_tests(ModelSpec(y, X, "normal", test=[1, 2, 3]))
        assert r.s_r_star < 0 or r.s_t_star < 0 or not r.correction_clamped
        if r.correction_clamped:
            assert r.pvalues["s_t_star"] == 1.0 or r.pvalues["s_r_star"] == 1.0
