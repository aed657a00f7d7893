import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bgwscale import model as md
from bgwscale.errors import DomainError, ModelError, NoImmigrationError


class TestPgf:
    def test_m1_point(self, m1):
        assert md.pgf_offspring(m1.offspring, 0.5) == pytest.approx(0.8125, abs=1e-15)

    def test_at_one_is_one(self, m1, m2, m3, m4, m5):
        for spec in (m1, m2, m3, m4, m5):
            assert md.pgf_offspring(spec.offspring, 1.0) == pytest.approx(1.0, abs=1e-12)
            if spec.immigration.kind != "none":
                assert md.pgf_immigration(spec.immigration, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_sibuya_mix_closed_form(self, m4):
        # (1-0.75)^{1/2} = 0.5, so pgf = 0.2 + 0.8*0.5
        assert md.pgf_offspring(m4.offspring, 0.75) == pytest.approx(0.6, abs=1e-15)

    def test_immigration_values(self, m2, m3, m5):
        assert md.pgf_immigration(m2.immigration, 0.5) == pytest.approx(2.0, abs=1e-14)
        assert md.pgf_immigration(m3.immigration, 0.5) == pytest.approx(0.5, abs=1e-15)
        assert md.pgf_immigration(m5.immigration, 0.75) == pytest.approx(0.5, abs=1e-15)

    def test_domain_errors(self, m1, m3):
        with pytest.raises(DomainError):
            md.pgf_offspring(m1.offspring, 0.0)
        with pytest.raises(DomainError):
            md.pgf_offspring(m1.offspring, 1.5)
        with pytest.raises(NoImmigrationError):
            md.pgf_immigration(md.ImmigrationLaw.none(), 0.5)

    def test_one_minus_pgf_stable(self, m3):
        # 1 - r~(v) = 1 - v for m3; check deep into the cancellation zone
        got = m3.immigration.one_minus_pgf(1.0, 1e-200)
        assert got == pytest.approx(1e-200, rel=1e-12)


class TestNormalization:
    def test_conditioning(self):
        spec = md.make_spec(md.OffspringLaw.tabular({0: 0.5, 1: 0.5}), 2.0)
        assert spec.offspring.pmf[0] == pytest.approx(1.0)
        assert spec.offspring.prob1 == 0.0
        assert spec.lam == pytest.approx(1.0)
        assert spec.original_lam == 2.0

    def test_idempotent_on_m1(self, m1):
        again = md.normalize_remove_p1(m1)
        assert again.lam == m1.lam
        assert again.offspring.pmf == m1.offspring.pmf

    def test_three_point(self):
        spec = md.make_spec(md.OffspringLaw.tabular({0: 0.25, 1: 0.5, 2: 0.25}), 4.0)
        assert spec.offspring.pmf[0] == pytest.approx(0.5)
        assert spec.offspring.pmf[2] == pytest.approx(0.5)
        assert spec.lam == pytest.approx(2.0)

    def test_degenerate_rejected(self):
        with pytest.raises(ModelError):
            md.make_spec(md.OffspringLaw.tabular({1: 1.0}), 1.0)


class TestValidate:
    def test_fixtures_clean(self, m1, m2, m3, m4, m5):
        for spec in (m1, m2, m3, m4, m5):
            assert md.validate(spec) == []

    def test_nonincreasing_paths(self):
        spec = md.make_spec(md.OffspringLaw.tabular({0: 1.0}), 1.0,
                            md.ImmigrationLaw.tabular({-1: 1.0}), 1.0)
        assert any("nonincreasing" in v for v in md.validate(spec))

    def test_p0_positive(self):
        spec = md.make_spec(md.OffspringLaw.tabular({2: 1.0}), 1.0)
        assert any("p_0" in v for v in md.validate(spec))


class TestRoots:
    def test_varphi(self, m1, m2, m4):
        assert md.root_varphi(m1) == 1.0
        assert md.root_varphi(m2) == pytest.approx(0.5, abs=1e-13)
        assert md.root_varphi(m4) == pytest.approx(0.36, abs=1e-13)

    def test_phi_q(self, m2, m3):
        # m2: r~(z) = 1/z, so mu(r~(z)-1) = q at z = 1/(1+q)
        assert md.root_phi_q(m2, 1.0) == pytest.approx(0.5, abs=1e-13)
        assert md.root_phi_q(m2, 3.0) == pytest.approx(0.25, abs=1e-13)
        assert md.root_phi_q(m3, 1.0) == 0.0  # no culling
        assert md.root_phi_q(m2, 0.0) == 1.0  # 1 is the only root of r~(z)=1

    def test_varphi_qbar(self, m1, m2):
        assert md.root_varphi_qbar(m1, 0.0) == 1.0
        assert md.root_varphi_qbar(m1, 1.0) == pytest.approx(4.0 - math.sqrt(13), abs=1e-12)
        # m2, qbar=3: 2 z^2 - 6 z + 1 = 0, smaller root (3-sqrt(7))/2
        assert md.root_varphi_qbar(m2, 3.0) == pytest.approx((3 - math.sqrt(7)) / 2, abs=1e-12)

    def test_phi_q_decreasing_onto_0_phi(self, m2):
        phi = md.root_phi_q(m2, 0.0)
        qs = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
        vals = [md.root_phi_q(m2, q) for q in qs]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert all(0.0 < v < phi for v in vals)

    def test_varphi_qbar_decreasing(self, m2):
        varphi = md.root_varphi(m2)
        qs = [0.25, 0.5, 1.0, 2.0]
        vals = [md.root_varphi_qbar(m2, q) for q in qs]
        assert vals[0] < varphi
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_varphi_residual_and_smallest(self, m2, m4):
        for spec in (m2, m4):
            v = md.root_varphi(spec)
            resid = abs(spec.offspring.pgf(v) - v)
            assert resid <= 10 * 1e-13 * max(1.0, abs(spec.offspring.pgf_prime(v)))
            grid = np.linspace(v * 0.02, v * 0.98, 17)
            assert np.all(spec.offspring.pgf(grid) > grid)


class TestRegime:
    def test_explosivity(self, m1, m2, m4, m5):
        assert not md.is_explosive(m1)
        assert not md.is_explosive(m2)  # finite support: integral diverges at 1
        assert md.is_explosive(m4)
        assert not md.is_explosive(m5)

    def test_classify(self, m1, m2, m3):
        r1 = md.classify(m1)
        assert (r1.criticality, r1.varphi, r1.phi, r1.explosive) == ("subcritical", 1.0, 0.0, False)
        r2 = md.classify(m2)
        assert r2.criticality == "supercritical"
        assert r2.varphi == pytest.approx(0.5, abs=1e-13)
        assert r2.phi == 1.0
        assert not r2.explosive
        r3 = md.classify(m3)
        assert (r3.criticality, r3.varphi, r3.phi) == ("subcritical", 1.0, 0.0)


class TestJson:
    def test_round_trip(self, m1, m2, m3, m4, m5, tmp_path):
        for i, spec in enumerate((m1, m2, m3, m4, m5)):
            path = tmp_path / f"spec{i}.json"
            md.dump_model(spec, path)
            back = md.load_model(path)
            assert back.lam == pytest.approx(spec.lam, rel=1e-15)
            assert back.mu == pytest.approx(spec.mu, rel=1e-15)
            for v in (0.25, 0.8):
                assert back.offspring.pgf(v) == pytest.approx(spec.offspring.pgf(v), rel=1e-15)
                if spec.immigration.kind != "none":
                    assert back.immigration.pgf(v) == pytest.approx(
                        spec.immigration.pgf(v), rel=1e-15)

    def test_rejects_r0(self):
        with pytest.raises(ModelError):
            md.ImmigrationLaw.tabular({0: 0.5, 1: 0.5})


@st.composite
def tabular_offspring(draw):
    n = draw(st.integers(min_value=2, max_value=6))
    raw = draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n))
    total = sum(raw)
    pmf = {0: raw[0] / total}
    for k, w in enumerate(raw[1:], start=2):
        pmf[k] = w / total
    return md.make_spec(md.OffspringLaw.tabular(pmf), 1.0)


@given(tabular_offspring())
@settings(max_examples=60, deadline=None)
def test_varphi_properties_random(spec):
    v = md.root_varphi(spec)
    assert 0.0 < v <= 1.0
    assert (v < 1.0) == (spec.offspring.mean() > 1.0)
    assert abs(spec.offspring.pgf(v) - v) <= 10 * 1e-13 * max(1.0, spec.offspring.pgf_prime(v))
    assert not md.is_explosive(spec)
