import math

import numpy as np
import pytest

from stepdecay_lab import bounds as B


def test_step_decay_nonconvex_bound_worked_example():
    # alpha=2, eta0=1, L=1, f_max=1, V2=1, T=256: A*ln(256) = 8ln2/(4ln2) = 2
    # so the bound is exactly 2/15 + 1/15 = 0.2
    rep = B.nonconvex_bound("T3.1", eta0=1.0, T=256, L=1.0, V2=1.0, f_max=1.0, alpha=2.0)
    assert rep.constants["A"] == pytest.approx(1.0 / (4.0 * math.log(2.0)))
    assert rep.constants["A"] == pytest.approx(0.36067, abs=5e-6)
    assert rep.constants["B"] == 1.0
    assert rep.value == pytest.approx(0.2, abs=1e-12)


def test_noise_free_alpha_choice():
    rep = B.nonconvex_bound("C3.1", eta0=1.0, T=100, L=1.0, V2=1.0, f_max=1.0)
    assert rep.constants["alpha"] == 2.0
    # C3.1 relaxes T3.1 at that alpha, so it can never be smaller
    t31 = B.nonconvex_bound("T3.1", eta0=1.0, T=100, L=1.0, V2=1.0, f_max=1.0, alpha=2.0)
    assert rep.value >= t31.value


def test_sqrt_t_improved_bound_noiseless():
    rep = B.nonconvex_bound("T3.3", eta0=1.0, T=10_000, L=1.0, V2=0.0, f_max=1.0)
    assert rep.value == pytest.approx(0.03, abs=1e-15)


def test_exp_decay_bound_beta_sqrt_T_matches_closed_form():
    T = 4096
    rep = B.nonconvex_bound("T3.2", eta0=0.5, T=T, L=2.0, V2=1.0, f_max=3.0,
                            beta=math.sqrt(T))
    closed = (3.0 / 0.5 + 2.0 * 1.0 * 0.5 / 2.0) * math.log(T) / (math.sqrt(T) - 1.0)
    assert rep.value == pytest.approx(closed, rel=1e-12)
    default = B.nonconvex_bound("T3.2", eta0=0.5, T=T, L=2.0, V2=1.0, f_max=3.0)
    assert default.value == rep.value


def test_classic_sqrt_bound_uses_value_gap():
    rep = B.nonconvex_bound("P3.1", eta0=1.0, T=256, L=1.0, V2=1.0, f_max=1.0, f_gap=0.5)
    expected = 0.5 / 15.0 + (math.log(256) + 1.0) / (2.0 * 15.0)
    assert rep.value == pytest.approx(expected, rel=1e-12)
    fallback = B.nonconvex_bound("P3.1", eta0=1.0, T=256, L=1.0, V2=1.0, f_max=1.0)
    assert fallback.inputs["f_gap"] == 1.0
    assert any("f_max" in note for note in fallback.notes)


def test_convex_bound_worked_example():
    rep = B.convex_bound("T4.1-avg", D2=4.0, G2=1.0, eta0=1.0, alpha=2.0, T=256)
    assert rep.constants["A2"] == pytest.approx(4.0 / (8.0 * math.log(2.0)))
    assert rep.constants["A2"] == pytest.approx(0.72135, abs=5e-6)
    assert rep.constants["B2"] == 1.0
    assert rep.value == pytest.approx((0.72135 * math.log(256) + 1.0) / 16.0, abs=1e-4)
    assert rep.value == pytest.approx(0.3125, abs=5e-4)


def test_convex_last_iterate_dominates_average():
    rng = np.random.default_rng(3)
    for _ in range(100):
        kwargs = dict(D2=float(rng.uniform(0.1, 10)), G2=float(rng.uniform(0.1, 10)),
                      eta0=float(rng.uniform(0.01, 2)), alpha=float(rng.uniform(1.05, 9)),
                      T=int(rng.integers(2, 1 << 18)))
        avg = B.convex_bound("T4.1-avg", **kwargs)
        last = B.convex_bound("T4.1-last", **kwargs)
        assert last.value >= avg.value
        # the two spellings of the trailing constant agree exactly
        assert last.constants["last_const"] == pytest.approx(
            last.constants["last_const_alt"], rel=1e-14)


def test_convex_bound_D_scaling():
    base = B.convex_bound("T4.1-avg", D2=1.0, G2=1.0, eta0=1.0, alpha=2.0, T=64)
    scaled = B.convex_bound("T4.1-avg", D2=4.0, G2=1.0, eta0=1.0, alpha=2.0, T=64)
    assert scaled.constants["A2"] == pytest.approx(4.0 * base.constants["A2"], rel=1e-15)


def test_strongly_convex_bound_worked_example():
    rep = B.strongly_convex_bound("T5.1", mu=1.0, G2=1.0, eta0=0.25, alpha=2.0,
                                  T=256, R=1.0)
    assert rep.constants["A3"] == pytest.approx(math.log(2.0))
    # first term exp(-ln2 * 255 / ln256) = 2^(-255/8); second evaluated directly
    first = math.exp(-math.log(2.0) * 255.0 / math.log(256.0))
    second = 2.0 * math.exp(0.125) / (2.0 * math.log(2.0)) * math.log(256.0) / 256.0
    assert first == pytest.approx(1.43e-14, rel=0.01)
    assert rep.value == pytest.approx(first + second, rel=1e-12)
    assert rep.value == pytest.approx(0.0354, abs=1e-4)


def test_strongly_convex_first_term_vanishes_fast():
    rep = B.strongly_convex_bound("T5.1", mu=1.0, G2=1.0, eta0=0.25, alpha=2.0,
                                  T=2 ** 14, R=1.0)
    assert rep.terms["initial"] < 1e-12


def test_suffix_bound_constants():
    rep = B.strongly_convex_bound("T5.4", mu=1.0, G2=1.0, eta0=0.25, alpha=2.0,
                                  T=256, R=1.0)
    assert rep.constants["A5"] == 4.0
    assert rep.constants["C5"] == pytest.approx(2.0 * (2.0 + 1.0 / 3.0) / (2.0 * math.log(2.0)))
    assert rep.constants["C5"] == pytest.approx(3.366, abs=1e-3)


def test_cross_theorem_constant_consistency():
    rng = np.random.default_rng(9)
    for _ in range(100):
        mu = float(rng.uniform(0.05, 5))
        eta0 = float(rng.uniform(0.001, 0.49 / mu))
        alpha = float(rng.uniform(1.05, 9))
        T = int(rng.integers(2, 1 << 16))
        G2 = float(rng.uniform(0.1, 20))
        R = float(rng.uniform(0.0, 10))
        t53 = B.strongly_convex_bound("T5.3", mu=mu, G2=G2, eta0=eta0, alpha=alpha, T=T, R=R)
        t54 = B.strongly_convex_bound("T5.4", mu=mu, G2=G2, eta0=eta0, alpha=alpha, T=T, R=R)
        A4 = eta0 * alpha * math.log(alpha)
        B4 = 2.0 * mu * A4 / (alpha - 1.0)
        assert t53.constants["A4"] == pytest.approx(A4, rel=1e-14)
        assert t53.constants["B4"] == pytest.approx(B4, rel=1e-14)
        assert t54.constants["B4"] == pytest.approx(t53.constants["B4"], rel=1e-14)
        assert t53.value > 0 and math.isfinite(t53.value)
        assert t54.value > 0 and math.isfinite(t54.value)


def test_constant_roundtrip_from_inputs():
    rep = B.strongly_convex_bound("T5.3", mu=0.7, G2=3.0, eta0=0.2, alpha=3.0, T=512, R=2.0)
    i = rep.inputs
    A4 = i["eta0"] * i["alpha"] * math.log(i["alpha"])
    B4 = 2.0 * i["mu"] * A4 / (i["alpha"] - 1.0)
    C4 = i["G2"] * i["eta0"] * i["alpha"]
    D4 = i["G2"] / (2.0 * i["mu"] * math.log(i["alpha"]) * B4)
    E4 = i["alpha"] * B4
    assert rep.constants == pytest.approx(dict(A4=A4, B4=B4, C4=C4, D4=D4, E4=E4))


def test_strongly_convex_rejects_large_eta0():
    with pytest.raises(B.BoundError, match="eta0"):
        B.strongly_convex_bound("T5.1", mu=1.0, G2=1.0, eta0=0.5, alpha=2.0, T=256, R=1.0)


def test_rejects_T_below_two():
    with pytest.raises(B.BoundError):
        B.nonconvex_bound("T3.3", eta0=1.0, T=1, L=1.0, V2=1.0, f_max=1.0)


def test_lower_threshold_worked_example():
    info = B.lower_bound_threshold(0.25, 2.0, 65536)
    expected = math.log(4.0) / (9.0 * math.exp(2.0) * math.log(2.0)) \
        * math.log(65536.0) / 65536.0
    assert info.value == pytest.approx(expected, rel=1e-14)
    assert info.value == pytest.approx(5.09e-6, rel=0.002)
    assert not info.lemma_applies  # practical delta sits below the lemma regime
    assert info.c == pytest.approx(math.sqrt(2.0 * math.log(4.0)) / 3.0)
    assert info.K == pytest.approx(65536.0 / 16.0)


def test_lower_threshold_monotone_in_delta_and_alpha():
    t1 = B.lower_bound_threshold(0.1, 2.0, 65536).value
    t2 = B.lower_bound_threshold(0.5, 2.0, 65536).value
    assert t1 > t2
    # ln(4) = 2 ln(2): doubling alpha from 2 to 4 halves the prefactor
    a2 = B.lower_bound_threshold(0.25, 2.0, 65536).value
    a4 = B.lower_bound_threshold(0.25, 4.0, 65536).value
    assert a4 == pytest.approx(a2 / 2.0, rel=1e-12)


def test_lower_threshold_strict_mode():
    with pytest.raises(B.BoundError, match="c ="):
        B.lower_bound_threshold(0.25, 2.0, 65536, strict=True)
    info = B.lower_bound_threshold(math.exp(-19.0), 2.0, 2 ** 20, strict=True)
    assert info.lemma_applies and info.c >= 2.0


def test_step_decay_bound_with_alpha_sqrt_T_stays_controlled():
    # alpha = sqrt(T) collapses step decay to a constant step; the ln T factor
    # in the bound is then cancelled by A ~ 1/ln(alpha) = 2/ln(T)
    for T in (2 ** 8, 2 ** 12, 2 ** 16):
        alpha = math.sqrt(T)
        rep = B.nonconvex_bound("T3.1", eta0=1.0, T=T, L=1.0, V2=1.0, f_max=1.0,
                                alpha=alpha)
        a_lnT = rep.constants["A"] * math.log(T)
        assert a_lnT <= 2.0  # (alpha-1)/alpha^2 * 2 <= 2, no ln T blow-up


def test_positive_and_finite_on_random_grid():
    rng = np.random.default_rng(17)
    for _ in range(100):
        T = int(rng.integers(2, 1 << 20))
        eta0 = float(rng.uniform(1e-3, 0.49))
        alpha = float(rng.uniform(1.01, 10))
        vals = [
            B.nonconvex_bound("T3.1", eta0=eta0, T=T, L=2.0, V2=1.0, f_max=5.0,
                              alpha=alpha).value,
            B.nonconvex_bound("T3.3", eta0=eta0, T=T, L=2.0, V2=1.0, f_max=5.0).value,
            B.convex_bound("T4.1-last", D2=3.0, G2=2.0, eta0=eta0, alpha=alpha, T=T).value,
            B.strongly_convex_bound("T5.1", mu=1.0, G2=2.0, eta0=eta0, alpha=alpha,
                                    T=T, R=1.0).value,
        ]
        assert all(v > 0 and math.isfinite(v) for v in vals)


def test_integrality_note():
    rep = B.nonconvex_bound("T3.1", eta0=1.0, T=1000, L=1.0, V2=1.0, f_max=1.0, alpha=2.0)
    assert any("not an integer" in n for n in rep.notes)
    rep2 = B.nonconvex_bound("T3.1", eta0=1.0, T=1024, L=1.0, V2=1.0, f_max=1.0, alpha=2.0)
    assert not any("not an integer" in n for n in rep2.notes)


def test_evaluate_bound_dispatch():
    rep = B.evaluate_bound("T5.2-lower", delta=0.25, alpha=2.0, T=65536)
    assert rep.value == pytest.approx(5.09e-6, rel=0.002)
    with pytest.raises(B.BoundError, match="unknown bound kind"):
        B.evaluate_bound("T9.9")
