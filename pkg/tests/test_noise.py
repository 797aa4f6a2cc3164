import io
import math

import numpy as np
import pytest
from scipy.integrate import quad

import levywave as lw
from levywave.noise import _upper_gamma


def ts_density(c, alpha, eta):
    return lambda z: c * z ** (-1.0 - alpha) * np.exp(-eta * z)


# ---------------------------------------------------------------------------
# moment constants


def test_theta_bar_band_outside_unit_ball():
    model = lw.LevyModel(lw.UniformBand(1.0, 2.0, 1.0))
    assert lw.theta_bar(model) == 0.0


def test_theta_bar_symmetric_band_closed_form():
    model = lw.LevyModel(lw.UniformBand(0.5, 1.0, 1.0, symmetric=True), small_cutoff=0.5)
    expected = 2.0 * (1.0 - 0.125) / 3.0  # 7/12
    assert lw.theta_bar(model) == pytest.approx(expected, rel=1e-14)
    oracle, _ = quad(lambda z: z * z, 0.5, 1.0)
    assert lw.theta_bar(model) == pytest.approx(2.0 * oracle, rel=1e-10)


def test_theta_bar_tempered_stable_vs_quadrature():
    ts = lw.TemperedStable(1.0, 0.5, 1.0)
    model = lw.LevyModel(ts)
    oracle, _ = quad(ts_density(1.0, 0.5, 1.0), 0.0, 1.0, weight="alg", wvar=(0.5, 0.0))
    # scipy's weighted quad handles the z^{-0.5} singularity as z^2 * z^{-1.5}
    direct, _ = quad(lambda z: z * z * ts_density(1.0, 0.5, 1.0)(z), 1e-12, 1.0)
    assert lw.theta_bar(model) == pytest.approx(direct, abs=1e-8)


def test_theta_under_examples():
    assert lw.theta_under(lw.LevyModel(lw.UniformBand(1.0, 2.0, 1.0, symmetric=True))) == pytest.approx(2.0)
    assert lw.theta_under(lw.LevyModel(lw.UniformBand(1.0, 2.0, 1.0))) == pytest.approx(1.0)
    cp = lw.CompoundPoissonOnly(rate=3.0, marks=lw.point_mark_law(1.5))
    assert lw.theta_under(lw.LevyModel(cp)) == pytest.approx(3.0)


def test_theta_under_tempered_stable_vs_quadrature():
    for alpha in (0.5, 1.0, 1.5):
        ts = lw.TemperedStable(0.8, alpha, 1.3)
        oracle, _ = quad(ts_density(0.8, alpha, 1.3), 1.0, np.inf)
        assert lw.theta_under(lw.LevyModel(ts)) == pytest.approx(oracle, abs=1e-8)


def test_theta_p_examples():
    model = lw.LevyModel(lw.UniformBand(1.0, 2.0, 1.0))
    assert lw.theta_p(model, 2) == pytest.approx(7.0 / 3.0, rel=1e-14)
    oracle, _ = quad(lambda z: z * z, 1.0, 2.0)
    assert lw.theta_p(model, 2) == pytest.approx(oracle, rel=1e-10)
    inside = lw.LevyModel(lw.UniformBand(0.2, 0.8, 1.0))
    assert lw.theta_p(inside, 2) == 0.0


def test_theta_p_tempered_stable_vs_quadrature():
    ts = lw.TemperedStable(1.0, 0.5, 1.0)
    oracle, _ = quad(lambda z: z**4 * ts_density(1.0, 0.5, 1.0)(z), 1.0, np.inf)
    assert lw.theta_p(lw.LevyModel(ts), 4) == pytest.approx(oracle, abs=1e-8)
    with pytest.raises(ValueError):
        lw.theta_p(lw.LevyModel(ts), 1)


def test_upper_gamma_negative_parameter_vs_quadrature():
    for a in (-0.5, -1.0, -1.7):
        for x in (0.3, 1.0, 2.5):
            oracle, _ = quad(lambda t: t ** (a - 1.0) * np.exp(-t), x, np.inf)
            assert _upper_gamma(a, x) == pytest.approx(oracle, rel=1e-9)


def test_divergent_moment_rejected():
    ts = lw.TemperedStable(1.0, 1.2, 1.0)
    with pytest.raises(lw.DivergentMomentError):
        ts.band_abs_moment(1.0, 0.0, 1.0)  # first moment diverges for alpha >= 1
    with pytest.raises(lw.DivergentMomentError):
        ts.band_mass(0.0, 1.0)


def test_compound_poisson_requires_hooks():
    def sampler(rng, n):
        return rng.normal(size=n)

    cp = lw.CompoundPoissonOnly(rate=1.0, marks=lw.MarkLaw(sampler=sampler))
    with pytest.raises(lw.UnsupportedMeasureError):
        lw.theta_under(lw.LevyModel(cp))
    with pytest.raises(lw.UnsupportedMeasureError):
        lw.theta_bar(lw.LevyModel(cp))


def test_model_validation():
    with pytest.raises(ValueError):
        lw.UniformBand(1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        lw.TemperedStable(1.0, 2.5, 1.0)
    with pytest.raises(ValueError):
        lw.TemperedStable(1.0, 0.5, -1.0)
    with pytest.raises(ValueError):
        lw.LevyModel(lw.UniformBand(0.1, 0.2, 1.0), small_cutoff=0.0)
    with pytest.raises(ValueError):
        lw.LevyModel(lw.UniformBand(0.1, 0.2, 1.0), small_cutoff=1.5)


# ---------------------------------------------------------------------------
# truncation bookkeeping


def test_truncation_budget_monotone():
    model = lw.LevyModel(lw.TemperedStable(1.0, 0.7, 1.0, symmetric=True))
    budgets = [lw.theta_bar_below(model, eps) for eps in (0.01, 0.05, 0.1, 0.3, 0.7, 1.0)]
    assert all(b2 > b1 >= 0.0 for b1, b2 in zip(budgets, budgets[1:]))
    assert budgets[-1] == pytest.approx(lw.theta_bar(model), rel=1e-12)


def test_rate_additivity_partition():
    eps = 0.1
    cut = 0.03
    for measure in (
        lw.UniformBand(0.01, 1.8, 1.3, symmetric=True),
        lw.TemperedStable(0.9, 0.6, 2.0),
    ):
        total = measure.band_mass(cut, math.inf)
        parts = (
            measure.band_mass(cut, eps)
            + measure.band_mass(eps, 1.0)
            + measure.band_mass(1.0, math.inf)
        )
        assert total == pytest.approx(parts, rel=1e-10)


# ---------------------------------------------------------------------------
# sampling


def test_sample_path_empty_when_rateless():
    cp = lw.CompoundPoissonOnly(rate=0.0, marks=lw.point_mark_law(2.0))
    model = lw.LevyModel(cp, small_cutoff=1.0)
    path = lw.sample_path(model, 5.0, seed=1)
    assert len(path) == 0


def test_sample_path_deterministic():
    model = lw.LevyModel(lw.UniformBand(0.3, 1.5, 1.0, symmetric=True), small_cutoff=0.3)
    p1 = lw.sample_path(model, 20.0, seed=77, stream_id=5)
    p2 = lw.sample_path(model, 20.0, seed=77, stream_id=5)
    assert p1.csv_bytes() == p2.csv_bytes()
    p3 = lw.sample_path(model, 20.0, seed=77, stream_id=6)
    assert p3.csv_bytes() != p1.csv_bytes()


def test_sample_path_event_ordering_and_bands():
    model = lw.LevyModel(lw.UniformBand(0.3, 1.5, 2.0, symmetric=True), small_cutoff=0.4)
    path = lw.sample_path(model, 50.0, seed=3)
    assert np.all(np.diff(path.times) > 0)
    assert np.all(path.times > 0) and np.all(path.times <= 50.0)
    for ev in path.events():
        if ev.band == lw.BIG:
            assert abs(ev.mark) > 1.0
        else:
            assert 0.4 < abs(ev.mark) <= 1.0


def test_big_jump_count_is_poisson():
    # theta_under = 1, T = 1000: the count must sit within 3 standard errors
    model = lw.LevyModel(lw.UniformBand(1.0, 2.0, 1.0))
    path = lw.sample_path(model, 1000.0, seed=11)
    mean = 1000.0
    assert abs(path.big_count - mean) <= 3.0 * math.sqrt(mean)


def test_small_mark_second_moment_statistic():
    measure = lw.UniformBand(0.2, 1.0, 1.0, symmetric=True)
    model = lw.LevyModel(measure, small_cutoff=0.2)
    path = lw.sample_path(model, 4000.0, seed=23)
    small = path.marks[path.bands == 0]
    assert len(small) > 1000
    target = measure.band_abs_moment(2.0, 0.2, 1.0) / measure.band_mass(0.2, 1.0)
    sq = small * small
    se = sq.std(ddof=1) / math.sqrt(len(sq))
    assert abs(sq.mean() - target) <= 3.0 * se


def test_tempered_stable_sampler_statistics():
    # validates the rejection samplers against the moment formulas
    measure = lw.TemperedStable(1.0, 0.6, 1.0, symmetric=True)
    model = lw.LevyModel(measure, small_cutoff=0.3)
    path = lw.sample_path(model, 3000.0, seed=29)
    for band_code, lo, hi in ((0, 0.3, 1.0), (1, 1.0, math.inf)):
        marks = path.marks[path.bands == band_code]
        assert len(marks) > 500
        target = measure.band_abs_moment(2.0, lo, hi) / measure.band_mass(lo, hi)
        sq = marks * marks
        se = sq.std(ddof=1) / math.sqrt(len(sq))
        assert abs(sq.mean() - target) <= 4.0 * se
        # symmetric signs
        frac_neg = np.mean(marks < 0)
        assert abs(frac_neg - 0.5) <= 4.0 * math.sqrt(0.25 / len(marks))


def test_compound_poisson_classification():
    def sampler(rng, n):
        return rng.choice([0.05, 0.5, 1.5], size=n)

    cp = lw.CompoundPoissonOnly(rate=2.0, marks=lw.MarkLaw(sampler=sampler))
    model = lw.LevyModel(cp, small_cutoff=0.1)
    path = lw.sample_path(model, 500.0, seed=13)
    mags = np.abs(path.marks)
    assert np.all(mags > 0.1)
    assert np.all((mags[path.bands == 1] > 1.0))
    assert np.all((mags[path.bands == 0] <= 1.0))


def test_noise_path_csv_round_trip():
    model = lw.LevyModel(lw.UniformBand(0.3, 1.4, 1.0, symmetric=True), small_cutoff=0.3)
    path = lw.sample_path(model, 10.0, seed=5, stream_id=2)
    buf = io.StringIO()
    path.to_csv(buf, metadata={"small_cutoff": model.small_cutoff})
    buf.seek(0)
    back = lw.NoisePath.from_csv(buf)
    assert back.horizon == path.horizon
    assert back.seed == path.seed and back.stream_id == path.stream_id
    assert np.array_equal(back.times, path.times)
    assert np.array_equal(back.marks, path.marks)
    assert np.array_equal(back.bands, path.bands)


def test_noise_path_restrict():
    model = lw.LevyModel(lw.UniformBand(0.3, 1.4, 2.0, symmetric=True), small_cutoff=0.3)
    path = lw.sample_path(model, 10.0, seed=9)
    part = path.restrict(4.0, 10.0)
    assert part.horizon == 6.0
    sel = path.times > 4.0
    assert np.allclose(part.times, path.times[sel] - 4.0)
    assert np.array_equal(part.marks, path.marks[sel])


# ---------------------------------------------------------------------------
# compensator


def test_compensator_zero_for_symmetric_odd_form():
    model = lw.LevyModel(lw.UniformBand(0.2, 1.0, 1.0, symmetric=True), small_cutoff=0.2)
    coeff = lw.make_coefficients("linear", 1.0, "bounded", 1.0)
    drift = lw.small_jump_compensator(model, coeff, np.linspace(-2, 2, 9))
    assert np.all(drift == 0.0)


def test_compensator_one_sided_closed_form():
    model = lw.LevyModel(lw.UniformBand(0.5, 1.0, 1.0), small_cutoff=0.5)
    coeff = lw.make_coefficients("linear", 1.0, "bounded", 1.0)
    drift = lw.small_jump_compensator(model, coeff, np.ones(7))
    assert np.allclose(drift, -0.375, atol=1e-14)


def test_compensator_zero_field_stays_zero():
    model = lw.LevyModel(lw.UniformBand(0.5, 1.0, 1.0), small_cutoff=0.5)
    coeff = lw.make_coefficients("sin", 2.0, "bounded", 1.0)
    drift = lw.small_jump_compensator(model, coeff, np.zeros(5))
    assert np.all(drift == 0.0)


def test_compensator_custom_coefficient_vs_quadrature():
    # a(x, z) = x * z^2 has no odd shortcut; the module integrates against the
    # band density and must match adaptive quadrature
    model = lw.LevyModel(lw.TemperedStable(0.7, 0.5, 1.1), small_cutoff=0.2)

    def a_custom(x, z):
        return x * z * z

    coeff = lw.make_coefficients(
        a_form="custom", a_custom=a_custom, ell_a=1.0, b_form="bounded", b_scale=1.0
    )
    drift = lw.small_jump_compensator(model, coeff, np.array([2.0]))
    oracle, _ = quad(
        lambda z: z * z * ts_density(0.7, 0.5, 1.1)(z), 0.2, 1.0
    )
    assert drift[0] == pytest.approx(-2.0 * oracle, abs=1e-8)
