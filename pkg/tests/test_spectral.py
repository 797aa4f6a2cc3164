import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import levywave as lw
from levywave.spectral import from_physical, to_physical


def test_eigenvalue_formula_exact_at_default_length():
    dom = lw.SpectralDomain(length=np.pi, modes=64)
    k = np.arange(1, 65, dtype=float)
    assert np.array_equal(dom.eigenvalues, k * k)


def test_eigenvalue_formula_general_length():
    for length in (1.0, 2.5, 7.3):
        dom = lw.SpectralDomain(length=length, modes=128)
        k = np.arange(1, 129, dtype=float)
        lhs = dom.eigenvalues * (length / np.pi) ** 2
        assert np.max(np.abs(lhs - k * k) / (k * k)) < 1e-15


def test_eigenvalues_strictly_increasing():
    dom = lw.SpectralDomain(length=2.0, modes=40)
    assert np.all(np.diff(dom.eigenvalues) > 0)
    assert dom.lambda1 > 0


def test_domain_validation():
    with pytest.raises(ValueError):
        lw.SpectralDomain(length=-1.0, modes=4)
    with pytest.raises(ValueError):
        lw.SpectralDomain(modes=0)
    with pytest.raises(ValueError):
        lw.SpectralDomain(modes=8, grid_points=15)  # below 2K


def test_fractional_norm_single_mode():
    dom = lw.SpectralDomain(length=np.pi, modes=4)
    c = np.array([1.0, 0.0, 0.0, 0.0])
    assert lw.fractional_norm(c, 1.0, dom) == pytest.approx(1.0, abs=1e-15)


def test_fractional_norm_zero_vector():
    dom = lw.SpectralDomain(modes=5)
    assert lw.fractional_norm(np.zeros(5), 0.7, dom) == 0.0


def test_fractional_norm_two_modes():
    dom = lw.SpectralDomain(length=np.pi, modes=2)
    assert lw.fractional_norm([1.0, 1.0], 1.0, dom) == pytest.approx(
        np.sqrt(5.0), rel=1e-15
    )


def test_fractional_norm_dimension_error():
    dom = lw.SpectralDomain(modes=4)
    with pytest.raises(ValueError):
        lw.fractional_norm([1.0, 2.0], 1.0, dom)


def test_poincare_equality_at_ground_mode():
    dom = lw.SpectralDomain(length=np.pi, modes=6)
    c = np.zeros(6)
    c[0] = 1.0
    assert lw.poincare_check(c, 0.0, 1.0, dom)
    # equality is attained: |u|_0 = lambda_1^{-1/2} ||u||
    assert lw.fractional_norm(c, 0.0, dom) == pytest.approx(
        dom.lambda1 ** (-0.5) * lw.fractional_norm(c, 1.0, dom), rel=1e-14
    )


def test_poincare_zero_vector():
    dom = lw.SpectralDomain(modes=6)
    assert lw.poincare_check(np.zeros(6), 0.0, 2.0, dom)


def test_poincare_precondition():
    dom = lw.SpectralDomain(modes=6)
    with pytest.raises(ValueError):
        lw.poincare_check(np.ones(6), 1.0, 0.0, dom)


def test_poincare_property_random_vectors():
    dom = lw.SpectralDomain(length=2.0, modes=24)
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        c = rng.normal(size=24) * rng.uniform(0.01, 100.0)
        alpha = rng.uniform(-2.0, 2.0)
        beta = alpha + rng.uniform(0.0, 3.0)
        assert lw.poincare_check(c, alpha, beta, dom)


def test_to_physical_first_mode():
    dom = lw.SpectralDomain(length=np.pi, modes=2, grid_points=4)
    field = to_physical(np.array([1.0, 0.0]), dom)
    xi = np.arange(1, 5) * np.pi / 5.0
    assert np.allclose(field, np.sqrt(2.0 / np.pi) * np.sin(xi), atol=1e-14)


def test_to_physical_zero():
    dom = lw.SpectralDomain(modes=3)
    assert np.all(to_physical(np.zeros(3), dom) == 0.0)


def test_transform_round_trip():
    dom = lw.SpectralDomain(length=1.7, modes=20)
    rng = np.random.default_rng(3)
    c = rng.normal(size=20)
    back = from_physical(to_physical(c, dom), dom)
    assert np.max(np.abs(back - c)) < 1e-12 * max(1.0, np.max(np.abs(c)))


def test_from_physical_projection_idempotent():
    dom = lw.SpectralDomain(modes=6, grid_points=20)
    rng = np.random.default_rng(11)
    f = rng.normal(size=20)
    once = from_physical(f, dom)
    twice = from_physical(to_physical(once, dom), dom)
    assert np.allclose(once, twice, atol=1e-13)


def test_from_physical_first_mode_samples():
    dom = lw.SpectralDomain(length=np.pi, modes=3, grid_points=10)
    field = np.sqrt(2.0 / np.pi) * np.sin(dom.nodes)
    c = from_physical(field, dom)
    assert np.allclose(c, [1.0, 0.0, 0.0], atol=1e-12)


def test_from_physical_orthogonality_above_truncation():
    # samples of e_{K+1} have no component in the first K modes
    K, M = 5, 2 * 5 + 2
    dom = lw.SpectralDomain(length=np.pi, modes=K, grid_points=M)
    field = np.sqrt(2.0 / np.pi) * np.sin((K + 1) * dom.nodes)
    c = from_physical(field, dom)
    assert np.max(np.abs(c)) < 1e-10


def test_parseval():
    dom = lw.SpectralDomain(length=2.2, modes=17)
    rng = np.random.default_rng(5)
    c = rng.normal(size=17)
    h_norm = lw.fractional_norm(c, 0.0, dom)
    f = to_physical(c, dom)
    grid_norm = np.sqrt(dom.quad_weight * np.sum(f * f))
    assert h_norm == pytest.approx(grid_norm, rel=1e-10)


def test_fast_and_direct_paths_agree():
    # modes above the direct-path limit exercise the DST route; the oracle is
    # an explicit sine matrix built here
    dom = lw.SpectralDomain(length=2.0, modes=300, grid_points=640)
    rng = np.random.default_rng(9)
    c = rng.normal(size=300)
    j = np.arange(1.0, 641.0)
    k = np.arange(1.0, 301.0)
    sine = np.sqrt(2.0 / 2.0) * np.sin(np.outer(j, k) * np.pi / 641.0)
    assert np.max(np.abs(to_physical(c, dom) - sine @ c)) < 1e-10
    f = rng.normal(size=640)
    oracle = dom.quad_weight * (f @ sine)
    assert np.max(np.abs(from_physical(f, dom) - oracle)) < 1e-10


def test_batched_transforms_match_rowwise():
    # BLAS may route 2-d and 1-d products differently; agreement is to rounding
    dom = lw.SpectralDomain(modes=8)
    rng = np.random.default_rng(2)
    C = rng.normal(size=(5, 8))
    batch = to_physical(C, dom)
    rows = np.stack([to_physical(C[i], dom) for i in range(5)])
    assert np.allclose(batch, rows, atol=1e-13)


def test_galerkin_state_helpers():
    dom = lw.SpectralDomain(modes=4)
    z = lw.GalerkinState.zero(dom)
    assert lw.vxh_norm(z, dom) == 0.0
    s = lw.GalerkinState.single_mode(dom, 2, 1.0, -0.5)
    assert s.u[1] == 1.0 and s.v[1] == -0.5
    d = s - s
    assert lw.vxh_norm(d, dom) == 0.0
    with pytest.raises(ValueError):
        lw.GalerkinState.single_mode(dom, 5)
    with pytest.raises(ValueError):
        lw.GalerkinState(np.zeros(3), np.zeros(4))


@settings(max_examples=200, deadline=None)
@given(
    scale=st.floats(min_value=1e-6, max_value=1e6, allow_nan=False),
    order=st.floats(min_value=-2.0, max_value=2.0),
)
def test_fractional_norm_homogeneity(scale, order):
    dom = lw.SpectralDomain(modes=6)
    c = np.array([0.3, -1.2, 0.05, 2.0, -0.7, 0.9])
    assert lw.fractional_norm(scale * c, order, dom) == pytest.approx(
        scale * lw.fractional_norm(c, order, dom), rel=1e-12
    )
