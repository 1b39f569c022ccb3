from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmctube.approx import corrector_scheme
from cmctube.cap import rho_constant
from cmctube.errors import EmptyRange, NotSmallEigenvalue, ValidationError
from cmctube.spectral import (
    FormFamily,
    assemble_full_form,
    assemble_model_form,
    eigenfunction_localization,
    find_gap_intervals,
    form_deviation,
    gap_threshold,
    kato_derivative,
    morse_index,
    sampled_deviation,
    small_threshold,
    track_branches,
)
from cmctube.tube import make_context

MODES = 4


def flat_spectrum_oracle(eps: float, n_y: int, length: float, modes: int) -> np.ndarray:
    """Separation of variables on the flat half-cylinder.

    The w sector carries ``eps^2 j^2 + k^2 - 1`` for the Neumann cosines
    ``cos(k theta)``, ``k != 1``; the phi sector carries ``rho j^2``. ``j`` runs
    over the Fourier frequencies of a period of ``length``.
    """
    freqs = 2 * np.pi / length * np.fft.fftfreq(n_y, 1.0 / n_y)
    caps = [k for k in range(modes + 1) if k != 1][:modes]
    w = [eps**2 * j * j + k * k - 1 for j in freqs for k in caps]
    phi = [rho_constant(1) * j * j for j in freqs]
    return np.sort(np.array(w + phi))


@pytest.fixture(scope="module")
def flat_fine(flat_curve):
    return make_context(flat_curve, 0.3, cap_resolution=64)


@pytest.fixture(scope="module")
def sphere_ctx(equator):
    return make_context(equator, 0.2, cap_resolution=12)


@pytest.fixture(scope="module")
def ellipse_coarse(ellipse_k):
    ctx = make_context(ellipse_k, 0.2, cap_resolution=12, n_y=64)
    return corrector_scheme(ctx, 2)


@pytest.fixture(scope="module")
def ellipse_fine_y(ellipse_k):
    ctx = make_context(ellipse_k, 0.2, cap_resolution=12, n_y=128)
    return corrector_scheme(ctx, 2)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
def test_flat_model_spectrum_closed_form(flat_fine, eps):
    form = assemble_model_form(flat_fine, eps, modes=MODES)
    oracle = flat_spectrum_oracle(eps, flat_fine.n_y, flat_fine.length, MODES)
    # the lowest part of the spectrum is far from the Nyquist frequency
    np.testing.assert_allclose(form.eigenvalues[:24], oracle[:24], atol=1e-8)


@pytest.mark.parametrize("eps", [0.05, 0.1])
def test_flat_full_form_equals_model(flat_ctx, flat_correctors, eps):
    full = assemble_full_form(flat_correctors, eps, modes=MODES)
    model = assemble_model_form(flat_ctx, eps, modes=MODES)
    assert form_deviation(full, model) < 1e-12
    assert full.asymmetry < 1e-12


def test_sphere_phi_block_is_rho_times_great_circle_jacobi(sphere_ctx):
    form = assemble_model_form(sphere_ctx, 0.1, modes=MODES, blocks="phi")
    rho = rho_constant(1)
    j = np.fft.fftfreq(sphere_ctx.n_y, 1.0 / sphere_ctx.n_y)
    oracle = np.sort(rho * (j * j - 1))
    np.testing.assert_allclose(form.eigenvalues[:15], oracle[:15], atol=1e-10)


def test_w_sector_is_coercive_beyond_the_constant(flat_fine):
    """Apart from the cap-constant mode, the w sector is bounded below by 3 (``cos 2 theta``)."""
    form = assemble_model_form(flat_fine, 0.1, modes=MODES, blocks="w")
    vals = form.eigenvalues
    n_const = flat_fine.n_y
    assert np.all(vals[:n_const] < 0.5)
    assert vals[n_const] == pytest.approx(3.0, abs=1e-8)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), eps=st.floats(0.02, 0.3))
def test_decompose_recompose_round_trip(flat_ctx, seed, eps):
    dec = assemble_model_form(flat_ctx, eps, modes=None).decomposition
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((dec.n_y, dec.modes))
    phi = rng.standard_normal(dec.n_y)
    v = dec.recompose(w, phi)
    w2, phi2 = dec.decompose(v)
    np.testing.assert_allclose(w2, w, atol=1e-10)
    np.testing.assert_allclose(phi2, phi, atol=1e-10)
    x = dec.pack(w, phi)
    w3, phi3 = dec.unpack(x)
    np.testing.assert_array_equal(w3, w)
    np.testing.assert_array_equal(phi3, phi)
    # the L2 norm splits as eps^(-2s)|w|^2 + |phi|^2
    expect = dec.weight_y * (eps ** (-2 * dec.s) * np.sum(w * w) + np.sum(phi * phi))
    assert dec.l2_norm(x) ** 2 == pytest.approx(expect, rel=1e-12)


def test_weight_exponent_validated(flat_ctx):
    with pytest.raises(ValidationError):
        assemble_model_form(flat_ctx, 0.1, s=0.5)


@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 1000))
def test_sampled_deviation_below_operator_norm(ellipse_coarse, seed):
    ctx = ellipse_coarse.context
    full = assemble_full_form(ellipse_coarse, 0.08, modes=MODES)
    model = assemble_model_form(ctx, 0.08, modes=MODES)
    assert sampled_deviation(full, model, samples=8, seed=seed) <= form_deviation(full, model) * (1 + 1e-9)


def test_full_form_nearly_symmetric(ellipse_coarse):
    full = assemble_full_form(ellipse_coarse, 0.05, modes=MODES)
    assert full.asymmetry < 0.05


def test_deviation_decays_with_one_constant(ellipse_correctors):
    ctx = ellipse_correctors.context
    eps = np.array([0.1, 0.05, 0.025])
    ratios = []
    for r in (1, 2, 3):
        d = np.array([
            sampled_deviation(assemble_full_form(ellipse_correctors, e, order=r, modes=MODES),
                              assemble_model_form(ctx, e, modes=MODES))
            for e in eps
        ])
        slope = np.polyfit(np.log(eps), np.log(d), 1)[0]
        assert slope >= 0.25 - 0.1
        ratios.append(d / eps**0.25)
    ratios = np.array(ratios)
    # one constant for all orders: the spread across r is small
    assert np.max(ratios) < 1.2 * np.min(np.max(ratios, axis=1))


@pytest.mark.parametrize("kind", ["model", "full"])
def test_weyl_exponent(ellipse_fine_y, kind):
    fam = FormFamily(ellipse_fine_y, modes=MODES, kind=kind)
    rep = morse_index(fam, np.geomspace(0.02, 0.2, 6))
    assert rep.exponent == pytest.approx(-1.0, abs=0.2)
    assert np.all(np.diff(rep.counts[::-1]) >= 0)


def test_localization_of_small_eigenvectors(ellipse_fine_y):
    ctx = ellipse_fine_y.context
    c0 = small_threshold(ctx)
    for kind, limit in (("model", 1e-12), ("full", 1e-2)):
        form = FormFamily(ellipse_fine_y, modes=MODES, kind=kind)(0.05)
        vals, vecs = form.eigenpairs()
        j = int(np.argmin(np.abs(vals)))
        assert abs(vals[j]) <= c0
        assert eigenfunction_localization(form, vals[j], vecs[:, j], c0) < limit
        big = int(np.argmax(np.abs(vals)))
        with pytest.raises(NotSmallEigenvalue):
            eigenfunction_localization(form, vals[big], vecs[:, big], c0)


def test_flat_kato_derivative_is_exact(flat_ctx, flat_correctors):
    """Flat w branches are ``eps^2 j^2 - 1``, so ``eps dsigma/deps = 2 (sigma + 1)``."""
    fam = FormFamily(flat_correctors, modes=MODES, blocks="w")
    branches = track_branches(fam, np.linspace(0.1, 0.2, 11), window=0.5)
    assert branches
    for br in branches:
        _, slope, sig = br.log_derivative()
        np.testing.assert_allclose(slope, 2 * (sig + 1), atol=1e-10)


@pytest.mark.parametrize("kind", ["model", "full"])
def test_ellipsoid_kato_bound_on_small_branches(ellipse_fine_y, kind):
    fam = FormFamily(ellipse_fine_y, modes=MODES, kind=kind)
    c0 = small_threshold(fam.context)
    branches = track_branches(fam, np.linspace(0.05, 0.04, 21))
    assert branches
    checked = 0
    for br in branches:
        _, slope, sig = br.log_derivative()
        small = np.abs(sig) <= c0
        assert np.all(slope[small] >= 2 - 0.5)
        checked += int(np.sum(small))
        # the helper reports the same slope against the constant bound
        s2, bound, _ = kato_derivative(br, c=0.0)
        np.testing.assert_allclose(s2, slope)
        assert np.all(bound == 2.0)
    assert checked > 0


def test_gap_intervals_ordered_and_disjoint(ellipse_coarse):
    fam = FormFamily(ellipse_coarse, modes=MODES)
    rep = find_gap_intervals(fam, 0.05, 0.2, points=32)
    ivs = rep.intervals
    assert len(ivs) > 1
    for a, b in zip(ivs, ivs[1:]):
        assert a.lower < a.upper <= b.lower < b.upper
    first = rep.first_interval()
    assert first.upper == max(iv.upper for iv in ivs)
    # every sample strictly inside an interval has its spectrum outside [-tau, tau]
    for e, gap, tau in zip(rep.eps, rep.min_gap, rep.threshold):
        if rep.interval_containing(e) is not None:
            assert gap > tau
    assert rep.measure_defect(0.2) >= 0


def test_gap_threshold_power():
    np.testing.assert_allclose(gap_threshold([0.1, 0.2]), 0.5 * np.array([0.1, 0.2]) ** 2)


def test_sphere_has_no_gap(sphere_ctx):
    """On the equator the phi block has a zero mode at every eps."""
    fam = FormFamily(corrector_scheme(sphere_ctx, 1), modes=MODES, kind="model")
    with pytest.raises(EmptyRange):
        find_gap_intervals(fam, 0.05, 0.2, points=16)


def test_gap_finder_validates_range(ellipse_coarse):
    with pytest.raises(ValidationError):
        find_gap_intervals(FormFamily(ellipse_coarse, modes=MODES), 0.2, 0.1)
