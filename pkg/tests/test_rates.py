"""Rates and couplings: closed-form cross-oracles, spectral-integral level
shifts, Hermiticity, and free-space anchors."""

import math

import numpy as np
import pytest

from polyemit.constants import C0, EPS0, HBAR
from polyemit.emitter import MultipoleEmitter, moment_product_bundle
from polyemit.errors import (InputError, MissingDerivativeError,
                             ModelDomainError)
from polyemit.homogeneous import Medium, coincident_im_jet, eval_homogeneous_jet
from polyemit.jets import GreensJet
from polyemit.quadrature import homogeneous_pair_model, lorentzian_model
from polyemit.rates import (collective_rate, coupling_strength, emission_rate,
                            enhancement_map, free_space_rates, lamb_shift)

W0 = 2.4e15


def random_emitter(rng, pos=(0, 0, 0), omega0=W0, channels="dmq",
                   symmetric_traceless_q=True):
    d = np.zeros(3, complex)
    m = np.zeros(3, complex)
    Q = np.zeros((3, 3), complex)
    if "d" in channels:
        d = (rng.standard_normal(3) + 1j * rng.standard_normal(3)) * 1e-29
    if "m" in channels:
        m = (rng.standard_normal(3) + 1j * rng.standard_normal(3)) * 1e-23
    if "q" in channels:
        Q = (rng.standard_normal((3, 3))
             + 1j * rng.standard_normal((3, 3))) * 1e-39
        if symmetric_traceless_q:
            Q = 0.5 * (Q + Q.T)
            Q -= np.trace(Q) / 3.0 * np.eye(3)
    return MultipoleEmitter(position=pos, omega0=omega0, d=d, m=m, Q=Q)


def reciprocal_blocks(rng, scale):
    """Random resonance amplitudes obeying source-observer reciprocity, so
    that self spectral densities are real."""
    v = rng.standard_normal((3, 3)) * scale
    v = 0.5 * (v + v.T)
    dob = rng.standard_normal((3, 3, 3)) * scale * 5
    dsr = np.transpose(dob, (1, 0, 2)).copy()
    dm = rng.standard_normal((3, 3, 3, 3)) * scale * 25
    dm = 0.5 * (dm + np.transpose(dm, (1, 0, 3, 2)))
    return {"value": v, "d_obs": dob, "d_src": dsr, "d_mixed": dm}


# ---------------------------------------------------------------------------
# emission rate and free-space closed forms


def test_weisskopf_wigner_frozen_oracle():
    # literal SI/CODATA-2022 constants, typed independently of the package
    # (h, e, c are exact by definition; a0 and eps0 are measured)
    hbar = 6.62607015e-34 / (2 * math.pi)
    e_charge = 1.602176634e-19
    a0 = 5.29177210544e-11
    eps0 = 8.8541878188e-12
    c = 2.99792458e8
    w0 = 2 * math.pi * 384e12
    d_mag = e_charge * a0
    oracle = w0 ** 3 * d_mag ** 2 / (3 * math.pi * hbar * eps0 * c ** 3)
    assert abs(oracle - 4257926.9227325665) < 1e-3  # frozen value

    em = MultipoleEmitter(position=[0, 0, 0], omega0=w0,
                          d=[0, 0, d_mag])
    rep = emission_rate(em, coincident_im_jet(w0, Medium(1.0)))
    assert abs(rep.gamma_total - oracle) < 1e-10 * oracle
    assert rep.delta is None


def test_machinery_matches_closed_forms(rng):
    for n in (1.0, 1.5, 2.3):
        med = Medium(n)
        e = random_emitter(rng)
        jet = coincident_im_jet(W0, med)
        rep = emission_rate(e, jet)
        g_ed, g_md, g_eq = free_space_rates(e, n, W0)
        closed = g_ed + g_md + g_eq
        assert abs(rep.gamma_total - closed) < 1e-10 * closed
        cross = sum(abs(v) for (ca, cb), v in
                    rep.gamma_by_channel_pair.items() if ca != cb)
        assert cross < 1e-12 * rep.gamma_total
        assert abs(rep.gamma_by_channel_pair[("ED", "ED")] - g_ed) < 1e-10 * closed
        assert abs(rep.gamma_by_channel_pair[("MD", "MD")] - g_md) < 1e-10 * closed
        assert abs(rep.gamma_by_channel_pair[("EQ", "EQ")] - g_eq) < 1e-10 * closed


def test_refractive_index_scaling(rng):
    e = random_emitter(rng)
    g1 = free_space_rates(e, 1.0, W0)
    g2 = free_space_rates(e, 2.0, W0)
    assert abs(g2[0] / g1[0] - 2.0) < 1e-12
    assert abs(g2[1] / g1[1] - 8.0) < 1e-12
    assert abs(g2[2] / g1[2] - 8.0) < 1e-12


def test_free_space_rates_validation(rng):
    e = random_emitter(rng)
    with pytest.raises(InputError):
        free_space_rates(e, 0.5, W0)
    with pytest.raises(InputError):
        free_space_rates(e, 1.0, -W0)
    e_d = random_emitter(rng, channels="d")
    g_ed, g_md, g_eq = free_space_rates(e_d, 1.0, W0)
    assert g_ed > 0 and g_md == 0 and g_eq == 0


def test_inert_emitter_zero_rate():
    e = MultipoleEmitter(position=[0, 0, 0], omega0=W0)
    rep = emission_rate(e, coincident_im_jet(W0, Medium(1.0)))
    assert rep.gamma_total == 0.0


def test_emission_rate_channel_masking(rng):
    e = random_emitter(rng)
    jet = coincident_im_jet(W0, Medium(1.0))
    rep = emission_rate(e, jet, channels={"ED"})
    g_ed, _, _ = free_space_rates(e, 1.0, W0)
    assert abs(rep.gamma_total - g_ed) < 1e-10 * g_ed
    assert rep.gamma_by_channel_pair[("MD", "MD")] == 0.0


def test_emission_rate_missing_blocks(rng):
    e = random_emitter(rng, channels="m")
    jet = coincident_im_jet(W0, Medium(1.0))
    stripped = GreensJet(value=jet.value, part="imag")
    with pytest.raises(MissingDerivativeError):
        emission_rate(e, stripped)


def test_emission_rate_rejects_unphysical_jet(rng):
    e = random_emitter(rng, channels="d")
    good = coincident_im_jet(W0, Medium(1.0))
    flipped = GreensJet(value=-good.value, d_obs=good.d_obs,
                        d_src=good.d_src, d_mixed=good.d_mixed, part="imag")
    with pytest.raises(InputError, match="positivity|negative"):
        emission_rate(e, flipped)


def test_rate_report_serialization(rng):
    e = random_emitter(rng, channels="d")
    rep = emission_rate(e, coincident_im_jet(W0, Medium(1.0)))
    d = rep.to_dict()
    assert d["gamma_total"]["unit"] == "1/s"
    assert d["delta"] == "unavailable"
    assert "ED-ED" in d["gamma_by_channel_pair"]


def test_scaling_covariance(rng):
    lam = 1.9
    e = random_emitter(rng)
    scaled = MultipoleEmitter(position=e.position, omega0=e.omega0,
                              d=lam * e.d, m=lam * e.m, Q=lam * e.Q)
    jet = coincident_im_jet(W0, Medium(1.4))
    r1 = emission_rate(e, jet)
    r2 = emission_rate(scaled, jet)
    for key, v in r1.gamma_by_channel_pair.items():
        assert abs(r2.gamma_by_channel_pair[key] - lam ** 2 * v) \
            <= 1e-12 * max(abs(lam ** 2 * v), r2.gamma_total)


# ---------------------------------------------------------------------------
# level shift


def test_lamb_shift_zero_model(rng):
    zero = lorentzian_model([({"value": np.zeros((3, 3))}, W0, 0.05 * W0)])
    e = random_emitter(rng, channels="d")
    assert lamb_shift(e, zero) == 0.0
    inert = MultipoleEmitter(position=[0, 0, 0], omega0=W0)
    any_model = lorentzian_model([({"value": np.eye(3)}, W0, 0.05 * W0)])
    assert lamb_shift(inert, any_model) == 0.0


def test_lamb_shift_methods_agree(rng):
    model = lorentzian_model([
        (reciprocal_blocks(rng, 1e5), 1.2 * W0, 0.04 * W0),
        (reciprocal_blocks(rng, 4e4), 2.1 * W0, 0.08 * W0),
    ])
    e = random_emitter(rng)
    d_pv = lamb_shift(e, model, method="pv")
    d_ia = lamb_shift(e, model, method="imaginary-axis")
    d_auto = lamb_shift(e, model, method="auto")
    assert abs(d_pv - d_ia) < 5e-6 * abs(d_pv)
    assert d_auto == d_ia  # analytic model prefers the imaginary axis


def test_lamb_shift_sign_and_dense_grid_oracle(rng):
    # a resonance above the transition pulls the level down; oracle is a
    # dense-trapezoid principal value with the singularity subtracted
    wr, eta, amp = 1.3 * W0, 0.05 * W0, 1e5
    model = lorentzian_model([({"value": amp * np.eye(3)}, wr, eta)])
    e = random_emitter(rng, channels="d")
    delta = lamb_shift(e, model, method="imaginary-axis")
    assert delta < 0

    bundle = moment_product_bundle(e, e)
    f0 = bundle.f0["value"]

    ws = np.linspace(1e-4 * W0, 200 * W0, 4_000_001)
    im_g = amp * eta * ws / ((wr ** 2 - ws ** 2) ** 2 + (eta * ws) ** 2)
    g = ws ** 2 * np.einsum('mn,mn->', f0, np.eye(3)).real * im_g
    g0 = float(np.interp(W0, ws, g))
    integrand = (g - g0) / (ws - W0)
    ipole = int(np.searchsorted(ws, W0))
    integrand[ipole] = 0.0  # removable point, value irrelevant at h scale
    pv = float(np.trapezoid(integrand, ws))
    pv += g0 * math.log((ws[-1] - W0) / (W0 - ws[0]))
    # analytic 1/w tail beyond the grid
    coeff = amp * eta * np.einsum('mn,mn->', f0, np.eye(3)).real
    pv += coeff / ws[-1]
    oracle = -pv
    assert abs(delta - oracle) < 1e-3 * abs(oracle)


def test_lamb_shift_requires_scattered_model(rng):
    med = Medium(1.0)
    model = homogeneous_pair_model(med, np.zeros(3),
                                   np.array([0, 0, 100e-9]))
    with pytest.raises(ModelDomainError, match="scattered"):
        lamb_shift(random_emitter(rng, channels="d"), model)


# ---------------------------------------------------------------------------
# pairwise couplings


def ed_pair(sep, d_vec=(1e-29, 0, 0), omega0=W0):
    pa = np.zeros(3)
    pb = np.array([0.0, 0.0, sep])
    a = MultipoleEmitter(position=pa, omega0=omega0, d=np.asarray(d_vec))
    b = MultipoleEmitter(position=pb, omega0=omega0, d=np.asarray(d_vec))
    return a, b


def test_coupling_free_space_textbook_anchor():
    # coherent coupling equals -pi wbar^2 ReF . Re G at the pair, up to the
    # off-resonant remainder that falls off as (kR)^-3
    med = Medium(1.0)
    k = W0 / C0
    sep = 8.0 / k
    a, b = ed_pair(sep)
    model = homogeneous_pair_model(med, a.position, b.position)
    rep = coupling_strength(a, b, model)
    bundle = moment_product_bundle(a, b)
    jet = eval_homogeneous_jet(a.position, b.position, W0, med)
    anchor = -math.pi * W0 ** 2 * np.einsum(
        'mn,mn->', bundle.f0["value"].real, jet.value.real)
    assert abs(rep.xi - anchor) < 0.05 * abs(anchor)
    assert rep.method == "imaginary-axis"


def test_coupling_near_zone_half_static():
    # perpendicular parallel dipoles, k R = 1e-3: the rotating-frame
    # coupling approaches half the electrostatic dipole-dipole shift
    med = Medium(1.0)
    k = W0 / C0
    sep = 1e-3 / k
    a, b = ed_pair(sep)
    model = homogeneous_pair_model(med, a.position, b.position)
    rep = coupling_strength(a, b, model)
    static_half = 0.5 * 1e-58 / (4 * math.pi * EPS0 * HBAR * sep ** 3)
    assert abs(rep.xi.real / static_half - 1.0) < 0.01


def test_coupling_near_zone_exponent():
    med = Medium(1.0)
    k = W0 / C0
    seps = np.array([1e-3, 3e-3, 1e-2]) / k
    vals = []
    for sep in seps:
        a, b = ed_pair(sep)
        model = homogeneous_pair_model(med, a.position, b.position)
        vals.append(abs(coupling_strength(a, b, model).xi))
    slope = np.polyfit(np.log(seps), np.log(vals), 1)[0]
    assert abs(slope + 3.0) < 0.05


def test_coupling_inert_and_frequency_guard(rng):
    med = Medium(1.0)
    a, b = ed_pair(100e-9)
    inert = MultipoleEmitter(position=b.position, omega0=W0)
    model = homogeneous_pair_model(med, a.position, b.position)
    rep = coupling_strength(a, inert, model)
    assert rep.xi == 0
    detuned = MultipoleEmitter(position=b.position, omega0=1.05 * W0,
                               d=b.d)
    with pytest.raises(InputError, match="frequencies differ"):
        coupling_strength(a, detuned, model)
    # widened tolerance admits the pair
    rep = coupling_strength(a, detuned, model, freq_ratio_tol=0.1)
    assert rep.xi != 0


def transpose_reciprocal(blocks):
    """Blocks of the swapped point pair implied by reciprocity
    G_mn(r, r') = G_nm(r', r)."""
    return {"value": blocks["value"].T,
            "d_obs": np.transpose(blocks["d_src"], (1, 0, 2)),
            "d_src": np.transpose(blocks["d_obs"], (1, 0, 2)),
            "d_mixed": np.transpose(blocks["d_mixed"], (1, 0, 3, 2))}


def test_pair_hermiticity(rng):
    med = Medium(1.3)
    pa = np.zeros(3)
    pb = np.array([40e-9, -25e-9, 60e-9])
    ea = random_emitter(rng, pos=pa)
    eb = random_emitter(rng, pos=pb)

    # collective rates: jets only, all channels
    g_ab = collective_rate(ea, eb, homogeneous_pair_model(med, pa, pb)
                           ).gamma_cross
    g_ba = collective_rate(eb, ea, homogeneous_pair_model(med, pb, pa)
                           ).gamma_cross
    assert abs(g_ab - np.conj(g_ba)) < 1e-10 * abs(g_ab)

    # coherent coupling, all channels, on a resonance model pair related
    # by reciprocity (free space cannot host the 1/w^2 magnetic-magnetic
    # spectral weight on the imaginary axis; see quadrature docs)
    blocks = {"value": rng.standard_normal((3, 3)) * 1e5,
              "d_obs": rng.standard_normal((3, 3, 3)) * 5e5,
              "d_src": rng.standard_normal((3, 3, 3)) * 5e5,
              "d_mixed": rng.standard_normal((3, 3, 3, 3)) * 25e5}
    m_ab = lorentzian_model([(blocks, 1.2 * W0, 0.05 * W0)])
    m_ba = lorentzian_model([(transpose_reciprocal(blocks),
                              1.2 * W0, 0.05 * W0)])
    x_ab = coupling_strength(ea, eb, m_ab).xi
    x_ba = coupling_strength(eb, ea, m_ba).xi
    assert abs(x_ab - np.conj(x_ba)) < 1e-8 * abs(x_ab)

    # coherent coupling through free space for channels without the
    # 1/w^2 weight (electric dipole + quadrupole)
    ea2 = random_emitter(rng, pos=pa, channels="dq")
    eb2 = random_emitter(rng, pos=pb, channels="dq")
    x2_ab = coupling_strength(ea2, eb2,
                              homogeneous_pair_model(med, pa, pb)).xi
    x2_ba = coupling_strength(eb2, ea2,
                              homogeneous_pair_model(med, pb, pa)).xi
    assert abs(x2_ab - np.conj(x2_ba)) < 1e-7 * abs(x2_ab)


def test_coupling_scaling_covariance(rng):
    med = Medium(1.0)
    lam = 2.3
    pa, pb = np.zeros(3), np.array([0, 0, 80e-9])
    ea = random_emitter(rng, pos=pa)
    eb = random_emitter(rng, pos=pb)
    sa = MultipoleEmitter(position=pa, omega0=ea.omega0, d=lam * ea.d,
                          m=lam * ea.m, Q=lam * ea.Q)
    sb = MultipoleEmitter(position=pb, omega0=eb.omega0, d=lam * eb.d,
                          m=lam * eb.m, Q=lam * eb.Q)
    jet = eval_homogeneous_jet(pa, pb, W0, med)
    g1 = collective_rate(ea, eb, jet).gamma_cross
    g2 = collective_rate(sa, sb, jet).gamma_cross
    assert abs(g2 - lam ** 2 * g1) < 1e-12 * abs(g2)


def test_collective_rate_self_reduces_to_emission(rng):
    e = random_emitter(rng)
    jet = coincident_im_jet(W0, Medium(1.6))
    rep = emission_rate(e, jet)
    cr = collective_rate(e, e, jet)
    assert abs(cr.gamma_cross.real - rep.gamma_total) \
        < 1e-12 * rep.gamma_total


def test_collective_rate_colocated_identical(rng):
    # two identical emitters at the same point: the cross rate equals the
    # single-emitter rate (zero-separation limit of the two-point jet)
    e1 = random_emitter(rng)
    e2 = MultipoleEmitter(position=e1.position, omega0=e1.omega0,
                          d=e1.d, m=e1.m, Q=e1.Q)
    jet = coincident_im_jet(W0, Medium(1.0))
    g11 = emission_rate(e1, jet).gamma_total
    g12 = collective_rate(e1, e2, jet).gamma_cross
    assert abs(g12.real - g11) < 1e-12 * g11
    assert abs(g12.imag) < 1e-12 * g11


def test_collective_rate_inert(rng):
    e = random_emitter(rng)
    inert = MultipoleEmitter(position=[0, 0, 0], omega0=W0)
    jet = coincident_im_jet(W0, Medium(1.0))
    assert collective_rate(e, inert, jet).gamma_cross == 0


# ---------------------------------------------------------------------------
# enhancement maps


class _StubGrid:
    """Grid double: coincident homogeneous jets at every node."""

    def __init__(self, frequency, n, points):
        self.frequency = frequency
        self._med = Medium(n)
        self._pts = points

    def node_points(self):
        return self._pts

    def jet_at(self, point):
        return coincident_im_jet(self.frequency, self._med)


def test_enhancement_map_unity_and_index_scaling(rng):
    pts = [np.zeros(3), np.array([1e-8, 0, 0]), np.array([0, 2e-8, 0])]
    for channels, expected in (("d", 2.0), ("m", 8.0), ("q", 8.0)):
        e = random_emitter(rng, channels=channels)
        unity = enhancement_map(_StubGrid(W0, 1.0, pts), e)
        assert all(abs(r.normalization["enhancement_total"] - 1.0) < 1e-10
                   for r in unity)
        doubled = enhancement_map(_StubGrid(W0, 2.0, pts), e)
        assert all(abs(r.normalization["enhancement_total"] - expected)
                   < 1e-10 * expected for r in doubled)


def test_enhancement_map_worker_determinism(rng):
    pts = [np.array([float(i), 0, 0]) * 1e-9 for i in range(7)]
    e = random_emitter(rng)
    serial = enhancement_map(_StubGrid(W0, 1.5, pts), e)
    threaded = enhancement_map(_StubGrid(W0, 1.5, pts), e, workers=4)
    for r1, r2 in zip(serial, threaded):
        assert r1.gamma_total == r2.gamma_total


def test_enhancement_map_guards(rng):
    pts = [np.zeros(3)]
    e = random_emitter(rng)
    with pytest.raises(InputError, match="frequency"):
        enhancement_map(_StubGrid(1.01 * W0, 1.0, pts), e)
    inert = MultipoleEmitter(position=[0, 0, 0], omega0=W0)
    with pytest.raises(InputError, match="inert"):
        enhancement_map(_StubGrid(W0, 1.0, pts), inert)
