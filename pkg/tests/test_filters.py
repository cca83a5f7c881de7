import numpy as np
import pytest

from exo_observer.filters import (
    BANK_FIELDS,
    DesignError,
    FilterBankState,
    FilterDesign,
    PhaseError,
    bank_offsets,
    design_beta,
    phibar_and_qbar,
    step_bank,
    step_extension,
    sylvester_gain,
)
from exo_observer.plant import ExoModel

AD = np.array([[0.0, 1.0], [-10.0, 0.0]])
HD = np.array([1.0, 0.0])
G = np.array([[-4.0, 1.0], [-2.0, 0.0]])
L = np.array([1.0, 2.0])
K = np.array([3.0, 3.0, 1.0])
EXO = ExoModel(AD, HD, np.array([500.0, 100.0]))


@pytest.fixture(scope="module")
def design():
    return FilterDesign.build(K, G, L, EXO)


def test_beta_matches_reference_value():
    beta = design_beta(EXO, G, L)
    assert np.abs(beta - [20.0, -8.0]).max() <= 1e-10


def test_sylvester_gain_value():
    assert np.allclose(sylvester_gain(EXO, G, L), [[5 / 7, 3 / 28], [25 / 14, 1 / 7]], atol=1e-12)


def test_scaling_l():
    assert np.allclose(sylvester_gain(EXO, G, 2 * L), 2 * sylvester_gain(EXO, G, L))
    assert np.allclose(design_beta(EXO, G, 2 * L), design_beta(EXO, G, L) / 2)


def test_internal_model_spectrum(design):
    closed = np.linalg.eigvals(G + np.outer(L, design.beta))
    assert np.allclose(np.sort_complex(closed), np.sort_complex(np.linalg.eigvals(AD)), atol=1e-9)


def test_design_errors():
    with pytest.raises(DesignError):
        FilterDesign.build(-K, G, L, EXO)
    with pytest.raises(DesignError):
        FilterDesign.build(K, -G, L, EXO)
    with pytest.raises(DesignError):
        FilterDesign.build(K, np.diag([-1.0, -2.0]), np.array([1.0, 0.0]), EXO)


def test_layout_roundtrip():
    st = FilterBankState.zeros(3, 2)
    v = np.arange(bank_offsets(3, 2)[-1], dtype=float)
    back = FilterBankState.unpack(v, 3, 2, 0.0)
    assert np.array_equal(back.pack(), v)
    assert st.pack().size == v.size
    assert [f for f, _ in BANK_FIELDS][-4:] == ["q", "phi", "p_f", "V_f"]


def test_zero_inputs_keep_bank_zero(design):
    st = FilterBankState.zeros(3, 2)
    for _ in range(20):
        st = step_bank(st, design, 0.0, 0.0, 0.0, np.eye(2) * 0.0, HD, 1e-2)
    assert not st.pack().any()


def test_constant_output_steady_state(design):
    st = FilterBankState.zeros(3, 2)
    h = 1e-2
    for _ in range(1000):
        st = step_bank(st, design, 1.0, 0.0, 0.0, np.zeros((2, 2)), HD, h)
    z_ss = -np.linalg.solve(design.A_K, design.K)
    assert np.linalg.norm(st.z - z_ss) <= 1e-6
    assert st.t == pytest.approx(10.0)


def test_constant_output_matches_closed_form(design):
    from scipy.linalg import expm

    st = FilterBankState.zeros(3, 2)
    h = 1e-2
    for _ in range(1000):
        st = step_bank(st, design, 1.0, 0.0, 0.0, np.zeros((2, 2)), HD, h)
    z_ss = -np.linalg.solve(design.A_K, design.K)
    z_exact = (np.eye(3) - expm(design.A_K * 10.0)) @ z_ss
    assert np.linalg.norm(st.z - z_exact) <= 1e-9
    # Omega sees y on its diagonal: Omega(t) = (e^{A_K t} - I) A_K^{-1}
    Om_exact = (expm(design.A_K * 10.0) - np.eye(3)) @ np.linalg.inv(design.A_K)
    assert np.allclose(st.Omega, Om_exact, atol=1e-9)


def test_phibar_qbar_examples(design):
    st = FilterBankState.zeros(3, 2)
    ph, qb = phibar_and_qbar(st, design, 0.0)
    assert not ph.any() and qb == 0.0
    assert phibar_and_qbar(st, design, 1.0)[1] == 1.0
    st.Omega = np.eye(3)
    ph, _ = phibar_and_qbar(st, design, 0.0)
    assert np.allclose(ph[:3], design.A_K.T @ design.C0)
    assert not ph[3:].any()


def test_extension_phase_and_gram(design):
    st = FilterBankState.zeros(3, 2)
    with pytest.raises(PhaseError):
        step_extension(st, design, 24.9, 1e-2, 1.0)
    st.phibar_f = np.array([1.0, -2.0, 0.5, 0.0, 3.0, 1.0])
    st2 = step_extension(st, design, 25.0, 1e-2, 1.0)
    assert np.allclose(st2.phi, st2.phi.T)
    assert np.linalg.eigvalsh(st2.phi).min() >= -1e-15
    assert np.allclose(st2.phi, np.outer(st.phibar_f, st.phibar_f) * (1 - np.exp(-1e-2)), rtol=1e-9)


# -- along the truth-mode benchmark trajectory -----------------------------------


def test_phi_psd_and_monotone(bench60):
    phi = bench60.bank("phi")
    t = bench60.t
    assert not phi[t < 25.0].any() and not bench60.bank("q")[t < 25.0].any()
    for a, b in zip(phi[::200], phi[200::200]):
        assert np.allclose(b, b.T, atol=1e-14 * max(np.abs(b).max(), 1))
        assert np.linalg.eigvalsh(b).min() >= -1e-12 * np.abs(b).max()
        assert np.linalg.eigvalsh(b - a).min() >= -1e-12 * np.abs(b).max()


def test_xi_identity(bench60):
    from exo_observer.verify import xi_residual

    assert xi_residual(bench60, 20.0) <= 1e-4


def test_q_phi_eta_absolute(bench60):
    tr = bench60.truth()
    m = bench60.t >= 30.0
    err = np.linalg.norm(bench60.bank("q")[m] - bench60.bank("phi")[m] @ tr["eta"], axis=1)
    assert err.max() <= 1e-5 * np.linalg.norm(tr["eta"])


def test_pf_vf_identity(bench60):
    tr = bench60.truth()
    m = bench60.t >= 30.0
    pf, Vf = bench60.bank("p_f")[m], bench60.bank("V_f")[m]
    rel = np.linalg.norm(pf - Vf @ tr["x_delta0"], axis=1) / (
        np.linalg.norm(Vf, ord=2, axis=(1, 2)) * np.linalg.norm(tr["x_delta0"]))
    assert np.allclose(Vf, np.transpose(Vf, (0, 2, 1)))
    assert rel.max() <= 1e-3
