import math

import numpy as np
import pytest

from magnusgate.characterize import ground_fidelity
from magnusgate.fidelity import pauli_sum_fidelity
from magnusgate.gate import (
    FLIP, Noise, Schedule, StepSizeError, amplitude, branch_operators, build_scene,
    check_step_size, echo_times, kraus_for_fock, propagate, propagate_motion,
    spin_echo_channel, xx_operator,
)
from magnusgate.hilbert import SIGMA_Z, basis_state, is_hermitian, kron
from magnusgate.ion_model import TWO_PI, PhysicalConfig, derive_params

SMALL = dict(n_c_cut=8, n_s_cut=4)


@pytest.fixture(scope="module")
def small_scene(small_cfg, small_dp):
    return build_scene(small_cfg, small_dp, steps=4000, **SMALL)


def _ground_column(scene):
    psi = np.zeros((scene.motional_dim, 1), dtype=complex)
    psi[0] = 1.0
    return psi


def test_amplitude_values():
    nu = TWO_PI * 1e6
    assert amplitude(0.0, nu) == 0.0
    assert amplitude(math.pi / nu, nu) == pytest.approx(1.0)
    assert amplitude(2 * math.pi / nu, nu) == pytest.approx(0.0, abs=1e-15)
    t = np.linspace(0, 1e-5, 1001)
    a = amplitude(t, nu, 0.3)
    assert np.all((a >= 0) & (a <= 1))


def test_schedule_dt():
    s = Schedule(tau=240e-6, nu=1.0)
    assert s.dt == pytest.approx(240e-6 * 1e-4)


def test_branch_operators_hermitian_and_finite(small_dp):
    for v in branch_operators(small_dp, 0.0, 18, 10):
        assert np.all(np.isfinite(v))
        assert is_hermitian(v)


def test_default_scene_hermitian(cfg, dp):
    scene = build_scene(cfg, dp)
    V = scene.V()
    assert V.hermitian and np.all(np.isfinite(V.data))
    assert scene.layout.dim == 4 * 19 * 11
    assert np.count_nonzero(scene.H0().data - np.diag(np.diag(scene.H0().data))) == 0


def test_parity_commutes(small_scene):
    P = kron(small_scene.layout, [SIGMA_Z, SIGMA_Z, None, None]).data
    V = small_scene.V().data
    assert np.max(np.abs(P @ V - V @ P)) < 1e-12 * np.max(np.abs(V))


def test_step_size_guard(small_cfg, small_dp):
    scene = build_scene(small_cfg, small_dp, steps=4000, **SMALL)
    assert check_step_size(scene) < 0.5
    coarse = build_scene(small_cfg, small_dp, steps=3, **SMALL)
    with pytest.raises(StepSizeError):
        check_step_size(coarse)
    with pytest.raises(StepSizeError):
        propagate_motion(coarse, 0, 0.0, coarse.schedule.tau, _ground_column(coarse))


def test_resource_guard(small_cfg, small_dp):
    with pytest.raises(ResourceWarning):
        build_scene(small_cfg, small_dp, n_c_cut=120, n_s_cut=10)


def test_zero_potential_gives_free_phases(small_scene):
    scene = small_scene.replace(V_branch=[np.zeros_like(v) for v in small_scene.V_branch])
    t1 = 0.37 * scene.schedule.tau
    psi = np.ones((scene.motional_dim, 1), dtype=complex) / math.sqrt(scene.motional_dim)
    out = propagate_motion(scene, 0, 0.0, t1, psi)
    expect = np.exp(-1j * scene.motional_energies() * t1)[:, None] * psi
    assert np.max(np.abs(out - expect)) < 1e-10


def test_zero_amplitude_is_free_evolution(small_scene):
    scene = small_scene.replace(schedule=Schedule(small_scene.schedule.tau, nu=0.0,
                                                  steps=small_scene.schedule.steps))
    t1 = scene.schedule.tau / 4
    lay = scene.layout
    psi = basis_state(lay, [0, 1, 2, 1])
    out = propagate(scene, 0.0, t1, [psi])[0]
    # back to the interaction picture: undo the free phases
    e = np.tile(scene.motional_energies(), 4)
    assert np.allclose(np.exp(1j * e * t1) * out.data, psi.data, atol=1e-10)


def test_propagation_preserves_norm(cfg, dp):
    scene = build_scene(cfg, dp.with_delta(TWO_PI * 8007.18))
    psi = _ground_column(scene)
    out = propagate_motion(scene, 0, 0.0, scene.schedule.tau, psi)
    assert abs(np.linalg.norm(out) - 1) < 1e-8


def test_strang_matches_direct_on_reference_window(small_cfg, small_dp):
    # fine steps over a short window: both schemes converge to the same state
    tau = small_dp.tau
    scene = build_scene(small_cfg, small_dp, steps=100_000, **SMALL)
    psi = _ground_column(scene)
    t1 = tau / 100
    a = propagate_motion(scene, 0, 0.0, t1, psi, method="strang")
    b = propagate_motion(scene, 0, 0.0, t1, psi, method="direct")
    assert np.linalg.norm(a - b) < 1e-6


def _phase_free_distance(x, y):
    ph = np.vdot(x, y)
    return float(np.linalg.norm(x * ph / abs(ph) - y))


def test_dt_halving_state_convergence(cfg, dp):
    """Reference run |00>|0,0> over the full gate, fourth-order scheme at default dt."""
    dpc = dp.with_delta(TWO_PI * 8007.18)
    out = []
    for steps in (10_000, 20_000):
        scene = build_scene(cfg, dpc, steps=steps)
        out.append(propagate_motion(scene, 0, 0.0, scene.schedule.tau,
                                    _ground_column(scene), method="strang4")[:, 0])
    assert _phase_free_distance(out[0], out[1]) < 1e-6


def test_strang_second_order(small_cfg, small_dp):
    res = {}
    for steps in (2000, 4000, 8000):
        scene = build_scene(small_cfg, small_dp, steps=steps, **SMALL)
        res[steps] = propagate_motion(scene, 0, 0.0, scene.schedule.tau / 2,
                                      _ground_column(scene))[:, 0]
    e1 = np.linalg.norm(res[2000] - res[8000])
    e2 = np.linalg.norm(res[4000] - res[8000])
    assert 3.0 < e1 / e2 < 6.0


def test_echo_times():
    cfg = PhysicalConfig(depth_override=TWO_PI * 1.6e6)
    dp = derive_params(cfg)
    tau = dp.tau
    s = build_scene(cfg, dp, noise=Noise(dtau=5e-6), **SMALL)
    assert echo_times(s) == pytest.approx(((tau + 5e-6) / 2, tau + 5e-6))
    s = build_scene(cfg, dp, noise=Noise(dtau=5e-6, timing_mode="midpoint"), **SMALL)
    assert echo_times(s) == pytest.approx((tau / 2 + 5e-6, tau))


def test_xx_twice_identity():
    from magnusgate.hilbert import HilbertLayout
    lay = HilbertLayout.gate(2, 1)
    X = xx_operator(lay).data
    assert np.array_equal(X @ X, np.eye(lay.dim))
    assert FLIP == {0: 3, 1: 2, 2: 1, 3: 0}


def test_zero_potential_echo_is_identity(small_scene):
    scene = small_scene.replace(V_branch=[np.zeros_like(v) for v in small_scene.V_branch])
    echo = spin_echo_channel(scene, [(0, 0), (1, 2)])
    for k in range(2):
        K = kraus_for_fock(echo, k)
        assert pauli_sum_fidelity(K, np.eye(4)) == pytest.approx(1.0, abs=1e-12)


def test_no_spin_coupling_gives_identity_gate():
    # a vanishing Magnus shift removes every spin-dependent term
    cfg = PhysicalConfig(depth_override=TWO_PI * 1.6e6, wavelength=1e-20)
    dp = derive_params(cfg).with_delta(TWO_PI * 8e3)
    scene = build_scene(cfg, dp, steps=4000, **SMALL)
    V = scene.V_branch
    for v in V[1:]:
        assert np.max(np.abs(v - V[0])) < 1e-9 * np.max(np.abs(V[0]))
    rep = ground_fidelity(scene, U_id=np.eye(4))
    assert rep.F == pytest.approx(1.0, abs=1e-9)


def test_channel_is_unitary_and_parity_diagonal(cfg, dp):
    scene = build_scene(cfg, dp.with_delta(TWO_PI * 8007.18))
    echo = spin_echo_channel(scene, [(0, 0)])
    K = kraus_for_fock(echo, 0)
    # completeness of the Kraus set equals norm preservation per spin branch
    S = np.einsum("mab,mac->bc", K.conj(), K)
    assert np.max(np.abs(S - np.eye(4))) < 1e-8
    # no amplitude moves between parity sectors
    even, odd = [0, 3], [1, 2]
    assert np.max(np.abs(K[:, even][:, :, odd])) < 1e-8
    assert np.max(np.abs(K[:, odd][:, :, even])) < 1e-8


def test_even_odd_relative_phase(cfg, dp):
    scene = build_scene(cfg, dp.with_delta(TWO_PI * 8007.18))
    echo = spin_echo_channel(scene, [(0, 0)])
    amp = echo.columns[:, 0, 0]          # vacuum-to-vacuum amplitude per branch
    ph = np.angle(amp)
    rel = (ph[0] + ph[3] - ph[1] - ph[2]) / 2
    rel = (rel + math.pi) % (2 * math.pi) - math.pi
    assert abs(abs(rel) - math.pi / 2) < 0.02
