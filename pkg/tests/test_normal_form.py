import math

import numpy as np
import pytest

from cocyclelab import algebra as alg
from cocyclelab.algebra import SU2
from cocyclelab.errors import InsufficientPrecision, NoDominantMode, NoValidTau
from cocyclelab.normal_form import (
    CocycleSpec,
    PlanParams,
    assemble,
    constant_spec,
    h_eval,
    kam_step,
    normal_form_tangent,
    plan_levels,
    reconstruct_theta,
    verify_level,
    with_level,
)
from cocyclelab.points import ExplicitPoints, GridPoints, OrbitPoints
from cocyclelab.torus import TorusAngle, angle_times_int, dist_mod
from oracles import fibonacci, h_matrix, so3_dist

# --- planning ------------------------------------------------------------------------


def test_default_schedule_is_fibonacci(golden_spec):
    assert golden_spec.ks == (fibonacci(9), fibonacci(18), fibonacci(36)) == (34, 2584, 14930352)
    assert [lv.n for lv in golden_spec.levels] == [34, 2550, 14927768]
    assert all(lv.tau_adjust == 0 for lv in golden_spec.levels)


def test_tan_and_phase_reconstruction(golden):
    spec = plan_levels(PlanParams(alpha=golden, phi=(0.1, 0.35, 0.8)))
    for lv in spec.levels:
        assert abs(reconstruct_theta(lv, golden) - lv.theta) <= 1e-10
        delta = abs((lv.a - angle_times_int(lv.k, golden)).signed())
        assert abs(abs(lv.fhat) / delta - abs(math.tan(lv.theta))) <= 1e-10 * max(1.0, abs(math.tan(lv.theta)))
        assert abs(math.atan2(lv.fhat.imag, lv.fhat.real) / (2 * math.pi) % 1.0 - lv.phi) <= 1e-10


def test_resonance_margins_hold(golden_spec, golden):
    for lv in golden_spec.levels:
        assert dist_mod(angle_times_int(lv.k * lv.n, golden), "Z/2") >= golden_spec.epsilon


def test_landmarks_are_returns(golden_spec, golden):
    k_prev = 0
    for lv in golden_spec.levels:
        d_n = dist_mod(angle_times_int(lv.n, golden), "Z")
        bound = dist_mod(angle_times_int(lv.k, golden), "Z") + dist_mod(angle_times_int(k_prev, golden), "Z")
        assert d_n <= bound * (1 + 1e-12)
        assert 1 - k_prev / lv.k <= lv.n / lv.k <= 1
        k_prev = lv.k


def test_top_rotation_margins(golden_spec):
    for lv in golden_spec.levels:
        assert dist_mod(golden_spec.a_top.times(lv.n), "Z/2") >= golden_spec.epsilon


def test_theta_right_angle_and_zero(golden):
    spec = plan_levels(PlanParams(alpha=golden, theta=(math.pi / 2, 0.0, 0.8)))
    lv1, lv2 = spec.levels[0], spec.levels[1]
    assert abs((lv1.a - angle_times_int(lv1.k, golden)).signed()) < 1e-15
    assert lv2.fhat == 0
    r2 = abs((spec.levels[2].a - angle_times_int(lv2.k, golden)).signed())
    assert abs((lv2.a - angle_times_int(lv2.k, golden)).signed()) == pytest.approx(r2, abs=1e-15)


def test_explicit_schedule_growth_check(golden):
    with pytest.raises(ValueError):
        plan_levels(PlanParams(alpha=golden, ks=(34, 100, 10 ** 9)))
    spec = plan_levels(PlanParams(alpha=golden, ks=(34, 2584, 14930352)))
    assert spec.ks == (34, 2584, 14930352)


def test_no_valid_tau(golden):
    with pytest.raises(NoValidTau) as err:
        plan_levels(PlanParams(alpha=golden, epsilon=0.3))
    assert err.value.level == 1


def test_deep_schedule_needs_precision(golden):
    with pytest.raises(InsufficientPrecision):
        plan_levels(PlanParams(alpha=golden.with_precision(128), depth=3, first_position=20))


def test_fhat_coupled_to_next_landmark(golden):
    spec = plan_levels(PlanParams(alpha=golden, couple_fhat_to_next_iterate=True))
    lv1, lv2 = spec.levels[0], spec.levels[1]
    r = abs((lv2.a - angle_times_int(lv1.k, golden)).signed())
    assert lv1.theta == pytest.approx(math.asin(min(1.0, 1.0 / (lv2.n * r))))


def test_spec_json_roundtrip_is_byte_identical(golden_spec):
    text = golden_spec.to_json()
    again = CocycleSpec.from_json(text)
    assert again == golden_spec
    assert again.to_json() == text


# --- evaluation --------------------------------------------------------------------------


def test_h_eval_at_zero_is_product_of_rotations(golden_spec):
    h = h_eval(golden_spec, 3, TorusAngle.zero())
    expected = np.eye(2)
    for lv in golden_spec.levels:
        expected = alg.d_matrix(lv.theta, lv.phi).matrix() @ expected
    assert np.allclose(h.matrix(), expected, atol=1e-15)


def test_h_eval_matches_matrix_oracle(golden_spec):
    x = TorusAngle.from_float(0.3141592653589793)
    for depth in (1, 2):
        got = h_eval(golden_spec, depth, x).matrix()
        # the float oracle carries phase error ~ 2 pi k x * 1e-16
        assert so3_dist(got, h_matrix(golden_spec.levels[:depth], x.to_float())) <= 2e-12
    g1 = alg.conjugator_eval(34, 2.0, 0.0, x)
    g2 = alg.conjugator_eval(2584, 1.2, 0.0, x)
    assert alg.dist_so3(h_eval(golden_spec, 2, x), alg.compose(g2, g1)) <= 1e-13


def test_all_zero_angles_give_constant(golden):
    spec = plan_levels(PlanParams(alpha=golden, theta=(0.0, 0.0, 0.0)))
    c = assemble(spec)
    z, w = c.arrays(GridPoints(64))
    top = alg.diag(spec.a_top.to_float())
    assert np.max(np.abs(z - top.z)) < 1e-15 and np.max(np.abs(w)) < 1e-15


def test_depth_zero_is_constant(golden):
    a = TorusAngle.from_float(0.2)
    c = assemble(constant_spec(golden, a))
    assert alg.dist_so3(c.at(TorusAngle.from_float(0.7)), alg.diag(0.2)) < 1e-15


def test_assembled_map_matches_matrix_oracle(golden_spec, golden_cocycle):
    alpha = angle_times_int(1, golden_spec.alpha)
    for xf in (0.0, 0.1, 0.77):
        x = TorusAngle.from_float(xf)
        h0 = h_matrix(golden_spec.levels, x.to_float())
        h1 = h_matrix(golden_spec.levels, (x + alpha).to_float())
        expected = h1.conj().T @ alg.diag(golden_spec.a_top.to_float()).matrix() @ h0
        # float x loses ~1e-16 * 2k relative phase at the top frequency
        assert so3_dist(golden_cocycle.at(x).matrix(), expected) <= 1e-7


def test_batch_point_sets_agree(golden_cocycle, golden):
    x0 = TorusAngle.from_float(0.25)
    orbit = OrbitPoints(x0, golden, 5, 4)
    explicit = ExplicitPoints([x0 + angle_times_int(5 + j, golden) for j in range(4)])
    z1, w1 = golden_cocycle.arrays(orbit)
    z2, w2 = golden_cocycle.arrays(explicit)
    assert np.max(np.abs(z1 - z2)) + np.max(np.abs(w1 - w2)) < 1e-9


# --- verification -----------------------------------------------------------------------------


@pytest.mark.parametrize("level", [1, 2, 3])
def test_verify_level_exactness(golden_cocycle, level):
    r = verify_level(golden_cocycle, level, 4096)
    assert r.conjugacy_residual <= 1e-10
    assert r.forward_residual <= 1e-10
    assert r.frequency_ok
    assert r.dominant_frequency == 2 * golden_cocycle.spec.levels[level - 1].k


def test_top_level_is_single_mode(golden_cocycle):
    r = verify_level(golden_cocycle, 3, 4096)
    assert r.mode_removed_residual < 1e-12
    assert r.plan_mismatch < 1e-12


def test_corrupted_coefficient_is_detected(golden_cocycle):
    spec = golden_cocycle.spec
    lv = spec.levels[1]
    bad = assemble(with_level(spec, 2, fhat=lv.fhat + 1e-3))
    clean = verify_level(golden_cocycle, 2, 4096)
    r = verify_level(bad, 2, 4096)
    assert clean.plan_mismatch < 1e-6
    assert r.plan_mismatch >= 1e-4


def test_grid_refinement_stability(small_spec, golden_cocycle):
    c = assemble(small_spec)
    for level in (1, 2, 3):
        a = verify_level(c, level, 4096)
        b = verify_level(c, level, 8192)
        assert abs(a.sup_norm - b.sup_norm) <= 1e-9
    a = verify_level(golden_cocycle, 3, 4096)
    b = verify_level(golden_cocycle, 3, 8192)
    assert abs(a.sup_norm - b.sup_norm) <= 1e-9


def test_level_power_closed_form(golden_cocycle):
    x = TorusAngle.from_float(0.4)
    direct = SU2.identity()
    alpha = golden_cocycle.alpha
    for j in range(200):
        direct = alg.compose(golden_cocycle.at(x + angle_times_int(j, alpha)), direct)
    assert alg.dist_so3(direct, golden_cocycle.level_power(0, x, 200)) < 1e-11


# --- forward KAM step ---------------------------------------------------------------------


def test_kam_step_trivial(golden):
    A = alg.diag(0.3)
    r = kam_step(A, np.zeros(64), np.zeros(64, dtype=complex), golden)
    assert r.k == 0 and r.norm_out == 0.0 and r.a_new == A


def test_kam_step_recovers_planned_level(small_spec, golden):
    c = assemble(small_spec)
    A, t, w = normal_form_tangent(c, 3, 4096)
    r = kam_step(A, t, w, golden)
    lv = small_spec.levels[2]
    assert r.k == lv.k
    assert abs(r.theta - lv.theta) <= 1e-8
    assert r.norm_out <= 1e-12


def planted(eps, alpha, k=5, G=1024):
    x = np.arange(G) / G
    A = alg.diag((angle_times_int(k, alpha).to_float() + 0.5 * eps) % 1.0)
    t = 0.05 * eps * np.cos(2 * np.pi * 3 * x)
    w = 1j * eps * np.exp(2j * np.pi * 2 * k * x) + 0.05 * eps * np.exp(2j * np.pi * 7 * x)
    return A, t, w


def test_kam_step_quadratic_contraction(golden):
    norms = []
    for eps in (1e-2, 1e-3, 1e-4):
        r = kam_step(*planted(eps, golden), golden)
        assert r.k == 5
        norms.append((r.norm_in, r.norm_out))
    ratios = [out / inp ** 2 for inp, out in norms]
    assert max(ratios) / min(ratios) < 2.0
    assert norms[1][1] <= 1e-5


def test_kam_step_rejects_flat_spectrum(golden):
    G = 256
    x = np.arange(G) / G
    w = 1e-3 * (np.exp(2j * np.pi * 4 * x) + np.exp(2j * np.pi * 6 * x))
    with pytest.raises(NoDominantMode):
        kam_step(alg.diag(0.1), np.zeros(G), w, golden)


def test_kam_step_rejects_large_input(golden):
    A, t, w = planted(1e-1, golden)
    with pytest.raises(ValueError):
        kam_step(A, t, w * 3, golden)
