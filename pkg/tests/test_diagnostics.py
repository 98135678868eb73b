import math

import numpy as np
import pytest

from cocyclelab import algebra as alg
from cocyclelab.algebra import SU2
from cocyclelab.diagnostics import (
    check_conditions,
    cluster_quaternions,
    coverage_probe,
    fiber_cells,
    haar_starts,
    lipschitz_bound,
    partial_product_clusters,
    partial_products,
    proof_chain_report,
    to_json,
    ue_probe,
)
from cocyclelab.dynamics import Observable
from cocyclelab.errors import RationalAlpha
from cocyclelab.normal_form import CocycleSpec, PlanParams, assemble, constant_spec, h_eval, plan_levels
from cocyclelab.torus import RotationSpec, TorusAngle


def test_conditions_default_spec(golden_spec):
    r = check_conditions(golden_spec)
    assert r.resonance_margin_pass and r.top_margin_pass and r.returns_pass
    assert all(row.dist_kn_alpha >= 0.05 for row in r.levels)
    d = [row.dist_n_alpha for row in r.levels]
    assert d[2] < d[1]
    # the first landmark k_1 is not a difference of resonances; reported, not flagged
    assert r.returns_strict_from_first == (d[1] < d[0])


def test_conditions_agree_at_doubled_precision(golden_spec):
    wide = CocycleSpec.from_dict({**golden_spec.to_dict(), "precision_bits": 512,
                                  "a_top": str(golden_spec.a_top.numerator << 256),
                                  "levels": [{**lv, "a": str(int(lv["a"]) << 256)} for lv in golden_spec.to_dict()["levels"]]})
    a, b = check_conditions(golden_spec), check_conditions(wide)
    for x, y in zip(a.levels, b.levels):
        assert f"{x.dist_n_alpha:.12g}" == f"{y.dist_n_alpha:.12g}"
        assert f"{x.dist_kn_alpha:.12g}" == f"{y.dist_kn_alpha:.12g}"
        assert f"{x.dist_n_top:.12g}" == f"{y.dist_n_top:.12g}"


def test_conditions_refuse_rational(golden_spec):
    spec = CocycleSpec(alpha=RotationSpec.parse("rational:3/8"), levels=(), a_top=TorusAngle.zero())
    with pytest.raises(RationalAlpha):
        check_conditions(spec)


def test_conditions_report_failures_without_raising(golden):
    spec = plan_levels(PlanParams(alpha=golden, top_offset=0.0))
    r = check_conditions(spec)
    assert not r.top_margin_pass
    assert "False" in r.to_text()


def test_partial_products_common_axis():
    theta = [0.3, 0.5, 1.1, 2.0]
    q = partial_products(theta, [0.0] * 4, 4)
    for j in range(4):
        d = alg.d_matrix(sum(theta[: j + 1]), 0.0)
        assert np.allclose(q[j], d.quaternion(), atol=1e-12)


def test_partial_products_against_brute_force():
    rng = np.random.default_rng(0)
    theta, phi = rng.random(50), rng.random(50)
    q = partial_products(theta, phi, 50)
    m = np.eye(2, dtype=complex)
    for j in range(50):
        m = m @ alg.d_matrix(theta[j], phi[j]).matrix()
    assert np.allclose(q[-1], [m[0, 0].real, m[0, 0].imag, m[0, 1].real, m[0, 1].imag], atol=1e-13)


def test_clusters_summable_angles():
    r = partial_product_clusters([2.0 ** -i for i in range(1, 10001)], [0.37] * 10000, 10000, 0.3)
    assert r.n_clusters == 1
    assert sum(r.counts) + r.transient == r.horizon


def test_clusters_harmonic_angles():
    h = 10 ** 4
    r = partial_product_clusters([1 / (i + 1) for i in range(1, h + 1)], [0.0] * h, h, 0.3)
    assert r.n_clusters >= 2 and r.min_separation >= 0.5
    assert sum(r.counts) + r.transient == h
    # oracle: common axis, cumulative angle sum 1/(i+1) wraps past 2 pi
    total = sum(1 / (i + 1) for i in range(1, h + 1))
    assert total > 2 * math.pi


def test_cluster_invariants_random():
    rng = np.random.default_rng(5)
    q = rng.standard_normal((500, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    centers, counts, transient, sep = cluster_quaternions(q, 0.4)
    assert sum(counts) + transient == 500
    c = np.array(centers)
    dots = np.abs(c @ c.T)
    np.fill_diagonal(dots, 0)
    assert 2 * math.sqrt(1 - dots.max()) >= 0.8 - 1e-12
    # each point within radius of at most one center
    within = (np.abs(q @ c.T) >= 1 - 0.4 ** 2 / 4).sum(axis=1)
    assert within.max() <= 1


def test_subsequence_clusters():
    h = 2000
    r = partial_product_clusters([1 / (i + 1) for i in range(1, h + 1)], [0.0] * h, h, 0.3, subsequence=[10, 100, 1000])
    assert r.subsequence["indices"] == [10, 100, 1000]


def test_proof_chain_default_spec(golden_cocycle):
    r = proof_chain_report(golden_cocycle)
    for row in r.levels:
        assert row.delta_exact <= 1e-10
        assert row.delta_total <= row.delta_exact + 2 * row.delta_h + row.delta_f + 1e-9
        assert row.delta_h <= row.delta_h_bound
        assert row.top_power_margin_ok
    assert r.all_ok


def test_proof_chain_zero_angles(golden):
    spec = plan_levels(PlanParams(alpha=golden, theta=(0.0, 0.0, 0.0)))
    r = proof_chain_report(assemble(spec))
    for row in r.levels:
        assert row.delta_exact < 1e-12 and row.delta_h == 0 and row.delta_total < 1e-12


def test_lipschitz_bound_by_sampling(golden_spec):
    # sample H_1 on a fine grid; the largest finite-difference slope stays below the bound
    lip = lipschitz_bound(golden_spec, 1)
    h = 1e-6
    worst = 0.0
    for x in np.linspace(0, 1, 200, endpoint=False):
        a = h_eval(golden_spec, 1, TorusAngle.from_float(x))
        b = h_eval(golden_spec, 1, TorusAngle.from_float(x + h))
        worst = max(worst, alg.dist_so3(a, b) / h)
    assert worst <= lip
    assert worst >= 0.5 * lip  # the bound is tight for a single level


def test_ue_probe_single_start(golden_cocycle):
    r = ue_probe(golden_cocycle, Observable("abs11sq"), [(TorusAngle.zero(), SU2.identity())], 1000)
    assert all(s == 0 for s in r.spread)


def test_ue_probe_constant_diagonal(golden):
    c = assemble(constant_spec(golden, TorusAngle.from_float(0.3)))
    starts = [(TorusAngle.zero(), SU2.identity()), (TorusAngle.from_float(0.5), SU2(0.0, 1.0))]
    r = ue_probe(c, Observable("abs11sq"), starts, 5000)
    assert all(abs(s - 1.0) <= 1e-12 for s in r.spread)


def test_ue_probe_worker_independence(golden_cocycle):
    starts = haar_starts(3, 7)
    a = ue_probe(golden_cocycle, Observable("trace_real"), starts, 3000, workers=1)
    b = ue_probe(golden_cocycle, Observable("trace_real"), starts, 3000, workers=3)
    assert to_json(a) == to_json(b)


def test_haar_starts_reproducible():
    a = haar_starts(4, 11)
    b = haar_starts(4, 11)
    assert a == b and all(abs(s.norm_defect()) < 1e-12 for _, s in a)


def test_fiber_cells_equal_measure_and_sign_invariant():
    rng = np.random.default_rng(2)
    q = rng.standard_normal((200000, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    z, w = q[:, 0] + 1j * q[:, 1], q[:, 2] + 1j * q[:, 3]
    cells = fiber_cells(z, w, 4)
    assert np.array_equal(cells, fiber_cells(-z, -w, 4))
    counts = np.bincount(cells, minlength=64)
    assert counts.min() > 0.9 * 200000 / 64 and counts.max() < 1.1 * 200000 / 64


def test_coverage_trivial_and_monotone(golden_cocycle):
    r0 = coverage_probe(golden_cocycle, (16, 64), 0)
    assert r0.visited == [1]
    r = coverage_probe(golden_cocycle, (16, 64), 20000, stride=3)
    assert all(a <= b for a, b in zip(r.fraction, r.fraction[1:]))
    assert r.fraction[-1] <= 1.0


def test_coverage_constant_plateau(golden):
    c = assemble(constant_spec(golden, TorusAngle.from_float(0.123)))
    r = coverage_probe(c, (16, 64), 100000)
    # |S_11| = 1 pins the fiber to one u-cell and w = 0 to two psi2-cells
    assert r.visited[-1] <= 16 * 4 * 2


def test_coverage_rejects_bad_net(golden_cocycle):
    with pytest.raises(ValueError):
        coverage_probe(golden_cocycle, (16, 60), 10)
