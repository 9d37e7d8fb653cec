
import numpy as np
import pytest

from isoflow import flow, phase as ph
from isoflow.phase import INF
from isoflow.verify import SUITES, random_flow_state, random_tangent, run_check, schlesinger_state

CASES = [(suite, name, fn, tol) for suite, checks in SUITES.items() for name, fn, tol in checks]


@pytest.mark.parametrize("suite,name,fn,tol", CASES, ids=[f"{s}:{n}" for s, n, _, _ in CASES])
def test_suite_check(suite, name, fn, tol):
    trials = 1 if suite == "flow" else 3
    res = run_check(suite, name, fn, tol, seed=11, trials=trials)
    assert res.passed, f"worst error/tolerance ratio {res.worst:.3g}"


def _zero(state):
    return state.with_gamma(np.zeros_like(state.gamma))


def test_zero_gamma_trivialities():
    rng = np.random.default_rng(0)
    s = _zero(random_flow_state(rng, with_inf=True))
    dT = random_tangent(rng, s)
    assert flow.varpi(s, dT) == 0
    assert flow.varpi_residue_form(s, dT) == 0
    assert np.all(flow.vector_field(s, dT) == 0)
    r = flow.integrability_residuals(s, 0, 1)
    assert abs(r["f"]) == abs(r["symmetry"]) == abs(r["bracket"]) == 0
    nf = flow.leading_term(s)
    assert np.allclose(nf.g1, 0) and np.allclose(nf.Lam, 0)


def test_tilde_example():
    sp = ph.GradedSpace([[1, 1], [1]])
    r = np.zeros((3, 3), complex)
    r[0, 1] = 2.5
    out = flow.tilde(r, sp, np.array([0, 1, 0]), np.array([1, 0, 0]))
    assert out[0, 1] == pytest.approx(-2.5)
    assert np.allclose(flow.tilde(np.diag([1.0, 2, 3]), sp, [0, 1, 0], [1, 0, 0]), 0)
    bad = np.zeros((3, 3))
    bad[0, 2] = 1
    with pytest.raises(flow.FlowError):
        flow.tilde(bad, sp, [0, 1, 0], [1, 0, 0])


def test_leading_term_two_by_two():
    b, c = 0.7 - 0.2j, -1.3 + 0.4j
    sp = ph.GradedSpace([[1], [1], [1]])
    g = np.zeros((3, 3), complex)
    g[0, 1], g[1, 0] = b, c
    s = ph.FlowState(sp, ph.FourierConfig([0, 1, INF]), g, [0.2, -0.4, 1.0])
    nf = flow.leading_term(s)
    assert np.allclose(nf.X, [[0, -b], [c, 0]])
    assert np.allclose(nf.Lam, np.diag([-b * c, b * c]))


def test_resonant_solve_on_complement():
    lam = np.diag([0.0, 1.0])
    assert flow._resonant(lam)
    assert not flow._resonant(np.diag([0.0, 0.5]))
    L = np.array([[1.0, 2.0], [3.0, 4.0]])
    h, corr = flow._solve_h1(lam, L)
    assert corr is not None
    assert np.allclose(h + lam @ h - h @ lam, L - corr)


def test_resonance_warning():
    # one finite node of dimension 2 with Q = 1 and P = diag(0, 1): the residue term has eigenvalues 0 and +-1
    sp = ph.GradedSpace([[2], [2]])
    g = np.zeros((4, 4), complex)
    g[:2, 2:] = np.eye(2)
    g[2:, :2] = np.diag([0.0, 1.0])
    s = ph.FlowState(sp, ph.FourierConfig([0, INF]), g, [0, 0.5])
    with pytest.warns(flow.ResonanceWarning):
        nf = flow.leading_term(s)
    assert nf.resonant[0] and nf.correction is not None


def test_gauge_term_examples():
    rng = np.random.default_rng(4)
    s = random_flow_state(rng, with_inf=True)
    dT = random_tangent(rng, s)
    assert flow.gauge_term(s, np.zeros(s.space.nparts), dT) == 0
    mult = np.zeros(s.space.nparts)
    mult[s.fourier.inf_part] = 1.7
    Q, P, _ = flow.split_qp(s, s.gamma)
    inf = s.frame.inf_rows
    t, dt = s.that[inf], dT[s.space.row_node][inf]
    assert flow.gauge_term(s, mult, dT) == pytest.approx(1.7 * np.trace(P @ Q @ np.diag(t * dt)))


def test_shape_errors():
    rng = np.random.default_rng(5)
    s = random_flow_state(rng, nparts=3, with_inf=True)
    with pytest.raises(flow.FlowError):
        flow.master_field(s, random_tangent(rng, s))
    with pytest.raises(flow.FlowError):
        flow.harnad_dual(s)


def test_master_field_vanishes_at_zero():
    rng = np.random.default_rng(6)
    s = _zero(random_flow_state(rng, with_inf=False))
    assert np.allclose(flow.master_field(s, random_tangent(rng, s)), 0)


def test_full_connection_at_zero():
    rng = np.random.default_rng(7)
    s = _zero(random_flow_state(rng, with_inf=True))
    z = 0.25 - 0.5j
    ev = flow.full_connection(s, z)
    fin = s.frame.fin_rows
    assert np.allclose(ev.Bz, np.diag(s.frame.a_rows[fin] * z + s.that[fin]))


def test_integrate_zero_length_path():
    rng = np.random.default_rng(8)
    s = schlesinger_state(rng, 2, 3)
    tr = flow.integrate(s, [s.times])
    assert not tr.aborted and len(tr.states) == 1 and tr.final is s


def test_integrate_aborts_on_collision():
    rng = np.random.default_rng(9)
    s = schlesinger_state(rng, 2, 3, scale=0.5)
    target = s.times.copy()
    target[2] = target[1]
    tr = flow.integrate(s, [target], step=1e-2)
    assert tr.aborted and len(tr.states) > 1


def test_conservation_along_flow():
    rng = np.random.default_rng(10)
    s = schlesinger_state(rng, 2, 4, scale=0.5)
    v = np.r_[0.0, rng.standard_normal(4)]
    tr = flow.integrate(s, [s.times + 0.3 * v / np.linalg.norm(v)], step=1e-2)
    assert not tr.aborted and not tr.warnings
    assert max(m["lam_drift"] for m in tr.monitors) < 1e-8


def test_tau_closed_loop():
    rng = np.random.default_rng(12)
    s = schlesinger_state(rng, 2, 3, scale=0.5)
    e1 = np.zeros(4, complex)
    e2 = np.zeros(4, complex)
    e1[1], e2[2] = 0.3, 0.3j
    loop = [s.times + e1, s.times + e1 + e2, s.times + e2, s.times]
    errs = [abs(flow.integrate(s, loop, step=h).final.log_tau - s.log_tau) for h in (0.05, 0.025)]
    assert errs[1] < errs[0] / 8
