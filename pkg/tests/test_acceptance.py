"""Acceptance criteria, one test (and one PASS/FAIL line) per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
repeated in the terminal summary under "acceptance criteria".
"""

from fractions import Fraction

import numpy as np

from isoflow import flow, kacmoody as km, orbits, phase as ph, spectral, verify
from isoflow.oracles import varpi_infinity_oracle
from isoflow.phase import INF

SEED = 20240917


def _suite(fn, trials, label, seed=SEED):
    res = verify.run_check("acceptance", label, fn, label, seed, trials)
    return res.passed, f"{trials} instances, worst error/tolerance {res.worst:.2e}"


# --- 1. dimension arithmetic ----------------------------------------------------------------

AFFINE = {
    "affine A2 (triangle)": ([1, 1, 1], [0, 0, 0], (1, 1, 1)),
    "affine A3 (square)": ([2, 2], [0, 0, 0, 0], (1, 1, 1, 1)),
    "affine D4 (star)": ([1, 4], [0] * 5, (2, 1, 1, 1, 1)),
}
# the doubly extended diagrams: a leg of length one on a node where delta is 1
HIGHER = {
    "hPIV": ([1, 1, 1], [1, 0, 0], (1, 1, 1)),
    "hPV": ([2, 2], [1, 0, 0, 0], (1, 1, 1, 1)),
    "hPVI": ([1, 4], [0, 1, 0, 0, 0], (2, 1, 1, 1, 1)),
}


def test_c01_dimension_arithmetic(criterion):
    def body():
        bad = []
        for name, (core, legs, delta) in AFFINE.items():
            g = km.build_supernova(core, legs).graph
            if km.delta_dim(g, delta) != 2 or km.classify_root(g, delta).kind != "imaginary":
                bad.append(name)
        for name, (core, legs, delta) in HIGHER.items():
            g = km.build_supernova(core, legs).graph
            for n in range(1, 5):
                d = tuple(n * x for x in delta) + (1,)
                if km.delta_dim(g, d) != 2 * n:
                    bad.append(f"{name} n={n}")
        return not bad, "Delta = 2 on the three affine diagrams, Delta = 2n for n = 1..4 on hPIV/hPV/hPVI" if not bad else f"mismatch: {bad}"

    criterion(1, "dimension arithmetic", 1.0, body)


# --- 2. reflections on A2++ ---------------------------------------------------------------------

A2PP = km.build_supernova([1, 1, 1], [1, 0, 0]).graph
# labels: 1 = foot, 2 = triangle node carrying the foot, 3 and 4 the other triangle nodes
LABEL = {1: 3, 2: 0, 3: 1, 4: 2}


def _labelled(d):
    return tuple(d[LABEL[k]] for k in (1, 2, 3, 4))


def _canonical(d):
    out = [0] * 4
    for k, x in zip((1, 2, 3, 4), d):
        out[LABEL[k]] = x
    return tuple(out)


def _word(labels):
    # s_a s_b ... acts right to left
    return [LABEL[k] for k in reversed(labels)]


def test_c02_reflection_reproduction(criterion):
    def body():
        d0 = _canonical((1, 2, 2, 1))
        first = _labelled(km.apply_word(A2PP, _word([1, 2, 3]), d0))
        w = _word([1, 4, 1, 2, 4, 1, 3, 1])
        seen, norms, d = [d0], [], d0
        for _ in range(6):
            d = km.apply_word(A2PP, w, d)
            seen.append(d)
            norms.append(km.cartan_form(A2PP, d, d))
        distinct = len(set(seen)) == len(seen)
        ok = first == (0, 1, 1, 1) and distinct and all(x == 0 for x in norms)
        sums = [sum(x) for x in seen[1:]]
        return ok, f"s1s2s3(1,2,2,1) = {first}; w^n d for n = 1..6 distinct: {distinct}, (d,d) = {norms}, entry sums {sums}"

    criterion(2, "reflection reproduction on A2++", 1.0, body)


# --- 3. Lax readings ------------------------------------------------------------------------------


def test_c03_lax_readings(criterion):
    def body():
        sg = km.build_supernova([3, 1], [0, 0, 0, 1])
        rs = km.lax_readings(sg, (1, 1, 1, 2, 1))
        shape = sorted((r.rank, r.finite_poles, r.infinity_order) for r in rs)
        expected = [(2, 3, 1), (3, 1, 2), (5, 0, 3)]
        return shape == expected, f"(rank, finite poles, order at infinity) = {shape}"

    criterion(3, "Lax readings of affine D4", 5.0, body)


# --- 4. omega equivariance ------------------------------------------------------------------------


def test_c04_omega_equivariance(criterion):
    criterion(4, "omega equivariance under SL2 generators", 10.0, lambda: _suite(verify.chk_omega_equivariance, 100, "omega"))


# --- 5. spectral invariance -----------------------------------------------------------------------


def _small_state(rng, max_n=5):
    while True:
        nparts = int(rng.integers(2, 4))
        dims = verify.random_dims(rng, nparts, 2, 3)
        if sum(map(sum, dims)) <= max_n:
            return ph.random_state(rng, dims, verify.random_points(rng, nparts, bool(rng.integers(2))))


def _spectral_case(rng):
    st = _small_state(rng)
    g = ph.Mobius.random(rng)
    p = spectral.state_spectral_poly(st)
    q = spectral.state_spectral_poly(ph.sl2_act(g, st))
    _, err = spectral.match_up_to_constant(spectral.gl2_transform_poly(g, p), q)
    return err, 1e-8


def test_c05_spectral_invariance(criterion):
    criterion(5, "spectral polynomial invariance (n <= 5)", 30.0, lambda: _suite(_spectral_case, 100, "spectral"))


# --- 6. Hamiltonian structure ---------------------------------------------------------------------


def _integrability_case(rng):
    st = verify.random_flow_state(rng)
    n = st.space.nnodes
    i, j = rng.choice(n, 2, replace=False)
    r = flow.integrability_residuals(st, int(i), int(j), 1e-4)
    return max(abs(r["bracket"]), abs(r["symmetry"])) / r["scale"], 1e-6


def test_c06_hamiltonian_structure(criterion):
    criterion(6, "{H_i,H_j} = 0 and dH_i/dt_j = dH_j/dt_i (h = 1e-4)", 30.0, lambda: _suite(_integrability_case, 50, "ham"))


# --- 7. varpi equivalence -------------------------------------------------------------------------


def _nonresonant_state(rng, with_inf=None):
    while True:
        st = verify.random_flow_state(rng, with_inf=with_inf)
        if not any(flow.leading_term(st).resonant.values()):
            return st


def test_c07_varpi_equivalence(criterion):
    def body():
        worst_form = worst_oracle = 0.0
        for k in range(50):
            rng = np.random.default_rng([SEED, 7, k])
            st = _nonresonant_state(rng)
            dT = verify.random_tangent(rng, st)
            worst_form = max(worst_form, abs(flow.varpi(st, dT) - flow.varpi_residue_form(st, dT)) / st.scale() ** 3)
            st = _nonresonant_state(rng, with_inf=True)
            dT = verify.random_tangent(rng, st)
            worst_oracle = max(worst_oracle, abs(flow.varpi_infinity(st, dT) - varpi_infinity_oracle(st, dT)))
        ok = worst_form < 1e-8 and worst_oracle < 1e-9
        return ok, f"residue form error/scale {worst_form:.2e} (< 1e-8), series oracle error {worst_oracle:.2e} (< 1e-9), 50 points each"

    criterion(7, "varpi = residue form; varpi_inf = Tr(g1 dT) by series oracle", 30.0, body)


# --- 8. flatness ---------------------------------------------------------------------------------


def _schlesinger_instance(rng):
    st = ph.random_state(rng, [[2], [1, 1, 1, 1]], [0, INF], scale=0.5)
    return st.with_gamma(st.gamma, times=np.array([0, 1.3, -0.7 + 1j, 2j, -1.5 - 0.5j]))


def _jmms_instance(rng):
    st = ph.random_state(rng, [[1, 1], [1, 1]], [0, INF], scale=0.5)
    return st.with_gamma(st.gamma, times=np.array([0, 1.0, 0.5j, -1.2 + 0.3j]))


def test_c08_flatness(criterion):
    def body():
        hs = [1e-2, 5e-3, 2.5e-3]
        z = 0.4 + 0.3j
        slopes = {}
        for name, make in (("Schlesinger", _schlesinger_instance), ("JMMS", _jmms_instance)):
            st = make(np.random.default_rng([SEED, 8]))
            vals = [flow.curvature_residual(st, z, h) for h in hs]
            slopes[name] = flow.convergence_slope(hs, vals)
        ok = all(s >= 1.9 for s in slopes.values())
        return ok, ", ".join(f"{k} slope {v:.3f}" for k, v in slopes.items()) + " (>= 1.9)"

    criterion(8, "flatness of the full connection", 60.0, body)


# --- 9. conservation -----------------------------------------------------------------------------


def _unit_path(rng, st, free):
    v = np.zeros(st.space.nnodes, complex)
    v[free] = rng.standard_normal(len(free)) + 1j * rng.standard_normal(len(free))
    return st.times + v / np.linalg.norm(v)


def test_c09_conservation(criterion):
    def body():
        rng = np.random.default_rng([SEED, 9])
        parts = []
        ok = True
        for name, st, free in (
            ("Schlesinger rank 2, four poles", _schlesinger_instance(rng), [1, 2, 3, 4]),
            ("JMMS", _jmms_instance(rng), [0, 1, 2, 3]),
        ):
            tr = flow.integrate(st, [_unit_path(rng, st, free)], step=1e-3)
            lam = max(m["lam_drift"] for m in tr.monitors)
            tr_k = max(m["trace_drift"] for m in tr.monitors)
            ok &= not tr.aborted and lam < 1e-8 and tr_k < 1e-8
            parts.append(f"{name}: Lam drift {lam:.1e}, Tr R^k drift {tr_k:.1e}{' (aborted)' if tr.aborted else ''}")
        return ok, "; ".join(parts)

    criterion(9, "conservation of Lam_i and Tr R_i^k (step 1e-3, unit path)", 60.0, body)


# --- 10. specializations ---------------------------------------------------------------------------


def test_c10_specializations(criterion):
    def body():
        out, ok = [], True
        for label, fn in (
            ("JMMS", verify.chk_jmms),
            ("Schlesinger", verify.chk_schlesinger),
            ("dual Schlesinger", verify.chk_dual_schlesinger),
            ("master", verify.chk_master),
        ):
            res = verify.run_check("acceptance", label, fn, label, SEED, 50)
            ok &= res.passed
            out.append(f"{label} {res.worst:.1e}")
        return ok, "worst error/(1e-12 scale) over 50 points: " + ", ".join(out)

    criterion(10, "specialization identities", 10.0, body)


# --- 11. Harnad duality ------------------------------------------------------------------------------


def test_c11_harnad(criterion):
    criterion(11, "Harnad dual: pushed-forward field and SL2 image", 10.0, lambda: _suite(verify.chk_harnad, 50, "harnad"))


# --- 12. orbit duality --------------------------------------------------------------------------------


def test_c12_orbit_duality(criterion):
    def body():
        bad = 0
        for k in range(200):
            qp, pq = verify.orbit_duality_pair(np.random.default_rng([SEED, 12, k]))
            bad += orbits.jordan_data_exact(pq) != orbits.contract_orbit(orbits.jordan_data_exact(qp))
        return bad == 0, f"{200 - bad}/200 exact matches"

    criterion(12, "JordanData(PQ) = contract(JordanData(QP))", 10.0, body)


# --- 13. existence test ---------------------------------------------------------------------------------

D4 = km.build_supernova([1, 4], [0] * 5).graph
DELTA = (2, 1, 1, 1, 1)


def _generic_lam():
    feet = [Fraction(1), Fraction(1, 2), Fraction(1, 3), Fraction(1, 5)]
    return (-sum(feet) / 2, *feet)


def test_c13_existence(criterion):
    def body():
        lam = _generic_lam()
        cases = [
            (DELTA, "nonempty", lambda v: v.delta == 2),
            ((3, 0, 0, 0, 0), "empty", lambda v: v.reason == "not a root"),
            (tuple(2 * x for x in DELTA), "empty", lambda v: v.decomposition == (DELTA, DELTA) and (v.delta, v.delta_sum) == (2, 4)),
        ]
        rng = np.random.default_rng([SEED, 13])
        notes, ok = [], True
        for d, status, cert in cases:
            v = km.ds_exists(D4, lam, d)
            ok &= v.status == status and cert(v)
            cur_l, cur_d, steps = lam, d, 0
            while steps < 20:
                i = int(rng.integers(D4.size))
                if km.param_is_zero(cur_l[i]):
                    continue
                cur_l, cur_d = km.reflect_param(D4, i, cur_l), km.reflect_root(D4, i, cur_d)
                ok &= km.ds_exists(D4, cur_l, cur_d).status == status
                steps += 1
            notes.append(f"{d}: {v.status} ({v.reason})")
        return ok, "; ".join(notes) + "; verdicts unchanged under 20 reflections each"

    criterion(13, "existence verdicts and reflection invariance", 10.0, body)


# --- 14. gauge invariance under shears --------------------------------------------------------------------


def test_c14_shear(criterion):
    criterion(14, "shear changes varpi_1 by -c Tr(PQ T_inf dT_inf)", 10.0, lambda: _suite(verify.chk_shear, 50, "shear"))


# --- 15. tau closedness --------------------------------------------------------------------------------------


def test_c15_tau_closedness(criterion):
    def body():
        st = _schlesinger_instance(np.random.default_rng([SEED, 15]))
        e1 = np.zeros(st.space.nnodes, complex)
        e2 = np.zeros(st.space.nnodes, complex)
        e1[1], e2[2] = 0.4, 0.4j
        loop = [st.times + e1, st.times + e1 + e2, st.times + e2, st.times]
        steps = [0.05, 0.025, 0.0125, 0.00625]
        errs = []
        for h in steps:
            tr = flow.integrate(st, loop, step=h)
            if tr.aborted:
                return False, f"loop left the admissible times at step {h}"
            errs.append(abs(tr.final.log_tau - st.log_tau))
        order = flow.convergence_slope(steps, errs)
        return order >= 3.5, f"|Delta log tau| = {', '.join(f'{e:.1e}' for e in errs)}; observed order {order:.2f} (>= 3.5)"

    criterion(15, "tau closedness on a closed loop", 60.0, body)
