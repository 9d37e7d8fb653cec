"""Independent oracles used by the verification suites.

The gauge-series oracle solves dg/dz = A0 g - g A for a formal series
g = 1 + g_1/z + g_2/z^2 + ... directly from its coefficient equations,
without using any closed formula for g_1.
"""

from __future__ import annotations

import numpy as np

from .phase import FlowState


def _affine_matrix(residual, nvars: int):
    """(M, c) with residual(u) = M u + c, found by probing basis vectors."""
    c = residual(np.zeros(nvars, complex))
    cols = [residual(e) - c for e in np.eye(nvars, dtype=complex)]
    return np.array(cols).T, c


def series_coefficients(state: FlowState, order: int = 4):
    """Coefficients (g_1..g_order) and the residue term of the formal normal form at infinity.

    The connection is A z + B + T + sum_k S_k z^{-k} with S_k = Q C^{k-1} P, and
    the normal form is A z + T + Lam/z.  Coefficient matching gives, for m >= 1,

        [A, g_m] + [T, g_{m-1}] - g_{m-1} B + Lam g_{m-2}
            - sum_{k=1}^{m-1} g_{m-1-k} S_k + (m-2) g_{m-2} = 0

    with g_0 = 1 and g_{-1} = 0.  Lam only enters through m = 2 in the first
    two equations, so it is found first; then the system is linear in g.
    Returns (gs, Lam, residual_norm).
    """
    fr = state.frame
    fin, inf = fr.fin_rows, fr.inf_rows
    g = state.gamma
    Q, P, B = g[np.ix_(fin, inf)], g[np.ix_(inf, fin)], g[np.ix_(fin, fin)]
    A = np.diag(fr.a_rows[fin])
    T = np.diag(state.that[fin])
    C = np.diag(state.that[inf])
    n = len(A)
    rn = state.space.row_node[fin]
    hmask = rn[:, None] == rn[None, :]
    S = [None] + [Q @ np.linalg.matrix_power(C, k - 1) @ P for k in range(1, order + 1)]
    eye = np.eye(n, dtype=complex)

    def equations(gs, lam, upto):
        gg = {-1: np.zeros((n, n), complex), 0: eye}
        gg.update({k + 1: m for k, m in enumerate(gs)})
        out = []
        for m in range(1, upto + 1):
            e = A @ gg[m] - gg[m] @ A + T @ gg[m - 1] - gg[m - 1] @ T - gg[m - 1] @ B
            e = e + lam @ gg[m - 2] + (m - 2) * gg[m - 2]
            for k in range(1, m):
                e = e - gg[m - 1 - k] @ S[k]
            out.append(e.reshape(-1))
        return np.concatenate(out)

    nh = int(hmask.sum())
    hidx = np.flatnonzero(hmask.reshape(-1))

    def unpack_lam(v):
        lam = np.zeros(n * n, complex)
        lam[hidx] = v
        return lam.reshape(n, n)

    # stage 1: g_1, g_2 and Lam from the first two equations
    def res1(u):
        g1, g2 = u[: n * n].reshape(n, n), u[n * n : 2 * n * n].reshape(n, n)
        return equations([g1, g2], unpack_lam(u[2 * n * n :]), 2)

    M, c = _affine_matrix(res1, 2 * n * n + nh)
    u = np.linalg.lstsq(M, -c, rcond=None)[0]
    lam = unpack_lam(u[2 * n * n :])

    # stage 2: g_1..g_order with Lam fixed
    def res2(u):
        return equations([u[k * n * n : (k + 1) * n * n].reshape(n, n) for k in range(order)], lam, order)

    M, c = _affine_matrix(res2, order * n * n)
    u = np.linalg.lstsq(M, -c, rcond=None)[0]
    resid = float(np.linalg.norm(M @ u + c))
    gs = [u[k * n * n : (k + 1) * n * n].reshape(n, n) for k in range(order)]
    return gs, lam, resid


def varpi_infinity_oracle(state: FlowState, dT, order: int = 4) -> complex:
    """Tr(g_1 dT) with g_1 from the series recursion."""
    gs, _, _ = series_coefficients(state, order)
    fin = state.frame.fin_rows
    dt = np.asarray(dT, complex)[state.space.row_node][fin]
    return complex(np.sum(np.diag(gs[0]) * dt))
