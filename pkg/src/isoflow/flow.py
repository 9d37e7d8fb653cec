"""Hamiltonian one-form, isomonodromy vector fields, connections and integration.

A time tangent ``dT`` is a vector with one entry per core node (the change of
t_i).  All matrices live on V in the node order of the graded space; blocks
U (finite parts) and W_inf (the part at infinity, if any) are picked out with
row masks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import fd_gradient
from .orbits import jordan_data
from .phase import (
    FlowState,
    Frame,
    GradedSpace,
    PhaseError,
    PoleError,
    connection_matrix,
    hamiltonian_vector,
    omega,
    residues,
)


class FlowError(ValueError):
    pass


class PathExit(FlowError):
    """The path leaves the space of admissible times."""


class ResonanceWarning(UserWarning):
    pass


# --- the tilde operation ----------------------------------------------------------------


def _tilde_kernel(space: GradedSpace, times, dtimes) -> np.ndarray:
    t = np.asarray(times, complex)[space.row_node]
    dt = np.asarray(dtimes, complex)[space.row_node]
    rp, rn = space.row_part, space.row_node
    mask = (rp[:, None] == rp[None, :]) & (rn[:, None] != rn[None, :])
    diff = np.where(mask, t[:, None] - t[None, :], 1.0)
    return np.where(mask, (dt[:, None] - dt[None, :]) / diff, 0.0)


def tilde(r: np.ndarray, space: GradedSpace, times, dtimes, tol: float = 1e-12) -> np.ndarray:
    """ad_T^{-1}[dT, R] for part-block-diagonal R.

    Component (i, i') is R_ii' (dt_i - dt_i') / (t_i - t_i') for distinct
    nodes of one part and zero otherwise.
    """
    r = np.asarray(r, complex)
    rp = space.row_part
    cross = np.where(rp[:, None] != rp[None, :], r, 0)
    if np.linalg.norm(cross) > tol * max(1.0, np.linalg.norm(r)):
        raise FlowError("tilde needs a part-block-diagonal argument")
    return _tilde_kernel(space, times, dtimes) * r


def tilde_two_form(F, space: GradedSpace, times) -> np.ndarray:
    """Tilde of a matrix-valued one-form F = sum_k F[k] dt_k.

    Entry (a, b) is (dt_a - dt_b) ^ F_ab / (t_a - t_b), a two-form; the result
    W has W[p, q] = value on the pair of coordinate directions (e_p, e_q).
    """
    F = np.asarray(F, complex)
    nn = space.nnodes
    unit = np.eye(nn, dtype=complex)
    ker = [_tilde_kernel(space, times, unit[p]) for p in range(nn)]
    out = np.zeros((nn, nn) + F.shape[1:], complex)
    for p in range(nn):
        for q in range(nn):
            out[p, q] = ker[p] * F[q] - ker[q] * F[p]
    return out


def wedge_trace(F, G) -> np.ndarray:
    """Tr(F ^ G) for matrix one-forms given by components; [p, q] entries."""
    F, G = np.asarray(F, complex), np.asarray(G, complex)
    a = np.einsum("pij,qji->pq", F, G)
    return a - a.T


def tilde_rows(r: np.ndarray, t, dt) -> np.ndarray:
    """Tilde for a matrix whose rows carry their own times (rows of one node share a time)."""
    t = np.asarray(t, complex)
    dt = np.asarray(dt, complex)
    same = t[:, None] == t[None, :]
    diff = np.where(same, 1.0, t[:, None] - t[None, :])
    return np.where(same, 0.0, (dt[:, None] - dt[None, :]) / diff) * r


# --- shared pieces -------------------------------------------------------------------------


@dataclass
class _Parts:
    fr: Frame
    g: np.ndarray  # Gamma
    xi: np.ndarray
    t: np.ndarray  # row times
    dt: np.ndarray  # row time changes
    kern: np.ndarray  # tilde kernel
    a: np.ndarray  # a_j on finite rows, 0 at infinity
    uu: np.ndarray  # mask of U x U
    xf: np.ndarray  # X embedded (U x U block of Xi)
    pf: np.ndarray  # P embedded (W_inf x U block of Gamma)
    qf: np.ndarray  # Q embedded (U x W_inf block of Gamma)
    bf: np.ndarray  # B embedded


def _parts(state: FlowState, dT) -> _Parts:
    fr = state.frame
    sp = state.space
    dT = np.asarray(dT, complex)
    if dT.shape != (sp.nnodes,):
        raise FlowError("time tangent needs one entry per core node")
    g = state.gamma
    xi = fr.phi * g
    fin, inf = fr.fin_rows, fr.inf_rows
    uu = fin[:, None] & fin[None, :]
    return _Parts(
        fr,
        g,
        xi,
        state.that,
        dT[sp.row_node],
        _tilde_kernel(sp, state.times, dT),
        fr.a_rows,
        uu,
        np.where(uu, xi, 0),
        np.where(inf[:, None] & fin[None, :], g, 0),
        np.where(fin[:, None] & inf[None, :], g, 0),
        np.where(uu, g, 0),
    )


def _tr_diag(m: np.ndarray, d: np.ndarray) -> complex:
    """Tr(M D) for diagonal D given by its diagonal."""
    return complex(np.sum(np.diag(m) * d))


# --- the Hamiltonian one-form ----------------------------------------------------------------


def varpi_parts(state: FlowState, dT) -> tuple[complex, complex]:
    """(varpi_0, varpi_1) of the Hamiltonian one-form evaluated on dT."""
    p = _parts(state, dT)
    xg = np.where(p.fr.samepart, p.xi @ p.g, 0)
    gam = p.g + np.diag(p.t)
    w0 = 0.5 * np.trace((p.kern * xg) @ xg) - _tr_diag(p.xi @ gam @ p.xi, p.dt)
    w1 = _tr_diag(p.xf @ p.xf, p.t * p.dt) + _tr_diag(p.pf @ (p.a[:, None] * p.qf), p.t * p.dt)
    return complex(w0), complex(w1)


def varpi(state: FlowState, dT) -> complex:
    """The Hamiltonian one-form varpi_0 + varpi_1 on the time tangent dT."""
    w0, w1 = varpi_parts(state, dT)
    return w0 + w1


def hamiltonian(state: FlowState, node: int) -> complex:
    """H_i, the dt_i component of varpi."""
    e = np.zeros(state.space.nnodes, complex)
    e[node] = 1.0
    return varpi(state, e)


def gauge_term(state: FlowState, multipliers, dT) -> complex:
    """Tr(Gamma Xi theta) with theta = lambda T dT, lambda constant on each part."""
    p = _parts(state, dT)
    lam = np.asarray(multipliers, complex)[state.space.row_part]
    return _tr_diag(p.g @ p.xi, lam * p.t * p.dt)


# --- the vector field ----------------------------------------------------------------------------


def vector_field(state: FlowState, dT) -> np.ndarray:
    """dGamma along the time tangent dT."""
    p = _parts(state, dT)
    fr = p.fr
    g, xi = p.g, p.xi
    gam = g + np.diag(p.t)
    rt = p.kern * np.where(fr.samepart, xi @ g, 0)
    td = p.t * p.dt
    out = rt @ g - g @ rt
    out += np.where(fr.offpart, gam @ (xi * p.dt[None, :]) + p.dt[:, None] * (xi @ gam), 0)
    out -= fr.phi_inv * ((xi * p.dt[None, :]) @ xi)
    out += -(td[:, None] * p.pf) * p.a[None, :] + p.a[:, None] * p.qf * td[None, :]
    out += -td[:, None] * p.xf - p.xf * td[None, :]
    return out


def vector_field_blocks(state: FlowState, dT) -> np.ndarray:
    """The same field assembled part block by part block (independent code path)."""
    sp = state.space
    fr = state.frame
    ps = sp.part_slices
    inf = state.fourier.inf_part
    k = sp.nparts
    pts = state.fourier.points
    B = {(i, j): state.gamma[ps[i], ps[j]] for i in range(k) for j in range(k)}
    phi = state.fourier.phi_table()
    X = {key: phi[key] * b for key, b in B.items()}
    t = state.that
    dt = np.asarray(dT, complex)[sp.row_node]
    T = [np.diag(t[ps[j]]) for j in range(k)]
    dTm = [np.diag(dt[ps[j]]) for j in range(k)]

    def tl(j, m):
        tj, dj = t[ps[j]], dt[ps[j]]
        return tilde_rows(m, tj, dj)

    out = np.zeros_like(state.gamma)
    diag_terms = []
    for j in range(k):
        acc = sum((X[j, l] @ B[l, j] for l in range(k)), np.zeros_like(B[j, j]))
        diag_terms.append(tl(j, acc))
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            d = diag_terms[i] @ B[i, j] - B[i, j] @ diag_terms[j]
            for l in range(k):
                d = d + dTm[i] @ X[i, l] @ B[l, j] + B[i, l] @ X[l, j] @ dTm[j]
                d = d - X[i, l] @ dTm[l] @ X[l, j] / phi[i, j]
            d = d + dTm[i] @ X[i, j] @ T[j] + T[i] @ X[i, j] @ dTm[j]
            if i == inf:
                d = d - T[i] @ dTm[i] @ B[i, j] * pts[j]
            elif j == inf:
                d = d + pts[i] * B[i, j] @ T[j] @ dTm[j]
            else:
                d = d - T[i] @ dTm[i] @ X[i, j] - X[i, j] @ T[j] @ dTm[j]
            out[ps[i], ps[j]] = d
    return out


def qpb_field(state: FlowState, dT):
    """(dQ, dP, dB) from the Q, P, B form of the equations (needs a part at infinity)."""
    fr = state.frame
    sp = state.space
    inf, fin = fr.inf_rows, fr.fin_rows
    g = state.gamma
    Q = g[np.ix_(fin, inf)]
    P = g[np.ix_(inf, fin)]
    B = g[np.ix_(fin, fin)]
    X = (fr.phi * g)[np.ix_(fin, fin)]
    A = np.diag(fr.a_rows[fin])
    tfull, dtfull = state.that, np.asarray(dT, complex)[sp.row_node]
    T, dTm = np.diag(tfull[fin]), np.diag(dtfull[fin])
    C, dC = np.diag(tfull[inf]), np.diag(dtfull[inf])
    tl_u = lambda m: tilde_rows(m, tfull[fin], dtfull[fin])
    tl_w = lambda m: tilde_rows(m, tfull[inf], dtfull[inf])

    rp_u = sp.row_part[fin]
    delta = lambda m: np.where(rp_u[:, None] == rp_u[None, :], m, 0)
    off = lambda m: np.where(rp_u[:, None] != rp_u[None, :], m, 0)
    R = delta(Q @ P + X @ B)
    Rt = tl_u(R)
    PQt = tl_w(P @ Q)
    com = lambda a, b: a @ b - b @ a
    dQ = Q @ PQt + Rt @ Q + com(dTm, X) @ Q + (B + T) @ Q @ dC + dTm @ Q @ C + A @ Q @ C @ dC
    mdP = PQt @ P + P @ Rt + P @ com(dTm, X) + dC @ P @ (B + T) + C @ P @ dTm + C @ dC @ P @ A
    dB = off(com(Rt, B) + com(dTm, Q @ P) + B @ X @ dTm + dTm @ X @ B + com(A, Q @ dC @ P - X @ dTm @ X) + com(T, com(X, dTm)))
    return dQ, -mdP, dB


def split_qp(state: FlowState, m: np.ndarray):
    """(Q, P, B) blocks of a matrix on V."""
    fr = state.frame
    inf, fin = fr.inf_rows, fr.fin_rows
    return m[np.ix_(fin, inf)], m[np.ix_(inf, fin)], m[np.ix_(fin, fin)]


# --- classical specializations ------------------------------------------------------------------


def jmms_field(Q, P, t0, tinf, dt0, dtinf):
    """JMMS equations; t0, tinf (and their changes) are per-row diagonals of T_0, T_inf."""
    Q, P = np.asarray(Q, complex), np.asarray(P, complex)
    T0, Ti, dT0, dTi = (np.diag(np.asarray(x, complex)) for x in (t0, tinf, dt0, dtinf))
    PQt = tilde_rows(P @ Q, tinf, dtinf)
    QPt = tilde_rows(Q @ P, t0, dt0)
    dQ = Q @ PQt + QPt @ Q + T0 @ Q @ dTi + dT0 @ Q @ Ti
    mdP = P @ QPt + PQt @ P + Ti @ P @ dT0 + dTi @ P @ T0
    return dQ, -mdP


def jmms_varpi(Q, P, t0, tinf, dt0, dtinf) -> complex:
    T0, Ti, dT0, dTi = (np.diag(np.asarray(x, complex)) for x in (t0, tinf, dt0, dtinf))
    PQt = tilde_rows(P @ Q, tinf, dtinf)
    QPt = tilde_rows(Q @ P, t0, dt0)
    return complex(
        0.5 * np.trace(Q @ PQt @ P) + 0.5 * np.trace(P @ QPt @ Q) + np.trace(P @ T0 @ Q @ dTi) + np.trace(Q @ Ti @ P @ dT0)
    )


def schlesinger_field(Rs, ts, dts):
    """dR_i = -sum_{j != i} [R_i, R_j] dlog(t_i - t_j)."""
    out = []
    for i, Ri in enumerate(Rs):
        acc = np.zeros_like(Ri)
        for j, Rj in enumerate(Rs):
            if j != i:
                acc -= (Ri @ Rj - Rj @ Ri) * (dts[i] - dts[j]) / (ts[i] - ts[j])
        out.append(acc)
    return out


def dual_schlesinger_field(R, t, dt):
    """dR = [R~, R] with the tilde taken against the diagonal times t."""
    Rt = tilde_rows(R, t, dt)
    return Rt @ R - R @ Rt


def master_field(state: FlowState, dT) -> np.ndarray:
    """dB = [delta(XB)~, B] + [[dT, X], B + T]^o, for data with no part at infinity."""
    if state.fourier.inf_part is not None:
        raise FlowError("invalid: the master equation needs every part at a finite point")
    fr = state.frame
    sp = state.space
    B = state.gamma
    X = fr.phi * B
    t, dt = state.that, np.asarray(dT, complex)[sp.row_node]
    Rt = tilde(np.where(fr.samepart, X @ B, 0), sp, state.times, dT)
    dTm = np.diag(dt)
    Y = dTm @ X - X @ dTm
    M = B + np.diag(t)
    return (Rt @ B - B @ Rt) + np.where(fr.offpart, Y @ M - M @ Y, 0)


def bipartite_field(S, R, t0, t1, dt0, dt1, gauge: bool = True):
    """Displayed bipartite equations for B = [[0, R], [S, 0]] with a_0 = 0, a_1 = 1.

    With ``gauge=False`` the terms removable by a diagonal gauge are dropped.
    """
    T0, T1, dT0, dT1 = (np.diag(np.asarray(x, complex)) for x in (t0, t1, dt0, dt1))
    RSt = tilde_rows(R @ S, t0, dt0)
    SRt = tilde_rows(S @ R, t1, dt1)
    dS = S @ RSt + SRt @ S + T1 @ S @ dT0 + dT1 @ S @ T0
    mdR = R @ SRt + RSt @ R + T0 @ R @ dT1 + dT0 @ R @ T1
    if gauge:
        dS = dS - (S @ T0 @ dT0 + T1 @ dT1 @ S)
        mdR = mdR - (R @ T1 @ dT1 + T0 @ dT0 @ R)
    return dS, -mdR


def harnad_dual(state: FlowState) -> FlowState:
    """(W_0, W_inf, P, Q, T_0, T_inf) -> (W_inf, W_0, Q, -P, -T_inf, T_0)."""
    pts = state.fourier.points
    inf = state.fourier.inf_part
    if len(pts) != 2 or inf is None or abs(pts[1 - inf]) > 0:
        raise FlowError("invalid: Harnad duality needs exactly two parts, at 0 and at infinity")
    from .phase import INF, FourierConfig

    new_pts = [0.0, 0.0]
    new_pts[inf] = 0.0
    new_pts[1 - inf] = INF
    sign_rows = np.where(state.frame.inf_rows, -1.0, 1.0)
    sign_nodes = np.where(np.asarray(state.space.node_parts) == inf, -1.0, 1.0)
    return FlowState(state.space, FourierConfig(new_pts), sign_rows[:, None] * state.gamma, sign_nodes * state.times, state.log_tau)


# --- residue form of varpi and the leading term at infinity ---------------------------------


def _u_blocks(state: FlowState):
    fr = state.frame
    fin, inf = fr.fin_rows, fr.inf_rows
    g = state.gamma
    xi = fr.phi * g
    return dict(
        Q=g[np.ix_(fin, inf)],
        P=g[np.ix_(inf, fin)],
        B=g[np.ix_(fin, fin)],
        X=xi[np.ix_(fin, fin)],
        A=np.diag(fr.a_rows[fin]),
        T=np.diag(state.that[fin]),
        C=np.diag(state.that[inf]),
        rp=state.space.row_part[fin],
        rn=state.space.row_node[fin],
        t=state.that[fin],
    )


def varpi_infinity(state: FlowState, dT) -> complex:
    """Contribution at infinity to the residue form of varpi (closed form)."""
    b = _u_blocks(state)
    sp = state.space
    fin = state.frame.fin_rows
    dt = np.asarray(dT, complex)[sp.row_node][fin]
    dTm = np.diag(dt)
    Q, P, B, X, T = b["Q"], b["P"], b["B"], b["X"], b["T"]
    C = b["C"]
    rp = b["rp"]
    delta = lambda m: np.where(rp[:, None] == rp[None, :], m, 0)
    tl = lambda m: tilde_rows(delta(m), b["t"], dt)
    QP, XB = Q @ P, X @ B
    tr = lambda m: complex(np.trace(m))
    return (
        tr(Q @ C @ P @ dTm)
        + tr((X @ QP - QP @ X) @ dTm)
        - tr(X @ T @ X @ dTm)
        + tr(X @ X @ T @ dTm)
        - tr(X @ B @ X @ dTm)
        + tr(tl(QP) @ delta(QP)) / 2
        + tr(tl(QP) @ delta(XB))
        + tr(tl(XB) @ delta(XB)) / 2
    )


def varpi_poles(state: FlowState, dT) -> complex:
    """sum over nodes i at infinity of 1/2 Res_{t_i} Tr(B(z)^2) dt_i, by partial fractions."""
    inf = state.fourier.inf_part
    if inf is None:
        return 0j
    b = _u_blocks(state)
    res = residues(state)
    nodes = [i for i in state.space.nodes_of_part(inf) if state.space.node_dims[i]]
    total = 0j
    for i in nodes:
        ti = state.times[i]
        regular = b["A"] * ti + b["B"] + b["T"]
        for j in nodes:
            if j != i:
                regular = regular + res[j].R / (ti - state.times[j])
        total += np.trace(res[i].R @ regular) * dT[i]
    return complex(total)


def varpi_residue_form(state: FlowState, dT) -> complex:
    return varpi_infinity(state, dT) + varpi_poles(state, dT)


@dataclass
class NormalFormData:
    X: np.ndarray
    R: np.ndarray
    Lam: np.ndarray
    Y1: np.ndarray
    R2h: np.ndarray
    L2: np.ndarray
    h1: np.ndarray
    g1: np.ndarray
    resonant: dict[int, bool] = field(default_factory=dict)
    correction: np.ndarray | None = None  # component of L2 on the resonant space


def _resonant(lam_block: np.ndarray, tol: float = 1e-8) -> bool:
    ev = np.linalg.eigvals(lam_block) if lam_block.size else np.zeros(0)
    diff = ev[:, None] - ev[None, :]
    k = np.round(diff.real)
    return bool(np.any((k != 0) & (np.abs(diff - k) <= tol * max(1.0, np.max(np.abs(ev), initial=0)))))


def _solve_h1(lam: np.ndarray, l2: np.ndarray):
    """Solve h + [Lam, h] = L on one node block, on the invertible complement if needed."""
    d = len(lam)
    if d == 0:
        return l2, None
    eye = np.eye(d)
    op = np.eye(d * d) + np.kron(lam, eye) - np.kron(eye, lam.T)  # row-major vec
    vec = l2.reshape(-1)
    if np.linalg.matrix_rank(op, tol=1e-10) == d * d:
        return scipy.linalg.solve_sylvester(eye + lam, -lam, l2), None
    # Fitting decomposition: generalized kernel plus image of op^N
    opn = np.linalg.matrix_power(op, d * d)
    from .linalg import image_basis, null_basis

    ker, img = null_basis(opn), image_basis(opn)
    coef = np.linalg.lstsq(np.hstack([ker, img]), vec, rcond=None)[0]
    corr = (ker @ coef[: ker.shape[1]]).reshape(d, d)
    rhs = img @ coef[ker.shape[1] :]
    sol = img @ np.linalg.lstsq(op @ img, rhs, rcond=None)[0]
    return sol.reshape(d, d), corr


def leading_term(state: FlowState) -> NormalFormData:
    """First gauge coefficient g_1 = h_1 + Y_1 + X at infinity, with the intermediate data."""
    b = _u_blocks(state)
    Q, P, B, A, T, C = b["Q"], b["P"], b["B"], b["A"], b["T"], b["C"]
    rp, rn = b["rp"], b["rn"]
    a = np.diag(A)
    t = b["t"]
    off = rp[:, None] != rp[None, :]
    same_part = ~off
    same_node = rn[:, None] == rn[None, :]
    com = lambda x, y: x @ y - y @ x
    with np.errstate(divide="ignore", invalid="ignore"):
        X = np.where(off, B / np.where(off, a[:, None] - a[None, :], 1), 0)
    delta = lambda m: np.where(same_part, m, 0)
    pih = lambda m: np.where(same_node, m, 0)
    R = delta(Q @ P + com(X, B) / 2)
    Lam = pih(R)
    h1_off = same_part & ~same_node
    with np.errstate(divide="ignore", invalid="ignore"):
        Y1 = np.where(h1_off, (R - Lam) / np.where(h1_off, t[:, None] - t[None, :], 1), 0)
    R2h = pih(Q @ C @ P + com(X, Q @ P) + com(X, com(X, T)) / 2 + com(X, com(X, B)) / 3)
    L2 = pih(R2h + com(Y1, R) / 2)
    h1 = np.zeros_like(L2)
    correction = np.zeros_like(L2)
    resonant = {}
    for node in np.unique(rn):
        idx = np.flatnonzero(rn == node)
        blk = np.ix_(idx, idx)
        resonant[int(node)] = _resonant(Lam[blk])
        sol, corr = _solve_h1(Lam[blk], L2[blk])
        h1[blk] = sol
        if corr is not None:
            correction[blk] = corr
    if any(resonant.values()):
        warnings.warn("resonant residue: h_1 solved on the invertible complement", ResonanceWarning, stacklevel=2)
    g1 = h1 + Y1 + X
    return NormalFormData(X, R, Lam, Y1, R2h, L2, h1, g1, resonant, correction if any(resonant.values()) else None)


# --- connections -----------------------------------------------------------------------------


@dataclass
class ConnectionEval:
    z: complex
    Bz: np.ndarray  # dz component on U_inf
    Bt: dict[int, np.ndarray]  # dt_i components


def connection_form(state: FlowState, z: complex, dT) -> np.ndarray:
    """Time part of the full connection at z evaluated on dT (a matrix on U_inf)."""
    sp = state.space
    fr = state.frame
    fin = fr.fin_rows
    b = _u_blocks(state)
    dt = np.asarray(dT, complex)[sp.row_node][fin]
    dTm = np.diag(dt)
    rp = b["rp"]
    delta = lambda m: np.where(rp[:, None] == rp[None, :], m, 0)
    out = z * dTm + dTm @ b["X"] - b["X"] @ dTm + tilde_rows(delta(b["X"] @ b["B"] + b["Q"] @ b["P"]), b["t"], dt)
    inf = state.fourier.inf_part
    if inf is not None:
        res = residues(state)
        for i in sp.nodes_of_part(inf):
            if sp.node_dims[i] and dT[i] != 0:
                dz = z - state.times[i]
                if abs(dz) <= 1e-14 * max(1.0, abs(z)):
                    raise PoleError(f"z = {z} is a pole")
                out = out - res[i].R * dT[i] / dz
    return out


def full_connection(state: FlowState, z: complex) -> ConnectionEval:
    nn = state.space.nnodes
    comps = {}
    for i in range(nn):
        e = np.zeros(nn, complex)
        e[i] = 1.0
        comps[i] = connection_form(state, z, e)
    return ConnectionEval(complex(z), connection_matrix(state, z), comps)


def restricted_connection(state: FlowState, i: int, dT) -> np.ndarray:
    """Full connection pulled back along z = t_i for a node at infinity, dropping its own log term."""
    sp = state.space
    fin = state.frame.fin_rows
    b = _u_blocks(state)
    ti = state.times[i]
    dt = np.asarray(dT, complex)[sp.row_node][fin]
    dTm = np.diag(dt)
    rp = b["rp"]
    delta = lambda m: np.where(rp[:, None] == rp[None, :], m, 0)
    out = (b["A"] * ti + b["B"] + b["T"]) * dT[i] + ti * dTm
    out = out + dTm @ b["X"] - b["X"] @ dTm + tilde_rows(delta(b["X"] @ b["B"] + b["Q"] @ b["P"]), b["t"], dt)
    res = residues(state)
    for j in sp.nodes_of_part(state.fourier.inf_part):
        if j != i and sp.node_dims[j]:
            out = out + res[j].R * (dT[i] - dT[j]) / (ti - state.times[j])
    return out


def local_connection(state: FlowState, i: int, dT) -> np.ndarray:
    """Omega_i on dT: the matrix on U_i with dQ_i = Omega_i Q_i and dP_i = -P_i Omega_i."""
    sp = state.space
    fr = state.frame
    k = sp.node_parts[i]
    fourier = state.fourier
    inf = fourier.inf_part
    dT = np.asarray(dT, complex)
    g, xi = state.gamma, fr.phi * state.gamma
    t = state.that
    dt = dT[sp.row_node]
    ti, dti = state.times[i], dT[i]
    rows = sp.row_part != k
    # phi_k = Id_k + sum_j phi_jk Id_j
    phik = np.array([1.0 if p == k else fourier.phi(p, k) for p in sp.row_part], dtype=complex)
    rt = tilde(np.where(fr.samepart, xi @ g, 0), sp, state.times, dT)
    if k == inf:
        cdiag = np.where(fr.inf_rows, 0.0, fr.a_rows * ti * dti)
    else:
        a_k = fourier.points[k]
        cdiag = np.where(fr.inf_rows, a_k * t * dt, -ti * dti - t * dt)
    inner = g * dti - (xi * dt[None, :]) / phik[:, None] + np.diag(dti * t + ti * dt + cdiag)
    full = rt + dt[:, None] * xi + inner * phik[None, :]
    out = full[np.ix_(rows, rows)]
    res = residues(state)
    for j in sp.nodes_of_part(k):
        if j != i and sp.node_dims[j]:
            out = out + res[j].R * (dti - dT[j]) / (ti - state.times[j])
    return out


def projected_field(state: FlowState, dT):
    """(dB, {dR_i}) computed from B and the residues R_i at infinity only."""
    inf = state.fourier.inf_part
    b = _u_blocks(state)
    sp = state.space
    nodes = [i for i in sp.nodes_of_part(inf) if sp.node_dims[i]] if inf is not None else []
    Rs = {i: residues(state)[i].R for i in nodes}
    return projected_field_from(state, b["B"], Rs, dT)


def projected_field_from(state: FlowState, B: np.ndarray, Rs: dict, dT):
    """Reduced equations in terms of (B, {R_i}); Q and P never enter."""
    sp = state.space
    fr = state.frame
    fin = fr.fin_rows
    a = fr.a_rows[fin]
    rp = sp.row_part[fin]
    off = rp[:, None] != rp[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        X = np.where(off, B / np.where(off, a[:, None] - a[None, :], 1), 0)
    A = np.diag(a)
    t = state.that[fin]
    dT = np.asarray(dT, complex)
    dt = dT[sp.row_node][fin]
    T, dTm = np.diag(t), np.diag(dt)
    delta = lambda m: np.where(~off, m, 0)
    com = lambda x, y: x @ y - y @ x
    QP = sum(Rs.values(), np.zeros_like(B))
    QdCP = sum((R * dT[i] for i, R in Rs.items()), np.zeros_like(B))
    R = delta(QP + X @ B)
    Rt = tilde_rows(R, t, dt)
    dB = np.where(
        off,
        com(Rt, B) + com(dTm, QP) + B @ X @ dTm + dTm @ X @ B + com(A, QdCP - X @ dTm @ X) + com(T, com(X, dTm)),
        0,
    )
    dR = {}
    for i, Ri in Rs.items():
        ti = state.times[i]
        om = Rt + com(dTm, X) + ti * dTm + T * dT[i] + (A * ti + B) * dT[i]
        for j, Rj in Rs.items():
            if j != i:
                om = om + Rj * (dT[i] - dT[j]) / (ti - state.times[j])
        dR[i] = com(om, Ri)
    return dB, dR


# --- integration -----------------------------------------------------------------------------------


@dataclass
class Trajectory:
    states: list[FlowState]
    params: list[float]  # cumulative path length at each recorded state
    monitors: list[dict]
    warnings: list[str] = field(default_factory=list)
    aborted: bool = False
    reason: str = ""

    @property
    def final(self) -> FlowState:
        return self.states[-1]


def _margin(space: GradedSpace, times) -> float:
    best = math.inf
    for j in range(space.nparts):
        ts = [times[i] for i in space.nodes_of_part(j)]
        for k, a in enumerate(ts):
            for b in ts[k + 1 :]:
                best = min(best, abs(a - b))
    return best


def _invariants(state: FlowState):
    res = residues(state)
    lam = {i: r.Lam.copy() for i, r in res.items()}
    powers = {}
    for i, r in res.items():
        m = np.eye(len(r.R), dtype=complex)
        vals = []
        for _ in range(max(1, state.space.node_dims[i]) + 1):
            m = m @ r.R
            vals.append(np.trace(m))
        powers[i] = np.array(vals)
    return lam, powers


def rk4_step(state: FlowState, t0, velocity, h: float, with_tau: bool = True) -> FlowState:
    """One RK4 step along times t0 + s velocity, s in [0, h]; log tau rides along."""
    g0 = state.gamma

    def f(g, s):
        st = state.with_gamma(g, times=t0 + s * velocity)
        dg = vector_field(st, velocity)
        dtau = varpi(st, velocity) if with_tau else 0j
        return dg, dtau

    k1, l1 = f(g0, 0.0)
    k2, l2 = f(g0 + 0.5 * h * k1, 0.5 * h)
    k3, l3 = f(g0 + 0.5 * h * k2, 0.5 * h)
    k4, l4 = f(g0 + h * k3, h)
    g1 = g0 + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    # with varpi independent of log tau the weights are Simpson's rule on the stage values
    tau = state.log_tau + h / 6 * (l1 + 2 * l2 + 2 * l3 + l4)
    return state.with_gamma(g1, times=t0 + h * velocity, log_tau=tau)


def integrate(
    state: FlowState,
    path,
    step: float = 1e-3,
    record_every: int = 1,
    monitor_tol: float = 1e-4,
    halve_on_breach: bool = False,
) -> Trajectory:
    """Integrate the flow along a piecewise-linear path of times.

    ``path`` lists waypoints; if the first one differs from the state's times
    the state's times are prepended.  Each segment is split into equal steps
    no longer than ``step`` (measured in the Euclidean norm of the time
    vector).  Conservation of every Lam_i and of Tr R_i^k is monitored.
    """
    pts = [np.asarray(p, complex) for p in path]
    if not pts or np.linalg.norm(pts[0] - state.times) > 1e-14 * max(1.0, np.linalg.norm(state.times)):
        pts = [state.times.copy()] + pts
    lam0, pow0 = _invariants(state)
    scale = max(1.0, max((np.linalg.norm(v) for v in lam0.values()), default=0.0))
    traj = Trajectory([state], [0.0], [_monitor_row(0.0, state, lam0, pow0)])
    cur = state
    length = 0.0
    count = 0
    for a, b in zip(pts[:-1], pts[1:]):
        seg = b - a
        seg_len = float(np.linalg.norm(seg))
        if seg_len == 0:
            continue
        cur_step = step
        while True:
            nsteps = max(1, math.ceil(seg_len / cur_step - 1e-9))
            h = 1.0 / nsteps
            speed = float(np.max(np.abs(seg))) / seg_len
            trial = cur
            rows = []
            states = []
            breach = False
            ok = True
            for k in range(nsteps):
                if _margin(cur.space, trial.times) <= 10 * (seg_len * h) * speed:
                    ok = False
                    break
                trial = rk4_step(trial, a + k * h * seg, seg, h)
                row = _monitor_row(length + (k + 1) * h * seg_len, trial, lam0, pow0)
                breach |= max(row["lam_drift"], row["trace_drift"]) > monitor_tol * scale
                rows.append(row)
                states.append(trial)
            if ok and breach and halve_on_breach and cur_step > step / 8:
                cur_step /= 2
                continue
            break
        for st, row in zip(states, rows):
            count += 1
            if count % record_every == 0:
                traj.states.append(st)
                traj.params.append(row["s"])
                traj.monitors.append(row)
        if states:
            cur = states[-1]
            if traj.states[-1] is not cur:
                traj.states.append(cur)
                traj.params.append(rows[-1]["s"])
                traj.monitors.append(rows[-1])
        if not ok:
            traj.aborted = True
            traj.reason = "path leaves the admissible times (times within a part collide)"
            return traj
        if breach:
            traj.warnings.append(f"conservation monitor above {monitor_tol:g} on segment ending at s = {length + seg_len:g}")
        length += seg_len
    return traj


def _monitor_row(s: float, state: FlowState, lam0, pow0) -> dict:
    lam, pw = _invariants(state)
    ld = max((float(np.linalg.norm(lam[i] - lam0[i])) for i in lam), default=0.0)
    td = max((float(np.max(np.abs(pw[i] - pow0[i]), initial=0.0)) for i in pw), default=0.0)
    return {"s": s, "lam_drift": ld, "trace_drift": td, "log_tau": complex(state.log_tau)}


def residue_jordan_data(state: FlowState) -> dict:
    return {i: jordan_data(r.R) for i, r in residues(state).items() if len(r.R)}


# --- integrability ------------------------------------------------------------------------------


def flow_field_fd(state: FlowState, func, h: float = 1e-5) -> np.ndarray:
    """Flow of a function on the phase space, -v_H, by central differences."""
    fr = state.frame
    grad = fd_gradient(lambda g: func(state.with_gamma(g)), state.gamma, fr.offpart, h)
    return -hamiltonian_vector(fr, grad)


def integrability_residuals(state: FlowState, i: int, j: int, h: float = 1e-4) -> dict:
    """f_ij, the symmetry defect dH_i/dt_j - dH_j/dt_i and the bracket {H_i, H_j}."""
    fr = state.frame

    def ham(node):
        return lambda st: hamiltonian(st, node)

    gi = fd_gradient(lambda g: ham(i)(state.with_gamma(g)), state.gamma, fr.offpart, h)
    gj = fd_gradient(lambda g: ham(j)(state.with_gamma(g)), state.gamma, fr.offpart, h)
    vi, vj = hamiltonian_vector(fr, gi), hamiltonian_vector(fr, gj)
    bracket = omega(state.fourier, state.space, vi, vj)

    def dt(node, direction):
        e = np.zeros(state.space.nnodes, complex)
        e[direction] = h
        plus = hamiltonian(state.with_gamma(state.gamma, times=state.times + e), node)
        minus = hamiltonian(state.with_gamma(state.gamma, times=state.times - e), node)
        return (plus - minus) / (2 * h)

    dij = dt(i, j)  # dH_i/dt_j
    dji = dt(j, i)
    return {
        "f": dji - dij + bracket,
        "symmetry": dij - dji,
        "bracket": bracket,
        "scale": max(1.0, abs(dij), abs(dji), float(np.linalg.norm(vi) * np.linalg.norm(vj))),
    }


# --- curvature of the full connection ----------------------------------------------------------


def _flowed(state: FlowState, direction: np.ndarray, h: float, substeps: int = 2) -> FlowState:
    cur = state
    t0 = state.times
    for k in range(substeps):
        cur = rk4_step(cur, t0 + k * (h / substeps) * direction, direction, h / substeps, with_tau=False)
    return cur


def curvature_residual(state: FlowState, z: complex, h: float) -> float:
    """Largest curvature component of the full connection, by central differences along the flow.

    Uses F_zi = d_i B - d_z B_i + [B, B_i] and F_ij = d_i B_j - d_j B_i + [B_j, B_i];
    time derivatives follow the nonlinear flow, so a flat connection leaves
    an O(h^2) residual.
    """
    nn = state.space.nnodes
    live = [i for i in range(nn) if state.space.node_dims[i]]
    base = full_connection(state, z)
    unit = np.eye(nn, dtype=complex)
    plus, minus = {}, {}
    for i in live:
        plus[i] = full_connection(_flowed(state, unit[i], h), z)
        minus[i] = full_connection(_flowed(state, unit[i], -h), z)
    zp = full_connection(state, z + h)
    zm = full_connection(state, z - h)
    com = lambda x, y: x @ y - y @ x
    worst = 0.0
    for i in live:
        d_i_B = (plus[i].Bz - minus[i].Bz) / (2 * h)
        d_z_Bi = (zp.Bt[i] - zm.Bt[i]) / (2 * h)
        worst = max(worst, float(np.linalg.norm(d_i_B - d_z_Bi + com(base.Bz, base.Bt[i]))))
        for j in live:
            if j <= i:
                continue
            d_i_Bj = (plus[i].Bt[j] - minus[i].Bt[j]) / (2 * h)
            d_j_Bi = (plus[j].Bt[i] - minus[j].Bt[i]) / (2 * h)
            worst = max(worst, float(np.linalg.norm(d_i_Bj - d_j_Bi + com(base.Bt[j], base.Bt[i]))))
    return worst


def convergence_slope(hs, values) -> float:
    """Least-squares slope of log(values) against log(hs)."""
    x, y = np.log(np.asarray(hs)), np.log(np.asarray(values))
    return float(np.polyfit(x, y, 1)[0])
