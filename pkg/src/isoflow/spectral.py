"""Spectral polynomial det(alpha lam + beta z - gamma) and its SL2 behaviour."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .linalg import fd_gradient
from .phase import FlowState, Mobius, hamiltonian_vector, omega, weyl_matrix


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class BivarPoly:
    """Coefficients c[m, k] of lam**m z**k."""

    coeffs: np.ndarray

    def __init__(self, coeffs, tol: float = 1e-12):
        c = np.atleast_2d(np.asarray(coeffs, dtype=complex))
        big = np.max(np.abs(c), initial=0.0)
        small = np.abs(c) <= tol * big
        rows = np.flatnonzero(~np.all(small, axis=1))
        cols = np.flatnonzero(~np.all(small, axis=0))
        c = c[: rows[-1] + 1, : cols[-1] + 1] if len(rows) else np.zeros((1, 1), complex)
        object.__setattr__(self, "coeffs", c)

    def __call__(self, lam, z):
        c = self.coeffs
        lp = np.power(complex(lam), np.arange(c.shape[0]))
        zp = np.power(complex(z), np.arange(c.shape[1]))
        return complex(lp @ c @ zp)

    def padded(self, shape) -> np.ndarray:
        out = np.zeros(shape, complex)
        out[: self.coeffs.shape[0], : self.coeffs.shape[1]] = self.coeffs
        return out


def spectral_poly(alpha, beta, gamma) -> BivarPoly:
    """det(alpha lam + beta z - gamma) by evaluation on a tensor grid of roots of unity.

    The degree in each variable is at most n, so n+1 points per variable make
    the interpolation exact up to rounding.
    """
    alpha, beta, gamma = (np.asarray(m, dtype=complex) for m in (alpha, beta, gamma))
    n = len(gamma)
    for m in (alpha, beta, gamma):
        if m.shape != (n, n):
            raise SpectralError("invalid: square matrices of equal size required")
    if n == 0:
        return BivarPoly([[1.0]])
    size = n + 1
    r = max(1.0, np.linalg.norm(gamma, 2) / max(1e-300, np.linalg.norm(alpha, 2)) if np.any(alpha) else 1.0)
    s = max(1.0, np.linalg.norm(gamma, 2) / max(1e-300, np.linalg.norm(beta, 2)) if np.any(beta) else 1.0)
    roots = np.exp(2j * np.pi * np.arange(size) / size)
    lam = r * roots
    zs = s * roots
    mats = alpha[None, None] * lam[:, None, None, None] + beta[None, None] * zs[None, :, None, None] - gamma
    values = np.linalg.det(mats)
    coeffs = np.fft.fft2(values) / size**2
    coeffs = coeffs / np.power(r, np.arange(size))[:, None] / np.power(s, np.arange(size))[None, :]
    return BivarPoly(coeffs)


def _mul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    out = np.zeros((p.shape[0] + q.shape[0] - 1, p.shape[1] + q.shape[1] - 1), complex)
    for (i, j), v in np.ndenumerate(p):
        if v:
            out[i : i + q.shape[0], j : j + q.shape[1]] += v * q
    return out


def gl2_transform_poly(g: Mobius, p: BivarPoly) -> BivarPoly:
    """q(lam, z) = p(a lam + b z, c lam + d z), the substitution induced by g."""
    c = p.coeffs
    first = np.array([[0, g.b], [g.a, 0]], dtype=complex)
    second = np.array([[0, g.d], [g.c, 0]], dtype=complex)
    deg = c.shape[0] + c.shape[1]
    pow1 = [np.ones((1, 1), complex)]
    pow2 = [np.ones((1, 1), complex)]
    for _ in range(deg):
        pow1.append(_mul(pow1[-1], first))
        pow2.append(_mul(pow2[-1], second))
    out = np.zeros((deg + 1, deg + 1), complex)
    for (m, k), v in np.ndenumerate(c):
        if v:
            term = _mul(pow1[m], pow2[k])
            out[: term.shape[0], : term.shape[1]] += v * term
    return BivarPoly(out)


def match_up_to_constant(p: BivarPoly, q: BivarPoly) -> tuple[complex, float]:
    """Constant kappa with q ~ kappa p (from the largest coefficient of p) and the relative mismatch."""
    shape = tuple(max(a, b) for a, b in zip(p.coeffs.shape, q.coeffs.shape))
    a, b = p.padded(shape), q.padded(shape)
    ref = np.unravel_index(np.argmax(np.abs(a)), shape)
    if a[ref] == 0:
        return 0j, float(np.max(np.abs(b)))
    kappa = b[ref] / a[ref]
    err = np.max(np.abs(b - kappa * a)) / max(np.max(np.abs(b)), 1e-300)
    return complex(kappa), float(err)


def binomial_expand_check(a, b, m) -> np.ndarray:
    """Coefficients of (a lam + b z)^m, used to cross-check the substitution."""
    out = np.zeros((m + 1, m + 1), complex)
    for i in range(m + 1):
        out[i, m - i] = comb(m, i) * a**i * b ** (m - i)
    return out


def state_spectral_poly(state: FlowState) -> BivarPoly:
    return spectral_poly(*weyl_matrix(state))


def spectral_coefficients(state: FlowState, shape=None):
    """Function Gamma -> coefficient matrix of the spectral polynomial (times and a fixed)."""
    alpha, beta, gamma = weyl_matrix(state)
    that = gamma - state.gamma
    n = state.space.n
    shape = shape or (n + 1, n + 1)

    def coeffs(g):
        return spectral_poly(alpha, beta, g + that).padded(shape)

    return coeffs


def spectral_brackets(state: FlowState, h: float = 1e-4):
    """Poisson brackets of all pairs of spectral coefficients, by finite differences.

    Returns (brackets, scale) where brackets[a, b] = omega(v_a, v_b) over the
    flattened coefficients.
    """
    fr = state.frame
    f = spectral_coefficients(state)
    grads = fd_gradient(f, state.gamma, fr.offpart, h)
    flat = grads.reshape((-1,) + state.gamma.shape)
    fields = [hamiltonian_vector(fr, gr) for gr in flat]
    k = len(fields)
    out = np.zeros((k, k), complex)
    for a in range(k):
        for b in range(a + 1, k):
            out[a, b] = omega(state.fourier, state.space, fields[a], fields[b])
            out[b, a] = -out[a, b]
    scale = max(1.0, max(float(np.linalg.norm(v)) for v in fields) ** 2)
    return out, scale
