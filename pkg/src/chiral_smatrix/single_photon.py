"""One-photon scattering amplitudes.

Every evaluator accepts a scalar or an array of real momenta and returns a
complex value of the same shape.  Pole proximity is handled by
:func:`chiral_smatrix.core.guarded_divide`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_REGULARIZATION,
    Dicke,
    EmitterChain,
    EmitterSpec,
    Lambda,
    NonRwaTwoLevel,
    Regularization,
    Sigma,
    TwoLevel,
    UnequalDetunings,
    UnsupportedSpec,
    Vscheme,
    guarded_divide,
    validate_chain,
)

__all__ = [
    "S1Result",
    "VDiagonalization",
    "s1_two_level",
    "s1_dicke",
    "s1_lambda",
    "s1_v",
    "v_diagonalization",
    "s1_v_from_diagonalization",
    "s1_sigma",
    "s1_concentrated_pair",
    "s1_concentrated_pair_general",
    "concentrated_pair_eigenvalues",
    "s1_chain",
    "s1_non_rwa",
    "s1_elastic",
]

PI = math.pi


@dataclass(frozen=True)
class S1Result:
    """One-photon result, optionally resolved over atomic ground channels.

    ``channels[..., out, in]`` is the amplitude to leave the emitter in ground
    level ``out + 1`` given it started in ``in + 1``; ``out_momenta`` holds the
    matching outgoing photon momenta ``p + eps_in - eps_out``.
    """

    elastic: complex | np.ndarray
    channels: np.ndarray | None = None
    out_momenta: np.ndarray | None = None
    incoming_channel: int | None = None


def _p(p) -> np.ndarray:
    return np.asarray(p, dtype=float)


def _lorentz_ratio(x, width, reg, what):
    # (x - i w) / (x + i w)
    num = x - 1j * width
    return guarded_divide(num, x + 1j * width, reg, what)


def s1_two_level(p, spec: TwoLevel, reg: Regularization = DEFAULT_REGULARIZATION):
    """Transmission amplitude ``(p - Omega - i pi g^2)/(p - Omega + i pi g^2)``."""
    x = _p(p) - spec.Omega
    return _lorentz_ratio(x, PI * spec.g**2, reg, "two-level denominator")


def s1_dicke(p, spec: Dicke, reg: Regularization = DEFAULT_REGULARIZATION):
    """Collective transmission of ``M`` co-located emitters, width ``M pi g^2``."""
    alpha_m = complex(spec.Omega, -PI * spec.g**2 * spec.M)
    frac = guarded_divide(2j * PI * spec.M * spec.g**2, _p(p) - alpha_m, reg, "Dicke denominator")
    return 1.0 - frac


def s1_lambda(
    p,
    spec: Lambda,
    incoming_channel: int = 1,
    reg: Regularization = DEFAULT_REGULARIZATION,
) -> S1Result:
    """Channel-resolved amplitudes of a Lambda scheme.

    Column ``c`` of the channel matrix is evaluated with the photon of momentum
    ``p`` arriving while the emitter sits in ground level ``c``.  The Raman
    entries carry outgoing momentum ``p + eps_in - eps_out``.
    """
    if incoming_channel not in (1, 2):
        raise ValueError("incoming_channel must be 1 or 2")
    p = _p(p)
    eps = (spec.eps1, spec.eps2)
    gc = (spec.g31, spec.g32)
    g2 = spec.g31**2 + spec.g32**2
    shape = p.shape + (2, 2)
    U = np.empty(shape, dtype=complex)
    pout = np.empty(shape, dtype=float)
    for cin in range(2):
        den = p + eps[cin] - spec.eps3 + 1j * PI * g2
        inv = guarded_divide(1.0, den, reg, "Lambda denominator")
        for cout in range(2):
            if cout == cin:
                U[..., cout, cin] = 1.0 - 2j * PI * gc[cin] ** 2 * inv
            else:
                U[..., cout, cin] = -2j * PI * spec.g31 * spec.g32 * inv
            pout[..., cout, cin] = p + eps[cin] - eps[cout]
    i = incoming_channel - 1
    el = U[..., i, i]
    return S1Result(el[()] if el.ndim == 0 else el, U, pout, incoming_channel)


def s1_v(p, spec: Vscheme, reg: Regularization = DEFAULT_REGULARIZATION):
    """V-scheme amplitude from its rational closed form."""
    p = _p(p)
    a = p + spec.eps1 - spec.eps2
    b = p + spec.eps1 - spec.eps3
    w2 = PI * spec.g21**2
    w3 = PI * spec.g31**2
    cross = w2 * w3
    num = (a - 1j * w2) * (b - 1j * w3) + cross
    den = (a + 1j * w2) * (b + 1j * w3) + cross
    return guarded_divide(num, den, reg, "V-scheme denominator")


@dataclass(frozen=True)
class VDiagonalization:
    """Eigen-decomposition of the dressed excited-level block of a V scheme.

    ``xi[:, j]`` is the (complex-orthogonal) eigenvector of eigenvalue
    ``(lambda2, lambda3)[j]``, parametrized by the complex mixing angle
    ``phi`` as ``[[cos(phi/2), -sin(phi/2)], [sin(phi/2), cos(phi/2)]]``.
    """

    lambda2: complex
    lambda3: complex
    phi: complex
    xi: np.ndarray
    block: np.ndarray


def v_diagonalization(spec: Vscheme) -> VDiagonalization:
    a = complex(spec.eps2, -PI * spec.g21**2)
    b = complex(spec.eps3, -PI * spec.g31**2)
    h12 = -1j * PI * spec.g21 * spec.g31
    block = np.array([[a, h12], [h12, b]], dtype=complex)
    diff = a - b
    if diff == 0:
        phi = complex(PI / 2) if h12 != 0 else 0j
    else:
        phi = complex(np.arctan(2 * h12 / diff))
    c, s = np.cos(phi / 2), np.sin(phi / 2)
    mean = (a + b) / 2
    lam2 = mean + (diff / 2) * np.cos(phi) + h12 * np.sin(phi)
    lam3 = mean - (diff / 2) * np.cos(phi) - h12 * np.sin(phi)
    xi = np.array([[c, -s], [s, c]], dtype=complex)
    return VDiagonalization(complex(lam2), complex(lam3), phi, xi, block)


def s1_v_from_diagonalization(p, spec: Vscheme, reg: Regularization = DEFAULT_REGULARIZATION):
    """V-scheme amplitude through the eigenbasis of the excited-level block.

    Secondary path used to cross-check :func:`s1_v`.
    """
    p = _p(p)
    d = v_diagonalization(spec)
    u = np.array([spec.g21, spec.g31], dtype=complex)
    # complex-orthogonal: block = xi diag(lam) xi^T
    proj = d.xi.T @ u
    w = p + spec.eps1
    acc = 0
    for j, lam in enumerate((d.lambda2, d.lambda3)):
        acc = acc + proj[j] ** 2 * guarded_divide(1.0, w - lam, reg, "V eigen-denominator")
    return 1.0 - 2j * PI * acc


def s1_sigma(p, spec: Sigma, reg: Regularization = DEFAULT_REGULARIZATION):
    """Ladder scheme: only the 1-2 transition is reachable, ``g32`` drops out."""
    x = _p(p) + spec.eps1 - spec.eps2
    return _lorentz_ratio(x, PI * spec.g21**2, reg, "Sigma denominator")


def s1_concentrated_pair(
    p, Omega: float, g1: float, g2: float, reg: Regularization = DEFAULT_REGULARIZATION, Omega2: float | None = None
):
    """Two co-located emitters with a common transition frequency."""
    if Omega2 is not None and Omega2 != Omega:
        raise UnequalDetunings("use s1_concentrated_pair_general for unequal transition frequencies")
    x = _p(p) - Omega
    return _lorentz_ratio(x, PI * (g1**2 + g2**2), reg, "concentrated-pair denominator")


def concentrated_pair_eigenvalues(Omega1: float, Omega2: float, g1: float, g2: float) -> tuple[complex, complex]:
    """Eigenvalues of the self-energy block measured from (Omega1+Omega2)/2."""
    d = (Omega1 - Omega2) / 2
    root = np.sqrt(complex(d - 0.5j * PI * (g1**2 - g2**2)) ** 2 - PI**2 * g1**2 * g2**2)
    centre = -0.5j * PI * (g1**2 + g2**2)
    return complex(centre + root), complex(centre - root)


def s1_concentrated_pair_general(
    p, Omega1: float, Omega2: float, g1: float, g2: float, reg: Regularization = DEFAULT_REGULARIZATION
):
    """Two co-located emitters with arbitrary transition frequencies.

    The determinant is assembled from the two collective eigenvalues; the
    numerator follows from the adjugate of the dressed propagator.  For equal
    frequencies the removable dark-state factor is cancelled exactly by
    delegating to :func:`s1_concentrated_pair`.
    """
    if Omega1 == Omega2:
        return s1_concentrated_pair(p, Omega1, g1, g2, reg)
    p = _p(p)
    lp, lm = concentrated_pair_eigenvalues(Omega1, Omega2, g1, g2)
    mid = (Omega1 + Omega2) / 2
    det = (p - mid - lp) * (p - mid - lm)
    adj = g1**2 * (p - Omega2) + g2**2 * (p - Omega1)
    return 1.0 - 2j * PI * guarded_divide(adj, det, reg, "concentrated-pair determinant")


def s1_non_rwa(p, spec: NonRwaTwoLevel):
    """Counter-rotating coupling: the on-shell T-matrix vanishes, so S = 1."""
    if not spec.gprime > 0:
        raise ValueError("s1_non_rwa requires gprime > 0; use s1_two_level for the RWA model")
    p = _p(p)
    out = np.ones(p.shape, dtype=complex)
    return out[()] if out.ndim == 0 else out


def s1_elastic(p, spec: EmitterSpec, reg: Regularization = DEFAULT_REGULARIZATION):
    """Elastic one-photon amplitude for any single emitter spec.

    Lambda schemes are taken in ground channel 1 (the elastic diagonal entry).
    """
    if isinstance(spec, TwoLevel):
        return s1_two_level(p, spec, reg)
    if isinstance(spec, Dicke):
        return s1_dicke(p, spec, reg)
    if isinstance(spec, Lambda):
        return s1_lambda(p, spec, 1, reg).elastic
    if isinstance(spec, Vscheme):
        return s1_v(p, spec, reg)
    if isinstance(spec, Sigma):
        return s1_sigma(p, spec, reg)
    if isinstance(spec, NonRwaTwoLevel):
        return s1_non_rwa(p, spec)
    raise UnsupportedSpec(f"no one-photon amplitude for {type(spec).__name__}")


def s1_chain(p, chain: EmitterChain, reg: Regularization = DEFAULT_REGULARIZATION):
    """Product of member amplitudes; positions only fix the order, which is irrelevant here."""
    chain = validate_chain(chain)
    out = np.ones(_p(p).shape, dtype=complex)
    for entry in chain.entries:
        out = out * s1_elastic(p, entry.spec, reg)
    return out[()] if out.ndim == 0 else out
