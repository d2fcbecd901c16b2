"""Two-photon kernels, S-matrix decompositions and their composition.

Convention used throughout::

    S(p1, p2; k1, k2) = S1(p1) S1(p2) [d(p1-k1) d(p2-k2) + d(p1-k2) d(p2-k1)]
                        + i T(p1, p2; k1, k2) d(p1 + p2 - k1 - k2)

so an incoming symmetric pair amplitude ``psi(k1, k2)`` scatters into
``S1(p1) S1(p2) psi(p1, p2) + 1/2 int dk i T(p1, p2; k, E - k) psi(k, E - k)``.
The kernel ``T`` returned by the evaluators below excludes the energy delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Literal

import numpy as np
from scipy import integrate

from .core import (
    DEFAULT_REGULARIZATION,
    ChiralSMatrixError,
    Dicke,
    EmitterChain,
    Lambda,
    Regularization,
    TwoLevel,
    TwoPhotonKinematics,
    UnsupportedSpec,
    derive_params,
    guarded_divide,
    linewidth,
    response_functions,
    validate_chain,
)
from .single_photon import s1_dicke, s1_two_level

__all__ = [
    "QuadratureNotConverged",
    "QuadratureConfig",
    "S2Decomposition",
    "Pole",
    "PoleReport",
    "ConvolutionResult",
    "t2_dicke",
    "t2_dicke_simplified",
    "dicke_bracket",
    "t2_two_atoms_irred",
    "s2_full",
    "s2_convolve",
    "intermediate_integral_closed_form",
    "intermediate_integral_quadrature",
    "t2_lambda_kernel",
    "locate_poles",
    "unitarity_residual",
]

PI = math.pi
Kernel = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class QuadratureNotConverged(ChiralSMatrixError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings for intermediate-momentum integrals along the real line.

    The core window is ``E/2 +- half_width * Gamma_max``; both semi-infinite
    tails are integrated numerically as well.
    """

    half_width: float = 50.0
    epsrel: float = 1e-11
    epsabs: float = 1e-15
    target_rel: float = 1e-8
    limit: int = 400


def _as_pair(x):
    return np.asarray(x, dtype=float)


def dicke_bracket(E, spec: Dicke):
    """The factor ``M - (M-1)(E/2 - alpha_M)/(E/2 - alpha_{M-1})`` in unsimplified form."""
    E = _as_pair(E)
    if spec.M == 1:
        return np.ones(E.shape, dtype=complex)[()] if E.ndim == 0 else np.ones(E.shape, dtype=complex)
    d = derive_params(spec)
    half = E / 2
    return spec.M - (spec.M - 1) * (half - d.alpha) / (half - d.alpha_prev)


def _dicke_core(kin: TwoPhotonKinematics, spec: Dicke, reg: Regularization):
    d = derive_params(spec)
    q = kin.E / 2 - d.alpha
    den = (q**2 - kin.Delta**2) * (q**2 - kin.DeltaPrime**2)
    return guarded_divide(8 * PI * spec.g**4 * spec.M * q, den, reg, "Dicke two-photon denominator")


def t2_dicke(kin: TwoPhotonKinematics, spec: Dicke, reg: Regularization = DEFAULT_REGULARIZATION):
    """Irreducible two-photon kernel of a Dicke ensemble (energy delta excluded)."""
    if isinstance(spec, TwoLevel):
        spec = Dicke(1, spec.Omega, spec.g)
    return _dicke_core(kin, spec, reg) * dicke_bracket(kin.E, spec)


def t2_dicke_simplified(kin: TwoPhotonKinematics, spec: Dicke, reg: Regularization = DEFAULT_REGULARIZATION):
    """Same kernel with the bracket replaced by ``(E/2)/(E/2 - alpha_{M-1})``.

    This is the printed simplification; it differs from :func:`t2_dicke`
    unless ``Omega = 0`` and is kept only for the discrepancy report.
    """
    if spec.M == 1:
        return t2_dicke(kin, spec, reg)
    d = derive_params(spec)
    half = kin.E / 2
    return _dicke_core(kin, spec, reg) * half / (half - d.alpha_prev)


def _two_atom_sum(p1, p2, k1, k2, atom1: TwoLevel, atom2: TwoLevel, reg: Regularization):
    r1 = response_functions(atom1, reg)
    r2 = response_functions(atom2, reg)
    a1, a2 = r1.alpha, r2.alpha
    E = p1 + p2
    g1s, g2s = atom1.g**2, atom2.g**2

    def S1m(nu):  # S1 - 1
        return -2j * PI * g1s * r1.M(nu)

    def S2m(nu):
        return -2j * PI * g2s * r2.M(nu)

    bound = guarded_divide(1.0, E - a1 - a2, reg, "two-atom bound-state denominator")
    total = 0
    for (n1, n2), (n4, n3) in product(((p1, p2), (p2, p1)), ((k1, k2), (k2, k1))):
        t_a = (E - 2 * a2) / (4j * PI) * (1 + S1m(n1)) * (1 + S1m(n2)) * r2.M(n1) * r2.M(n2) * S2m(n4) * S2m(n3)
        t_b = (E - 2 * a1) / (4j * PI) * r1.M(n4) * r1.M(n3) * S1m(n2) * (1 + S2m(n4)) * S1m(n1) * (1 + S2m(n3))
        t_c = -1 / (2j * PI) * S1m(n1) * S2m(n3) * S1m(n2) * S2m(n4) * bound
        total = total + t_a + t_b + t_c
    return -1j * total


def t2_two_atoms_irred(
    kin: TwoPhotonKinematics, atom1: TwoLevel, atom2: TwoLevel, reg: Regularization = DEFAULT_REGULARIZATION
):
    """Irreducible kernel of two distributed two-level atoms.

    ``atom1`` is downstream (met last), ``atom2`` upstream.  Positions never
    enter: the kernel is independent of the separation.
    """
    for a in (atom1, atom2):
        if not isinstance(a, TwoLevel):
            raise UnsupportedSpec("the two-atom kernel is defined for two-level atoms")
    return _two_atom_sum(kin.p1, kin.p2, kin.k1, kin.k2, atom1, atom2, reg)


@dataclass(frozen=True)
class S2Decomposition:
    """Two-photon S-matrix split into delta-supported and smooth parts.

    ``one_photon(p)`` is the composite one-photon amplitude; the coefficient of
    the pairing distribution is ``reducible(p1, p2, k1, k2) = S1(p1) S1(p2)``
    (on the support of either pairing this equals ``S1(k1) S1(k2)``).
    ``irreducible_kernel`` is ``T`` with the energy delta stripped.
    """

    one_photon: Callable[[np.ndarray], np.ndarray]
    irreducible_kernel: Kernel
    gamma_max: float
    label: str
    shell_tol: float = 1e-12
    system: object = None
    two_level: TwoLevel | None = field(default=None)

    def reducible(self, p1, p2, k1=None, k2=None):
        return self.one_photon(p1) * self.one_photon(p2)

    def amplitude(self, p1, p2, k1, k2):
        """``i T`` at on-shell momenta."""
        TwoPhotonKinematics(p1, p2, k1, k2, self._tol(p1, p2))
        return 1j * self.irreducible_kernel(_as_pair(p1), _as_pair(p2), _as_pair(k1), _as_pair(k2))

    def _tol(self, p1, p2):
        E = np.abs(_as_pair(p1) + _as_pair(p2))
        return float(self.shell_tol * max(1.0, float(np.max(E)) if np.size(E) else 1.0))


def _dicke_like(spec, reg):
    if isinstance(spec, TwoLevel):
        spec = Dicke(1, spec.Omega, spec.g)
    return spec


def s2_full(system, reg: Regularization = DEFAULT_REGULARIZATION) -> S2Decomposition:
    """Decomposition for a Dicke ensemble, a two-level atom or a two-atom chain."""
    if isinstance(system, (TwoLevel, Dicke)):
        spec = _dicke_like(system, reg)

        def kern(p1, p2, k1, k2, spec=spec):
            return t2_dicke(TwoPhotonKinematics(p1, p2, k1, k2, shell_tol=np.inf), spec, reg)

        two = TwoLevel(spec.Omega, spec.g) if spec.M == 1 else None
        return S2Decomposition(
            lambda p, spec=spec: s1_dicke(p, spec, reg),
            kern,
            linewidth(spec),
            f"dicke(M={spec.M})",
            system=spec,
            two_level=two,
        )
    if isinstance(system, EmitterChain):
        chain = validate_chain(system)
        if len(chain.entries) != 2 or not all(isinstance(s, TwoLevel) for s in chain.specs):
            raise UnsupportedSpec("closed-form two-photon chain kernels exist for two two-level atoms only")
        upstream, downstream = chain.specs

        def kern(p1, p2, k1, k2):
            return _two_atom_sum(p1, p2, k1, k2, downstream, upstream, reg)

        return S2Decomposition(
            lambda p: s1_two_level(p, downstream, reg) * s1_two_level(p, upstream, reg),
            kern,
            max(linewidth(downstream), linewidth(upstream)),
            "two-atom chain",
            system=chain,
        )
    raise UnsupportedSpec(f"no two-photon decomposition for {type(system).__name__}")


def intermediate_integral_closed_form(E, downstream: TwoLevel, upstream: TwoLevel):
    """Closed form of int dk M_u(k) M_u(E-k) M_d(k) M_d(E-k) over the real line."""
    a1 = derive_params(downstream).alpha
    a2 = derive_params(upstream).alpha
    E = _as_pair(E)
    return -4j * PI / ((E - a1 - a2) * (E - 2 * a1) * (E - 2 * a2))


def _integrate_line(f, centre, half, cfg: QuadratureConfig):
    """Integrate a vector-valued complex function of k over the real line.

    Returns (value, error_estimate).
    """

    def fr(k):
        v = np.asarray(f(k), dtype=complex).ravel()
        return np.concatenate([v.real, v.imag])

    a, b = centre - half, centre + half
    kw = dict(epsabs=cfg.epsabs, epsrel=cfg.epsrel, limit=cfg.limit, norm="max")
    parts = [
        integrate.quad_vec(fr, a, b, **kw),
        integrate.quad_vec(fr, -np.inf, a, **kw),
        integrate.quad_vec(fr, b, np.inf, **kw),
    ]
    tot = sum(p[0] for p in parts)
    err = sum(p[1] for p in parts)
    n = tot.size // 2
    return tot[:n] + 1j * tot[n:], err


def intermediate_integral_quadrature(E, downstream: TwoLevel, upstream: TwoLevel, cfg: QuadratureConfig = QuadratureConfig()):
    """Adaptive-quadrature counterpart of :func:`intermediate_integral_closed_form`."""
    rd = response_functions(downstream)
    ru = response_functions(upstream)
    E = float(E)
    gmax = max(linewidth(downstream), linewidth(upstream), 1e-300)

    def f(k):
        return rd.M(k) * rd.M(E - k) * ru.M(k) * ru.M(E - k)

    val, err = _integrate_line(f, E / 2, cfg.half_width * gmax, cfg)
    val = complex(val[0])
    if err > cfg.target_rel * abs(val):
        raise QuadratureNotConverged(f"intermediate integral error {err:.3g} exceeds target")
    return val, err


@dataclass(frozen=True)
class ConvolutionResult:
    """Composite two-photon S-matrix from a downstream and an upstream block."""

    reducible: np.ndarray
    irreducible: np.ndarray
    cross_term: np.ndarray
    quadrature_error: float
    tail_estimate: float
    cross_term_closed_form: np.ndarray | None = None


def s2_convolve(
    downstream: S2Decomposition,
    upstream: S2Decomposition,
    kin: TwoPhotonKinematics,
    cfg: QuadratureConfig = QuadratureConfig(),
    method: Literal["quadrature", "closed_form", "both"] = "both",
) -> ConvolutionResult:
    """Compose ``downstream * upstream`` on the energy shell.

    The irreducible amplitude of the composite is::

        Sd(p1) Sd(p2) iTu + Su(k1) Su(k2) iTd - 1/2 int dk' Td(p; k', E-k') Tu(k', E-k'; k)

    and the reducible coefficient is the product of both one-photon amplitudes.
    The cross integral is evaluated by adaptive quadrature over the whole real
    line (``method="quadrature"``), by its closed form when both blocks are
    single two-level atoms (``"closed_form"``), or both.
    """
    p1, p2, k1, k2 = (np.atleast_1d(_as_pair(x)) for x in (kin.p1, kin.p2, kin.k1, kin.k2))
    p1, p2, k1, k2 = np.broadcast_arrays(p1, p2, k1, k2)
    shape = np.shape(kin.p1)
    E = p1 + p2
    sd, su = downstream.one_photon, upstream.one_photon
    iTd = 1j * downstream.irreducible_kernel(p1, p2, k1, k2)
    iTu = 1j * upstream.irreducible_kernel(p1, p2, k1, k2)
    direct = sd(p1) * sd(p2) * iTu + su(k1) * su(k2) * iTd
    reducible = sd(p1) * sd(p2) * su(p1) * su(p2)

    closed = None
    if method in ("closed_form", "both"):
        if downstream.two_level is None or upstream.two_level is None:
            if method == "closed_form":
                raise UnsupportedSpec("closed-form cross term needs two-level blocks")
        else:
            dl, ul = downstream.two_level, upstream.two_level
            rd, ru = response_functions(dl), response_functions(ul)
            gd, gu = PI * dl.g**2, PI * ul.g**2
            closed = (
                32j * gd**2 * gu**2 / PI / (E - rd.alpha - ru.alpha)
                * rd.M(p1) * rd.M(p2) * ru.M(k1) * ru.M(k2)
            )

    cross = closed
    qerr = 0.0
    tail = 0.0
    if method in ("quadrature", "both"):
        gmax = max(downstream.gamma_max, upstream.gamma_max, 1e-300)
        flat = [x.ravel() for x in (p1, p2, k1, k2, E)]

        def integrand(kp):
            q = flat[4] - kp
            kpv = np.full_like(q, kp)
            return downstream.irreducible_kernel(flat[0], flat[1], kpv, q) * upstream.irreducible_kernel(kpv, q, flat[2], flat[3])

        # all points share the window centre when E is common; otherwise use the mean
        centre = float(np.mean(flat[4]) / 2)
        spread = float(np.ptp(flat[4]) / 2) if flat[4].size else 0.0
        half = cfg.half_width * gmax + spread
        val, qerr = _integrate_line(integrand, centre, half, cfg)
        cross_q = (-0.5 * val).reshape(p1.shape)
        qerr = 0.5 * qerr
        scale = float(np.max(np.abs(cross_q))) if cross_q.size else 0.0
        if qerr > cfg.target_rel * max(scale, 1e-300):
            raise QuadratureNotConverged(f"cross-term quadrature error {qerr:.3g} exceeds rel {cfg.target_rel:g}")
        b = centre + half
        tail = float(np.max(np.abs(integrand(b))) * b**4 / (3 * abs(b) ** 3)) if b != 0 else 0.0
        cross = cross_q

    def shaped(x):
        x = np.asarray(x).reshape(shape) if shape else np.asarray(x).reshape(())
        return x[()] if x.ndim == 0 else x

    irreducible = direct + cross
    return ConvolutionResult(
        shaped(reducible),
        shaped(irreducible),
        shaped(cross),
        qerr,
        tail,
        None if closed is None else shaped(closed),
    )


def t2_lambda_kernel(
    nu1, nu2, nu3, nu4, omega: float, spec: Lambda,
    reg: Regularization = DEFAULT_REGULARIZATION, symmetrize: bool = False,
) -> np.ndarray:
    """Two-photon Lambda-scheme operator as a 2x2 matrix over ground levels.

    Labels are normal ordered: ``nu1, nu2`` outgoing, ``nu3, nu4`` incoming.
    Reading right to left the emitter absorbs ``nu4``, emits ``nu2`` into an
    intermediate ground level ``c``, absorbs ``nu3`` and emits ``nu1``.  The
    intermediate ground resolvent keeps the finite ``reg.eta``.  Entry
    ``[a, b]`` maps ground level ``b + 1`` to ``a + 1``.  With
    ``symmetrize=True`` the sum over ``nu1 <-> nu2`` and ``nu3 <-> nu4`` is returned.
    """
    nus = [_as_pair(x) for x in (nu1, nu2, nu3, nu4)]
    if symmetrize:
        acc = 0
        for (a, b), (c, d) in product(((0, 1), (1, 0)), ((2, 3), (3, 2))):
            acc = acc + t2_lambda_kernel(nus[a], nus[b], nus[c], nus[d], omega, spec, reg, False)
        return acc
    _, n2, n3, _ = nus
    g2 = spec.g31**2 + spec.g32**2
    eps = (spec.eps1, spec.eps2)
    gc = (spec.g31, spec.g32)
    outer = guarded_divide(1.0, omega - spec.eps3 - n2 + 1j * PI * g2, reg, "Lambda excited resolvent") * guarded_divide(
        1.0, omega - spec.eps3 - n3 + 1j * PI * g2, reg, "Lambda excited resolvent"
    )
    middle = 0
    for c in range(2):
        middle = middle + gc[c] ** 2 * guarded_divide(
            1.0, omega - eps[c] - n2 - n3 + 1j * reg.eta, reg, "Lambda ground resolvent"
        )
    scalar = outer * middle
    vec = np.array(gc)
    mat = np.multiply.outer(np.asarray(scalar), np.outer(vec, vec))
    return mat


@dataclass(frozen=True)
class Pole:
    location: complex
    interpretation: Literal["single-photon", "bound-state"]


@dataclass(frozen=True)
class PoleReport:
    poles: tuple[Pole, ...]

    def __len__(self) -> int:
        return len(self.poles)


def locate_poles(system, window: tuple[float, float, float, float], Delta: float = 0.0, DeltaPrime: float = 0.0) -> PoleReport:
    """Poles of the irreducible kernel in the complex E plane.

    ``window = (re_min, re_max, im_min, im_max)``.  Single-photon poles sit at
    ``E = 2(alpha +- Delta)`` and ``E = 2(alpha +- DeltaPrime)`` for each
    emitter pole alpha; bound-state poles at ``E = alpha1 + alpha2`` for two
    atoms and ``E = 2 alpha_{M-1}`` for a Dicke ensemble with ``M >= 2``.
    """
    re0, re1, im0, im1 = window
    found: list[Pole] = []

    def add(z: complex, kind):
        z = complex(z)
        if z.imag >= 0:
            return
        if re0 <= z.real <= re1 and im0 <= z.imag <= im1:
            if not any(abs(z - q.location) < 1e-12 * max(1.0, abs(z)) and q.interpretation == kind for q in found):
                found.append(Pole(z, kind))

    if isinstance(system, TwoLevel):
        system = Dicke(1, system.Omega, system.g)
    if isinstance(system, Dicke):
        d = derive_params(system)
        alphas = [d.alpha]
        if system.M >= 2:
            add(2 * d.alpha_prev, "bound-state")
    elif isinstance(system, EmitterChain):
        chain = validate_chain(system)
        if len(chain.entries) != 2 or not all(isinstance(s, TwoLevel) for s in chain.specs):
            raise UnsupportedSpec("pole report supports two two-level atoms")
        alphas = [derive_params(s).alpha for s in chain.specs]
        add(alphas[0] + alphas[1], "bound-state")
    else:
        raise UnsupportedSpec(f"no pole report for {type(system).__name__}")
    for a in alphas:
        for shift in (Delta, -Delta, DeltaPrime, -DeltaPrime):
            add(2 * (a + shift), "single-photon")
    found.sort(key=lambda q: (q.interpretation, q.location.real, q.location.imag))
    return PoleReport(tuple(found))


def unitarity_residual(dec: S2Decomposition, q1: float, q2: float, k1: float, k2: float, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """Magnitude of the two-photon unitarity defect at one pair of shell points.

    With ``B = i T`` the identity reads
    ``conj(S(q1) S(q2)) B(q; k) + S(k1) S(k2) conj(B(k; q)) + 1/2 int conj(B(p; q)) B(p; k) dp = 0``.
    """
    E = q1 + q2
    TwoPhotonKinematics(q1, q2, k1, k2)
    s = dec.one_photon

    def B(a, b, c, d):
        return 1j * dec.irreducible_kernel(_as_pair(a), _as_pair(b), _as_pair(c), _as_pair(d))

    def f(p):
        return np.conj(B(p, E - p, q1, q2)) * B(p, E - p, k1, k2)

    val, _ = _integrate_line(f, E / 2, cfg.half_width * max(dec.gamma_max, 1e-300), cfg)
    lhs = np.conj(s(q1) * s(q2)) * B(q1, q2, k1, k2) + s(k1) * s(k2) * np.conj(B(k1, k2, q1, q2)) + 0.5 * val[0]
    return float(abs(lhs))
