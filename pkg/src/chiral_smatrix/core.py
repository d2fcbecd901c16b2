"""Shared domain types for chiral waveguide scattering.

Units: frequencies are measured in the reference linewidth
``Gamma_ref = pi * g_ref**2`` with hbar = c = 1, so a coupling of
``g = 1/sqrt(pi)`` produces a unit linewidth.  All amplitudes are
double-precision complex numbers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

__all__ = [
    "ChiralSMatrixError",
    "DuplicatePosition",
    "EmptyChain",
    "OffShellKinematics",
    "UnequalDetunings",
    "UnsupportedSpec",
    "PoleWarning",
    "Regularization",
    "DEFAULT_REGULARIZATION",
    "TwoLevel",
    "NonRwaTwoLevel",
    "Dicke",
    "Lambda",
    "Vscheme",
    "Sigma",
    "EmitterSpec",
    "ChainEntry",
    "EmitterChain",
    "DerivedParams",
    "derive_params",
    "TwoPhotonKinematics",
    "ResponseFunctions",
    "response_functions",
    "validate_chain",
    "guarded_divide",
    "linewidth",
    "G_UNIT",
]

# coupling that gives Gamma = pi g^2 = 1
G_UNIT = 1.0 / math.sqrt(math.pi)


class ChiralSMatrixError(Exception):
    """Base class for errors raised by this package."""


class DuplicatePosition(ChiralSMatrixError):
    pass


class EmptyChain(ChiralSMatrixError):
    pass


class OffShellKinematics(ChiralSMatrixError):
    pass


class UnequalDetunings(ChiralSMatrixError):
    pass


class UnsupportedSpec(ChiralSMatrixError):
    pass


class PoleWarning(RuntimeWarning):
    """Emitted when an evaluation sits closer to a real-axis pole than ``pole_guard``."""


@dataclass(frozen=True)
class Regularization:
    """Pole handling policy.

    ``eta`` is the infinitesimal of the i*eta prescription; closed forms are
    evaluated at eta -> 0+ and only the Lambda-scheme intermediate ground
    resolvent keeps a finite eta.  ``pole_guard`` is the smallest denominator
    magnitude accepted before a value is flagged.
    """

    eta: float = 1e-12
    pole_guard: float = 1e-10

    def __post_init__(self) -> None:
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError("eta must be positive")
        if not (self.pole_guard > 0 and math.isfinite(self.pole_guard)):
            raise ValueError("pole_guard must be positive")


DEFAULT_REGULARIZATION = Regularization()


def guarded_divide(num, den, reg: Regularization = DEFAULT_REGULARIZATION, what: str = "denominator"):
    """Return ``num / den``, flagging entries with ``|den| < pole_guard``.

    Flagged entries are evaluated with the denominator pushed out to
    magnitude ``pole_guard`` along its own phase, so the result stays finite
    and a sweep can continue.  A :class:`PoleWarning` records the event.
    """
    den = np.asarray(den, dtype=complex)
    small = np.abs(den) < reg.pole_guard
    if np.any(small):
        warnings.warn(
            f"{what} within pole_guard={reg.pole_guard:g} of a real-axis pole",
            PoleWarning,
            stacklevel=3,
        )
        mag = np.abs(den)
        phase = np.where(mag > 0, den / np.where(mag > 0, mag, 1.0), 1.0)
        den = np.where(small, reg.pole_guard * phase, den)
    out = np.asarray(num, dtype=complex) / den
    return out[()] if out.ndim == 0 else out


def _check_coupling(name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"coupling {name} must be a finite non-negative number, got {value!r}")


def _check_real(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class TwoLevel:
    Omega: float
    g: float

    def __post_init__(self) -> None:
        _check_real("Omega", self.Omega)
        _check_coupling("g", self.g)


@dataclass(frozen=True)
class NonRwaTwoLevel:
    """Two-level emitter keeping the counter-rotating coupling ``gprime``."""

    Omega: float
    g: float
    gprime: float

    def __post_init__(self) -> None:
        _check_real("Omega", self.Omega)
        _check_coupling("g", self.g)
        _check_coupling("gprime", self.gprime)


@dataclass(frozen=True)
class Dicke:
    """``M`` identical two-level emitters sharing one position."""

    M: int
    Omega: float
    g: float

    def __post_init__(self) -> None:
        if isinstance(self.M, bool) or int(self.M) != self.M or self.M < 1:
            raise ValueError(f"Dicke M must be a positive integer, got {self.M!r}")
        object.__setattr__(self, "M", int(self.M))
        _check_real("Omega", self.Omega)
        _check_coupling("g", self.g)


@dataclass(frozen=True)
class Lambda:
    """Two ground levels 1, 2 coupled to one excited level 3."""

    eps1: float
    eps2: float
    eps3: float
    g31: float
    g32: float

    def __post_init__(self) -> None:
        for n in ("eps1", "eps2", "eps3"):
            _check_real(n, getattr(self, n))
        _check_coupling("g31", self.g31)
        _check_coupling("g32", self.g32)


@dataclass(frozen=True)
class Vscheme:
    """One ground level 1 coupled to two excited levels 2 and 3."""

    eps1: float
    eps2: float
    eps3: float
    g21: float
    g31: float

    def __post_init__(self) -> None:
        for n in ("eps1", "eps2", "eps3"):
            _check_real(n, getattr(self, n))
        _check_coupling("g21", self.g21)
        _check_coupling("g31", self.g31)


@dataclass(frozen=True)
class Sigma:
    """Ladder 1 -> 2 -> 3; a single photon only reaches level 2."""

    eps1: float
    eps2: float
    eps3: float
    g21: float
    g32: float

    def __post_init__(self) -> None:
        for n in ("eps1", "eps2", "eps3"):
            _check_real(n, getattr(self, n))
        _check_coupling("g21", self.g21)
        _check_coupling("g32", self.g32)


EmitterSpec = Union[TwoLevel, NonRwaTwoLevel, Dicke, Lambda, Vscheme, Sigma]
_SPEC_TYPES = (TwoLevel, NonRwaTwoLevel, Dicke, Lambda, Vscheme, Sigma)


@dataclass(frozen=True)
class ChainEntry:
    spec: EmitterSpec
    position: float

    def __post_init__(self) -> None:
        if not isinstance(self.spec, _SPEC_TYPES):
            raise TypeError(f"unsupported emitter spec {type(self.spec).__name__}")
        _check_real("position", self.position)


@dataclass(frozen=True)
class EmitterChain:
    """Emitters met in turn by right-moving photons.

    ``entries`` may be given in any order; :func:`validate_chain` returns a
    copy sorted by ascending position, i.e. in the order the photons hit them.
    """

    entries: tuple[ChainEntry, ...]
    concentrated: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def of(cls, *pairs: tuple[EmitterSpec, float], concentrated: bool = False) -> "EmitterChain":
        return cls(tuple(ChainEntry(s, float(r)) for s, r in pairs), concentrated)

    @property
    def specs(self) -> tuple[EmitterSpec, ...]:
        return tuple(e.spec for e in self.entries)

    @property
    def positions(self) -> tuple[float, ...]:
        return tuple(e.position for e in self.entries)


def validate_chain(chain: EmitterChain) -> EmitterChain:
    """Check a chain and return it sorted into propagation order."""
    if len(chain.entries) == 0:
        raise EmptyChain("an emitter chain needs at least one entry")
    entries = sorted(chain.entries, key=lambda e: e.position)
    if not chain.concentrated:
        for a, b in zip(entries, entries[1:]):
            if a.position == b.position:
                raise DuplicatePosition(
                    f"two emitters share position {a.position!r}; set concentrated=True for co-located emitters"
                )
    return EmitterChain(tuple(entries), chain.concentrated)


@dataclass(frozen=True)
class DerivedParams:
    """Complex pole ``alpha`` of the dressed excitation and linewidth ``gamma``.

    For Dicke ensembles ``alpha`` is the collective pole alpha_M and
    ``alpha_prev`` is alpha_{M-1}.  For three-level schemes ``alpha`` refers to
    the transition addressed from level 1 and is measured from that level.
    """

    alpha: complex
    gamma: float
    alpha_prev: complex | None = None


def derive_params(spec: EmitterSpec) -> DerivedParams:
    pi = math.pi
    if isinstance(spec, (TwoLevel, NonRwaTwoLevel)):
        gam = pi * spec.g**2
        return DerivedParams(complex(spec.Omega, -gam), gam)
    if isinstance(spec, Dicke):
        gam = pi * spec.g**2
        return DerivedParams(
            complex(spec.Omega, -gam * spec.M), gam, complex(spec.Omega, -gam * (spec.M - 1))
        )
    if isinstance(spec, Lambda):
        gam = pi * (spec.g31**2 + spec.g32**2)
        return DerivedParams(complex(spec.eps3 - spec.eps1, -gam), gam)
    if isinstance(spec, Vscheme):
        gam = pi * spec.g31**2
        return DerivedParams(complex(spec.eps3 - spec.eps1, -gam), pi * max(spec.g21, spec.g31) ** 2)
    if isinstance(spec, Sigma):
        gam = pi * spec.g21**2
        return DerivedParams(complex(spec.eps2 - spec.eps1, -gam), gam)
    raise TypeError(f"unsupported emitter spec {type(spec).__name__}")


def linewidth(spec: EmitterSpec) -> float:
    """Largest single-photon linewidth present in ``spec`` (used to size windows)."""
    pi = math.pi
    if isinstance(spec, Dicke):
        return pi * spec.M * spec.g**2
    if isinstance(spec, Lambda):
        return pi * (spec.g31**2 + spec.g32**2)
    if isinstance(spec, Vscheme):
        return pi * (spec.g21**2 + spec.g31**2)
    return derive_params(spec).gamma


@dataclass(frozen=True)
class TwoPhotonKinematics:
    """Outgoing momenta (p1, p2) and incoming momenta (k1, k2) on the energy shell.

    Scalars or equally-shaped arrays are accepted.  The default shell
    tolerance is ``1e-12 * max(1, |E|)``.
    """

    p1: np.ndarray
    p2: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    shell_tol: float | None = None

    def __post_init__(self) -> None:
        arrs = np.broadcast_arrays(*(np.asarray(getattr(self, n), dtype=float) for n in ("p1", "p2", "k1", "k2")))
        for n, a in zip(("p1", "p2", "k1", "k2"), arrs):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{n} must be finite")
            object.__setattr__(self, n, a[()] if a.ndim == 0 else a)
        E = arrs[0] + arrs[1]
        tol = self.shell_tol
        if tol is None:
            tol_arr = 1e-12 * np.maximum(1.0, np.abs(E))
        else:
            if tol < 0:
                raise ValueError("shell_tol must be non-negative")
            tol_arr = tol
        miss = np.abs(E - (arrs[2] + arrs[3]))
        if np.any(miss > tol_arr):
            raise OffShellKinematics(
                f"p1+p2 and k1+k2 differ by {float(np.max(miss)):.3g}, beyond the shell tolerance"
            )

    @classmethod
    def from_shell(cls, E, Delta, DeltaPrime) -> "TwoPhotonKinematics":
        """Build kinematics from total energy and the two relative momenta."""
        E = np.asarray(E, dtype=float)
        D = np.asarray(Delta, dtype=float)
        Dp = np.asarray(DeltaPrime, dtype=float)
        return cls(E / 2 + Dp, E / 2 - Dp, E / 2 + D, E / 2 - D)

    @property
    def E(self):
        return self.p1 + self.p2

    @property
    def Delta(self):
        return (self.k1 - self.k2) / 2

    @property
    def DeltaPrime(self):
        return (self.p1 - self.p2) / 2


@dataclass(frozen=True)
class ResponseFunctions:
    """Dressed propagator ``M(nu)`` and one-photon amplitude ``S(nu)`` of a two-level emitter."""

    spec: TwoLevel
    reg: Regularization = field(default=DEFAULT_REGULARIZATION)

    @property
    def alpha(self) -> complex:
        return derive_params(self.spec).alpha

    def M(self, nu):
        # complex nu is allowed for contour work off the real axis
        nu = np.asarray(nu)
        if not np.iscomplexobj(nu):
            nu = nu.astype(float)
        return guarded_divide(1.0, nu - self.alpha, self.reg, "M(nu) denominator")

    def S(self, nu):
        return 1.0 - 2j * math.pi * self.spec.g**2 * self.M(nu)


def response_functions(spec: TwoLevel, reg: Regularization = DEFAULT_REGULARIZATION) -> ResponseFunctions:
    if isinstance(spec, Dicke) and spec.M == 1:
        spec = TwoLevel(spec.Omega, spec.g)
    if not isinstance(spec, TwoLevel):
        raise UnsupportedSpec("response functions are defined for two-level emitters")
    return ResponseFunctions(spec, reg)


Evaluator = Callable[..., np.ndarray]
