"""Coherent light scattered by a single two-level emitter.

The incoming state is a coherent state of the box mode ``k`` of a waveguide
segment of length ``L``.  The outgoing state is the incoming one dressed by
n-photon amplitudes ``A_n(x_1 < ... < x_n)`` (see :func:`beta_amplitude`);
its Fock components are assembled by :func:`fock_amplitude`.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import ChiralSMatrixError, TwoLevel, derive_params

__all__ = [
    "UnorderedCoordinates",
    "TruncationExceeded",
    "DivisionByZeroDensity",
    "WaveguideBox",
    "CoherentInput",
    "CoherentOutput",
    "StatisticsConfig",
    "PhotonStatistics",
    "broadened_delta",
    "beta_amplitude",
    "fock_amplitude",
    "photon_statistics",
    "g2_zero_distance",
]


class UnorderedCoordinates(ChiralSMatrixError):
    pass


class TruncationExceeded(ChiralSMatrixError):
    pass


class DivisionByZeroDensity(RuntimeWarning):
    pass


@dataclass(frozen=True)
class WaveguideBox:
    L: float

    def __post_init__(self) -> None:
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError("box length must be positive")

    @property
    def Delta(self) -> float:
        return 2 * math.pi / self.L


@dataclass(frozen=True)
class CoherentInput:
    """Drive in box mode ``k`` with amplitude ``alpha_k`` (mean photon number ``|alpha_k|^2``)."""

    k: float
    alpha_k: complex
    box: WaveguideBox

    @property
    def alpha_bar(self) -> complex:
        return complex(self.alpha_k) / math.sqrt(self.box.L)

    @property
    def mean_photons(self) -> float:
        return abs(self.alpha_k) ** 2


@dataclass(frozen=True)
class CoherentOutput:
    input: CoherentInput
    emitter: TwoLevel
    n_max: int = 4

    def __post_init__(self) -> None:
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")

    @property
    def kappa(self) -> complex:
        """``k - alpha``; its imaginary part is the emitter linewidth."""
        return self.input.k - derive_params(self.emitter).alpha

    @property
    def c(self) -> complex:
        """Single-scattering factor ``-2 pi i g^2/(k - alpha)``; ``1 + c`` is the one-photon amplitude."""
        if self.emitter.g == 0:
            return 0j
        return -2j * math.pi * self.emitter.g**2 / self.kappa

    def amplitude(self, n: int, xs) -> complex | np.ndarray:
        return beta_amplitude(n, xs, self)


def broadened_delta(q, box: WaveguideBox):
    """Box-broadened delta ``sin(q L/2)/(pi q)``, equal to ``L/(2 pi)`` at ``q = 0``."""
    q = np.asarray(q, dtype=float)
    half = box.L / 2
    # np.sinc(x) = sin(pi x)/(pi x)
    out = half / math.pi * np.sinc(q * half / math.pi)
    return out[()] if out.ndim == 0 else out


def _branch_factor(xs: np.ndarray, kappa: complex, L: float) -> np.ndarray:
    """Position-dependent factor of ``A_n`` for ordered coordinates ``xs[..., n]``."""
    half = L / 2
    n = xs.shape[-1]
    ext = np.concatenate([xs, np.full(xs.shape[:-1] + (1,), half)], axis=-1)
    gaps = np.diff(ext, axis=-1)
    factors = 1.0 - np.exp(1j * kappa * gaps)
    in_box = np.all((xs >= -half) & (xs <= half), axis=-1)
    inside = np.prod(factors, axis=-1)
    # x1 < -L/2 < x2 ... (x2 := L/2 when n = 1)
    x1 = xs[..., 0]
    x2 = ext[..., 1]
    rest_ok = np.all(ext[..., 1:] >= -half, axis=-1) & np.all(xs <= half, axis=-1)
    rest = np.prod(factors[..., 1:], axis=-1) if n > 1 else 1.0
    left = np.exp(-1j * kappa * (x1 + half)) * (1.0 - np.exp(1j * kappa * (x2 + half))) * rest
    first_out = (x1 < -half) & rest_ok
    return np.where(in_box, inside, np.where(first_out, left, 0.0))


def beta_amplitude(n: int, xs, out: CoherentOutput):
    """n-photon amplitude ``A_n(x_1, ..., x_n)`` of the outgoing state.

    ``xs`` has shape ``(n,)`` or ``(..., n)`` with non-decreasing coordinates.
    Includes the prefactor ``(c alpha_bar)^n`` and the plane-wave phase.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > out.n_max:
        raise TruncationExceeded(f"n={n} exceeds n_max={out.n_max}")
    xs = np.asarray(xs, dtype=float)
    if xs.shape[-1] != n:
        raise ValueError(f"expected {n} coordinates, got shape {xs.shape}")
    if np.any(np.diff(xs, axis=-1) < 0):
        raise UnorderedCoordinates("coordinates must be sorted in ascending order")
    pref = (out.c * out.input.alpha_bar) ** n
    phase = np.exp(1j * out.input.k * xs.sum(axis=-1))
    val = pref * phase * _branch_factor(xs, out.kappa, out.input.box.L)
    return val[()] if np.ndim(val) == 0 else val


def fock_amplitude(N: int, zs, out: CoherentOutput, include_vacuum_factor: bool = True):
    """Ordered-coordinate coefficient ``G_N(z_1 < ... < z_N)`` of the outgoing state.

    Sums every way of splitting the N photons into a scattered group (handled
    by ``A_n``) and coherent background photons confined to the box.  Only
    terms with ``n <= n_max`` are included, which is exact when ``N <= n_max``.
    """
    zs = np.asarray(zs, dtype=float)
    half = out.input.box.L / 2
    ab = out.input.alpha_bar
    k = out.input.k
    if N == 0:
        val = np.ones(zs.shape[:-1], dtype=complex)
    else:
        inbox = (zs >= -half) & (zs <= half)
        bg = ab * np.exp(1j * k * zs) * inbox
        val = np.prod(bg, axis=-1).astype(complex)
        for n in range(1, min(N, out.n_max) + 1):
            for S in itertools.combinations(range(N), n):
                rest = [j for j in range(N) if j not in S]
                term = beta_amplitude(n, zs[..., list(S)], out)
                if rest:
                    term = term * np.prod(bg[..., rest], axis=-1)
                val = val + term
    if include_vacuum_factor:
        val = val * math.exp(-out.input.mean_photons / 2)
    return val


@dataclass(frozen=True)
class StatisticsConfig:
    """Panelled Gauss-Legendre rule over ordered coordinates.

    Panels of width ``panel_width`` tile ``[-L/2 - left_tail, L/2]`` with edges
    at ``+-L/2``; cells on the diagonal use collapsed (Duffy) coordinates so the
    integrand is smooth in every cell.  The error estimate is the difference
    between ``order`` and ``order + refine`` point rules.
    """

    panel_width: float = 1.0
    order: int = 8
    refine: int = 4
    left_tail: float = 12.0
    tol: float = 1e-6
    chunk: int = 200_000


@dataclass(frozen=True)
class PhotonStatistics:
    weights: np.ndarray
    errors: np.ndarray
    config: StatisticsConfig = field(repr=False, default=StatisticsConfig())

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def _panels(L: float, cfg: StatisticsConfig) -> list[tuple[float, float]]:
    half = L / 2
    edges = []
    if cfg.left_tail > 0:
        m = max(1, math.ceil(cfg.left_tail / cfg.panel_width))
        edges.extend(np.linspace(-half - cfg.left_tail, -half, m + 1)[:-1])
    m = max(1, math.ceil(L / cfg.panel_width))
    edges.extend(np.linspace(-half, half, m + 1))
    edges = np.asarray(edges)
    return list(zip(edges[:-1], edges[1:]))


def _simplex_rule(r: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Points/weights on ``0 <= s_1 <= ... <= s_r <= 1`` via collapsed coordinates."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    grids = np.meshgrid(*([x] * r), indexing="ij")
    wgrids = np.meshgrid(*([w] * r), indexing="ij")
    v = np.stack([g.ravel() for g in grids], axis=-1)
    wt = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    s = np.empty_like(v)
    acc = np.ones(v.shape[0])
    for j in range(r - 1, -1, -1):
        acc = acc * v[:, j]
        s[:, j] = acc
    jac = np.ones(v.shape[0])
    for j in range(1, r):
        jac = jac * v[:, j] ** j
    return s, wt * jac


def _ordered_integral(N: int, f, panels, order: int, chunk: int) -> float:
    """Integrate ``f(z[..., N])`` over ``z_1 < ... < z_N`` restricted to the panels."""
    rules = {r: _simplex_rule(r, order) for r in range(1, N + 1)}
    total = 0.0
    pts_buf: list[np.ndarray] = []
    wts_buf: list[np.ndarray] = []
    count = 0

    def flush():
        nonlocal total, count
        if pts_buf:
            z = np.concatenate(pts_buf)
            w = np.concatenate(wts_buf)
            total += float(np.sum(w * f(z)))
            pts_buf.clear()
            wts_buf.clear()
            count = 0

    for combo in itertools.combinations_with_replacement(range(len(panels)), N):
        runs = [(key, len(list(grp))) for key, grp in itertools.groupby(combo)]
        blocks = []
        for key, r in runs:
            a, b = panels[key]
            s, w = rules[r]
            blocks.append((a + (b - a) * s, w * (b - a) ** r))
        # tensor product across runs
        z = blocks[0][0]
        w = blocks[0][1]
        for zb, wb in blocks[1:]:
            z = np.concatenate(
                [np.repeat(z, len(zb), axis=0), np.tile(zb, (len(z), 1))], axis=1
            )
            w = np.outer(w, wb).ravel()
        pts_buf.append(z)
        wts_buf.append(w)
        count += len(w)
        if count >= chunk:
            flush()
    flush()
    return total


def photon_statistics(out: CoherentOutput, cfg: StatisticsConfig = StatisticsConfig()) -> PhotonStatistics:
    """Photon-number distribution ``P(N)``, ``N = 0..n_max``, of the outgoing state."""
    if out.n_max > 4:
        raise ValueError("photon_statistics supports n_max <= 4")
    from .two_photon import QuadratureNotConverged

    panels = _panels(out.input.box.L, cfg)
    weights = np.zeros(out.n_max + 1)
    errors = np.zeros(out.n_max + 1)
    weights[0] = math.exp(-out.input.mean_photons)
    for N in range(1, out.n_max + 1):

        def f(z, N=N):
            return np.abs(fock_amplitude(N, z, out)) ** 2

        lo = _ordered_integral(N, f, panels, cfg.order, cfg.chunk)
        hi = _ordered_integral(N, f, panels, cfg.order + cfg.refine, cfg.chunk)
        weights[N] = hi
        errors[N] = abs(hi - lo)
        if errors[N] > cfg.tol:
            raise QuadratureNotConverged(f"P({N}) quadrature error {errors[N]:.3g} exceeds {cfg.tol:g}")
    return PhotonStatistics(weights, errors, cfg)


def g2_zero_distance(
    out: CoherentOutput,
    x1,
    x2,
    component: Literal["full", "scattered"] = "full",
    density_floor: float = 1e-30,
):
    """Normalized second-order coherence ``g2(x1, x2)`` of the outgoing light.

    ``component="full"`` uses the complete one- and two-photon coefficients
    (background plus scattered parts); ``"scattered"`` uses only ``A_1`` and
    ``A_2``, which vanishes exactly at coincidence.  Points whose one-photon
    density falls below ``density_floor`` are returned as NaN and flagged with
    a :class:`DivisionByZeroDensity` warning.
    """
    if out.n_max < 2:
        raise TruncationExceeded("g2 needs n_max >= 2")
    x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    lo = np.minimum(x1, x2)
    hi = np.maximum(x1, x2)
    pair = np.stack([lo, hi], axis=-1)
    a2 = beta_amplitude(2, pair, out)
    a1_lo = beta_amplitude(1, lo[..., None], out)
    a1_hi = beta_amplitude(1, hi[..., None], out)
    if component == "scattered":
        num = a2
        d1, d2 = a1_lo, a1_hi
    elif component == "full":
        # strip the shared plane-wave phase and alpha_bar powers: ratios are unaffected
        half = out.input.box.L / 2
        ab = out.input.alpha_bar
        k = out.input.k

        def bg(x):
            return ab * np.exp(1j * k * x) * ((x >= -half) & (x <= half))

        d1 = bg(lo) + a1_lo
        d2 = bg(hi) + a1_hi
        num = bg(lo) * bg(hi) + a1_lo * bg(hi) + bg(lo) * a1_hi + a2
    else:
        raise ValueError("component must be 'full' or 'scattered'")
    dens = np.abs(d1) ** 2 * np.abs(d2) ** 2
    bad = np.minimum(np.abs(d1) ** 2, np.abs(d2) ** 2) < density_floor
    if np.any(bad):
        warnings.warn("one-photon density below floor; g2 set to NaN there", DivisionByZeroDensity, stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = np.where(bad, np.nan, np.abs(num) ** 2 / np.where(bad, 1.0, dens))
    return g2[()] if g2.ndim == 0 else g2
