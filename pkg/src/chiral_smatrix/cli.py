"""Command-line front end: ``chiral-smatrix <s1|s2|coherent|verify|sweep>``.

Configs are JSON files validated against ``config_schema.json``.  Couplings
are given in units of ``g_ref`` and frequencies in units of
``Gamma_ref = pi g_ref^2``; internally the library works with
``Gamma_ref = 1``, so a coupling ``g`` becomes ``(g / g_ref) / sqrt(pi)``.

Exit codes: 0 success, 1 verification failure (or flagged rows under
``--strict``), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

import jsonschema
import numpy as np

from . import oracle as orc
from .coherent import (
    CoherentInput,
    CoherentOutput,
    StatisticsConfig,
    WaveguideBox,
    beta_amplitude,
    g2_zero_distance,
    photon_statistics,
)
from .core import (
    G_UNIT,
    ChainEntry,
    ChiralSMatrixError,
    Dicke,
    EmitterChain,
    Lambda,
    NonRwaTwoLevel,
    OffShellKinematics,
    PoleWarning,
    Sigma,
    TwoLevel,
    TwoPhotonKinematics,
    UnsupportedSpec,
    Vscheme,
    linewidth,
    validate_chain,
)
from .single_photon import (
    s1_chain,
    s1_concentrated_pair,
    s1_concentrated_pair_general,
    s1_dicke,
    s1_elastic,
    s1_lambda,
    s1_non_rwa,
    s1_sigma,
    s1_two_level,
    s1_v,
    s1_v_from_diagonalization,
)
from .two_photon import (
    QuadratureConfig,
    intermediate_integral_closed_form,
    intermediate_integral_quadrature,
    locate_poles,
    s2_convolve,
    s2_full,
    t2_dicke,
    t2_dicke_simplified,
    t2_two_atoms_irred,
    unitarity_residual,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

THREADS_ENV = "CHIRAL_SMATRIX_THREADS"


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------- config


def load_schema() -> dict:
    text = resources.files("chiral_smatrix").joinpath("config_schema.json").read_text()
    return json.loads(text)


def validate_config(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {e.message}")


def load_config(path: str | os.PathLike) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    validate_config(raw)
    return raw


def _coupling(value: float, g_ref: float) -> float:
    return value / g_ref * G_UNIT


def emitter_from_dict(d: dict, g_ref: float):
    kind = d["type"]
    c = lambda k: _coupling(d[k], g_ref)  # noqa: E731
    if kind == "two_level":
        return TwoLevel(d["Omega"], c("g"))
    if kind == "non_rwa":
        return NonRwaTwoLevel(d["Omega"], c("g"), c("gprime"))
    if kind == "dicke":
        return Dicke(d["M"], d["Omega"], c("g"))
    if kind == "lambda":
        return Lambda(d["eps1"], d["eps2"], d["eps3"], c("g31"), c("g32"))
    if kind == "v":
        return Vscheme(d["eps1"], d["eps2"], d["eps3"], c("g21"), c("g31"))
    if kind == "sigma":
        return Sigma(d["eps1"], d["eps2"], d["eps3"], c("g21"), c("g32"))
    raise ConfigError(f"unknown emitter type {kind!r}")


def grid_from_dict(d: dict | None, default: Iterable[float]) -> np.ndarray:
    if d is None:
        return np.asarray(list(default), dtype=float)
    if "values" in d:
        return np.asarray(d["values"], dtype=float)
    return np.linspace(d["start"], d["stop"], d["num"])


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with the emitter system already built."""

    raw: dict
    g_ref: float
    system: object
    label: str
    fmt: str = "csv"
    out: str | None = None
    incoming_channel: int = 1

    @classmethod
    def from_dict(cls, raw: dict, fmt: str | None = None, out: str | None = None, need_system: bool = True) -> "RunConfig":
        validate_config(raw)
        g_ref = raw["g_ref"]
        system = None
        channel = 1
        if "emitter" in raw and "chain" in raw:
            raise ConfigError("give either 'emitter' or 'chain', not both")
        if "emitter" in raw:
            system = emitter_from_dict(raw["emitter"], g_ref)
            channel = raw["emitter"].get("incoming_channel", 1)
        elif "chain" in raw:
            entries = tuple(
                ChainEntry(emitter_from_dict(m["emitter"], g_ref), float(m["position"])) for m in raw["chain"]["members"]
            )
            try:
                system = validate_chain(EmitterChain(entries, raw["chain"].get("concentrated", False)))
            except ChiralSMatrixError as exc:
                raise ConfigError(str(exc)) from None
        elif need_system:
            raise ConfigError("config needs an 'emitter' or a 'chain'")
        output = raw.get("output", {})
        out = out if out is not None else output.get("path")
        # an explicit format wins; otherwise a .json target implies JSON
        fmt = fmt or output.get("format") or ("json" if out and out.endswith(".json") else "csv")
        return cls(raw, g_ref, system, raw.get("label", "run"), fmt, out, channel)

    def oracle_config(self) -> orc.DiscretizationConfig:
        o = {k: v for k, v in self.raw.get("oracle", {}).items() if k != "p0"}
        return orc.DiscretizationConfig(**o)


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return None if math.isnan(f) else f
    return v


@dataclass
class Table:
    name: str
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def records(self) -> list[dict]:
        return [{c: _jsonable(v) for c, v in zip(self.columns, r)} for r in self.rows]


def render(tables: list[Table], fmt: str) -> dict[str, str]:
    """Map of file suffix -> content.  The first table is the main output."""
    if fmt == "json":
        doc = {t.name: t.records() for t in tables}
        return {"": json.dumps(doc, indent=1) + "\n"}
    out = {"": tables[0].csv_text()}
    for t in tables[1:]:
        out["." + t.name] = t.csv_text()
    return out


def write_output(tables: list[Table], fmt: str, out: str | None, stream=None) -> list[Path]:
    rendered = render(tables, fmt)
    if out is None:
        stream = stream or sys.stdout
        stream.write("\n".join(rendered.values()))
        return []
    path = Path(out)
    written = []
    for suffix, text in rendered.items():
        p = path if not suffix else path.with_name(path.stem + suffix + path.suffix)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        written.append(p)
    return written


def _flagged(fn: Callable[[np.ndarray], np.ndarray], xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``fn`` on ``xs`` and flag the entries that tripped the pole guard."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", PoleWarning)
        vals = np.asarray(fn(xs))
    flags = np.zeros(xs.shape, dtype=bool)
    if any(issubclass(w.category, PoleWarning) for w in caught):
        for i in np.ndindex(xs.shape):
            with warnings.catch_warnings(record=True) as one:
                warnings.simplefilter("always", PoleWarning)
                fn(xs[i])
            flags[i] = any(issubclass(w.category, PoleWarning) for w in one)
    return vals, flags


# ---------------------------------------------------------------- commands


S1_COLUMNS = ("source", "label", "channel_in", "channel_out", "p", "p_out", "re_S", "im_S", "abs_S", "arg_S", "flagged")


def _s1_rows(label: str, p: np.ndarray, S: np.ndarray, flags: np.ndarray, cin=1, cout=1, p_out=None, source="analytic"):
    p_out = p if p_out is None else p_out
    return [
        (source, label, cin, cout, float(p[i]), float(p_out[i]), S[i].real, S[i].imag, abs(S[i]), float(np.angle(S[i])), bool(flags[i]))
        for i in range(len(p))
    ]


def _s1_for(spec) -> Callable:
    return lambda x: s1_elastic(x, spec)


def s1_tables(rc: RunConfig, with_oracle: bool = False) -> list[Table]:
    sys_ = rc.system
    if sys_ is None:
        raise ConfigError("s1 needs an emitter or chain")
    if "s1" not in rc.raw:
        raise ConfigError("s1 needs an 's1' section with a momentum grid")
    p = grid_from_dict(rc.raw["s1"]["p"], [])
    t = Table("s1", S1_COLUMNS)
    if isinstance(sys_, Lambda):
        cin = rc.incoming_channel
        res, flags = _flagged(lambda x: s1_lambda(x, sys_, cin).channels, p)
        if flags.ndim > 1:
            flags = flags.any(axis=tuple(range(1, flags.ndim)))
        full = s1_lambda(p, sys_, cin)
        for cout in (1, 2):
            S = full.channels[..., cout - 1, cin - 1]
            t.rows += _s1_rows(rc.label, p, S, flags, cin, cout, full.out_momenta[..., cout - 1, cin - 1])
    elif isinstance(sys_, EmitterChain):
        if sys_.concentrated:
            specs = sys_.specs
            if len(specs) != 2 or not all(isinstance(s, TwoLevel) for s in specs):
                raise ConfigError("concentrated chains support two two-level members")
            a, b = specs
            S, flags = _flagged(lambda x: s1_concentrated_pair_general(x, a.Omega, b.Omega, a.g, b.g), p)
            t.rows += _s1_rows(rc.label, p, S, flags)
        else:
            S, flags = _flagged(lambda x: s1_chain(x, sys_), p)
            t.rows += _s1_rows(rc.label, p, S, flags)
            for i, e in enumerate(sys_.entries):
                Sm, fm = _flagged(_s1_for(e.spec), p)
                t.rows += _s1_rows(f"{rc.label}/member{i}", p, Sm, fm)
    else:
        try:
            S, flags = _flagged(_s1_for(sys_), p)
        except (UnsupportedSpec, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        t.rows += _s1_rows(rc.label, p, S, flags)
    if with_oracle:
        t.rows += _oracle_s1_rows(rc)
    return [t]


def _oracle_s1_rows(rc: RunConfig) -> list[tuple]:
    cfg = rc.oracle_config()
    sys_ = rc.system
    centre = _centre_frequency(sys_)
    p0s = rc.raw.get("oracle", {}).get("p0", [centre])
    rows = []
    for p0 in p0s:
        r = orc.run_single_photon(sys_, cfg, float(p0))
        sel = r.weight >= 1e-2
        flags = np.zeros(int(sel.sum()), dtype=bool)
        rows += _s1_rows(rc.label, r.p[sel], r.S[sel], flags, source=f"oracle@{_fmt(p0)}")
    return rows


def _centre_frequency(sys_) -> float:
    if isinstance(sys_, (TwoLevel, Dicke, NonRwaTwoLevel)):
        return sys_.Omega
    if isinstance(sys_, EmitterChain):
        return float(np.mean([_centre_frequency(s) for s in sys_.specs]))
    if isinstance(sys_, Lambda):
        return sys_.eps3 - sys_.eps1
    return sys_.eps2 - sys_.eps1


S2_COLUMNS = ("E", "Delta", "DeltaPrime", "p1", "p2", "k1", "k2", "re_T", "im_T", "abs_T", "flagged")


def s2_tables(rc: RunConfig) -> list[Table]:
    sys_ = rc.system
    try:
        dec = s2_full(sys_)
    except UnsupportedSpec as exc:
        raise ConfigError(str(exc)) from None
    sec = rc.raw.get("s2", {})
    if "points" in sec:
        pts = np.asarray(sec["points"], dtype=float).reshape(-1, 4)
        kin = TwoPhotonKinematics(pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3])
    else:
        E = grid_from_dict(sec.get("E"), [2 * _centre_frequency(sys_)])
        D = grid_from_dict(sec.get("Delta"), [0.0])
        Dp = grid_from_dict(sec.get("DeltaPrime"), [0.0])
        EE, DD, DDp = (a.ravel() for a in np.meshgrid(E, D, Dp, indexing="ij"))
        kin = TwoPhotonKinematics.from_shell(EE, DD, DDp)
    p1, p2, k1, k2 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (kin.p1, kin.p2, kin.k1, kin.k2))
    idx = np.arange(len(p1))
    T, flags = _flagged(lambda i: dec.irreducible_kernel(p1[i], p2[i], k1[i], k2[i]), idx)
    t = Table("s2", S2_COLUMNS)
    for i in idx:
        E_i = p1[i] + p2[i]
        t.rows.append(
            (E_i, (k1[i] - k2[i]) / 2, (p1[i] - p2[i]) / 2, p1[i], p2[i], k1[i], k2[i], T[i].real, T[i].imag, abs(T[i]), bool(flags[i]))
        )
    Es = p1 + p2
    gam = max(_gamma_of(sys_), 1e-12)
    window = sec.get("pole_window") or [float(Es.min()) - 10 * gam, float(Es.max()) + 10 * gam, -20 * gam, 0.0]
    report = locate_poles(sys_, tuple(window))
    poles = Table("poles", ("re_E", "im_E", "kind"))
    for q in report.poles:
        poles.rows.append((q.location.real, q.location.imag, q.interpretation))
    return [t, poles]


def _gamma_of(sys_) -> float:
    if isinstance(sys_, EmitterChain):
        return max(linewidth(s) for s in sys_.specs)
    return linewidth(sys_)


def coherent_tables(rc: RunConfig) -> list[Table]:
    sys_ = rc.system
    if not isinstance(sys_, TwoLevel):
        raise ConfigError("coherent needs a two-level emitter")
    sec = rc.raw.get("coherent")
    if sec is None:
        raise ConfigError("coherent needs a 'coherent' section")
    box = WaveguideBox(sec["L"])
    alpha = complex(*sec["alpha"])
    out = CoherentOutput(CoherentInput(sec["k"], alpha, box), sys_, sec.get("n_max", 4))
    xs = grid_from_dict(sec.get("x"), np.linspace(-box.L / 2, box.L / 2, 41))
    a1 = Table("amplitude1", ("x", "re", "im", "abs"))
    A1 = beta_amplitude(1, xs[:, None], out)
    for x, v in zip(xs, A1):
        a1.rows.append((x, v.real, v.imag, abs(v)))
    a2 = Table("amplitude2", ("x1", "x2", "re", "im", "abs"))
    g2t = Table("g2", ("x1", "x2", "g2"))
    if out.n_max >= 2:
        i, j = np.triu_indices(len(xs))
        pairs = np.stack([xs[i], xs[j]], axis=-1)
        A2 = beta_amplitude(2, pairs, out)
        for (x1, x2), v in zip(pairs, A2):
            a2.rows.append((x1, x2, v.real, v.imag, abs(v)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g2 = g2_zero_distance(out, xs[i], xs[j], component=sec.get("g2_component", "full"))
        for (x1, x2), v in zip(pairs, np.atleast_1d(g2)):
            g2t.rows.append((x1, x2, float(v)))
    tables = [a1, a2, g2t]
    if sec.get("statistics", False):
        nmax = sec.get("statistics_n_max", 2)
        stats = photon_statistics(replace(out, n_max=nmax))
        st = Table("statistics", ("N", "probability", "error", "poisson"))
        nbar = out.input.mean_photons
        for N in range(nmax + 1):
            st.rows.append((N, stats.weights[N], stats.errors[N], math.exp(-nbar) * nbar**N / math.factorial(N)))
        tables.append(st)
    return tables


# ---------------------------------------------------------------- verify


@dataclass
class Check:
    name: str
    status: str  # PASS, FAIL or INFO
    value: float
    tolerance: float
    detail: str = ""


def _check(name: str, value: float, tol: float, detail: str = "", above: bool = False) -> Check:
    ok = value > tol if above else value <= tol
    return Check(name, "PASS" if ok and np.isfinite(value) else "FAIL", float(value), tol, detail)


def _grid(n=1000, half=10.0):
    return np.linspace(-half, half, n)


def check_unitarity() -> list[Check]:
    G = G_UNIT
    p = _grid()
    out = []
    cases = {
        "two_level": s1_two_level(p, TwoLevel(0.3, G)),
        "V": s1_v(p, Vscheme(0.0, 0.5, -0.7, 0.8 * G, 1.1 * G)),
        "Sigma": s1_sigma(p, Sigma(0.0, 0.4, 1.5, G, 0.6 * G)),
        "concentrated_pair": s1_concentrated_pair(p, 0.2, G, 0.7 * G),
        "concentrated_pair_general": s1_concentrated_pair_general(p, 0.2, -0.4, G, 0.7 * G),
    }
    for M in (1, 2, 5, 10):
        cases[f"Dicke_M{M}"] = s1_dicke(p, Dicke(M, 0.0, G))
    members = [(TwoLevel(0.3 * i, G * (0.5 + 0.2 * i)), float(i)) for i in range(5)]
    cases["chain5"] = s1_chain(p, EmitterChain.of(*members))
    for name, S in cases.items():
        out.append(_check(f"unitarity/{name}", float(np.max(np.abs(np.abs(S) - 1))), 1e-12))
    lam = Lambda(0.0, -0.3, 0.5, 0.8 * G, 0.6 * G)
    err = 0.0
    for c in (1, 2):
        U = s1_lambda(p, lam, c).channels[..., :, c - 1]
        err = max(err, float(np.max(np.abs(np.sum(np.abs(U) ** 2, axis=-1) - 1))))
    out.append(_check("unitarity/Lambda_columns", err, 1e-12))
    return out


def check_reductions() -> list[Check]:
    G = G_UNIT
    p = _grid()
    tl = TwoLevel(0.3, 0.9 * G)
    ref = s1_two_level(p, tl)
    sig = s1_sigma(p, Sigma(0.0, 0.3, 2.0, 0.9 * G, 0.4 * G))
    out = [Check("reduction/Sigma_equals_two_level", "PASS" if np.array_equal(sig, ref) else "FAIL", float(np.max(np.abs(sig - ref))), 0.0)]
    pairs = {
        "V_g21_zero": s1_v(p, Vscheme(0.0, 5.0, 0.3, 0.0, 0.9 * G)),
        "Lambda_g32_zero": s1_lambda(p, Lambda(0.0, 1.0, 0.3, 0.9 * G, 0.0)).elastic,
        "Dicke_M1": s1_dicke(p, Dicke(1, 0.3, 0.9 * G)),
        "pair_g2_zero": s1_concentrated_pair(p, 0.3, 0.9 * G, 0.0),
    }
    for name, S in pairs.items():
        out.append(_check(f"reduction/{name}", float(np.max(np.abs(S - ref))), 1e-14))
    vd = s1_v_from_diagonalization(p, Vscheme(0.0, 0.5, -0.7, 0.8 * G, 1.1 * G))
    vr = s1_v(p, Vscheme(0.0, 0.5, -0.7, 0.8 * G, 1.1 * G))
    out.append(_check("reduction/V_two_routes", float(np.max(np.abs(vd - vr))), 1e-12))
    return out


def check_one_photon_convolution() -> list[Check]:
    G = G_UNIT
    p = _grid()
    a, b = TwoLevel(0.0, G), TwoLevel(0.4, 0.7 * G)
    prod = s1_two_level(p, a) * s1_two_level(p, b)
    out = []
    ref = None
    for sep in (0.5, 2.0, 10.0):
        S = s1_chain(p, EmitterChain.of((a, 0.0), (b, sep)))
        out.append(Check(f"s1_convolution/product_sep{sep:g}", "PASS" if np.array_equal(S, prod) else "FAIL", float(np.max(np.abs(S - prod))), 0.0))
        if ref is not None:
            out.append(_check(f"s1_convolution/separation_{sep:g}", float(np.max(np.abs(S - ref))), 1e-8))
        ref = S
    return out


def _shell_grid(n=20, half=3.0):
    E = np.linspace(-2 * half, 2 * half, n)
    D = np.linspace(-half, half, n)
    EE, DD = np.meshgrid(E, D, indexing="ij")
    return TwoPhotonKinematics.from_shell(EE, DD, 0.37 * DD + 0.1)


def check_two_photon_convolution(cfg: QuadratureConfig = QuadratureConfig()) -> list[Check]:
    G = G_UNIT
    down, up = TwoLevel(0.2, G), TwoLevel(-0.5, math.sqrt(2) * G)
    kin = _shell_grid()
    chain = EmitterChain.of((up, -1.0), (down, 1.0))
    full = s2_full(chain)
    conv = s2_convolve(s2_full(down), s2_full(up), kin, cfg, method="quadrature")
    ref = 1j * full.irreducible_kernel(kin.p1, kin.p2, kin.k1, kin.k2)
    rel = float(np.max(np.abs(conv.irreducible - ref)) / np.max(np.abs(ref)))
    out = [_check("s2_convolution/convolve_vs_full", rel, 1e-6, "20x20 shell grid")]
    worst = 0.0
    for E in (-1.0, 0.0, 0.7, 2.5):
        q, _ = intermediate_integral_quadrature(E, down, up, cfg)
        c = intermediate_integral_closed_form(E, down, up)
        worst = max(worst, abs(q - c) / abs(c))
    out.append(_check("s2_convolution/intermediate_integral", worst, 1e-8))
    return out


def check_dicke_m1() -> list[Check]:
    G = G_UNIT
    kin = _shell_grid(32, 4.0)
    d = t2_dicke(kin, Dicke(1, 0.3, G))
    t = t2_two_atoms_irred(kin, TwoLevel(0.3, G), TwoLevel(-0.2, 0.0))
    rel = float(np.max(np.abs(d - t) / np.maximum(np.abs(d), 1e-300)))
    return [_check("dicke_m1/two_atom_g2_zero", rel, 1e-10)]


def check_non_rwa() -> list[Check]:
    p = _grid(200)
    worst = 0.0
    for g, gp in [(0.1, 0.1), (0.5, 1.0), (1.0, 0.01), (2.0, 3.0)]:
        worst = max(worst, float(np.max(np.abs(s1_non_rwa(p, NonRwaTwoLevel(0.0, g, gp)) - 1))))
    out = [_check("non_rwa/identity", worst, 0.0)]
    jump = abs(1 - s1_two_level(0.0, TwoLevel(0.0, G_UNIT)))
    out.append(Check("non_rwa/discontinuity_at_resonance", "INFO", float(jump), 2.0, "|S_nonRWA - S_RWA(g'->0)| at p = Omega"))
    return out


def check_two_photon_unitarity(cfg: QuadratureConfig = QuadratureConfig()) -> list[Check]:
    G = G_UNIT
    worst = 0.0
    for system in (Dicke(2, 0.3, G), EmitterChain.of((TwoLevel(-0.5, G), -1.0), (TwoLevel(0.2, 0.8 * G), 1.0))):
        dec = s2_full(system)
        worst = max(worst, unitarity_residual(dec, 0.4, -0.1, 0.9, -0.6, cfg))
    return [_check("s2_unitarity/identity", worst, 1e-8)]


def discrepancy_report() -> list[Check]:
    """Bracket form of the Dicke kernel against the printed simplification (informational)."""
    out = []
    for Omega in (0.0, 0.5):
        spec = Dicke(2, Omega, G_UNIT)
        kin = TwoPhotonKinematics.from_shell(0.0, 0.0, 0.0)
        a = complex(t2_dicke(kin, spec))
        b = complex(t2_dicke_simplified(kin, spec))
        out.append(
            Check(
                f"discrepancy/dicke_M2_Omega{Omega:g}",
                "INFO",
                abs(a - b),
                0.0,
                f"bracket={a.real:.12g}{a.imag:+.12g}j simplified={b.real:.12g}{b.imag:+.12g}j",
            )
        )
    return out


def check_oracle() -> list[Check]:
    G = G_UNIT
    cfg = orc.DiscretizationConfig()
    out = []
    at = TwoLevel(0.0, G)
    worst = 0.0
    for p0 in (0.0, 2.0, -4.0):
        r = orc.run_single_photon(at, cfg, p0)
        sel = r.weight >= 1e-2
        worst = max(worst, float(np.max(np.abs(r.S[sel] - s1_two_level(r.p[sel], at)))))
    out.append(_check("oracle/two_level_s1", worst, 1e-2))
    worst = 0.0
    for sep in (0.5, 2.0):
        chain = EmitterChain.of((at, -sep / 2), (TwoLevel(0.3, 0.9 * G), sep / 2))
        r = orc.run_single_photon(chain, orc.DiscretizationConfig(n_modes=384, packet_start=-20, t_final=44), 0.0)
        sel = r.weight >= 1e-2
        worst = max(worst, float(np.max(np.abs(r.S[sel] - s1_chain(r.p[sel], chain)))))
    out.append(_check("oracle/chain_s1", worst, 1e-2))
    c2 = orc.DiscretizationConfig(n_modes=128, bandwidth=20.0)
    ham, res = orc.run_two_photon(at, c2, 0.0)
    dec = s2_full(at)
    pred = orc.predict_two_photon(res.psi_in, res.grid, dec.one_photon, lambda *a: 1j * dec.irreducible_kernel(*a))
    out.append(_check("oracle/two_level_s2_overlap", orc.pair_overlap(pred, res.psi_out), 0.98, "128 modes", above=True))
    return out


VERIFY_SUITE: list[tuple[str, Callable[[], list[Check]], bool]] = [
    ("unitarity", check_unitarity, False),
    ("reductions", check_reductions, False),
    ("s1_convolution", check_one_photon_convolution, False),
    ("s2_convolution", check_two_photon_convolution, False),
    ("dicke_m1", check_dicke_m1, False),
    ("non_rwa", check_non_rwa, False),
    ("s2_unitarity", check_two_photon_unitarity, False),
    ("oracle", check_oracle, True),
    ("discrepancy", discrepancy_report, False),
]


def run_verify(with_oracle: bool = False, stream=None) -> list[Check]:
    stream = stream or sys.stdout
    checks: list[Check] = []
    for _, fn, needs_oracle in VERIFY_SUITE:
        if needs_oracle and not with_oracle:
            continue
        for c in fn():
            checks.append(c)
            print(f"{c.status} {c.name} value={c.value:.6g} tol={c.tolerance:g} {c.detail}".rstrip(), file=stream)
    return checks


def verify_table(checks: list[Check]) -> Table:
    t = Table("verify", ("name", "status", "value", "tolerance", "detail"))
    for c in checks:
        t.rows.append((c.name, c.status, c.value, c.tolerance, c.detail))
    return t


# ---------------------------------------------------------------- sweep


def _set_path(d: dict, path: str, value) -> None:
    keys = path.split(".")
    cur = d
    for k in keys[:-1]:
        cur = cur[int(k)] if isinstance(cur, list) else cur[k]
    last = keys[-1]
    if isinstance(cur, list):
        cur[int(last)] = value
    else:
        if last not in cur:
            raise ConfigError(f"sweep parameter {path!r} not present in config")
        cur[last] = value


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer")
    return n


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


COMMAND_TABLES = {"s1": lambda rc: s1_tables(rc), "s2": s2_tables, "coherent": coherent_tables}


def run_sweep(raw: dict, out_dir: str, fmt: str, stream=None) -> int:
    """Evaluate one command per sweep value; finished points are recorded in ``manifest.json``.

    Rerunning with the same config skips points whose output file still
    matches the hash stored in the manifest.
    """
    stream = stream or sys.stderr
    sw = raw["sweep"]
    base = {k: v for k, v in raw.items() if k not in ("sweep", "output")}
    cfg_hash = _digest(json.dumps(raw, sort_keys=True))
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    mpath = root / "manifest.json"
    manifest = {"config_sha256": cfg_hash, "command": sw["command"], "parameter": sw["parameter"], "format": fmt, "points": {}}
    if mpath.exists():
        try:
            old = json.loads(mpath.read_text())
        except json.JSONDecodeError:
            old = {}
        if old.get("config_sha256") == cfg_hash and old.get("format") == fmt:
            manifest["points"] = old.get("points", {})
    ext = "json" if fmt == "json" else "csv"

    def work(i: int, value: float) -> tuple[int, float, str]:
        cfg = copy.deepcopy(base)
        _set_path(cfg, sw["parameter"], value)
        rc = RunConfig.from_dict(cfg, fmt=fmt)
        tables = COMMAND_TABLES[sw["command"]](rc)
        return i, value, render(tables, fmt)[""]

    todo = []
    for i, v in enumerate(sw["values"]):
        key = str(i)
        entry = manifest["points"].get(key)
        f = root / f"point_{i:04d}.{ext}"
        if entry and f.exists() and entry.get("sha256") == _digest(f.read_text()) and entry.get("value") == v:
            continue
        todo.append((i, v))
    skipped = len(sw["values"]) - len(todo)
    if skipped:
        print(f"resuming: {skipped} point(s) already complete", file=stream)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        futures = [pool.submit(work, i, v) for i, v in todo]
        for fut in futures:
            i, v, text = fut.result()
            f = root / f"point_{i:04d}.{ext}"
            _atomic_write(f, text)
            manifest["points"][str(i)] = {"value": v, "file": f.name, "sha256": _digest(text)}
            _atomic_write(mpath, json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    _atomic_write(mpath, json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chiral-smatrix", description="Scattering matrices of emitters in a chiral waveguide.")
    ap.add_argument("command", choices=["s1", "s2", "coherent", "verify", "sweep"])
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--out", help="output file (directory for sweep)")
    ap.add_argument("--format", choices=["csv", "json"], default=None)
    ap.add_argument("--strict", action="store_true", help="exit 1 if any row was flagged near a pole")
    ap.add_argument("--with-oracle", action="store_true", help="include discretized-Hamiltonian checks")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        _threads()
        raw = load_config(args.config) if args.config else None
        if args.command == "verify":
            checks = run_verify(args.with_oracle)
            if args.out:
                write_output([verify_table(checks)], args.format or "csv", args.out)
            return EXIT_FAIL if any(c.status == "FAIL" for c in checks) else EXIT_OK
        if raw is None:
            raise ConfigError(f"{args.command} needs --config")
        if args.command == "sweep":
            if "sweep" not in raw:
                raise ConfigError("sweep needs a 'sweep' section")
            out = args.out or raw.get("output", {}).get("path")
            if not out:
                raise ConfigError("sweep needs --out (a directory)")
            return run_sweep(raw, out, args.format or raw.get("output", {}).get("format", "csv"))
        rc = RunConfig.from_dict(raw, fmt=args.format, out=args.out)
        if args.command == "s1":
            tables = s1_tables(rc, with_oracle=args.with_oracle)
        elif args.command == "s2":
            tables = s2_tables(rc)
        else:
            tables = coherent_tables(rc)
        write_output(tables, rc.fmt, rc.out)
        if args.strict and args.command in ("s1", "s2"):
            flagged = tables[0].columns.index("flagged")
            if any(r[flagged] for r in tables[0].rows):
                print("flagged rows near a pole", file=sys.stderr)
                return EXIT_FAIL
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OffShellKinematics as exc:
        print(f"error: off-shell input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ChiralSMatrixError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
