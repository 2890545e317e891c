"""Command line entry point.

Every command reads an INI config (``--config``; built-in defaults otherwise)
and writes CSV or text files to the output directory.  Exit codes: 0 success,
1 verification failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import adjoint, controllability, formats, geometry, mesh, operators, validation
from .fem import ScalarField

log = logging.getLogger("shapeflow")

DEFAULTS = {
    "domain": {
        "kind": "annulus",
        "r_in": "1.0",
        "r_out": "2.0",
        "g_in": "0.0",
        "g_out": "1.0",
        "outer": "circle",
        "curve": "circle",
        "radius": "1.0",
        "a": "1.3",
        "b": "0.9",
        "modes": "",
        "points": "",
        "g_low": "0.0",
        "g_high": "1.0",
        "inflow_fraction": "0.15",
    },
    "mesh": {"h0": "0.5", "level": "2", "sectors": ""},
    "flow": {"kind": "potential", "degree": "", "qorder": "4"},
    "basis": {"kind": "fourier", "n": "16", "arc": "", "fields": "", "index": "0"},
    "verify": {
        "t": "0.1, 0.05, 0.025, 0.0125",
        "fields": "uniform, cos:2, bump:2.0:3.0",
        "pairs": "uniform/uniform, bump:2.0:3.0/cos:2, bump:2.0:3.0/bump:5.0:4.0, cos:1/bump:5.0:4.0",
        "identity_levels": "1, 2, 3",
        "robin_kappa": "0.5, 1.0",
        "slope_min": "1.8",
        "mutation": "yes",
        "mutation_max": "1.3",
        "identity_tol": "1e-3",
        "identity_order": "1.0",
        "hadamard_order": "1.9",
        "laplacian_tol": "1e-10",
        "obstruction_threshold": "1e-2",
    },
    "control": {
        "target": "gaussian",
        "center": "3.0",
        "width": "1.0",
        "n_list": "1, 2, 4, 8, 16",
        "alpha": "1e-4, 1e-8, 0",
        "kernel": "auto",
    },
    "output": {"dir": "out", "fields": "yes"},
}


class ConfigError(ValueError):
    """Bad or missing config value; the message names ``[section] key``."""


# ---------------------------------------------------------------------------
# config access
# ---------------------------------------------------------------------------


@dataclass
class Config:
    parser: configparser.ConfigParser

    @classmethod
    def load(cls, path: str | None) -> "Config":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_dict(DEFAULTS)
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file {path} not found")
            try:
                with p.open() as fh:
                    cp.read_file(fh)
            except configparser.Error as exc:
                raise ConfigError(f"config file {path}: {exc}") from exc
            for sec in cp.sections():
                if sec not in DEFAULTS:
                    raise ConfigError(f"[{sec}]: unknown section")
                for key in cp[sec]:
                    if key not in DEFAULTS[sec]:
                        raise ConfigError(f"[{sec}] {key}: unknown key")
        return cls(cp)

    def raw(self, sec, key) -> str:
        return self.parser.get(sec, key).strip()

    def _conv(self, sec, key, fn, what):
        v = self.raw(sec, key)
        try:
            return fn(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{sec}] {key}: expected {what}, got {v!r}") from exc

    def float(self, sec, key, lo=None, hi=None, strict_lo=False) -> float:
        v = self._conv(sec, key, float, "a number")
        if not np.isfinite(v) or (lo is not None and (v <= lo if strict_lo else v < lo)) or (hi is not None and v > hi):
            raise ConfigError(f"[{sec}] {key}: {v} outside the allowed range")
        return v

    def int(self, sec, key, lo=None, hi=None) -> int:
        v = self._conv(sec, key, int, "an integer")
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise ConfigError(f"[{sec}] {key}: {v} outside the allowed range")
        return v

    def optional_int(self, sec, key, lo=None):
        return None if self.raw(sec, key) == "" else self.int(sec, key, lo)

    def floats(self, sec, key) -> list[float]:
        return self._conv(sec, key, lambda s: [float(x) for x in _split(s)], "a comma separated list of numbers")

    def ints(self, sec, key) -> list[int]:
        return self._conv(sec, key, lambda s: [int(x) for x in _split(s)], "a comma separated list of integers")

    def bool(self, sec, key) -> bool:
        try:
            return self.parser.getboolean(sec, key)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: expected yes/no") from exc

    def choice(self, sec, key, options) -> str:
        v = self.raw(sec, key)
        if v not in options:
            raise ConfigError(f"[{sec}] {key}: expected one of {', '.join(options)}, got {v!r}")
        return v


def _split(s: str) -> list[str]:
    return [p.strip() for p in s.replace(";", ",").split(",") if p.strip()]


def parse_levels(text: str) -> list[int]:
    """``"3"`` or an inclusive range ``"0..3"``."""
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            levels = list(range(lo, hi + 1))
        else:
            levels = [int(text)]
    except ValueError:
        raise ConfigError(f"--mesh-level: expected N or A..B, got {text!r}") from None
    if min(levels) < 0 or max(levels) > 6:
        raise ConfigError("--mesh-level: levels must lie in 0..6")
    return levels


# ---------------------------------------------------------------------------
# building objects from the config
# ---------------------------------------------------------------------------


def _curve(cfg: Config, key: str, hole: bool = False):
    kind = cfg.choice("domain", key, ("circle", "ellipse", "fourier", "spline"))
    if kind == "circle":
        r = cfg.float("domain", "r_out" if key == "outer" else "radius", 0, strict_lo=True)
        return geometry.circle(r, hole=hole)
    if kind == "ellipse":
        return geometry.ellipse(cfg.float("domain", "a", 0, strict_lo=True), cfg.float("domain", "b", 0, strict_lo=True),
                                hole=hole)
    if kind == "fourier":
        r = cfg.float("domain", "r_out" if key == "outer" else "radius", 0, strict_lo=True)
        try:
            modes = [tuple(float(x) for x in m.split(":")) for m in _split(cfg.raw("domain", "modes"))]
            modes = [(int(k), a, b) for k, a, b in modes]
        except ValueError:
            raise ConfigError("[domain] modes: expected entries k:a:b separated by commas") from None
        return geometry.fourier_curve(r, modes, hole=hole)
    try:
        pts = [[float(x) for x in p.split()] for p in cfg.raw("domain", "points").split(";") if p.strip()]
        pts = np.array(pts)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
            raise ValueError
    except ValueError:
        raise ConfigError("[domain] points: expected at least 4 'x y' pairs separated by ';'") from None
    return geometry.spline_curve(pts, hole=hole)


def build_domain(cfg: Config) -> geometry.Domain:
    kind = cfg.choice("domain", "kind", ("annulus", "channel"))
    try:
        if kind == "annulus":
            r_in = cfg.float("domain", "r_in", 0, strict_lo=True)
            r_out = cfg.float("domain", "r_out", 0, strict_lo=True)
            if cfg.raw("domain", "outer") == "circle" and r_out <= r_in:
                raise ConfigError("[domain] r_out: must exceed r_in")
            return geometry.annulus(r_in, r_out, cfg.float("domain", "g_in"), cfg.float("domain", "g_out"),
                                    outer=_curve(cfg, "outer"))
        return geometry.channel_disk(_curve(cfg, "curve"), cfg.float("domain", "g_low"), cfg.float("domain", "g_high"),
                                     cfg.float("domain", "inflow_fraction", 0, 0.9, strict_lo=True))
    except geometry.GeometryError as exc:
        raise ConfigError(f"[domain]: {exc}") from exc


def build_mesh(cfg: Config, domain, level: int) -> mesh.TriMesh:
    h0 = cfg.float("mesh", "h0", 0, 10, strict_lo=True)
    sectors = cfg.optional_int("mesh", "sectors", 1)
    return mesh.build_mesh(domain, h0, level, sectors)


def flow_case(cfg: Config, m: mesh.TriMesh, kind: str | None = None) -> operators.FlowCase:
    kind = kind or cfg.choice("flow", "kind", operators.KINDS)
    deg = cfg.optional_int("flow", "degree", 2)
    q = cfg.int("flow", "qorder", 2, 6)
    return operators.FlowCase(m, kind, degree=deg, qorder=q)


def parse_field(domain, text: str, where: str) -> geometry.DeformationField:
    """``uniform``, ``cos:K``, ``sin:K``, ``bump:CENTER:WIDTH`` or ``zero``, with an
    optional amplitude prefix ``A*`` and wall arc suffix ``@ARC``."""
    body, _, arc = text.partition("@")
    amp, star, body = body.rpartition("*")
    parts = body.split(":")
    try:
        arc_i = int(arc) if arc else None
        a = float(amp) if star else 1.0
        kind = parts[0]
        if kind == "uniform" and len(parts) == 1:
            return geometry.make_deformation(domain, "uniform", arc_i, amplitude=a)
        if kind in ("cos", "sin") and len(parts) == 2:
            return geometry.make_deformation(domain, kind, arc_i, k=int(parts[1]), amplitude=a)
        if kind == "bump" and len(parts) == 3:
            return geometry.make_deformation(domain, "bump", arc_i, center=float(parts[1]), width=float(parts[2]),
                                             amplitude=a)
        if kind == "zero" and len(parts) == 1:
            return geometry.zero_field(domain)
    except (ValueError, IndexError, geometry.GeometryError) as exc:
        raise ConfigError(f"{where}: bad field {text!r}: {exc}") from exc
    raise ConfigError(f"{where}: bad field {text!r}; use uniform, cos:K, sin:K, bump:CENTER:WIDTH or zero")


def build_basis(cfg: Config, domain) -> controllability.DeformationBasis:
    kind = cfg.choice("basis", "kind", ("fourier", "fields"))
    if kind == "fourier":
        n = cfg.int("basis", "n", 0, 200)
        try:
            fields = geometry.fourier_basis(domain, n, cfg.optional_int("basis", "arc", 0))
        except (geometry.GeometryError, IndexError) as exc:
            raise ConfigError(f"[basis] arc: {exc}") from exc
    else:
        fields = [parse_field(domain, s, "[basis] fields") for s in _split(cfg.raw("basis", "fields"))]
    if not fields:
        raise ConfigError("[basis]: the deformation basis is empty")
    return controllability.DeformationBasis(tuple(fields), kind)


def _out_dir(cfg: Config, override: str | None) -> Path:
    d = Path(override if override is not None else cfg.raw("output", "dir"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _levels(cfg: Config, arg: str | None) -> list[int]:
    return parse_levels(arg) if arg is not None else [cfg.int("mesh", "level", 0, 6)]


def _fmt(x) -> str:
    return "nan" if x is None or not np.isfinite(x) else f"{x:.6e}"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_solve(cfg: Config, args) -> int:
    out = _out_dir(cfg, args.out)
    domain = build_domain(cfg)
    write_fields = cfg.bool("output", "fields")
    for lev in _levels(cfg, args.mesh_level):
        case = flow_case(cfg, build_mesh(cfg, domain, lev))
        prof = operators.evaluate(case)
        stem = f"solve_{case.kind}_L{lev}"
        (out / f"{stem}_profile.csv").write_text(formats.profile_csv(prof))
        if write_fields:
            if case.kind == operators.POTENTIAL:
                psi, _ = operators.potential_state(case)
                fields = {"psi": psi}
            else:
                psi, omega, _ = operators.stokes_state(case)
                fields = {"psi": psi, "omega": omega}
            for name, vals in fields.items():
                (out / f"{stem}_{name}.csv").write_text(formats.field_csv(ScalarField(case.space, vals, name)))
        log.info("level %d: %s mean %.6g", lev, prof.name, float(np.mean(prof.values)))
    return 0


def cmd_linearize(cfg: Config, args) -> int:
    out = _out_dir(cfg, args.out)
    domain = build_domain(cfg)
    basis = build_basis(cfg, domain)
    idx = args.index if args.index is not None else cfg.int("basis", "index", 0)
    if not 0 <= idx < len(basis):
        raise ConfigError(f"[basis] index: {idx} outside 0..{len(basis) - 1}")
    for lev in _levels(cfg, args.mesh_level):
        case = flow_case(cfg, build_mesh(cfg, domain, lev))
        prof = operators.linearize(case, basis[idx])[0]
        (out / f"linearize_{case.kind}_L{lev}_V{idx}.csv").write_text(formats.profile_csv(prof))
    return 0


def _target(cfg: Config, case, system):
    kind = cfg.raw("control", "target")
    q = case.quadrature
    if kind == "gaussian":
        wall = [a for a in case.domain.arcs if a.label == geometry.WALL][0]
        period = wall.length if case.domain.is_full_loop(wall) else None
        return controllability.gaussian_target(q, wall.start + cfg.float("control", "center"),
                                               cfg.float("control", "width", 0, strict_lo=True),
                                               loop=wall.loop, period=period)
    if kind.startswith("basis:"):
        try:
            j = int(kind.split(":")[1])
            return system.columns[j].renamed("target")
        except (ValueError, IndexError):
            raise ConfigError(f"[control] target: no basis response {kind!r}") from None
    raise ConfigError(f"[control] target: expected gaussian or basis:J, got {kind!r}")


def cmd_control(cfg: Config, args) -> int:
    out = _out_dir(cfg, args.out)
    domain = build_domain(cfg)
    basis = build_basis(cfg, domain)
    N_list = cfg.ints("control", "n_list")
    alphas = cfg.floats("control", "alpha")
    if not N_list or min(N_list) < 1 or max(N_list) > len(basis) or N_list != sorted(N_list):
        raise ConfigError(f"[control] n_list: must be increasing within 1..{len(basis)}")
    if not alphas or min(alphas) < 0:
        raise ConfigError("[control] alpha: must be a nonempty list of nonnegative numbers")
    kernel_mode = cfg.choice("control", "kernel", ("auto", "none"))
    for lev in _levels(cfg, args.mesh_level):
        case = flow_case(cfg, build_mesh(cfg, domain, lev))
        system = controllability.assemble_response(case, basis[: max(N_list)])
        target = _target(cfg, case, system)
        kernel = None
        if case.kind == operators.STOKES and kernel_mode == "auto":
            rep = adjoint.stokes_obstruction_probe(case, threshold=cfg.float("verify", "obstruction_threshold", 0))
            kernel = rep.kernel
            log.info("obstruction probe: %s", rep.as_dict())
        table = controllability.residual_study(case, target, basis, N_list, alphas, kernel=kernel, system=system)
        stem = f"control_{case.kind}_L{lev}"
        (out / f"{stem}_residuals.csv").write_text(table.to_csv())
        rows = []
        for a in alphas:
            if a > 0:
                res = controllability.fit_target(system, target, a)
                rows += [(f"{a:.3e}", i, float(c)) for i, c in enumerate(res.coefficients)]
        (out / f"{stem}_coefficients.csv").write_text(formats.table_csv(["alpha", "i", "coefficient"], rows))
    return 0


def _hadamard_families():
    def y(t, a, b):
        return np.sin(a + t) * np.cos(b) + t * a * b

    def f(a, b):
        return 1 + a**2 + 0.5 * b

    def z(t, a, b):
        return np.exp(0.3 * t * a) * (1 + 0.2 * b) + a

    return y, f, z


class _Report:
    def __init__(self):
        self.lines: list[str] = []
        self.failed: list[str] = []

    def section(self, title):
        self.lines.append(f"[{title}]")

    def check(self, name, ok, detail):
        self.lines.append(f"{name}: {detail} -> {'PASS' if ok else 'FAIL'}")
        if not ok:
            self.failed.append(name)

    def info(self, text):
        self.lines.append(text)

    def text(self) -> str:
        status = "PASS" if not self.failed else "FAIL (" + ", ".join(self.failed) + ")"
        return "\n".join(self.lines + [f"overall: {status}"]) + "\n"


def run_verify(cfg: Config, level: int, threads: int = 1, seed: int = 0, kappa_sign: float = 1.0) -> _Report:
    """All verification checks for the configured flow; returns the report."""
    domain = build_domain(cfg)
    rep = _Report()
    kind = cfg.choice("flow", "kind", operators.KINDS)
    t_list = cfg.floats("verify", "t")
    if len(t_list) < 2 or min(t_list) <= 0:
        raise ConfigError("[verify] t: need at least two positive step sizes")
    fields = [parse_field(domain, s, "[verify] fields") for s in _split(cfg.raw("verify", "fields"))]
    if not fields:
        raise ConfigError("[verify] fields: empty")
    pairs = []
    for p in _split(cfg.raw("verify", "pairs")):
        if "/" not in p:
            raise ConfigError(f"[verify] pairs: expected V/MU, got {p!r}")
        v, m = p.split("/", 1)
        pairs.append((v, parse_field(domain, v, "[verify] pairs"), m, parse_field(domain, m, "[verify] pairs")))
    slope_min = cfg.float("verify", "slope_min")
    rep.info(f"domain: {domain.name}; flow: {kind}; level: {level}; seed: {seed}")

    m0 = build_mesh(cfg, domain, level)
    case = flow_case(cfg, m0)

    rep.section("taylor")
    for name, fld in zip(_split(cfg.raw("verify", "fields")), fields):
        r = validation.taylor_test(case, fld, t_list, threads=threads)
        rep.info(f"  {name} remainders: " + " ".join(f"{t:g}:{_fmt(x)}" for t, x in r.as_rows()))
        ok = r.exact or (np.isfinite(r.slope) and r.slope >= slope_min)
        rep.check(f"taylor {r.tag} {name}", ok, "exact" if r.exact else f"slope {r.slope:.4f} (min {slope_min:g})")
    if kind == operators.POTENTIAL and cfg.bool("verify", "mutation"):
        r = validation.taylor_test(case, fields[0], t_list, kappa_term=False, threads=threads)
        mx = cfg.float("verify", "mutation_max")
        rep.check("kappa-term liveness", r.slope <= mx, f"slope without kappa term {r.slope:.4f} (max {mx:g})")

    rep.section("identity")
    levels = cfg.ints("verify", "identity_levels")
    tol, order_min = cfg.float("verify", "identity_tol", 0), cfg.float("verify", "identity_order")
    cases = {lev: (case if lev == level else flow_case(cfg, build_mesh(cfg, domain, lev))) for lev in levels}
    for vs, V, ms, mu in pairs:
        res = []
        for lev in levels:
            kw = {"kappa_sign": kappa_sign} if kind == operators.POTENTIAL else {}
            res.append(adjoint.identity_check(cases[lev], V, mu, **kw).residual)
        hs = [cases[lev].mesh.hmax for lev in levels]
        order = validation.loglog_slope(hs, res) if len(levels) > 1 else float("nan")
        ok = res[-1] < tol and (len(levels) < 2 or max(res) == 0 or order >= order_min)
        rep.check(f"identity {vs}/{ms}", ok,
                  "residuals " + " ".join(_fmt(x) for x in res) + f", order {order:.3f}")

    rep.section("hadamard")
    y, f, z = _hadamard_families()
    V = fields[-1]
    hmin = cfg.float("verify", "hadamard_order")
    d = validation.hadamard_domain_check(m0, V, y, f, t_list)
    rep.check("hadamard domain", d.order >= hmin, f"residuals {' '.join(_fmt(x) for x in d.residuals)}, order {d.order:.3f}")
    b = validation.hadamard_boundary_check(m0, V, z, f, t_list)
    rep.check("hadamard boundary", b.order >= hmin, f"residuals {' '.join(_fmt(x) for x in b.residuals)}, order {b.order:.3f}")
    lt = cfg.float("verify", "laplacian_tol", 0)
    for th, sc in ((validation.rotation_field(0.1), validation.quadratic_scalar(1.0, 1.0)),
                   (validation.radial_stretch(0.05), validation.exp_cos_scalar(1.0)),
                   (validation.radial_stretch(0.05), validation.quadratic_scalar(1.0, 2.0, 0.5))):
        r = validation.pulled_back_laplacian_check(m0, th, sc)
        rep.check(f"pulled-back laplacian {th.name} {sc.name}", r < lt, f"residual {_fmt(r)}")

    rep.section("uniqueness")
    kappas = cfg.floats("verify", "robin_kappa")
    for lev in levels:
        ev = [adjoint.robin_uniqueness_probe(cases[lev].mesh, k, seed=seed).eigenvalue for k in kappas]
        mono = all(b_ >= a_ - 1e-10 for a_, b_ in zip(ev, ev[1:])) if kappas == sorted(kappas) else True
        rep.check(f"robin level {lev}", min(ev) > 0 and mono,
                  " ".join(f"kappa={k:g}:{_fmt(e)}" for k, e in zip(kappas, ev)))
    if kind == operators.STOKES:
        thr = cfg.float("verify", "obstruction_threshold", 0, strict_lo=True)
        ob = adjoint.stokes_obstruction_probe(case, threshold=thr, sweep=(thr / 10, thr, thr * 10))
        d_ = ob.as_dict()
        rep.info(f"obstruction probe (reported only): smallest {_fmt(d_['eigenvalue'])}, dimension {d_['dimension']}, "
                 f"gap {_fmt(d_['gap'])}, sweep {d_['sweep']}")
    return rep


def cmd_verify(cfg: Config, args) -> int:
    out = _out_dir(cfg, args.out)
    level = _levels(cfg, args.mesh_level)[-1]
    rep = run_verify(cfg, level, args.threads, args.seed, -1.0 if args.debug_kappa_sign else 1.0)
    text = rep.text()
    (out / "verify_report.txt").write_text(text)
    sys.stdout.write(text)
    if rep.failed:
        print(f"shapeflow: verification failed: {', '.join(rep.failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_mesh_export(cfg: Config, args) -> int:
    out = _out_dir(cfg, args.out)
    domain = build_domain(cfg)
    for lev in _levels(cfg, args.mesh_level):
        m = build_mesh(cfg, domain, lev)
        formats.write_mesh(m, out / f"mesh_L{lev}.txt")
        q = operators.shared_wall_quadrature(m, cfg.int("flow", "qorder", 2, 6))
        (out / f"mesh_L{lev}_quadrature.csv").write_text(formats.quadrature_csv(q))
    return 0


def cmd_mesh_import(cfg: Config, args) -> int:
    out = _out_dir(cfg, args.out)
    src = Path(args.input)
    if not src.is_file():
        raise ConfigError(f"--input: {src} not found")
    m = formats.read_gmsh(src) if src.suffix == ".msh" else formats.read_mesh(src)
    formats.write_mesh(m, out / f"{src.stem}.txt")
    loops = sorted(set(m.bloop.tolist()))
    sys.stdout.write(f"vertices {m.nv} triangles {len(m.triangles)} boundary edges {len(m.bedges)} loops {len(loops)}\n")
    return 0


COMMANDS = {
    "solve": (cmd_solve, "evaluate S_p or S_s and write profile and field CSVs"),
    "linearize": (cmd_linearize, "evaluate dS(V_i) for one basis member"),
    "verify": (cmd_verify, "run the verification checks and write a report"),
    "control": (cmd_control, "residual study of the controllability surrogate"),
    "mesh-import": (cmd_mesh_import, "convert a Gmsh (.msh) or text mesh to the text format"),
    "mesh-export": (cmd_mesh_export, "write the configured mesh and its wall quadrature"),
}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shapeflow", description="Shape derivatives of potential and Stokes wall operators.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_, description=help_)
        s.add_argument("--config", help="INI config file (defaults are used for missing keys)")
        s.add_argument("--mesh-level", help="refinement level N or inclusive range A..B")
        s.add_argument("--out", help="output directory (overrides [output] dir)")
        s.add_argument("--threads", type=int, default=1, help="worker threads for independent solves")
        s.add_argument("--seed", type=int, default=0, help="seed for randomized starting vectors")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "linearize":
            s.add_argument("--index", type=int, help="basis member (overrides [basis] index)")
        if name == "verify":
            s.add_argument("--debug-kappa-sign", action="store_true",
                           help="flip the curvature sign in the potential identity check (mutation test)")
        if name == "mesh-import":
            s.add_argument("--input", required=True, help="mesh file to import")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("shapeflow: error: --threads must be at least 1", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        cfg = Config.load(args.config)
        code = COMMANDS[args.command][0](cfg, args)
    except ConfigError as exc:
        print(f"shapeflow: config error: {exc}", file=sys.stderr)
        return 2
    except (mesh.MeshError, geometry.GeometryError, adjoint.ProbeError, ValueError) as exc:
        print(f"shapeflow: error: {exc}", file=sys.stderr)
        return 2
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
