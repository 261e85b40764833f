"""Command line front end: scenario files in, CSV/SVG artifacts out.

Subcommands: validate, classop, branch, dfunc, sweep, oracle.  Exit codes
are part of the contract: 0 success, 2 scenario validation failure, 3 node
budget exhausted, 4 oracle disagreement, 1 anything else the package raised.
Outputs are deterministic byte for byte: fixed float formatting, fixed row
order, no timestamps.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, freeparticle, oscillator
from .core import (
    CoarseGraining,
    Endpoints,
    GaussianState,
    SharpState,
    SystemParams,
    containing_alpha,
    regime_report,
)
from .errors import BudgetError, DecohistError, ValidationError
from .histories import (
    GridSpec,
    branch_wavefunctions,
    decoherence_analysis,
    evolve,
    moments,
    plan_branch_range,
    plan_grid,
)
from .oracle import classop_k_quadrature
from .sweep import SweepSpec, run_sweep

_NUM = (int, float)


@dataclass
class Scenario:
    name: str
    sha256: str
    params: SystemParams
    cg: CoarseGraining
    particle: GaussianState
    pointer: object
    grid: object  # GridSpec, dict of planner overrides, or None
    endpoints: object  # Endpoints or None
    sweep: object  # dict or None
    quality: float


def _is_num(v):
    return isinstance(v, _NUM) and not isinstance(v, bool)


def _system_mod(params):
    return freeparticle if params.kind == "free" else oscillator


def _read_scenario_bytes(spec_arg, issues):
    p = Path(spec_arg)
    if p.is_file():
        return p.read_bytes(), p.stem
    name = spec_arg if spec_arg.endswith(".json") else spec_arg + ".json"
    try:
        cand = resources.files("decohist") / "scenarios" / name
        if cand.is_file():
            return cand.read_bytes(), Path(name).stem
    except (FileNotFoundError, ModuleNotFoundError):
        pass
    issues.append(f"scenario {spec_arg!r} is neither a file nor a bundled name")
    return None, spec_arg


def load_scenario(spec_arg):
    """Parse and validate a scenario; raises ValidationError listing every
    problem found, not just the first."""
    issues = []
    raw, name = _read_scenario_bytes(spec_arg, issues)
    if raw is None:
        raise ValidationError(issues)
    sha = hashlib.sha256(raw).hexdigest()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError([f"invalid JSON: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ValidationError(["scenario document must be a JSON object"])

    known = {"name", "system", "coarse_graining", "particle", "pointer",
             "grid", "endpoints", "sweep", "quality"}
    for key in sorted(set(doc) - known):
        issues.append(f"unknown top-level key {key!r}")

    def section(key, required=True):
        v = doc.get(key)
        if v is None:
            if required:
                issues.append(f"missing section {key!r}")
            return None
        if not isinstance(v, dict):
            issues.append(f"section {key!r} must be an object")
            return None
        return v

    params = None
    sec = section("system")
    if sec is not None:
        before = len(issues)
        vals = {}
        for field in ("kind", "m", "M", "g", "T", "hbar"):
            if field not in sec:
                issues.append(f"system.{field} is missing")
            vals[field] = sec.get(field)
        vals["omega"] = sec.get("omega", 0.0)
        bad = [k for k, v in vals.items()
               if k != "kind" and v is not None and not _is_num(v)]
        for k in bad:
            issues.append(f"system.{k} must be a number")
        if len(issues) == before:
            try:
                params = SystemParams(**vals)
            except DecohistError as exc:
                issues.append(f"system: {exc}")

    particle = None
    sec = section("particle")
    if sec is not None:
        try:
            particle = GaussianState(
                center=sec.get("center", 0.0),
                width=sec["width"],
                momentum=sec.get("momentum", 0.0),
            )
        except (KeyError, DecohistError, TypeError) as exc:
            issues.append(f"particle: {exc!r}")

    pointer = None
    sec = section("pointer")
    if sec is not None:
        try:
            if "sharp" in sec:
                pointer = SharpState(center=sec["sharp"])
            else:
                pointer = GaussianState(
                    center=sec.get("center", 0.0),
                    width=sec["width"],
                    momentum=sec.get("momentum", 0.0),
                )
        except (KeyError, DecohistError, TypeError) as exc:
            issues.append(f"pointer: {exc!r}")

    cg = None
    sec = section("coarse_graining")
    if sec is not None and params is not None and particle is not None:
        delta = sec.get("delta")
        xbar0 = sec.get("xbar0", 0.0)
        amin, amax = sec.get("alpha_min", "auto"), sec.get("alpha_max", "auto")
        if not _is_num(delta):
            issues.append("coarse_graining.delta must be a number")
        else:
            auto = amin == "auto" or amax == "auto"
            if auto and not isinstance(pointer, GaussianState):
                issues.append("alpha range 'auto' needs a Gaussian pointer")
            else:
                try:
                    if auto:
                        lo, hi = plan_branch_range(
                            _system_mod(params), params,
                            CoarseGraining(delta, xbar0, 0, 0),
                            particle, pointer)
                        amin = lo if amin == "auto" else amin
                        amax = hi if amax == "auto" else amax
                    cg = CoarseGraining(delta, xbar0, amin, amax)
                except DecohistError as exc:
                    issues.append(f"coarse_graining: {exc}")

    grid = None
    gsec = doc.get("grid")
    if gsec is not None and gsec != "auto":
        if not isinstance(gsec, dict):
            issues.append("grid must be \"auto\" or an object")
        else:
            full = {"nx", "nX", "x_center", "X_center", "Lx", "LX"}
            if set(gsec) >= full:
                try:
                    grid = GridSpec(**{k: gsec[k] for k in full})
                except DecohistError as exc:
                    issues.append(f"grid: {exc}")
            elif set(gsec) <= {"nx", "nX"}:
                grid = dict(gsec)  # planner overrides
            else:
                issues.append(
                    "grid must give nx/nX only, or all six of "
                    "nx, nX, x_center, X_center, Lx, LX")

    endpoints = None
    sec = section("endpoints", required=False)
    if sec is not None:
        try:
            endpoints = Endpoints(
                x_in=sec["x_in"], x_out=sec["x_out"],
                X_in=sec["X_in"], X_out=sec["X_out"])
        except (KeyError, DecohistError, TypeError) as exc:
            issues.append(f"endpoints: {exc!r}")

    sweep_doc = doc.get("sweep")
    if sweep_doc is not None:
        if not isinstance(sweep_doc, dict) or "axis" not in sweep_doc \
                or "factors" not in sweep_doc:
            issues.append("sweep must be an object with axis and factors")
            sweep_doc = None

    quality = doc.get("quality", 1.0)
    if not _is_num(quality) or quality <= 0:
        issues.append("quality must be a positive number")

    if issues:
        raise ValidationError(issues)
    return Scenario(
        name=doc.get("name", name), sha256=sha, params=params, cg=cg,
        particle=particle, pointer=pointer, grid=grid, endpoints=endpoints,
        sweep=sweep_doc, quality=float(quality),
    )


def _resolve_grid(sc):
    if isinstance(sc.grid, GridSpec):
        return sc.grid
    overrides = sc.grid if isinstance(sc.grid, dict) else {}
    return plan_grid(_system_mod(sc.params), sc.params, sc.particle, sc.pointer,
                     nx=overrides.get("nx"), nX=overrides.get("nX"))


def _need_endpoints(sc):
    if sc.endpoints is None:
        raise ValidationError(
            ["this command needs an 'endpoints' section in the scenario"])
    return sc.endpoints


def _need_normalizable_pointer(sc):
    if not isinstance(sc.pointer, GaussianState):
        raise ValidationError(
            ["pointer state is sharp (not normalizable); this command "
             "requires a Gaussian pointer"])


# ---------------------------------------------------------------------------
# deterministic artifact writers


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _write_csv(path, sc, command, columns, rows):
    lines = [
        f"# decohist {__version__} {command}",
        f"# scenario {sc.name} sha256 {sc.sha256}",
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


_RAMP = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98),
         (253, 231, 37)]


def _ramp_color(v):
    v = min(max(float(v), 0.0), 1.0)
    pos = v * (len(_RAMP) - 1)
    i = min(int(pos), len(_RAMP) - 2)
    f = pos - i
    rgb = [round(a + (b - a) * f) for a, b in zip(_RAMP[i], _RAMP[i + 1])]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _svg_heatmap(path, sc, labels, mat, title):
    n = len(labels)
    cell = max(8, 360 // max(n, 1))
    pad = 60
    size = pad + n * cell + 20
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
        f'height="{size + 20}" viewBox="0 0 {size} {size + 20}">',
        f'<text x="{pad}" y="20" font-size="13">{title}</text>',
    ]
    for i in range(n):
        for j in range(n):
            x = pad + j * cell
            y = 30 + i * cell
            out.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_ramp_color(mat[i][j])}"/>')
    step = max(1, n // 8)
    for i in range(0, n, step):
        out.append(f'<text x="{pad - 6}" y="{30 + i * cell + cell // 2 + 4}" '
                   f'font-size="10" text-anchor="end">{labels[i]}</text>')
        out.append(f'<text x="{pad + i * cell + cell // 2}" '
                   f'y="{30 + n * cell + 14}" font-size="10" '
                   f'text-anchor="middle">{labels[i]}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def _svg_sweep(path, sc, rows, title):
    width, height, pad = 420, 300, 50
    pts = [(i, r.epsilon) for i, r in enumerate(rows)
           if not math.isnan(r.epsilon) and r.epsilon > 0]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<text x="{pad}" y="20" font-size="13">{title}</text>',
    ]
    if pts:
        los = [math.log10(v) for _, v in pts]
        lo = math.floor(min(los)) - 0.2
        hi = math.ceil(max(los)) + 0.2
        nrow = len(rows)

        def xpos(i):
            return pad + i * (width - 2 * pad) / max(1, nrow - 1)

        def ypos(v):
            frac = (math.log10(v) - lo) / (hi - lo)
            return height - 40 - frac * (height - 80)

        for dec in range(math.ceil(lo), math.floor(hi) + 1):
            y = ypos(10.0 ** dec)
            out.append(f'<line x1="{pad}" y1="{y:.1f}" x2="{width - pad}" '
                       f'y2="{y:.1f}" stroke="#ccc"/>')
            out.append(f'<text x="{pad - 6}" y="{y:.1f}" font-size="10" '
                       f'text-anchor="end">1e{dec}</text>')
        path_d = " ".join(
            f"{'M' if k == 0 else 'L'}{xpos(i):.1f},{ypos(v):.1f}"
            for k, (i, v) in enumerate(pts))
        out.append(f'<path d="{path_d}" fill="none" stroke="#264653" '
                   'stroke-width="1.5"/>')
        for i, v in pts:
            out.append(f'<circle cx="{xpos(i):.1f}" cy="{ypos(v):.1f}" r="3" '
                       'fill="#e76f51"/>')
        for i, r in enumerate(rows):
            out.append(f'<text x="{xpos(i):.1f}" y="{height - 24}" '
                       f'font-size="10" text-anchor="middle">{_fmt(r.factor)}'
                       '</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_validate(sc, args):
    rep = regime_report(sc.params, sc.particle, sc.cg) \
        if isinstance(sc.particle, GaussianState) else None
    d = _system_mod(sc.params).derived_constants(sc.params)
    print(f"scenario {sc.name}: ok")
    print(f"  sha256 {sc.sha256}")
    print(f"  alphas [{sc.cg.alpha_min}, {sc.cg.alpha_max}]")
    for field in d.__dataclass_fields__:
        print(f"  {field} = {_fmt(getattr(d, field))}")
    if rep is not None:
        print(f"  t_spread = {_fmt(rep.t_spread)}  T = {_fmt(sc.params.T)}")
        print(f"  delta/ell = {_fmt(rep.delta_over_ell)}  "
              f"width/ell = {_fmt(rep.width_over_ell)}  "
              f"classical = {_fmt(rep.classical)}")
    return 0


def cmd_classop(sc, args):
    ep = _need_endpoints(sc)
    mod = _system_mod(sc.params)
    rows = []
    for a in sc.cg.labels():
        v = mod.class_op_element(sc.params, sc.cg, a, ep)
        rows.append((a, v.real, v.imag, abs(v)))
    for a, re, im, mag in rows:
        print(f"alpha {a:+d}: {re:+.6e} {im:+.6e}i  |.| = {mag:.6e}")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_csv(outdir / "classop.csv", sc, "classop",
                   ["alpha", "re", "im", "abs"], rows)
    return 0


def cmd_branch(sc, args):
    grid = _resolve_grid(sc)
    branches = branch_wavefunctions(
        _system_mod(sc.params), sc.params, sc.cg, sc.particle, sc.pointer,
        grid, quality=sc.quality, threads=args.threads, budget=args.budget)
    rows = []
    for b in branches:
        mo = moments(b)
        rows.append((b.alpha, mo["mass"], mo["mean_x"], mo["mean_X"],
                     mo["var_x"], mo["var_X"]))
        print(f"alpha {b.alpha:+d}: mass {mo['mass']:.6e}  "
              f"<x> {mo['mean_x']:+.4f}  <X> {mo['mean_X']:+.4f}")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_csv(outdir / "branches.csv", sc, "branch",
                   ["alpha", "mass", "mean_x", "mean_X", "var_x", "var_X"],
                   rows)
    return 0


def cmd_dfunc(sc, args):
    _need_normalizable_pointer(sc)
    grid = _resolve_grid(sc)
    dm, branches, evolved, info = decoherence_analysis(
        _system_mod(sc.params), sc.params, sc.cg, sc.particle, sc.pointer,
        grid, quality=sc.quality, threads=args.threads, budget=args.budget)
    Dn = dm.normalized()
    print(f"epsilon = {info['epsilon']:.6e}")
    print(f"completeness residual = {info['completeness']:.3e}")
    print(f"evolved mass = {info['evolved_mass']:.8f}")
    print(f"normalization = {dm.normalization:.8f}")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        rows = []
        p = dm.probabilities()
        n = len(dm.alphas)
        for i in range(n):
            for j in range(n):
                den = math.sqrt(p[i] * p[j]) if p[i] > 0 and p[j] > 0 else 0.0
                nij = abs(dm.D[i, j]) / den if den > 0 else 0.0
                rows.append((dm.alphas[i], dm.alphas[j], dm.D[i, j].real,
                             dm.D[i, j].imag, abs(dm.D[i, j]), nij))
        _write_csv(outdir / "dfunc.csv", sc, "dfunc",
                   ["alpha", "alpha_prime", "re", "im", "abs",
                    "normalized_abs"], rows)
        mat = [[abs(Dn[i, j]) / max(abs(Dn[i, i] * Dn[j, j]) ** 0.5, 1e-300)
                if i != j else 1.0 for j in range(n)] for i in range(n)]
        _svg_heatmap(outdir / "dfunc.svg", sc, list(dm.alphas), mat,
                     f"normalized |D|, {sc.name}")
    return 0


def cmd_sweep(sc, args):
    _need_normalizable_pointer(sc)
    if sc.sweep is None:
        raise ValidationError(["scenario has no sweep section"])
    spec = SweepSpec(axis=sc.sweep["axis"],
                     factors=tuple(sc.sweep["factors"]),
                     params=sc.params, cg=sc.cg,
                     particle=sc.particle, pointer=sc.pointer)
    rows = run_sweep(spec, quality=sc.quality, threads=args.threads,
                     budget=args.budget)
    cols = ["factor", "hbar_eff", "ell", "ell_over_delta", "epsilon",
            "n_branches", "nx", "nX", "t_spread", "window_conv",
            "budget_limited"]
    for r in rows:
        print(f"factor {_fmt(r.factor)}: epsilon = {r.epsilon:.6e}  "
              f"ell/delta = {r.ell_over_delta:.4f}"
              + ("  [budget limited]" if r.budget_limited else ""))
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_csv(outdir / "sweep.csv", sc, "sweep", cols,
                   [tuple(getattr(r, c) for c in cols) for r in rows])
        _svg_sweep(outdir / "sweep.svg", sc, rows,
                   f"decoherence metric vs {spec.axis} factor, {sc.name}")
    return 3 if any(r.budget_limited for r in rows) else 0


def cmd_oracle(sc, args):
    ep0 = _need_endpoints(sc)
    mod = _system_mod(sc.params)
    seed = int(sc.sha256[:8], 16)
    rng = np.random.default_rng(seed)
    d = sc.particle.width
    rows = []
    worst = 0.0
    for s in range(args.sets):
        if s == 0:
            ep = ep0
        else:
            jit = rng.normal(size=4) * [0.5 * d, 0.5 * d, 0.3, 0.3]
            ep = Endpoints(ep0.x_in + jit[0], ep0.x_out + jit[1],
                           ep0.X_in + jit[2], ep0.X_out + jit[3])
        Z = mod.length_Z(sc.params, ep)
        a0 = containing_alpha(sc.cg, Z)
        alphas = sorted({min(max(a, sc.cg.alpha_min), sc.cg.alpha_max)
                         for a in (a0 - 1, a0, a0 + 1)})
        for a in alphas:
            closed = mod.class_op_element(sc.params, sc.cg, a, ep)
            kw = {} if args.budget is None else {"budget": int(args.budget)}
            rep = classop_k_quadrature(sc.params.kind, sc.params, sc.cg, a,
                                       ep, tol=1e-9, **kw)
            diff = abs(closed - rep.value)
            den = max(abs(closed), abs(rep.value))
            rel = diff / den if den > 0 else 0.0
            worst = max(worst, rel if diff > 1e-15 else 0.0)
            rows.append((s, a, closed.real, closed.imag, rep.value.real,
                         rep.value.imag, diff, rel, rep.est_error, rep.nodes))
            print(f"set {s} alpha {a:+d}: rel diff {rel:.3e} "
                  f"(est {rep.est_error:.1e}, {rep.nodes} nodes)")
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_csv(outdir / "oracle.csv", sc, "oracle",
                   ["set", "alpha", "closed_re", "closed_im", "quad_re",
                    "quad_im", "abs_diff", "rel_diff", "est_error", "nodes"],
                   rows)
    if worst > args.tol:
        print(f"oracle disagreement: worst relative difference {worst:.3e} "
              f"exceeds tolerance {args.tol:g}", file=sys.stderr)
        return 4
    print(f"oracle agreement: worst relative difference {worst:.3e}")
    return 0


# ---------------------------------------------------------------------------


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="decohist",
        description="interval histories of a particle watched by a pointer")
    ap.add_argument("--version", action="version",
                    version=f"decohist {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, extra in [
        ("validate", cmd_validate, ()),
        ("classop", cmd_classop, ("out",)),
        ("branch", cmd_branch, ("out", "threads", "budget")),
        ("dfunc", cmd_dfunc, ("out", "threads", "budget")),
        ("sweep", cmd_sweep, ("out", "threads", "budget")),
        ("oracle", cmd_oracle, ("out", "budget", "oracle")),
    ]:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True,
                       help="path to a scenario JSON, or a bundled name")
        if "out" in extra:
            p.add_argument("--out", default=None,
                           help="directory for CSV/SVG artifacts")
        if "threads" in extra:
            p.add_argument("--threads", type=int, default=1)
        if "budget" in extra:
            p.add_argument("--budget", type=float, default=None)
        if "oracle" in extra:
            p.add_argument("--tol", type=float, default=1e-6)
            p.add_argument("--sets", type=int, default=3)
        p.set_defaults(func=fn)
    return ap


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        return args.func(sc, args)
    except ValidationError as exc:
        for issue in exc.issues:
            print(f"validation: {issue}", file=sys.stderr)
        return 2
    except BudgetError as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return 3
    except DecohistError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
