"""Command line entry point and configuration-driven pipeline.

Exit status: 0 when every requested verdict passes, 1 for usage or
configuration errors, 2 when a hypothesis of a requested check fails,
3 for numerical non-convergence and 4 when a check runs but its verdict
is negative.
"""
from __future__ import annotations

import os

_threads = os.environ.get("CAPLAB_THREADS", "1")
if _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import csv
import json
import math
import sys
import traceback
from importlib import resources
from pathlib import Path

import numpy as np

from . import energy, identities, instances, linearized, operators, solver, sources, splitting
from .domain import DomainSpec2D, build_grid
from .errors import CaplabError, ConfigError, InapplicableError, NonConvergenceError, RegimeError
from .fields import GridField
from .profile import shoot

EXIT_OK, EXIT_USAGE, EXIT_INAPPLICABLE, EXIT_NONCONVERGENCE, EXIT_VERDICT = 0, 1, 2, 3, 4
FIELD_FORMAT = "caplab-field/1"

DOMAIN_KEYS = {
    "strip": {"T", "y_extent", "b", "c"},
    "rectangle": {"a", "b", "c", "d", "data"},
    "disk": {"R", "center", "b"},
    "annulus": {"R_in", "R_out", "center", "b"},
    "epigraph": {"phi", "x_extent", "depth", "b"},
    "slab": {"phi1", "phi2", "x_extent", "b"},
}
INSTANCES = {
    "strip-capillary": (instances.strip_capillary, {"y_extent", "kappa", "slope"},
                        "mean-curvature capillary strip 0 < x < 1, flat at x = 0"),
    "symmetric-slab": (instances.symmetric_slab, {"half_width", "m", "y_extent", "kappa"},
                       "strip with equal data and an interior minimum line"),
    "serrin-cap": (instances.serrin_cap, {"R", "R_s"}, "disk with f = 2/R_s, spherical cap"),
}
CONFIG_KEYS = {"name", "profile", "source", "domain", "solver", "verify", "output"}
SOLVER_KEYS = {"h", "tol", "max_iter", "damping"}
VERIFY_KEYS = {"identities", "energy", "splitting", "stability", "killing", "gradient_bound"}
OUTPUT_KEYS = {"dir", "csv"}


# ------------------------------------------------------------------ parsing

def _strict(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed {sorted(allowed)}")


def load_json(path) -> dict:
    """Parse JSON with line/column diagnostics."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None


def _expr(text, var="y"):
    f, fp = sources.compile_expression(str(text), var)
    return f, fp


def build_domain(d: dict):
    """Domain spec from a config object; returns ``(spec, resolved_dict, instance_or_None)``."""
    if not isinstance(d, dict):
        raise ConfigError("domain: expected an object")
    if "instance" in d:
        name = d["instance"]
        if name not in INSTANCES:
            raise ConfigError(f"domain: unknown instance {name!r}; known {sorted(INSTANCES)}")
        maker, keys, _ = INSTANCES[name]
        _strict(d, keys | {"instance"}, f"domain ({name})")
        opts = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items() if k != "instance"}
        inst = maker(**opts)
        return inst.spec, resolved_domain(inst.spec, d), inst
    shape = d.get("shape")
    if shape not in DOMAIN_KEYS:
        raise ConfigError(f"domain: unknown shape {shape!r}; known {sorted(DOMAIN_KEYS)}")
    _strict(d, DOMAIN_KEYS[shape] | {"shape"}, f"domain ({shape})")
    p = {k: v for k, v in d.items() if k != "shape"}
    try:
        if shape == "strip":
            spec = DomainSpec2D.strip(p["T"], p.get("y_extent", (-2.0, 2.0)), p.get("b", (0.0, 0.0)),
                                      p.get("c", (None, None)))
        elif shape == "rectangle":
            spec = DomainSpec2D.rectangle(p["a"], p["b"], p["c"], p["d"], p.get("data", 0.0))
        elif shape == "disk":
            spec = DomainSpec2D.disk(p["R"], p.get("center", (0.0, 0.0)), p.get("b", 0.0))
        elif shape == "annulus":
            spec = DomainSpec2D.annulus(p["R_in"], p["R_out"], p.get("center", (0.0, 0.0)),
                                        p.get("b", (0.0, 0.0)))
        elif shape == "epigraph":
            f, fp = _expr(p["phi"])
            spec = DomainSpec2D.epigraph(f, p.get("x_extent", (-2.0, 2.0)), p.get("depth", 2.0),
                                         p.get("b", 0.0), fp)
        else:
            f1, fp1 = _expr(p["phi1"])
            f2, fp2 = _expr(p["phi2"])
            spec = DomainSpec2D.slab(f1, f2, p.get("x_extent", (-2.0, 2.0)), p.get("b", (0.0, 0.0)),
                                     fp1, fp2)
    except KeyError as e:
        raise ConfigError(f"domain ({shape}): missing key {e.args[0]!r}") from None
    return spec, dict(d), None


def resolved_domain(spec: DomainSpec2D, original: dict) -> dict:
    """Explicit shape dictionary reproducing an instance spec."""
    p = spec.params
    b = [c.b for c in spec.components]
    if spec.shape == "strip":
        return {"shape": "strip", "T": p["T"], "y_extent": list(p["y_extent"]), "b": b,
                "c": [c.c for c in spec.components]}
    if spec.shape == "disk":
        return {"shape": "disk", "R": p["R"], "center": list(p["center"]), "b": b[0]}
    return dict(original)


def parse_config(cfg: dict) -> dict:
    """Validate a config object and resolve every reference."""
    _strict(cfg, CONFIG_KEYS, "config")
    if "domain" not in cfg:
        raise ConfigError("config: missing 'domain'")
    spec, dom, inst = build_domain(cfg["domain"])
    prof_s = cfg.get("profile", inst.profile.name if inst else None)
    src_s = cfg.get("source", inst.source.name if inst else None)
    if prof_s is None or src_s is None:
        raise ConfigError("config: 'profile' and 'source' are required for explicit domains")
    profile = operators.parse_profile(prof_s)
    source = sources.parse_source(src_s)
    sv = cfg.get("solver", {})
    _strict(sv, SOLVER_KEYS, "solver")
    h = float(sv.get("h", 1 / 32))
    if not h > 0:
        raise ConfigError("solver.h must be positive")
    ver = cfg.get("verify", {})
    _strict(ver, VERIFY_KEYS, "verify")
    out = cfg.get("output", {})
    _strict(out, OUTPUT_KEYS, "output")
    for item in ver.get("identities", []):
        iid = item if isinstance(item, str) else item.get("id")
        if iid not in identities.IDENTITY_REGISTRY:
            raise ConfigError(f"verify.identities: unknown identity {iid!r}")
        if isinstance(item, dict):
            _strict(item, {"id", "tol"}, f"verify.identities[{iid}]")
    for item in ver.get("energy", []):
        _strict(item, {"case", "radii"}, "verify.energy")
        if item.get("case", "auto") not in ("auto",) + energy.CASES:
            raise ConfigError(f"verify.energy: unknown case {item.get('case')!r}")
    for item in ver.get("stability", []):
        _strict(item, {"mask", "min"}, "verify.stability")
        linearized.parse_mask(item["mask"])
    for item in ver.get("killing", []):
        _strict(item, {"X", "expect"}, "verify.killing")
        linearized.parse_killing(item["X"])
    if isinstance(ver.get("splitting"), dict):
        _strict(ver["splitting"], {"tol", "expect_1d"}, "verify.splitting")
    return {"name": cfg.get("name", "run"), "profile_name": prof_s, "source_name": src_s,
            "profile": profile, "source": source, "spec": spec, "domain": dom, "h": h,
            "solver": {k: v for k, v in sv.items() if k != "h"}, "verify": ver, "output": out}


# ------------------------------------------------------------------ field I/O

def field_to_json(fld: GridField, profile_name: str, source_name: str, domain: dict) -> dict:
    """Values in grid point order: interior lattice nodes (x-major), then boundary points."""
    md = {k: v for k, v in fld.metadata.items() if isinstance(v, (int, float, str, bool, list))}
    if "history" in fld.metadata:
        md["history"] = [float(r) for r in fld.metadata["history"]]
    return {"format": FIELD_FORMAT, "profile": profile_name, "source": source_name,
            "domain": domain, "h": fld.grid.h,
            "x": fld.grid.points[:, 0].tolist(), "y": fld.grid.points[:, 1].tolist(),
            "values": fld.values.tolist(), "metadata": md}


def write_field(path, fld, profile_name, source_name, domain):
    Path(path).write_text(json.dumps(field_to_json(fld, profile_name, source_name, domain)))


def read_field(path) -> GridField:
    data = load_json(path)
    _strict(data, {"format", "profile", "source", "domain", "h", "x", "y", "values", "metadata"},
            str(path))
    if data.get("format") != FIELD_FORMAT:
        raise ConfigError(f"{path}: not a {FIELD_FORMAT} file")
    spec, _, _ = build_domain(data["domain"])
    grid = build_grid(spec, float(data["h"]))
    vals = np.asarray(data["values"], dtype=float)
    pts = np.column_stack([data["x"], data["y"]])
    if vals.shape != (grid.n_points,) or not np.allclose(pts, grid.points, atol=1e-12):
        raise ConfigError(f"{path}: stored points do not match the rebuilt grid")
    md = dict(data.get("metadata", {}))
    md.update(profile_name=data["profile"], source_name=data["source"], domain=data["domain"])
    return GridField(grid, vals, operators.parse_profile(data["profile"]),
                     sources.parse_source(data["source"]), md)


def write_field_csv(path, fld: GridField):
    g = np.hypot(*fld.point_gradient.T)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "u", "grad_norm"])
        for (x, y), u, gn in zip(fld.grid.points, fld.values, g):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(u)), repr(float(gn))])


def write_columns(path, header, cols):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    return x


def dump(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ registry

def list_builtins() -> dict:
    return {
        "profiles": dict(operators.REGISTRY_HELP),
        "sources": dict(sources.REGISTRY_HELP),
        "domains": {k: sorted(v) for k, v in DOMAIN_KEYS.items()},
        "instances": {k: v[2] for k, v in INSTANCES.items()},
        "identities": dict(identities.IDENTITY_REGISTRY),
        "killing": {"translate:<vx>,<vy>": "constant field", "rotate:<px>,<py>": "rotation about p"},
        "energy_cases": list(energy.CASES),
    }


# ------------------------------------------------------------------ checks

def tent_cutoff(text: str):
    """``"tent:cx,cy,L"``: product of 1D tents of half-width ``L``."""
    try:
        kind, rest = text.split(":")
        cx, cy, L = (float(v) for v in rest.split(","))
    except ValueError:
        raise ConfigError(f"bad cutoff {text!r}; use tent:cx,cy,L") from None
    if kind != "tent" or not L > 0:
        raise ConfigError(f"bad cutoff {text!r}; use tent:cx,cy,L with L > 0")
    return lambda x, y: np.maximum(0, 1 - np.abs(x - cx) / L) * np.maximum(0, 1 - np.abs(y - cy) / L)


def flux_vector(fld: GridField) -> np.ndarray:
    g = fld.point_gradient
    return fld.profile.a(np.hypot(*g.T))[:, None] * g


def run_identity(fld: GridField, iid: str, X=None, cutoff=None, component=None) -> dict:
    h = fld.grid.h
    if iid in identities.POINTWISE_IDS:
        rep = next(r for r in identities.verify_pointwise_identities(fld) if r.id == iid)
        return {"id": iid, "residual": rep.residual, "h": h, "lhs_mean": rep.lhs_mean,
                "rhs_mean": rep.rhs_mean, "n_nodes": rep.n_nodes, "n_excluded": rep.n_excluded}
    if iid in ("Bochner-A", "Bochner-B"):
        rep = identities.verify_bochner(fld, iid[-1])
        return {"id": iid, "residual": rep.residual, "h": h, "n_nodes": rep.n_nodes}
    Xf = linearized.parse_killing(X or "translate:1,0")
    if iid == "Poincare":
        w = linearized.killing_derivative(fld, Xf)
        phi = tent_cutoff(cutoff) if cutoff else _default_tent(fld)
        rep = identities.verify_poincare(fld, w, phi)
        return {"id": iid, "lhs": rep.lhs, "rhs": rep.rhs, "slack": rep.slack, "h": h,
                "residual": max(0.0, -rep.slack)}
    if iid == "Boundary":
        comp = component if component is not None else max(
            solver.neumann_trace(fld).items(), key=lambda kv: abs(kv[1].mean))[0]
        rep = identities.verify_boundary_identity(fld, Xf, comp)
        return {"id": iid, "residual": rep.residual, "component": comp, "h": h}
    if iid == "Divergence":
        rep = identities.divergence_check(fld, flux_vector)
        return {"id": iid, "slack": rep.slack, "boundary_term": rep.boundary_term,
                "volume_term": rep.volume_term, "h": h, "residual": abs(rep.slack)}
    raise ConfigError(f"unknown identity {iid!r}")


def _default_tent(fld):
    xmin, xmax, ymin, ymax = fld.grid.spec.bbox()
    cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
    L = 0.4 * min(xmax - xmin, ymax - ymin)
    return tent_cutoff(f"tent:{cx!r},{cy!r},{L!r}")


def run_energy(fld: GridField, case: str, radii) -> dict:
    if case == "auto":
        rep = energy.moderate_energy_dispatch(fld, radii=tuple(radii))
        return {"mode": "dispatch", "chosen": rep.chosen, "applicable": rep.applicable,
                "failed": rep.failed, "cutoff_family": rep.cutoff_family, "radii": rep.radii,
                "energies": rep.energies, "truncated": rep.truncated, "decreasing": rep.decreasing,
                "verdict": rep.verdict, "notes": rep.notes}
    rep = energy.calibration_bound(fld, case=case, R_list=tuple(radii))
    return {"mode": "calibration", "case": case, "constant": rep.constant,
            "threshold": rep.threshold, "hypotheses": rep.hypotheses,
            "pairs": [{"R": p.R, "lhs": p.lhs, "rhs": p.rhs, "above_threshold": p.above_threshold,
                       "truncated": p.truncated, "holds": p.holds} for p in rep.pairs],
            "verdict": rep.verdict, "notes": rep.notes}


def run_split(fld: GridField, tol=None) -> dict:
    rep = splitting.detect_splitting(fld, tol)
    return rep.to_dict()


def run_stability(fld: GridField, mask: str) -> dict:
    rep = linearized.stability_lambda1(fld, linearized.parse_mask(mask))
    return {"mask": mask, "lambda_min": rep.lambda_min, "iterations": rep.iterations,
            "converged": rep.converged, "n_nodes": int(np.size(rep.nodes))}


def run_killing(fld: GridField, X: str) -> dict:
    w = linearized.killing_derivative(fld, linearized.parse_killing(X))
    mask = linearized.deep_interior(fld.grid)
    verdict = linearized.sign_trichotomy_check(w, mask)
    return {"X": X, "sign": verdict, "tol": linearized.default_sign_tol(w),
            "linearized_residual": w.metadata.get("linearized_residual")}


# ------------------------------------------------------------------ pipeline

def run_pipeline(cfg: dict, out_dir=None, log=print) -> tuple:
    """Solve, verify and write reports; returns ``(exit_code, summary)``."""
    c = parse_config(cfg)
    out = Path(out_dir or c["output"].get("dir", f"{c['name']}-out"))
    out.mkdir(parents=True, exist_ok=True)
    want_csv = bool(c["output"].get("csv", True))
    grid = build_grid(c["spec"], c["h"])
    fld = solver.solve_dirichlet(c["profile"], c["source"], grid, **c["solver"])
    write_field(out / "field.json", fld, c["profile_name"], c["source_name"], c["domain"])
    if want_csv:
        write_field_csv(out / "field.csv", fld)
        hist = fld.metadata["history"]
        write_columns(out / "residual_history.csv", ["iteration", "residual"],
                      [np.arange(len(hist)), hist])
    log(f"solve: {grid.n_points} points, {fld.metadata['iterations']} Newton iterations, "
        f"residual {fld.metadata['residual']:.3e}")
    ver = c["verify"]
    verdicts = {}
    status = EXIT_OK

    def guarded(tag, fn):
        nonlocal status
        try:
            return fn()
        except InapplicableError as e:
            log(f"{tag}: inapplicable: {e}")
            verdicts[tag] = False
            status = EXIT_INAPPLICABLE
            return {"inapplicable": str(e), "failed": e.failed}

    ids = []
    for item in ver.get("identities", []):
        iid = item if isinstance(item, str) else item["id"]
        tol = None if isinstance(item, str) else item.get("tol")
        tol = 10 * c["h"] if tol is None else float(tol)
        rep = guarded(f"identity:{iid}", lambda: run_identity(fld, iid))
        if "residual" in rep:
            rep["tol"] = tol
            rep["verdict"] = rep["residual"] <= tol
            verdicts[f"identity:{iid}"] = rep["verdict"]
        ids.append(rep)
    if ids:
        dump(out / "identities.json", ids)
    en = []
    for item in ver.get("energy", []):
        case = item.get("case", "auto")
        rep = guarded(f"energy:{case}", lambda: run_energy(fld, case, item.get("radii", [2, 4, 8])))
        if "verdict" in rep:
            verdicts[f"energy:{case}"] = rep["verdict"]
        en.append(rep)
    if en:
        dump(out / "energy.json", en)
    if ver.get("splitting"):
        sopt = ver["splitting"] if isinstance(ver["splitting"], dict) else {}
        rep = run_split(fld, sopt.get("tol"))
        expect = sopt.get("expect_1d", True)
        verdicts["splitting"] = rep["is_1d"] == expect
        dump(out / "split.json", rep)
        if want_csv and rep["is_1d"]:
            prof = splitting.detect_splitting(fld, sopt.get("tol")).profile
            write_columns(out / "profile.csv", ["t", "u", "uprime"], [prof.t, prof.u, prof.uprime])
    st = []
    for item in ver.get("stability", []):
        rep = run_stability(fld, item["mask"])
        rep["verdict"] = rep["lambda_min"] >= float(item.get("min", -1e-6))
        verdicts[f"stability:{item['mask']}"] = rep["verdict"]
        st.append(rep)
    if st:
        dump(out / "stability.json", st)
    kl = []
    for item in ver.get("killing", []):
        rep = run_killing(fld, item["X"])
        if "expect" in item:
            rep["verdict"] = rep["sign"] == item["expect"]
            verdicts[f"killing:{item['X']}"] = rep["verdict"]
        kl.append(rep)
    if kl:
        dump(out / "killing.json", kl)
    if ver.get("gradient_bound"):
        rep = guarded("gradient_bound", lambda: vars(solver.gradient_bound_check(fld)))
        if "verdict" in rep:
            verdicts["gradient_bound"] = rep["verdict"]
        dump(out / "gradient_bound.json", rep)
    failed = [k for k, v in verdicts.items() if not v]
    if status == EXIT_OK and failed:
        status = EXIT_VERDICT
    summary = {"name": c["name"], "verdicts": verdicts, "failed": failed, "exit": status}
    dump(out / "summary.json", summary)
    for k, v in verdicts.items():
        log(f"{k}: {'pass' if v else 'FAIL'}")
    return status, summary


def bundled_config(name: str) -> Path:
    return Path(str(resources.files("caplab") / "configs" / name))


# ------------------------------------------------------------------ commands

def _cmd_solve1d(a):
    prof = operators.parse_profile(a.profile)
    src = sources.parse_source(a.source)
    sol = shoot(prof, src, a.u0, a.c, (0.0, a.tmax), a.step)
    write_columns(a.out, ["t", "u", "uprime", "E"], [sol.t, sol.u, sol.uprime, sol.E])
    cls = sol.classification
    print(json.dumps(_jsonable({"termination": sol.termination, "drift": sol.drift,
                                "classification": cls.kind, "radius": cls.radius,
                                "t_stop": cls.t_stop, "n": int(sol.t.size)})))
    return EXIT_OK


def _cmd_solve2d(a):
    c = parse_config(load_json(a.config))
    fld = solver.solve_dirichlet(c["profile"], c["source"], build_grid(c["spec"], c["h"]),
                                 **c["solver"])
    write_field(a.out, fld, c["profile_name"], c["source_name"], c["domain"])
    if a.csv:
        write_field_csv(a.csv, fld)
    print(json.dumps({"points": fld.grid.n_points, "iterations": fld.metadata["iterations"],
                      "residual": fld.metadata["residual"]}))
    return EXIT_OK


def _emit(rep, out):
    if out:
        dump(out, rep)
    print(json.dumps(_jsonable(rep), sort_keys=True))


def _cmd_verify(a):
    fld = read_field(a.field)
    names = {k.lower(): k for k in identities.IDENTITY_REGISTRY}
    iid = names.get(a.identity.lower())
    if iid is None:
        raise ConfigError(f"unknown identity {a.identity!r}; known {sorted(identities.IDENTITY_REGISTRY)}")
    _emit(run_identity(fld, iid, a.X, a.cutoff, a.component), a.out)
    return EXIT_OK


def _cmd_stability(a):
    _emit(run_stability(read_field(a.field), a.mask), a.out)
    return EXIT_OK


def _cmd_killing(a):
    _emit(run_killing(read_field(a.field), a.X), a.out)
    return EXIT_OK


def _cmd_energy(a):
    radii = [float(r) for r in a.radii.split(",")]
    rep = run_energy(read_field(a.field), a.case, radii)
    _emit(rep, a.out)
    return EXIT_OK if rep["verdict"] else EXIT_VERDICT


def _cmd_classify(a):
    rep = run_split(read_field(a.field), a.tol)
    _emit(rep, a.out)
    return EXIT_OK


def _cmd_run(a):
    path = Path(a.config)
    if not path.exists() and bundled_config(a.config).exists():
        path = bundled_config(a.config)
    status, _ = run_pipeline(load_json(path), a.out_dir)
    return status


def _cmd_list(a):
    print(json.dumps(list_builtins(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="caplab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve1d", help="shoot a 1D profile")
    s.add_argument("--profile", required=True)
    s.add_argument("--source", required=True)
    s.add_argument("--u0", type=float, required=True)
    s.add_argument("--c", type=float, required=True)
    s.add_argument("--tmax", type=float, required=True)
    s.add_argument("--step", type=float, default=1e-4)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_solve1d)

    s = sub.add_parser("solve2d", help="solve the Dirichlet problem of a config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--csv")
    s.set_defaults(func=_cmd_solve2d)

    s = sub.add_parser("verify", help="evaluate an identity on a stored field")
    s.add_argument("--field", required=True)
    s.add_argument("--identity", required=True)
    s.add_argument("--X")
    s.add_argument("--cutoff")
    s.add_argument("--component", type=int)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_verify)

    s = sub.add_parser("stability", help="smallest eigenvalue of the stability form")
    s.add_argument("--field", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_stability)

    s = sub.add_parser("killing", help="sign of <grad u, X> for a Killing field")
    s.add_argument("--field", required=True)
    s.add_argument("--X", required=True)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_killing)

    s = sub.add_parser("energy", help="calibration bound or moderate-energy dispatch")
    s.add_argument("--field", required=True)
    s.add_argument("--case", default="auto", choices=("auto",) + energy.CASES)
    s.add_argument("--radii", default="2,4,8")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_energy)

    s = sub.add_parser("classify", help="detect one-dimensionality")
    s.add_argument("--field", required=True)
    s.add_argument("--tol", type=float)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_classify)

    s = sub.add_parser("run", help="run a config pipeline (bundled: strip-capillary.json)")
    s.add_argument("config")
    s.add_argument("--out-dir")
    s.set_defaults(func=_cmd_run)

    s = sub.add_parser("list", help="print the builtin registries")
    s.set_defaults(func=_cmd_list)
    return p


def _origin(exc) -> str:
    """Name of the innermost caplab module in the traceback."""
    name = "caplab"
    tb = exc.__traceback__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("caplab"):
            name = mod
        tb = tb.tb_next
    return name


def main(argv=None) -> int:
    if not (_threads.isdigit() and int(_threads) > 0):
        print(f"caplab: CAPLAB_THREADS must be a positive integer, got {_threads!r}", file=sys.stderr)
        return EXIT_USAGE
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except InapplicableError as e:
        print(f"{_origin(e)}: inapplicable: {e}", file=sys.stderr)
        return EXIT_INAPPLICABLE
    except (NonConvergenceError, RegimeError) as e:
        print(f"{_origin(e)}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ConfigError, CaplabError, ValueError, KeyError, OSError) as e:
        print(f"{_origin(e)}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # pragma: no cover
        traceback.print_exc()
        print(f"{_origin(e)}: unexpected {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
