"""Command-line interface.

Every command writes plot-ready CSV/JSON into ``--out`` and is
deterministic given its configuration and seed.  Exit codes: 0 success,
1 invalid configuration or input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import specfun
from .errors import BallOptError, NumericalError, ValidationError
from .model import (
    ProblemParams,
    centered_ball_density,
    density_from_support,
    hausdorff_distance,
    make_radial_density,
    shell_volume,
    sphere_area,
)
from .output import ensure_dir, write_csv, write_json
from .radial import DEFAULT_GRIDSIZE, principal_eigen, solve_two_density
from .rearrange import concavity_probe, homogenized_path, minimize_radial
from .sampling import perturbed_centered, random_bang_bang, rng_from_seed
from .spectrum import (
    DEFAULT_KMAX,
    estimate_alpha_bar,
    stability_coefficients,
)

PARAM_KEYS = ("n", "R", "alpha", "kappa", "m0")


@dataclass
class RunConfig:
    params: ProblemParams
    out: str = "."
    seed: int = 0
    gridsize: int = DEFAULT_GRIDSIZE
    kmax: int = DEFAULT_KMAX
    alphas: list = field(default_factory=list)
    method: str = "shooting"
    workers: int = 1
    options: dict = field(default_factory=dict)


def parse_sweep(text: str) -> list:
    """``start:stop:count`` -> evenly spaced values (count >= 1, start <= stop)."""
    try:
        a, b, c = text.split(":")
        a, b, c = float(a), float(b), int(c)
    except ValueError:
        raise ValidationError(f"sweep must be start:stop:count, got {text!r}") from None
    if c < 1 or a > b:
        raise ValidationError(f"invalid sweep {text!r}")
    if c == 1:
        return [a]
    return [float(x) for x in np.linspace(a, b, c)]


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    return data


def _load_density_file(path, params, check_mean):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read density {path}: {exc}") from None
    return _density_from_obj(data, params, check_mean)


def _density_from_obj(data, params, check_mean):
    if not isinstance(data, dict) or "breakpoints" not in data or "values" not in data:
        raise ValidationError("density must be an object with breakpoints and values")
    try:
        return make_radial_density(data["breakpoints"], data["values"], params, check_mean)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed density: {exc}") from None


def build_config(args) -> tuple:
    file_cfg = _load_config(args.config)
    pdict = dict(ProblemParams().to_dict())
    pdict.update(file_cfg.get("params", {}))
    for key in PARAM_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            pdict[key] = val
    params = ProblemParams.from_dict(pdict)

    def pick(name, default):
        val = getattr(args, name, None)
        if val is not None:
            return val
        return file_cfg.get(name, default)

    seed = int(pick("seed", 0))
    if not 0 <= seed < 2 ** 64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    sweep = pick("alpha_sweep", None)
    cfg = RunConfig(
        params=params,
        out=pick("out", "."),
        seed=seed,
        gridsize=int(pick("gridsize", DEFAULT_GRIDSIZE)),
        kmax=int(pick("kmax", DEFAULT_KMAX)),
        alphas=parse_sweep(sweep) if sweep else [],
        method=pick("method", "shooting"),
        workers=int(pick("workers", 1)),
    )
    if cfg.method not in ("fd", "shooting", "both"):
        raise ValidationError(f"unknown method {cfg.method!r}")
    return cfg, file_cfg


def _single_method(cfg):
    return "shooting" if cfg.method == "both" else cfg.method


# --------------------------------------------------------------------------
# commands


def cmd_eigen(args) -> int:
    cfg, file_cfg = build_config(args)
    p = cfg.params
    if args.density:
        m = _load_density_file(args.density, p, check_mean=False)
    elif "density" in file_cfg:
        m = _density_from_obj(file_cfg["density"], p, check_mean=False)
    elif args.constant is not None:
        m = make_radial_density((0.0, p.R), (args.constant,), p, check_mean=False)
    else:
        m = centered_ball_density(p)
    m1 = None
    if args.diffusion_density:
        m1 = _load_density_file(args.diffusion_density, p, check_mean=False)
    elif "diffusion_density" in file_cfg:
        m1 = _density_from_obj(file_cfg["diffusion_density"], p, check_mean=False)

    methods = ["fd", "shooting"] if cfg.method == "both" else [cfg.method]
    results = []
    for meth in methods:
        if m1 is not None:
            res = solve_two_density(p, m1, m, cfg.gridsize, meth)
        else:
            res = principal_eigen(p, m, meth, cfg.gridsize)
        results.append(res)
    out = ensure_dir(cfg.out)
    doc = {"params": p.to_dict(), "density": m.to_dict()}
    if m1 is not None:
        doc["diffusion_density"] = m1.to_dict()
    if len(results) == 1:
        doc.update(results[0].to_dict())
    else:
        doc["results"] = [r.to_dict() for r in results]
        doc["lambda"] = results[-1].eigenvalue
        doc["difference"] = results[0].eigenvalue - results[1].eigenvalue
    write_json(os.path.join(out, "eigen.json"), doc)
    results[-1].write_phi_csv(os.path.join(out, "phi.csv"))
    print(f"lambda = {results[-1].eigenvalue:.17g}")
    return 0


def _annulus(params, radii):
    ra = float(radii[0])
    need = params.resource_volume
    rb_auto = (ra ** params.n + need * params.n / sphere_area(params.n)) ** (1.0 / params.n)
    rb = float(radii[1]) if len(radii) > 1 else rb_auto
    if not 0 <= ra < rb <= params.R:
        raise ValidationError(f"invalid annulus [{ra}, {rb}]")
    if len(radii) > 1 and abs(float(shell_volume(ra, rb, params.n)) - need) > 1e-12 * params.volume:
        raise ValidationError(f"annulus [{ra}, {rb}] does not carry the admissible volume")
    return density_from_support([(ra, rb)], params)


def cmd_optimize(args) -> int:
    cfg, file_cfg = build_config(args)
    p = cfg.params
    init = args.init or file_cfg.get("init", ["centered"])
    if isinstance(init, str):
        init = [init]
    kind = init[0]
    if kind == "centered":
        m = centered_ball_density(p)
    elif kind == "annulus":
        if len(init) < 2:
            raise ValidationError("--init annulus needs r_a [r_b]")
        m = _annulus(p, init[1:])
    elif kind == "random":
        m = random_bang_bang(p, rng_from_seed(cfg.seed))
    elif kind == "file":
        if len(init) < 2:
            raise ValidationError("--init file needs a path")
        m = _load_density_file(init[1], p, check_mean=True)
    else:
        raise ValidationError(f"unknown init {kind!r}")
    trace = minimize_radial(p, m, args.max_iters, args.tol, _single_method(cfg), cfg.gridsize)
    out = ensure_dir(cfg.out)
    trace.write_csv(os.path.join(out, "trace.csv"))
    m_star = centered_ball_density(p)
    lam_star = principal_eigen(p, m_star, _single_method(cfg), cfg.gridsize).eigenvalue
    final = trace.final
    write_json(os.path.join(out, "optimize.json"), {
        "params": p.to_dict(), "init": m.to_dict(), "final": final.density.to_dict(),
        "lambda_final": final.eigenvalue, "lambda_centered": lam_star,
        "hausdorff_to_centered": hausdorff_distance(final.density, m_star),
        "iterations": len(trace.iterations) - 1, "termination": trace.termination})
    print(f"{trace.termination} after {len(trace.iterations) - 1} iterations, "
          f"lambda = {final.eigenvalue:.17g}")
    return 0


def cmd_path(args) -> int:
    cfg, file_cfg = build_config(args)
    p = cfg.params
    m_star = centered_ball_density(p)
    if args.density:
        m_tilde = _load_density_file(args.density, p, check_mean=True)
    elif "density" in file_cfg:
        m_tilde = _density_from_obj(file_cfg["density"], p, check_mean=True)
    else:
        m_tilde = perturbed_centered(p, rng_from_seed(cfg.seed), args.max_dist)
    ts = np.linspace(0.0, 1.0, args.t_samples)
    meth = _single_method(cfg)
    path = homogenized_path(p, m_star, m_tilde, ts, args.eps, cfg.gridsize, meth)
    conc = concavity_probe(p, m_star, m_tilde, ts, meth, cfg.gridsize)
    out = ensure_dir(cfg.out)
    path.write_csv(os.path.join(out, "path.csv"))
    d2 = np.concatenate([[np.nan], conc.second_differences, [np.nan]])
    write_csv(os.path.join(out, "concavity.csv"), ("t", "lambda", "second_difference"),
              zip(conc.t, conc.values, d2))
    write_json(os.path.join(out, "path.json"), {
        "params": p.to_dict(), "m_star": m_star.to_dict(), "m_tilde": m_tilde.to_dict(),
        "hausdorff": hausdorff_distance(m_star, m_tilde)})
    print(f"f(0) = {path.f[0]:.17g}, f(1) = {path.f[-1]:.17g}")
    return 0


def cmd_stability(args) -> int:
    cfg, _ = build_config(args)
    alphas = cfg.alphas or [cfg.params.alpha]
    rows = []
    summaries = []
    for a in alphas:
        p = cfg.params.replace(alpha=a)
        spec = stability_coefficients(p, cfg.kmax, cfg.gridsize, cfg.workers)
        if args.estimate_alpha_bar:
            spec.alpha_bar_estimate = estimate_alpha_bar(p, cfg.kmax, gridsize=cfg.gridsize)
        summaries.append(spec.summary())
        rows.extend((a,) + r for r in spec.rows())
    out = ensure_dir(cfg.out)
    if len(alphas) == 1:
        write_csv(os.path.join(out, "spectrum.csv"), ("k", "omega", "zeta", "omega_plus_zeta"),
                  [r[1:] for r in rows])
        write_json(os.path.join(out, "stability.json"), summaries[0])
    else:
        write_csv(os.path.join(out, "spectrum.csv"),
                  ("alpha", "k", "omega", "zeta", "omega_plus_zeta"), rows)
        write_json(os.path.join(out, "stability.json"), {"sweep": summaries})
    print(f"margin = {summaries[0]['margin']:.17g}")
    return 0


def _sweep_cell(job):
    kind, pdict, kmax, gridsize, method = job
    p = ProblemParams.from_dict(pdict)
    if kind == "stability":
        spec = stability_coefficients(p, kmax, gridsize)
        lam0 = spec.ground.eigenvalue
        return [(p.n, p.R, p.alpha, p.kappa, p.m0, k, lam0, o, z, o + z)
                for k, o, z in spec.entries]
    lam = principal_eigen(p, centered_ball_density(p), method, gridsize).eigenvalue
    return [(p.n, p.R, p.alpha, p.kappa, p.m0, lam)]


def cmd_sweep(args) -> int:
    cfg, _ = build_config(args)
    alphas = cfg.alphas or [cfg.params.alpha]
    kind = args.quantity
    dims = args.dims or [cfg.params.n]
    jobs = []
    for n in dims:
        for a in alphas:
            p = cfg.params.replace(n=int(n), alpha=a)
            jobs.append((kind, p.to_dict(), cfg.kmax, cfg.gridsize, _single_method(cfg)))
    if kind == "stability" and any(int(n) != 2 for n in dims):
        raise ValidationError("stability sweeps require n = 2")
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(j) for j in jobs]
    rows = [r for cell in results for r in cell]
    if kind == "stability":
        header = ("n", "R", "alpha", "kappa", "m0", "k", "lambda0", "omega", "zeta", "omega_plus_zeta")
    else:
        header = ("n", "R", "alpha", "kappa", "m0", "lambda")
    out = ensure_dir(cfg.out)
    write_csv(os.path.join(out, "sweep.csv"), header, rows)
    print(f"{len(rows)} rows")
    return 0


def cmd_selftest(args) -> int:
    rows = specfun.selftest()
    width = max(len(r[0]) for r in rows)
    for name, err, tol, ok in rows:
        print(f"{name:<{width}}  {err:12.3e}  {tol:9.1e}  {'PASS' if ok else 'FAIL'}")
    return 0 if all(r[3] for r in rows) else 2


# --------------------------------------------------------------------------


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override it)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    common.add_argument("--gridsize", type=int, help="cells per unit radius")
    common.add_argument("--kmax", type=int, help="highest Fourier mode")
    common.add_argument("--alpha-sweep", dest="alpha_sweep", help="start:stop:count")
    common.add_argument("--method", choices=("fd", "shooting", "both"))
    common.add_argument("--workers", type=int, help="parallel worker processes")
    common.add_argument("--json-errors", action="store_true", dest="json_errors",
                        help="report errors as JSON on stderr")
    common.add_argument("--n", type=int)
    common.add_argument("--R", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--kappa", type=float)
    common.add_argument("--m0", type=float)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="ballopt", description="Principal eigenvalue optimization for drifted diffusion on the ball.")
    sub = parser.add_subparsers(dest="command", metavar="{eigen,optimize,path,stability,sweep}")
    sub.required = True

    p = sub.add_parser("eigen", parents=[common], help="principal eigenpair of one density")
    p.add_argument("--density", help="density JSON {breakpoints, values}")
    p.add_argument("--diffusion-density", dest="diffusion_density",
                   help="separate density entering the diffusion coefficient")
    p.add_argument("--constant", type=float, help="constant density value")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("optimize", parents=[common], help="rearrangement descent")
    p.add_argument("--init", nargs="+", help="centered | annulus r_a [r_b] | random | file PATH")
    p.add_argument("--max-iters", dest="max_iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("path", parents=[common], help="homogenized path and concavity probe")
    p.add_argument("--density", help="bang-bang endpoint JSON (default: random perturbation)")
    p.add_argument("--max-dist", dest="max_dist", type=float, default=0.05)
    p.add_argument("--t-samples", dest="t_samples", type=int, default=9)
    p.add_argument("--eps", type=float, default=1e-4)
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("stability", parents=[common], help="shape stability spectrum (n=2)")
    p.add_argument("--estimate-alpha-bar", dest="estimate_alpha_bar", action="store_true")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("sweep", parents=[common], help="parameter sweeps")
    p.add_argument("--quantity", choices=("stability", "eigen"), default="stability")
    p.add_argument("--dims", type=int, nargs="+")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("specfun-selftest", parents=[common])
    p.set_defaults(func=cmd_selftest)
    return parser


def _report(exc, code, as_json):
    if as_json:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "exit_code": code}) + "\n")
    else:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        return _report(exc, 1, args.json_errors)
    except NumericalError as exc:
        return _report(exc, 2, args.json_errors)
    except BallOptError as exc:
        return _report(exc, 2, args.json_errors)


if __name__ == "__main__":
    sys.exit(main())
