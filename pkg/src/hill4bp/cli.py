"""Command-line surface: reproducible runs with manifest-stamped outputs.

Every subcommand writes its data files plus a ``<command>_manifest.json``
recording the command, resolved parameters, tolerances, code version, wall
time, output list, and any warnings raised by lower layers.  CSV bodies are
deterministic for fixed parameters (17-significant-digit floats, ``\\n``
line endings), so re-runs are byte-identical; manifests differ only in wall
time.

Exit codes: 0 success, 2 domain error, 3 numerical non-convergence,
64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .equilibria import (EquilibriumLabel, charpoly_coefficients, classify,
                         critical_mass_ratio, equilibrium_points)
from .errors import ConvergenceError, DomainError, StiffnessError
from .integrate import DEFAULT_ATOL, DEFAULT_RTOL
from .manifolds import (ManifoldSense, RegionSide, first_intersection,
                        globalize, seed_manifold)
from .model import (Frame, GridSpec, HillField, ModelParams, ScaledR4BPField,
                    hill_region_descriptor, hill_region_mask, hill_region_to_csv)
from .orbits import (FamilyTag, continue_family, detect_pitchfork,
                     g_family_seed, lyapunov_orbit_at_jacobi,
                     lyapunov_guess, correct_symmetric, FixedQuantity)
from .poincare import SectionId, make_section, scan
from .regularization import regularized_energy

USAGE_EXIT = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                             for v in row) + "\n")


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


class RunContext:
    """Collects outputs and warnings; writes the manifest at the end."""

    def __init__(self, command: str, out_dir: str, params: dict, tolerances: dict):
        self.command = command
        self.out_dir = out_dir
        self.params = params
        self.tolerances = tolerances
        self.outputs = []
        self.warnings = []
        self.t0 = time.monotonic()
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def warn(self, message: str) -> None:
        self.warnings.append(message)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "parameters": self.params,
            "tolerances": self.tolerances,
            "code_version": __version__,
            "wall_time_s": time.monotonic() - self.t0,
            "outputs": list(self.outputs),
            "warnings": list(self.warnings),
        }
        path = os.path.join(self.out_dir, f"{self.command.replace('-', '_')}_manifest.json")
        _write_json(path, manifest)
        print(f"[{self.command}] wrote {len(self.outputs)} output(s) to {self.out_dir}")


def _load_config(path) -> dict:
    out = {}
    if not path:
        return out
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _resolve(args, config: dict, key: str, default, cast=float):
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in config:
        return cast(config[key])
    return default


def _threads(args, config) -> int:
    env = os.environ.get("HILL4BP_THREADS")
    return int(_resolve(args, config, "threads", int(env) if env else 1, int))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_equilibria(args, config) -> int:
    mu = float(_resolve(args, config, "mu", 0.00095))
    sweep = int(_resolve(args, config, "sweep", 0, int))
    ctx = RunContext("equilibria", args.out_dir, {"mu": mu, "sweep": sweep}, {})
    points = []
    for info in equilibrium_points(mu):
        A, B, D = info.charpoly
        points.append({
            "label": info.label.value,
            "position": [float(v) for v in info.position],
            "jacobi": info.jacobi,
            "A": A, "B": B, "D": D,
            "eigenvalues": [[ev.real, ev.imag] for ev in info.eigenvalues],
            "kind": info.kind.value,
        })
    if mu == 0.0:
        ctx.warn("L3/L4 recede to infinity at mu = 0; only L1/L2 reported")
    _write_json(ctx.path("equilibria.json"), {"mu": mu, "points": points})
    if sweep > 0:
        for label in (EquilibriumLabel.L1, EquilibriumLabel.L3):
            rows = []
            for m in np.linspace(1e-6, 0.5, sweep):
                (A, B, D), _ = charpoly_coefficients(label, float(m))
                rows.append((float(m), A, B, D, classify(A, B, D).value))
            _write_csv(ctx.path(f"equilibria_sweep_{label.value}.csv"),
                       ["mu", "A", "B", "D", "kind"], rows)
    ctx.finish()
    return 0


def _cmd_mu_critical(args, config) -> int:
    tol = float(_resolve(args, config, "tol", 1e-12))
    ctx = RunContext("mu-critical", args.out_dir, {"tol": tol}, {})
    result = critical_mass_ratio(tol)
    if result.discrepancy_flag:
        ctx.warn("computed root of D(mu)=0 differs from the quoted closed-form "
                 f"value by {abs(result.computed_root - result.paper_value):.6g}")
    _write_json(ctx.path("mu_critical.json"), result.as_dict())
    ctx.finish()
    return 0


def _cmd_hill_region(args, config) -> int:
    mu = float(_resolve(args, config, "mu", 0.00095))
    C = float(_resolve(args, config, "jacobi", 4.32572))
    frame = Frame(_resolve(args, config, "frame", "rotated", str))
    nx = int(_resolve(args, config, "nx", 400, int))
    ny = int(_resolve(args, config, "ny", 400, int))
    xr = (float(_resolve(args, config, "xmin", -1.2)), float(_resolve(args, config, "xmax", 1.2)))
    yr = (float(_resolve(args, config, "ymin", -1.2)), float(_resolve(args, config, "ymax", 1.2)))
    params = ModelParams(mu, frame)
    grid = GridSpec(xr, yr, nx, ny)
    ctx = RunContext("hill-region", args.out_dir,
                     {"mu": mu, "jacobi": C, "frame": frame.value,
                      "nx": nx, "ny": ny, "x_range": list(xr), "y_range": list(yr)}, {})
    mask = hill_region_mask(grid, C, params)
    hill_region_to_csv(grid, mask, ctx.path("hill_region.csv"))
    _write_json(ctx.path("hill_region.json"),
                hill_region_descriptor(grid, C, params, "hill_region.csv"))
    ctx.finish()
    return 0


def _cmd_poincare(args, config) -> int:
    mu = float(_resolve(args, config, "mu", 0.0))
    C = float(_resolve(args, config, "jacobi", 4.329636))
    n = int(_resolve(args, config, "grid", 60, int))
    iters = int(_resolve(args, config, "iters", 300, int))
    lim = float(_resolve(args, config, "extent", 1.0))
    rtol = float(_resolve(args, config, "rtol", 1e-12))
    atol = float(_resolve(args, config, "atol", 1e-12))
    threads = _threads(args, config)
    h_reg = regularized_energy(C)
    grid = GridSpec((-lim, lim), (-lim, lim), n, n)
    ctx = RunContext("poincare", args.out_dir,
                     {"mu": mu, "jacobi": C, "h_reg": h_reg, "grid": n,
                      "iters": iters, "extent": lim, "threads": threads},
                     {"rtol": rtol, "atol": atol})
    result = scan(h_reg, mu, grid, iters, rtol=rtol, atol=atol)
    _write_csv(ctx.path("poincare.csv"), ["seed_id", "iter", "X", "PX"],
               ((sid, k, float(X), float(PX)) for sid, k, X, PX in result.rows()))
    if result.escaped:
        ctx.warn(f"{result.escaped} seed orbit(s) escaped the regularized disk")
    _write_json(ctx.path("poincare_summary.json"),
                {"seeds_total": n * n, "seeds_skipped": result.skipped,
                 "seeds_escaped": result.escaped, "iterates": iters})
    ctx.finish()
    return 0


def _cmd_gfamily(args, config) -> int:
    mu = float(_resolve(args, config, "mu", 0.00095))
    x0_start = float(_resolve(args, config, "x0_start", 0.15))
    x0_end = float(_resolve(args, config, "x0_end", 0.32))
    rtol = float(_resolve(args, config, "rtol", DEFAULT_RTOL))
    atol = float(_resolve(args, config, "atol", DEFAULT_ATOL))
    ctx = RunContext("gfamily", args.out_dir,
                     {"mu": mu, "x0_start": x0_start, "x0_end": x0_end},
                     {"rtol": rtol, "atol": atol})
    seed = g_family_seed(mu, x0_start, rtol=rtol, atol=atol)
    steps = max(8, int(abs(x0_end - x0_start) / 1e-3) + 2)
    fam = continue_family(seed, steps=steps, direction=np.sign(x0_end - x0_start),
                          dx0=1e-3, rtol=rtol, atol=atol)
    orbits = [o for o in fam.orbits if min(x0_start, x0_end) - 1e-9 <= o.x0 <= max(x0_start, x0_end) + 1e-9]
    _write_csv(ctx.path("gfamily.csv"),
               ["x0", "ydot0", "period", "jacobi", "stability_index"],
               ((o.x0, o.ydot0, o.period, o.jacobi, o.stability_index) for o in orbits))
    record = detect_pitchfork(orbits, mu, rtol=rtol, atol=atol)
    report = {"found": record is not None}
    if record is not None:
        report.update({
            "C_star": record.C_star,
            "x0_star": record.x0_star,
            "branch_check_jacobi": record.branch_check_jacobi,
            "branches": [{"x0": b.x0, "ydot0": b.ydot0, "period": b.period,
                          "jacobi": b.jacobi} for b in record.branches],
        })
        if len(record.branches) < 2:
            ctx.warn("fewer than two bifurcating branches were verified")
    else:
        ctx.warn("no stability-index crossing of +1 inside the continuation range")
    _write_json(ctx.path("gfamily_bifurcation.json"), report)
    if fam.terminated == "step-underflow":
        ctx.warn("continuation truncated by step underflow")
    ctx.finish()
    return 0


def _cmd_lyapunov(args, config) -> int:
    mu = float(_resolve(args, config, "mu", 0.00095))
    C_end = float(_resolve(args, config, "jacobi_end", 4.3))
    label = EquilibriumLabel(_resolve(args, config, "point", "L1", str))
    rtol = float(_resolve(args, config, "rtol", DEFAULT_RTOL))
    atol = float(_resolve(args, config, "atol", DEFAULT_ATOL))
    ctx = RunContext("lyapunov", args.out_dir,
                     {"mu": mu, "jacobi_end": C_end, "point": label.value},
                     {"rtol": rtol, "atol": atol})
    from .equilibria import equilibrium_point
    point = equilibrium_point(label, mu)
    state, _ = lyapunov_guess(point, 1e-3, mu)
    seed = correct_symmetric((state[0], state[3]), mu, FixedQuantity.FIX_X0,
                             family=FamilyTag.LYAPUNOV_L1 if label is EquilibriumLabel.L1
                             else FamilyTag.LYAPUNOV_L2,
                             rtol=rtol, atol=atol)
    omegas = [abs(ev.imag) for ev in point.eigenvalues if abs(ev.real) < 1e-9]
    slope0 = -(max(omegas) ** 2 + point.second_partials[0]) / 2.0
    fam = continue_family(seed, direction=np.sign(point.position[0]), dx0=5e-4,
                          dx0_max=3e-3, target_jacobi=C_end, steps=4000,
                          slope0=slope0, rtol=rtol, atol=atol)
    _write_csv(ctx.path("lyapunov.csv"),
               ["x0", "ydot0", "period", "jacobi", "stability_index"],
               ((o.x0, o.ydot0, o.period, o.jacobi, o.stability_index)
                for o in fam.orbits))
    if fam.terminated != "target":
        ctx.warn(f"family terminated early: {fam.terminated}")
    ctx.finish()
    return 0


def _cmd_manifolds(args, config) -> int:
    mu = float(_resolve(args, config, "mu", 0.00095))
    C = float(_resolve(args, config, "jacobi", 4.3))
    region = RegionSide(_resolve(args, config, "region", "inner", str))
    max_cuts = int(_resolve(args, config, "max_cuts", 6, int))
    n_seeds = int(_resolve(args, config, "seeds", 200, int))
    threshold = float(_resolve(args, config, "threshold",
                               1e-3 if region is RegionSide.INNER else 0.2))
    tmax = float(_resolve(args, config, "tmax",
                          200.0 if region is RegionSide.INNER else 2000.0))
    rtol = float(_resolve(args, config, "rtol", 5e-11))
    atol = float(_resolve(args, config, "atol", 5e-11))
    eps = float(_resolve(args, config, "epsilon", 1e-6))
    ctx = RunContext("manifolds", args.out_dir,
                     {"mu": mu, "jacobi": C, "region": region.value,
                      "max_cuts": max_cuts, "seeds": n_seeds,
                      "threshold": threshold, "epsilon": eps, "tmax": tmax},
                     {"rtol": rtol, "atol": atol})
    orbit = lyapunov_orbit_at_jacobi(mu, C)
    section = make_section(SectionId.SIGMA_PLUS if region is RegionSide.INNER
                           else SectionId.SIGMA_PRIME, mu)
    rows = []
    globs = {}
    for sense in (ManifoldSense.UNSTABLE, ManifoldSense.STABLE):
        branch = seed_manifold(orbit, mu, sense, region, epsilon=eps, n=n_seeds)
        glob = globalize(branch, section, max_cuts, adaptive_threshold=threshold,
                         rtol=rtol, atol=atol, tmax=tmax)
        globs[sense] = glob
        if glob.dropped:
            ctx.warn(f"{glob.dropped} {sense.value} seed(s) hit the collision guard")
        for ncut, curve in sorted(glob.curves.items()):
            for order, (y, ydot) in enumerate(curve.points):
                rows.append((sense.value, ncut, order, float(y), float(ydot)))
    _write_csv(ctx.path("manifolds.csv"),
               ["sense", "cut_index", "point_order", "y", "ydot"], rows)
    records = first_intersection(globs[ManifoldSense.UNSTABLE],
                                 globs[ManifoldSense.STABLE])
    _write_json(ctx.path("manifolds_homoclinic.json"), {
        "jacobi": C,
        "mu": mu,
        "region": region.value,
        "section": section.id.value,
        "orbit": {"x0": orbit.x0, "ydot0": orbit.ydot0, "period": orbit.period,
                  "stability_index": orbit.stability_index},
        "records": [{"n_u": r.n_u, "n_s": r.n_s,
                     "points": [[float(a), float(b)] for a, b in r.points]}
                    for r in records],
        "conventions": "cut index counts every transversal crossing of the full "
                       "section plane; indices shift by at most one under "
                       "different seeding conventions",
    })
    ctx.finish()
    return 0


def _cmd_compare_r4bp(args, config) -> int:
    mu = float(_resolve(args, config, "mu", 0.00095))
    m3 = float(_resolve(args, config, "m3", 7.03e-12))
    samples = int(_resolve(args, config, "samples", 100, int))
    seed = int(_resolve(args, config, "seed", 0, int))
    ctx = RunContext("compare-r4bp", args.out_dir,
                     {"mu": mu, "m3": m3, "samples": samples, "seed": seed}, {})
    hill = HillField(ModelParams(mu, Frame.UNROTATED))
    scaled = ScaledR4BPField(mu, m3)
    rng = np.random.default_rng(seed)
    rows = []
    sup = 0.0
    for k in range(samples):
        pos = rng.normal(size=2)
        pos *= rng.uniform(0.15, 1.0) / np.linalg.norm(pos)
        vel = rng.normal(size=2)
        vel *= rng.uniform(0.0, 1.0) / np.linalg.norm(vel)
        s = [pos[0], pos[1], vel[0], vel[1]]
        diff = float(np.max(np.abs(np.asarray(scaled(0.0, s)) - np.asarray(hill(0.0, s)))))
        sup = max(sup, diff)
        rows.append((k, diff))
    _write_csv(ctx.path("compare_r4bp.csv"), ["sample_id", "field_diff"], rows)
    _write_json(ctx.path("compare_r4bp.json"),
                {"mu": mu, "m3": m3, "samples": samples, "sup_diff": sup})
    ctx.finish()
    return 0


def _cmd_convergence(args, config) -> int:
    mu = float(_resolve(args, config, "mu", 0.00095))
    m3_list = [float(v) for v in
               str(_resolve(args, config, "m3_list", "1e-6,1e-8,1e-10,1e-12", str)).split(",")]
    samples = int(_resolve(args, config, "samples", 60, int))
    seed = int(_resolve(args, config, "seed", 0, int))
    ctx = RunContext("convergence", args.out_dir,
                     {"mu": mu, "m3_list": m3_list, "samples": samples, "seed": seed}, {})
    hill = HillField(ModelParams(mu, Frame.UNROTATED))
    rng = np.random.default_rng(seed)
    states = []
    for _ in range(samples):
        pos = rng.normal(size=2)
        pos *= rng.uniform(0.15, 1.0) / np.linalg.norm(pos)
        vel = rng.normal(size=2)
        vel *= rng.uniform(0.0, 1.0) / np.linalg.norm(vel)
        states.append([pos[0], pos[1], vel[0], vel[1]])
    rows = []
    for m3 in m3_list:
        scaled = ScaledR4BPField(mu, m3)
        sup = max(float(np.max(np.abs(np.asarray(scaled(0.0, s)) - np.asarray(hill(0.0, s)))))
                  for s in states)
        rows.append((m3, sup))
    _write_csv(ctx.path("convergence.csv"), ["m3", "sup_diff"], rows)
    slope, intercept = np.polyfit(np.log([r[0] for r in rows]),
                                  np.log([r[1] for r in rows]), 1)
    if abs(slope - 1.0 / 3.0) > 0.05:
        ctx.warn(f"convergence slope {slope:.4f} is off the expected 1/3")
    _write_json(ctx.path("convergence.json"),
                {"mu": mu, "samples": samples, "slope": float(slope),
                 "intercept": float(intercept),
                 "points": [{"m3": m3, "sup_diff": d} for m3, d in rows]})
    ctx.finish()
    return 0


# ---------------------------------------------------------------------------

def _add_common(sp):
    sp.add_argument("--out-dir", default=None)
    sp.add_argument("--config", default=None)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--rtol", type=float, default=None)
    sp.add_argument("--atol", type=float, default=None)


def build_parser() -> _Parser:
    p = _Parser(prog="hill4bp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("equilibria")
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--sweep", type=int, default=None)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_equilibria)

    sp = sub.add_parser("mu-critical")
    sp.add_argument("--tol", type=float, default=None)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_mu_critical)

    sp = sub.add_parser("hill-region")
    for flag in ("--mu", "--jacobi", "--xmin", "--xmax", "--ymin", "--ymax"):
        sp.add_argument(flag, type=float, default=None)
    sp.add_argument("--nx", type=int, default=None)
    sp.add_argument("--ny", type=int, default=None)
    sp.add_argument("--frame", choices=["rotated", "unrotated"], default=None)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_hill_region)

    sp = sub.add_parser("poincare")
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--jacobi", type=float, default=None)
    sp.add_argument("--grid", type=int, default=None)
    sp.add_argument("--iters", type=int, default=None)
    sp.add_argument("--extent", type=float, default=None)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_poincare)

    sp = sub.add_parser("gfamily")
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--x0-start", dest="x0_start", type=float, default=None)
    sp.add_argument("--x0-end", dest="x0_end", type=float, default=None)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_gfamily)

    sp = sub.add_parser("lyapunov")
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--jacobi-end", dest="jacobi_end", type=float, default=None)
    sp.add_argument("--point", choices=["L1", "L2"], default=None)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_lyapunov)

    sp = sub.add_parser("manifolds")
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--jacobi", type=float, default=None)
    sp.add_argument("--region", choices=["inner", "outer"], default=None)
    sp.add_argument("--max-cuts", dest="max_cuts", type=int, default=None)
    sp.add_argument("--seeds", type=int, default=None)
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--tmax", type=float, default=None)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_manifolds)

    sp = sub.add_parser("compare-r4bp")
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--m3", type=float, default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_compare_r4bp)

    sp = sub.add_parser("convergence")
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--m3-list", dest="m3_list", default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    _add_common(sp)
    sp.set_defaults(fn=_cmd_convergence)

    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _load_config(args.config)
    if args.out_dir is None:
        args.out_dir = config.get("out_dir", f"hill4bp_{args.command.replace('-', '_')}")
    try:
        return args.fn(args, config)
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, StiffnessError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
