"""Command-line interface: ``matchctl <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 domain outcome
(diverged run or residual above tolerance).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ballbeam import (
    ServoActuator,
    closed_loop_family,
    linearize_control,
    open_loop_system,
    params_report,
)
from .ballbeam.params import PRINTED_DIMENSIONLESS, DimensionlessParams
from .config import build_model, grid_axes, initial_state, load_config, sim_config, _physical
from .errors import ConfigError, MatchCtlError
from .geometry import MetricField
from .linear import (
    LinearFeedback,
    jordan_oracle,
    lemma1_residual,
    lemma1_solve,
    random_admissible_instance,
    symmetric_solution_basis,
    theorem2_match,
    verify_theorem2,
)
from .matching import ClosedLoopSpec, residual_sweep
from .sim import lyapunov_report, simulate

SCHEMA = "matchctl.run/1"
EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN = 0, 1, 2


class RunManifest:
    """Record of one command invocation: resolved config, inputs and outputs."""

    def __init__(self, command: str, config=None, inputs=None):
        self.command = command
        self.config = config
        self.inputs = [str(p) for p in (inputs or [])]
        self.outputs = []

    def add(self, path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / f"{self.command}_manifest.json"
        doc = {"schema": SCHEMA, "version": __version__, "command": self.command, "config": self.config,
               "inputs": self.inputs, "outputs": self.outputs + [str(path)]}
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _out_dir(args) -> Path:
    d = Path(args.out) if args.out else Path(os.environ.get("MATCHCTL_OUT", "matchctl_out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")


def _mat(a) -> dict:
    """Row-major JSON matrix with explicit shape."""
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _parse_grid(spec: str):
    """``"s=LO:HI:N,theta=LO:HI:N"`` to two ``(lo, hi, n)`` triples."""
    axes = {}
    for part in spec.split(","):
        try:
            name, rng = part.split("=")
            lo, hi, n = rng.split(":")
            axes[name.strip()] = (float(lo), float(hi), int(n))
        except ValueError:
            raise ConfigError(f"bad --grid component {part!r}; expected name=LO:HI:N") from None
    if set(axes) != {"s", "theta"}:
        raise ConfigError("--grid must define exactly s and theta")
    if axes["s"][2] < 1 or axes["theta"][2] < 1:
        raise ConfigError("--grid counts must be positive")
    return axes["s"], axes["theta"]


def _load_gains(path: str) -> LinearFeedback:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"gains file not found: {p}")
    try:
        doc = json.loads(p.read_text())
        return LinearFeedback(v=doc["v"], a=doc["a"], b=doc["b"], q_ref=doc.get("q_ref"))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"gains file {p} must hold v, a, b (and optional q_ref): {exc}") from None


def _h_perturbed_family(model, pert_model) -> ClosedLoopSpec:
    """Default family with only ``g_hat_11`` taken from ``pert_model``.

    The remaining entries are not re-solved, so the matching conditions
    break wherever ``g_hat_11`` enters.
    """
    base = closed_loop_family(model)
    other = closed_loop_family(pert_model)

    def gh(q):
        g = base.metric_hat(q).copy()
        g[0, 0] = other.metric_hat(q)[0, 0]
        return g

    def gh_d(q):
        d = base.metric_hat.d(q).copy()
        d[:, 0, 0] = other.metric_hat.d(q)[:, 0, 0]
        return d

    return ClosedLoopSpec(MetricField(gh, 2, partials=gh_d, domain=model.domain), base.potential_hat,
                          base.dissipation_hat)


# -- commands ------------------------------------------------------------------
def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    sim = cfg["sim"]
    for flag, key in (("initial_s", "s"), ("initial_theta", "theta"), ("initial_sdot", "s_dot"),
                      ("initial_thetadot", "theta_dot")):
        v = getattr(args, flag)
        if v is not None:
            sim["initial"][key] = v
    for flag in ("dt", "duration_s", "controller_mode", "v_sat"):
        v = getattr(args, flag)
        if v is not None:
            sim[flag] = v
    if args.controller_mode == "sampled" and args.estimator is None:
        sim["velocity_estimator"] = "forward-difference"
    if args.estimator is not None:
        sim["velocity_estimator"] = args.estimator
    model = build_model(cfg)
    scfg = sim_config(cfg, model)
    init = initial_state(cfg)
    if not model.domain.contains(init.q):
        raise ConfigError(f"initial configuration {init.q.tolist()} outside the model domain")
    opn = open_loop_system(model)
    closed = closed_loop_family(model)
    if args.controller == "nonlinear":
        controller = None
    elif args.controller == "linearized":
        controller = linearize_control(model, closed)
    else:
        if not args.gains:
            raise ConfigError("--controller gains-file requires --gains PATH")
        controller = _load_gains(args.gains)
    actuator = ServoActuator(model.phys, scfg.v_sat, model.scales)
    traj = simulate(opn, closed, scfg, init, controller=controller, actuator=actuator)

    out = _out_dir(args)
    inputs = [p for p in (args.config, args.gains) if p]
    man = RunManifest("simulate", cfg, inputs)
    traj.to_csv(man.add(out / "trajectory.csv"))
    lyap = lyapunov_report(traj)
    doc = {"config": scfg.to_dict(), "controller": args.controller, **traj.summary(),
           "lyapunov": lyap.to_dict(),
           "scales": {"L": model.scales.L, "tau": model.scales.tau, "E0": model.scales.E0}}
    _dump(man.add(out / "trajectory.json"), doc)
    if not args.no_plot:
        from .plotting import plot_trajectory

        plot_trajectory(traj, man.add(out / "trajectory.png"), tau=model.scales.tau, length=model.scales.L,
                        title=f"{args.controller} controller: {traj.status}")
    man.write(out)
    print(f"simulate: {traj.status} after {len(traj)} records"
          + (f" ({traj.reason})" if traj.reason else "") + f"; outputs in {out}")
    return EXIT_OK if traj.status == "completed" else (EXIT_DOMAIN if traj.status == "diverged" else EXIT_CONFIG)


def cmd_check_matching(args) -> int:
    cfg = load_config(args.config)
    model = build_model(cfg)
    s_ax, th_ax = _parse_grid(args.grid) if args.grid else grid_axes(cfg)
    tol = float(args.tolerance) if args.tolerance is not None else float(cfg["grid"]["tolerance"])
    lam_tol = float(cfg["grid"]["lambda_tolerance"])
    opn = open_loop_system(model)
    if args.closed_equals_open and args.perturb_h is not None:
        raise ConfigError("--closed-equals-open and --perturb-h are exclusive")
    if args.closed_equals_open:
        closed = ClosedLoopSpec.from_open(opn)
    elif args.perturb_h is not None:
        pert = {**cfg, "tuning": {**cfg["tuning"], "h": {"kind": "polynomial", "coeffs": [args.perturb_h]}}}
        closed = _h_perturbed_family(model, build_model(pert))
    else:
        closed = closed_loop_family(model)
    s_vals = np.linspace(*s_ax)
    th_vals = np.linspace(*th_ax)
    qdot = [float(x) for x in cfg["grid"]["qdot"]]
    points = [(s, th) for s in s_vals for th in th_vals]
    recs = residual_sweep(opn, closed, points, qdot)
    blocks = ("geodesic_norm", "dissipative_norm", "potential_norm", "eq6_norm", "eq7_norm")
    good = [r for r in recs if "error" not in r]
    maxima = {b: max((r[b] for r in good), default=float("nan")) for b in blocks}
    errors = [r for r in recs if "error" in r]
    ok = (not errors and all(maxima[b] <= tol for b in blocks[:3])
          and all(maxima[b] <= lam_tol for b in blocks[3:]))
    out = _out_dir(args)
    man = RunManifest("check-matching", cfg, [args.config] if args.config else [])
    report = {"grid": {"s": list(s_ax), "theta": list(th_ax), "qdot": qdot}, "tolerance": tol,
              "lambda_tolerance": lam_tol, "max": maxima, "n_points": len(recs), "n_errors": len(errors),
              "pass": ok, "points": recs}
    _dump(man.add(out / "residuals.json"), report)
    if not args.no_plot and good and not errors:
        from .plotting import plot_residual_grid

        worst = np.array([max(r[b] for b in blocks[:3]) for r in recs]).reshape(len(s_vals), len(th_vals))
        plot_residual_grid(s_vals, th_vals, worst, man.add(out / "residuals.png"), "matching residual")
    man.write(out)
    for b in blocks:
        print(f"{b:>18s}: {maxima[b]:.3e}")
    print(f"check-matching: {'pass' if ok else 'FAIL'} ({len(errors)} singular points)")
    return EXIT_OK if ok else EXIT_DOMAIN


def cmd_linear_demo(args) -> int:
    n = args.n
    if not 1 <= n <= 6:
        raise ConfigError("--n must lie in 1..6")
    rng = np.random.default_rng(args.seed)
    sys_, fb = random_admissible_instance(n, rng)
    closed = theorem2_match(sys_, fb)
    check = verify_theorem2(sys_, fb, closed, rng)
    ok = check["max_round_trip_error"] <= 1e-9 and check["max_matching_residual"] <= 1e-9
    out = _out_dir(args)
    man = RunManifest("linear-demo", {"n": n, "seed": args.seed})
    doc = {"n": n, "seed": args.seed,
           "system": {k: _mat(getattr(sys_, k)) for k in ("g", "V2", "v1", "C2", "P")},
           "feedback": {k: _mat(getattr(fb, k)) for k in ("v", "a", "b")},
           "closed_loop": {k: _mat(getattr(closed, k)) for k in ("g_hat", "V2_hat", "v1_hat", "C2_hat")},
           **check, "pass": ok}
    _dump(man.add(out / "linear_demo.json"), doc)
    man.write(out)
    np.set_printoptions(precision=5, suppress=True)
    print("g_hat =\n", closed.g_hat)
    print("V2_hat =\n", closed.V2_hat)
    print("C2_hat =\n", closed.C2_hat)
    print(f"round-trip error {check['max_round_trip_error']:.2e}, "
          f"matching residual {check['max_matching_residual']:.2e}")
    return EXIT_OK if ok else EXIT_DOMAIN


def cmd_lemma1(args) -> int:
    n = args.n
    if not 1 <= n <= 6:
        raise ConfigError("--n must lie in 1..6")
    rng = np.random.default_rng(args.seed)
    if args.matrix:
        try:
            R = np.array(json.loads(args.matrix), dtype=float)
        except (json.JSONDecodeError, ValueError) as exc:
            raise ConfigError(f"--matrix must be a JSON square matrix: {exc}") from None
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ConfigError("--matrix must be square")
    else:
        R = rng.normal(size=(n, n))
    X = lemma1_solve(R)
    res = lemma1_residual(R, X)
    sv = np.linalg.svd(X, compute_uv=False)
    oracle = jordan_oracle(R)
    out = _out_dir(args)
    man = RunManifest("lemma1", {"n": int(R.shape[0]), "seed": args.seed})
    doc = {"R": _mat(R), "X": _mat(X), "residual": res, "sigma_ratio": float(sv[-1] / sv[0]),
           "solution_dimension": len(symmetric_solution_basis(R)),
           "oracle_dimension": None if oracle is None else oracle.dimension}
    _dump(man.add(out / "lemma1.json"), doc)
    man.write(out)
    print(f"residual {res:.2e}, sigma_min/sigma_max {sv[-1] / sv[0]:.3e}, "
          f"solution dimension {doc['solution_dimension']}")
    return EXIT_OK


def cmd_params(args) -> int:
    cfg = load_config(args.config)
    phys = _physical(cfg)
    over = {k: float(v) for k, v in cfg["dimensionless_overrides"].items()}
    printed = DimensionlessParams(**{**PRINTED_DIMENSIONLESS.to_dict(), **over})
    rep = params_report(phys, printed)
    out = _out_dir(args)
    man = RunManifest("params", cfg, [args.config] if args.config else [])
    _dump(man.add(out / "params.json"), rep)
    man.write(out)
    print(f"{'name':>8s} {'derived':>14s} {'printed':>14s} {'rel.diff':>10s}")
    for r in rep["rows"]:
        flag = "  *" if r["flagged"] else ""
        print(f"{r['name']:>8s} {r['derived']:14.6g} {r['printed']:14.6g} {r['rel_discrepancy']:10.3e}{flag}")
    sc = rep["scales"]
    print(f"scales: L = {sc['L']:.6g} m, tau = {sc['tau']:.6g} s, E0 = {sc['E0']:.6g} J")
    bi = rep["ball_inertia"]
    print(f"I_B = {bi['I_B']:.4g} vs (2/5) m_B r_B^2 = {bi['solid_sphere']:.4g} (rel. {bi['rel_defect']:.3f})")
    return EXIT_OK


# -- parser --------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="matchctl", description="Matching control laws for underactuated systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="JSON configuration file (defaults are packaged)")
        sp.add_argument("--out", help="output directory (default: $MATCHCTL_OUT or ./matchctl_out)")
        sp.add_argument("--no-plot", action="store_true", help="skip PNG figures")

    s = sub.add_parser("simulate", help="closed-loop ball-and-beam run")
    common(s)
    s.add_argument("--controller", choices=("nonlinear", "linearized", "gains-file"), default="nonlinear")
    s.add_argument("--gains", help="JSON with v, a, b (and q_ref) for --controller gains-file")
    s.add_argument("--initial-s", type=float)
    s.add_argument("--initial-theta", type=float)
    s.add_argument("--initial-sdot", type=float)
    s.add_argument("--initial-thetadot", type=float)
    s.add_argument("--dt", type=float, help="integrator step, dimensionless")
    s.add_argument("--duration-s", type=float, help="simulated physical time in seconds")
    s.add_argument("--controller-mode", choices=("continuous", "sampled"))
    s.add_argument("--estimator", choices=("exact", "forward-difference"))
    s.add_argument("--v-sat", type=float, help="servo voltage limit")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("check-matching", help="matching residuals on an (s, theta) grid")
    common(c)
    c.add_argument("--grid", help='"s=LO:HI:N,theta=LO:HI:N"')
    c.add_argument("--tolerance", type=float)
    c.add_argument("--perturb-h", type=float,
                   help="swap g_hat_11 for the one built with constant h, keeping the rest of the family")
    c.add_argument("--closed-equals-open", action="store_true", help="use the open loop as the target")
    c.set_defaults(func=cmd_check_matching)

    ld = sub.add_parser("linear-demo", help="random LTI instance through the linear construction")
    common(ld, config=False)
    ld.add_argument("--n", type=int, default=2)
    ld.add_argument("--seed", type=int, default=0)
    ld.set_defaults(func=cmd_linear_demo)

    lm = sub.add_parser("lemma1", help="symmetric nondegenerate X with R X = X R^T")
    common(lm, config=False)
    lm.add_argument("--n", type=int, default=3)
    lm.add_argument("--seed", type=int, default=0)
    lm.add_argument("--matrix", help="JSON square matrix R (overrides --n/--seed)")
    lm.set_defaults(func=cmd_lemma1)

    pr = sub.add_parser("params", help="recomputed dimensionless groups and unit scales")
    common(pr)
    pr.set_defaults(func=cmd_params)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"matchctl: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MatchCtlError, OSError) as exc:
        print(f"matchctl: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
