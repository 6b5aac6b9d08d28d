"""Command-line front end.

Every command writes plain data files (CSV by default, JSON with
``--json``) into ``--out`` (default ``$SEMICLASSICA_OUT`` or the current
directory). Each file starts with ``#`` lines holding the build identifier
and the full resolved configuration, so identical configurations produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, chaos, dynamics, model, oneloop, quantum
from .errors import (
    ConvergenceError,
    InsufficientCutoffError,
    InvalidParameterError,
    SemiclassicaError,
)

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_NONCONVERGENCE = 4

BUILD_ID = f"semiclassica {__version__}"

# flags that steer where and how files are written, not what is computed
_NON_CONFIG = {"config", "out", "json", "command", "func", "threads"}
# run-control keys a config file may set but that stay out of the header
_NOT_SETTABLE = {"config", "command", "func"}


# --- output helpers --------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.15g}"


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


class Writer:
    """Writes tables with the config header into the output directory."""

    def __init__(self, out_dir: Path, config: dict, command: str, as_json: bool):
        self.out_dir = out_dir
        self.config = config
        self.command = command
        self.as_json = as_json
        self.written: list[Path] = []

    def header_lines(self) -> list[str]:
        return [
            BUILD_ID,
            f"command: {self.command}",
            "config: " + json.dumps(self.config, sort_keys=True),
        ]

    def table(self, stem: str, columns, rows, extra: dict | None = None) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if self.as_json:
            path = self.out_dir / f"{stem}.json"
            doc = {
                "build": BUILD_ID,
                "command": self.command,
                "config": self.config,
                "columns": list(columns),
                "rows": [[_jsonable(float(_fmt(v)) if not isinstance(v, str) else v)
                          for v in r] for r in rows],
            }
            if extra:
                doc["meta"] = {k: _jsonable(v) for k, v in extra.items()}
            text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
        else:
            path = self.out_dir / f"{stem}.csv"
            buf = io.StringIO()
            for line in self.header_lines():
                buf.write(f"# {line}\n")
            for k, v in (extra or {}).items():
                buf.write(f"# {k}: {json.dumps(_jsonable(v), sort_keys=True)}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
            text = buf.getvalue()
        path.write_text(text, encoding="utf-8")
        self.written.append(path)
        return path


# --- parsing -------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise InvalidParameterError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="TOML file with parameter values")
    p.add_argument("--seed", type=int, default=0, help="64-bit seed for sampled initial conditions")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--out", metavar="DIR", help="output directory (default $SEMICLASSICA_OUT or .)")
    p.add_argument("--json", action="store_true", help="write JSON instead of CSV")


def _orbit(p, *, eps=0.1, t=100.0, kind=True):
    if kind:
        p.add_argument("--kind", choices=["classical", "effective"], default="classical")
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=eps, help="rescaled energy of the initial condition")
    p.add_argument("--t", type=float, default=t, help="total integration time")
    p.add_argument("--dt", type=float, default=dynamics.DEFAULT_DT)
    p.add_argument("--ic", default=None,
                   help="explicit initial state q1,q2,p1,p2 (overrides --eps)")


def _classifier(p):
    d = chaos.ClassifierConfig()
    p.add_argument("--lambda-threshold", type=float, default=d.lambda_threshold)
    p.add_argument("--t-classify", type=float, default=d.t_total)
    p.add_argument("--d0", type=float, default=d.d0)
    p.add_argument("--renorm", type=float, default=d.renorm_interval)
    p.add_argument("--n-samples", type=int, default=d.n_samples)
    p.add_argument("--rel-tol", type=float, default=d.rel_tol)
    p.add_argument("--energy", choices=["classical", "effective"], default=d.energy)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semiclassica",
        description="Classical, one-loop effective and quantum dynamics of a 2-D anharmonic oscillator.",
    )
    parser.add_argument("--version", action="version", version=BUILD_ID)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate one orbit and write the trajectory")
    _common(p)
    p.add_argument("--kind", choices=["classical", "effective", "both"], default="classical")
    _orbit(p, kind=False)
    p.add_argument("--stride", type=int, default=1, help="keep every stride-th step")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("poincare", help="surface of section q2 = 0, p2 > 0")
    _common(p)
    _orbit(p, t=1000.0)
    p.add_argument("--n-orbits", type=int, default=1,
                   help="orbits sampled on the energy shell (ignored with --ic)")
    p.add_argument("--swap", action="store_true", help="use the companion plane q1 = 0, p1 > 0")
    p.set_defaults(func=cmd_poincare)

    p = sub.add_parser("lyapunov", help="largest Lyapunov exponent of one orbit")
    _common(p)
    _orbit(p, eps=2.0, t=1e4)
    p.add_argument("--d0", type=float, default=1e-8)
    p.add_argument("--renorm", type=float, default=1.0)
    p.set_defaults(func=cmd_lyapunov)

    p = sub.add_parser("scan-threshold", help="chaos-onset energy versus gamma")
    _common(p)
    p.add_argument("--gammas", default="0,0.1,0.5,1")
    p.add_argument("--dt", type=float, default=dynamics.DEFAULT_DT)
    _classifier(p)
    p.add_argument("--no-convex", action="store_true", help="skip the convexity bound column")
    p.set_defaults(func=cmd_scan_threshold)

    p = sub.add_parser("quantum-compare", help="<q1>(t) for classical, effective and quantum dynamics")
    _common(p)
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--ic", default=None, help="explicit initial state q1,q2,p1,p2")
    p.add_argument("--t", type=float, default=30.0)
    p.add_argument("--dt", type=float, default=dynamics.DEFAULT_DT)
    p.add_argument("--dt-out", type=float, default=0.01, help="spacing of the shared time grid")
    p.add_argument("--n-max", type=int, default=quantum.DEFAULT_N_MAX)
    p.add_argument("--blocked", action="store_true", help="diagonalize parity sectors separately")
    p.set_defaults(func=cmd_quantum_compare)

    p = sub.add_parser("oneloop-check", help="Gelfand-Yaglom versus derivative-expansion checks")
    _common(p)
    p.add_argument("--rhos", default="0.2,0.1,0.05,0.025")
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--coupling", type=float, default=1.0, help="g of U = g q^4 / 24")
    p.add_argument("--curvature", type=float, default=0.5)
    p.add_argument("--support", type=float, default=100.0, help="half-width s of the constant-curvature check")
    p.set_defaults(func=cmd_oneloop_check)
    return parser


def _load_config(parser, argv) -> argparse.Namespace:
    """Parse ``argv``, letting a TOML file supply defaults that flags override."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise InvalidParameterError(f"cannot read config {args.config}: {exc}") from exc
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    flat.update(data.get(args.command, {}) or {})
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, val in flat.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in _NOT_SETTABLE:
            raise InvalidParameterError(f"unknown config key {key!r} for {args.command}")
        if isinstance(val, list):
            val = ",".join(str(v) for v in val)
        act = known[dest]
        if act.type is not None and not isinstance(val, bool):
            try:
                val = act.type(val)
            except (TypeError, ValueError) as exc:
                raise InvalidParameterError(f"config key {key!r}: {exc}") from exc
        if act.choices is not None and val not in act.choices:
            raise InvalidParameterError(f"config key {key!r} must be one of {sorted(act.choices)}")
        defaults[dest] = val
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _config_record(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NON_CONFIG}


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("SEMICLASSICA_OUT") or ".")


def _initial_state(args) -> model.PhaseState:
    if args.ic:
        vals = _floats(args.ic)
        if len(vals) != 4:
            raise InvalidParameterError("--ic needs four values q1,q2,p1,p2")
        return model.PhaseState(*vals)
    return model.shell_state(args.eps)


def _check_positive(args, *names):
    for n in names:
        if not getattr(args, n) > 0:
            raise InvalidParameterError(f"--{n.replace('_', '-')} must be positive")


# --- commands ------------------------------------------------------------


def cmd_simulate(args, out: Writer) -> int:
    _check_positive(args, "t", "dt")
    s0 = _initial_state(args)
    kinds = ["classical", "effective"] if args.kind == "both" else [args.kind]
    n_steps = int(round(args.t / args.dt))
    code = EXIT_OK
    for kind in kinds:
        traj = dynamics.rk4_integrate(kind, s0, args.dt, n_steps, gamma=args.gamma,
                                      stride=args.stride, strict=False)
        rows = [(t, *s, e) for t, s, e in zip(traj.times, traj.states, traj.energy_audit)]
        meta = {"status": traj.status, "energy_drift": traj.energy_drift, **traj.meta}
        out.table(f"trajectory_{kind}", ["t", "q1", "q2", "p1", "p2", "E"], rows, meta)
        print(f"{kind}: {len(rows)} rows, status {traj.status}, relative energy drift {traj.energy_drift:.3e}")
        if traj.status == "domain_exit":
            code = max(code, EXIT_DOMAIN)
        elif traj.status != "ok":
            code = max(code, EXIT_NONCONVERGENCE)
    return code


def cmd_poincare(args, out: Writer) -> int:
    _check_positive(args, "t", "dt")
    g = args.gamma if args.kind == "effective" else 0.0
    if args.ic:
        ics = [_initial_state(args).as_array()]
    else:
        ics = chaos.sample_section_ics(args.eps, g, args.n_orbits, args.seed)
    code = EXIT_OK
    for i, s0 in enumerate(ics):
        sec = chaos.poincare_section(args.kind, s0, g, args.t, args.dt, swap=args.swap)
        rows = [(q, p, t, 1) for q, p, t, _ in sec.points]
        stem = "section" if len(ics) == 1 else f"section_{i:03d}"
        meta = {"status": sec.status, "t_end": sec.t_end, "energy_spread": sec.energy_spread,
                "initial_state": [float(x) for x in s0]}
        out.table(stem, ["q1", "p1", "t", "dir"], rows, meta)
        print(f"orbit {i}: {len(sec)} crossings, status {sec.status}")
        if sec.status == "domain_exit":
            code = EXIT_DOMAIN
        elif sec.status != "ok":
            code = max(code, EXIT_NONCONVERGENCE)
    return code


def cmd_lyapunov(args, out: Writer) -> int:
    _check_positive(args, "t", "dt", "d0", "renorm")
    g = args.gamma if args.kind == "effective" else 0.0
    if args.ic:
        s0 = _initial_state(args).as_array()
    else:
        s0 = chaos.sample_section_ics(args.eps, g, 1, args.seed)[0]
    est = chaos.lyapunov_max(args.kind, s0, g, args.t, args.renorm, args.d0, args.dt)
    rows = list(zip(est.times, est.history))
    meta = {"status": est.status, "lambda_max": est.lambda_max, "initial_state": [float(x) for x in s0]}
    out.table("lyapunov", ["t", "lambda"], rows, meta)
    print(f"lambda_max = {est.lambda_max:.6g} ({est.status})")
    return EXIT_OK if est.valid else EXIT_DOMAIN


def _classifier_from(args) -> chaos.ClassifierConfig:
    return chaos.ClassifierConfig(
        lambda_threshold=args.lambda_threshold,
        t_total=args.t_classify,
        dt=args.dt,
        d0=args.d0,
        renorm_interval=args.renorm,
        n_samples=args.n_samples,
        rel_tol=args.rel_tol,
        energy=args.energy,
    )


def cmd_scan_threshold(args, out: Writer) -> int:
    cfg = _classifier_from(args)
    gammas = _floats(args.gammas)
    if not gammas:
        raise InvalidParameterError("--gammas is empty")

    def progress(entry):
        print(f"gamma={entry['gamma']:g} eps={entry['epsilon']:.6g} "
              f"{'chaotic' if entry['chaotic'] else 'regular'}", file=sys.stderr, flush=True)

    curve = chaos.threshold_scan(gammas, cfg, seed=args.seed, threads=args.threads,
                                 convex=not args.no_convex, progress=progress)
    ref = curve.reference()
    rows = [(g, e, c, r) for g, e, c, r in zip(curve.gammas, curve.eps_th, curve.eps_convex, ref)]
    out.table("threshold", ["gamma", "eps_th", "eps_convex", "eps_th_reference"], rows,
              {"diagnostics": curve.diagnostics})
    rung_rows = [(r["gamma"], r["epsilon"], int(r["chaotic"]), r["n_evaluated"], r["n_invalid"],
                  r["lambda_max"]) for r in curve.rungs]
    out.table("threshold_rungs", ["gamma", "epsilon", "chaotic", "n_evaluated", "n_invalid",
                                  "lambda_max"], rung_rows)
    for g, e in zip(curve.gammas, curve.eps_th):
        print(f"gamma={g:g}: eps_th={e:.6g}")
    for d in curve.diagnostics:
        print(f"warning: gamma={d['gamma']:g}: {d['message']}", file=sys.stderr)
    return EXIT_OK


def run_quantum_compare(gamma, s0, t_total, dt, dt_out, n_max, blocked=False):
    """Shared-grid ``q1(t)`` of the three dynamics plus quantum audits.

    ``n_max`` is raised when the coherent state does not fit the basis;
    the run is repeated at ``n_max + 4`` to check truncation.
    """
    stride = int(round(dt_out / dt))
    if stride < 1 or abs(stride * dt - dt_out) > 1e-9 * dt_out:
        raise InvalidParameterError("dt-out must be a positive multiple of dt")
    n_steps = int(round(t_total / dt))
    cl = dynamics.rk4_integrate("classical", s0, dt, n_steps, stride=stride)
    ef = dynamics.rk4_integrate("effective", s0, dt, n_steps, gamma=gamma, stride=stride)
    times = cl.times

    def series(nm):
        spec = quantum.BasisSpec(nm, gamma)
        st = quantum.coherent_state(s0.q1, s0.p1, s0.q2, s0.p2, spec)
        h = quantum.build_hamiltonian(spec)
        dec = quantum.eigendecompose(h, spec, blocked=blocked)
        return quantum.expectation_series(st, dec, times), dec, st

    try:
        ser, dec, st = series(n_max)
    except InsufficientCutoffError as exc:
        n_max = max(n_max, exc.required_n_max)
        ser, dec, st = series(n_max)
    ser4, _, _ = series(n_max + 4)
    trunc = float(max(np.max(np.abs(ser.q1 - ser4.q1)), np.max(np.abs(ser.q2 - ser4.q2))))
    return {
        "times": times,
        "classical": cl.states[:, 0],
        "effective": ef.states[:, 0],
        "series": ser,
        "decomposition": dec,
        "n_max": n_max,
        "truncation_change": trunc,
        "tail_loss": st.norm_audit,
    }


def l2_distance(a, b, t) -> float:
    return float(math.sqrt(np.trapezoid((np.asarray(a) - np.asarray(b)) ** 2, t)))


def cmd_quantum_compare(args, out: Writer) -> int:
    _check_positive(args, "t", "dt", "dt_out", "gamma")
    s0 = _initial_state(args)
    res = run_quantum_compare(args.gamma, s0, args.t, args.dt, args.dt_out, args.n_max, args.blocked)
    t = res["times"]
    ser = res["series"]
    meta = {
        "n_max_used": res["n_max"],
        "truncation_change": res["truncation_change"],
        "l2_classical_quantum": l2_distance(res["classical"], ser.q1, t),
        "l2_effective_quantum": l2_distance(res["effective"], ser.q1, t),
        "initial_state": [s0.q1, s0.q2, s0.p1, s0.p2],
    }
    out.table("quantum_compare", ["t", "q1_classical", "q1_effective", "q1_quantum"],
              zip(t, res["classical"], res["effective"], ser.q1), meta)
    out.table("quantum_series", ["t", "<q1>", "<q2>", "norm", "<H>"],
              zip(ser.t, ser.q1, ser.q2, ser.norm, ser.energy),
              {"norm_defect": ser.max_norm_defect, "energy_defect": ser.max_energy_defect})
    dec = res["decomposition"]
    out.table("spectrum", ["index", "eigenvalue"], enumerate(dec.eigenvalues),
              {"residual": dec.residual, "orthonormality": dec.orthonormality})
    print(f"n_max={res['n_max']}, L2(classical, quantum)={meta['l2_classical_quantum']:.6g}, "
          f"L2(effective, quantum)={meta['l2_effective_quantum']:.6g}")
    if res["truncation_change"] >= 1e-4:
        print(f"unconverged: observables move by {res['truncation_change']:.3g} at n_max+4",
              file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_oneloop_check(args, out: Writer) -> int:
    rhos = _floats(args.rhos)
    term = oneloop.quartic(args.coupling)
    rows = []
    ok = True

    zero = oneloop.one_loop_action(oneloop.slow_path(0.2, 0.0), d2U=term.d2U)
    passed = abs(zero.gamma1) < 1e-10
    rows.append(("zero_path", abs(zero.gamma1), 0.0, 1e-10, int(passed)))
    ok &= passed

    path, cterm = oneloop.constant_curvature(args.curvature, args.support)
    res = oneloop.one_loop_action(path, d2U=cterm.d2U)
    density = res.gamma1.real / (2.0 * args.support)
    target = -0.5 * (math.sqrt(1.0 + args.curvature) - 1.0)
    passed = abs(density - target) < 1e-4
    rows.append(("constant_curvature_density", density, target, 1e-4, int(passed)))
    ok &= passed

    cmp_ = oneloop.compare_de2_exact(rhos, args.amplitude, term=term)
    for rho, d, conv in zip(cmp_.rhos, cmp_.discrepancy, cmp_.converged):
        rows.append((f"discrepancy_rho_{rho:g}", d, 0.0, math.nan, int(bool(conv))))
        ok &= bool(conv)
    rows.append(("monotone_decrease", float(cmp_.monotone), 1.0, 0.0, int(cmp_.monotone)))
    rows.append(("fitted_order", cmp_.order, 2.0, math.nan, int(cmp_.order >= 2.0)))
    ok &= cmp_.monotone and cmp_.order >= 2.0

    out.table("oneloop_check", ["check", "value", "reference", "tolerance", "pass"], rows)
    for r in rows:
        print(f"{'PASS' if r[4] else 'FAIL'} {r[0]}: {r[1]:.6g}")
    return EXIT_OK if ok else EXIT_NONCONVERGENCE


# --- entry point -----------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _load_config(parser, argv)
        if args.threads < 1:
            raise InvalidParameterError("--threads must be >= 1")
        writer = Writer(_out_dir(args), _config_record(args), args.command, args.json)
        return args.func(args, writer)
    except SemiclassicaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ConvergenceError as exc:  # pragma: no cover - subclass of the above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
