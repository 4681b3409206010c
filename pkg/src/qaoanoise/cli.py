"""Command-line front end.

Subcommands write CSV/JSON only, plus a ``manifest.json`` recording every
effective parameter of the run. Exit codes: 0 success, 1 invalid input,
2 resource cap exceeded, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import closedform, decomposition, engine, ising, tradeoff
from .engine import MAX_DENSITY_QUBITS, AngleSchedule, NoiseModel
from .errors import FitError, QaoaNoiseError, ResourceLimitError, ValidationError
from .optimize import DEFAULT_RESTARTS, optimize_angles

log = logging.getLogger("qaoanoise")

EXIT_OK, EXIT_VALIDATION, EXIT_RESOURCE, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved for resource caps here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("depths must be positive integers")
    return sorted(set(vals))


def _gen_spec(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--gen expects n,ensemble,seed")
    try:
        return int(parts[0]), parts[1].strip(), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --gen value {text!r}") from None


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _add_instance_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", type=Path, help="instance JSON file")
    src.add_argument("--gen", type=_gen_spec, metavar="N,ENSEMBLE,SEED", help="generate an instance in memory")


def _add_common(p, out_required=True):
    p.add_argument("--noise", choices=("depolarizing", "dephasing"), default="depolarizing")
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker threads; never changes outputs")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")


def _angle_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--angles", help="inline 'g1,g2,...;b1,b2,...' in radians")
    g.add_argument("--angles-file", type=Path, help="JSON from the optimize subcommand")
    g.add_argument("--optimize", action="store_true", help="optimise noiseless angles (default)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qaoanoise", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a random instance file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--ensemble", choices=ising.ENSEMBLES, default="pm1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="instance JSON path")

    p = sub.add_parser("optimize", help="optimise QAOA angles per depth")
    _add_instance_args(p)
    p.add_argument("--depths", type=_int_list, required=True)
    p.add_argument("--p", type=float, default=None, help="optimise the noisy objective at this rate")
    _add_common(p)

    p = sub.add_parser("mlevel", help="f_m / c_m curves and their closed-form fits")
    _add_instance_args(p)
    p.add_argument("--depths", type=_int_list, default=[1])
    _angle_args(p)
    p.add_argument("--budget", type=int, default=decomposition.DEFAULT_BUDGET_PER_M)
    p.add_argument("--p", type=float, default=0.3, help="rate for the engine cross-check")
    _add_common(p)

    p = sub.add_parser("sweep", help="cost/fidelity versus p for several depths")
    _add_instance_args(p)
    p.add_argument("--depths", type=_int_list, required=True)
    p.add_argument("--p-grid", default=None, help="a:b:steps or comma list (default: 51 points + fine prefix)")
    p.add_argument("--fit-source", choices=("p", "mlevel", "none"), default="p",
                   help="model columns from fits to C(p), to c_m curves, or omitted")
    p.add_argument("--budget", type=int, default=decomposition.DEFAULT_BUDGET_PER_M)
    p.add_argument("--reoptimize", action="store_true", help="re-optimise angles at every p")
    _add_common(p)

    p = sub.add_parser("verify", help="run cross-engine consistency checks")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.add_argument("--out", type=Path, default=None)
    return parser


def _load_instance(args):
    if args.instance is not None:
        return ising.load_instance(args.instance)
    n, ensemble, seed = args.gen
    return ising.random_instance(n, ensemble, seed)


def _prepare_out(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {path}: {exc.strerror}") from None
    return path


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _manifest(args, out: Path, instance=None, **extra):
    data = {
        "command": args.command,
        "version": _version(),
        "args": {k: v for k, v in vars(args).items() if k != "func"},
    }
    if instance is not None:
        data["instance"] = instance.to_dict()
    data.update(extra)
    return _write_json(out / "manifest.json", data)


def _check_common(args):
    if args.restarts < 1:
        raise ValidationError("--restarts must be >= 1")
    if args.jobs < 1:
        raise ValidationError("--jobs must be >= 1")
    if getattr(args, "budget", 1) < 1:
        raise ValidationError("--budget must be >= 1")
    p = getattr(args, "p", None)
    if p is not None and not 0.0 <= p <= 1.0:
        raise ValidationError("--p must lie in [0, 1]")


def _parse_inline_angles(text):
    try:
        g, b = text.split(";")
        return AngleSchedule([float(x) for x in g.split(",")], [float(x) for x in b.split(",")])
    except ValueError:
        raise ValidationError(f"cannot parse --angles {text!r}; expected 'g1,...;b1,...'") from None


def _angles_from_file(path: Path) -> dict:
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read angles file {path}: {exc}") from None
    if "gammas" in data:
        sched = AngleSchedule.from_dict(data)
        return {sched.depth: sched}
    out = {}
    for entry in data.get("depths", {}).values():
        sched = AngleSchedule.from_dict(entry["angles"])
        out[sched.depth] = sched
    return out


def _resolve_angles(args, instance, depths):
    """Per-depth schedules plus a per-depth description of where they came from."""
    if getattr(args, "angles", None):
        sched = _parse_inline_angles(args.angles)
        given = {sched.depth: sched}
        source = "inline"
    elif getattr(args, "angles_file", None):
        given = _angles_from_file(args.angles_file)
        source = "file"
    else:
        reports = {}
        for d in depths:
            log.info("optimising depth %d (%d restarts)", d, args.restarts)
            reports[d] = optimize_angles(instance, d, None, args.restarts, args.seed, args.jobs)
        return {d: r.best_angles for d, r in reports.items()}, "optimized_p0", reports
    missing = [d for d in depths if d not in given]
    if missing:
        raise ValidationError(f"no {source} angles for depths {missing}")
    return {d: given[d] for d in depths}, source, {}


def _reports_json(reports):
    return {"depths": {str(d): r.to_dict() for d, r in sorted(reports.items())}}


def cmd_gen(args):
    instance = ising.random_instance(args.n, args.ensemble, args.seed)
    try:
        ising.save_instance(instance, args.out)
    except OSError as exc:
        raise ValidationError(f"cannot write instance file {args.out}: {exc.strerror}") from None
    print(args.out)
    return EXIT_OK


def cmd_optimize(args):
    _check_common(args)
    instance = _load_instance(args)
    out = _prepare_out(args.out)
    noise = None if args.p is None else NoiseModel(args.noise, args.p)
    reports = {d: optimize_angles(instance, d, noise, args.restarts, args.seed, args.jobs) for d in args.depths}
    _write_json(out / "angles.json", _reports_json(reports))
    _manifest(args, out, instance)
    for d, r in sorted(reports.items()):
        print(f"d={d} best_cost={r.best_cost:.10g}")
    return EXIT_OK


def cmd_mlevel(args):
    _check_common(args)
    instance = _load_instance(args)
    out = _prepare_out(args.out)
    angles, source, reports = _resolve_angles(args, instance, args.depths)
    if reports:
        _write_json(out / "angles.json", _reports_json(reports))
    noise = NoiseModel(args.noise, 0.0)
    summary = {}
    for d in args.depths:
        f, c = decomposition.m_level_curves(instance, angles[d], noise, args.budget, args.seed, args.jobs)
        f.to_csv(out / f"f_curve_d{d}.csv")
        c.to_csv(out / f"c_curve_d{d}.csv")
        entry = {"angle_source": source, "exact": bool(f.is_exact)}
        try:
            ffit = closedform.fit_fidelity(f)
            closedform.save_fit(ffit, out / f"fidelity_fit_d{d}.json")
            entry["fidelity_fit"] = ffit.to_dict()
        except (FitError, ValidationError) as exc:
            entry["fidelity_fit_error"] = str(exc)
        try:
            cfit = closedform.fit_cost(c)
            closedform.save_fit(cfit, out / f"cost_fit_d{d}.json")
            entry["cost_fit"] = cfit.to_dict()
        except (FitError, ValidationError) as exc:
            entry["cost_fit_error"] = str(exc)
        if f.is_exact and instance.n_qubits <= MAX_DENSITY_QUBITS:
            rho = engine.noisy_state(instance, angles[d], noise.with_p(args.p))
            ideal = engine.qaoa_state(instance, angles[d])
            entry["check"] = {
                "p": args.p,
                "fidelity_engine": engine.fidelity(rho, ideal),
                "fidelity_reconstructed": decomposition.reconstruct_fidelity(f, args.p),
                "cost_engine": engine.expected_cost_dm(rho, ising.diagonal(instance)),
                "cost_reconstructed": decomposition.reconstruct_cost(c, args.p),
            }
        summary[str(d)] = entry
        print(f"d={d} f_{f.n_slots}={f.means[-1]:.6g} c_0={c.means[0]:.6g} exact={f.is_exact}")
    _manifest(args, out, instance, results=summary)
    return EXIT_OK


def cmd_sweep(args):
    _check_common(args)
    instance = _load_instance(args)
    if instance.n_qubits > MAX_DENSITY_QUBITS:
        raise ResourceLimitError(f"sweep needs the density-matrix engine (n <= {MAX_DENSITY_QUBITS})")
    out = _prepare_out(args.out)
    p_grid = tradeoff.parse_p_grid(args.p_grid) if args.p_grid else tradeoff.default_p_grid()
    extra = {"p_grid": p_grid}
    if args.reoptimize:
        table = tradeoff.sweep_reoptimized(
            instance, args.depths, p_grid, args.noise, args.restarts, args.seed, args.jobs
        )
    else:
        angles, source, reports = _resolve_angles(args, instance, args.depths)
        if reports:
            _write_json(out / "angles.json", _reports_json(reports))
        else:
            _write_json(out / "angles.json", {"depths": {str(d): {"angles": a.to_dict()} for d, a in angles.items()}})
        table = tradeoff.sweep(instance, args.depths, p_grid, args.noise, angles, angle_source=source, jobs=args.jobs)
        cost_fits, fid_fits = {}, {}
        if args.fit_source == "p" and len(p_grid) >= 3:
            cost_fits, fid_fits = tradeoff.fit_sweep(table)
        elif args.fit_source == "mlevel":
            noise = NoiseModel(args.noise, 0.0)
            for d in args.depths:
                f, c = decomposition.m_level_curves(instance, angles[d], noise, args.budget, args.seed, args.jobs)
                cost_fits[d] = closedform.fit_cost(c)
                fid_fits[d] = closedform.fit_fidelity(f)
        if cost_fits:
            table = tradeoff.with_models(table, cost_fits, fid_fits)
            _write_json(out / "fits.json", {
                str(d): {"cost": cost_fits[d].to_dict(), "fidelity": fid_fits[d].to_dict()} for d in cost_fits
            })
            extra["optimal_depth"] = tradeoff.depth_schedule(cost_fits, instance.n_qubits, p_grid)
    table.to_csv(out / "sweep.csv")
    depths = table.depths
    crossings = {}
    if len(p_grid) >= 2:
        crossings = {(a, b): tradeoff.find_crossings(table, a, b) for i, a in enumerate(depths) for b in depths[i + 1 :]}
    tradeoff.crossings_to_csv(crossings, out / "crossings.csv")
    extra["metadata"] = {k: {str(d): v for d, v in m.items()} for k, m in table.metadata.items()}
    _manifest(args, out, instance, **extra)
    print(f"wrote {len(table.rows)} rows to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_verify(args):
    from .verify import run_checks

    report = run_checks(args.level)
    text = json.dumps(report, indent=2)
    if args.out is not None:
        out = _prepare_out(args.out)
        (out / "verify_report.json").write_text(text + "\n")
    print(text)
    if not report["passed"]:
        print("verification failed: " + ", ".join(report["failed"]), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "optimize": cmd_optimize, "mlevel": cmd_mlevel, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (QaoaNoiseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
