"""Command-line front end: ``ejmnet <command> [options]``.

Every output starts with a metadata block (command line, seed, version,
wall clock). CSV output puts it in ``#`` comment lines above the header.
Exit status: 0 success, 1 usage error, 2 validity error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import shlex
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import DEFAULT_THETAS, diagram, verify_batch
from .correlators import CorrelatorSet, TripartiteDistribution, distribution_to_correlators
from .errors import EjmError, UsageError, ValidityError, VerificationFailure
from .inequalities import (
    Bprime_lin,
    eval_B,
    eval_Bprime,
    slice_margins,
    stz,
)
from .optimizer import (
    FitOptions,
    boundary_scan,
    critical_visibility_symmetricV,
    fit_bilocal,
    max_B_given_Z,
)
from .quantum import closed_form_correlators, network_distribution, resolve_settings


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


class _Output:
    """Collects rows or a JSON body and writes them with the run metadata."""

    def __init__(self, args, argv):
        self.args = args
        self.meta = {
            "command": "ejmnet " + " ".join(shlex.quote(a) for a in argv),
            "seed": args.seed,
            "version": __version__,
        }
        self.started = time.time()

    def _wall(self) -> str:
        stamp = datetime.fromtimestamp(self.started, timezone.utc).isoformat(timespec="seconds")
        return f"{stamp} elapsed={time.time() - self.started:.3f}s"

    def write(self, header, rows, body=None):
        meta = dict(self.meta, wall_clock=self._wall())
        if self.args.format == "json":
            data = {"meta": meta}
            if body is None:
                body = {"rows": [dict(zip(header, r)) for r in rows]}
            data.update(body)
            text = json.dumps(data, indent=2, default=_json_default) + "\n"
        else:
            buf = io.StringIO()
            for k, v in meta.items():
                buf.write(f"# {k}: {v}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
            text = buf.getvalue()
        if self.args.output in (None, "-"):
            sys.stdout.write(text)
        else:
            Path(self.args.output).write_text(text)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _settings(value):
    """A preset name or a JSON list of three Bloch vectors."""
    if value is None or isinstance(value, (list, tuple)):
        return value
    text = str(value).strip()
    if text.startswith("["):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad settings JSON: {exc}") from None
    return text


def _fit_options(args) -> FitOptions:
    return FitOptions(
        restarts=args.restarts,
        max_iters=args.max_iters,
        tol_residual=args.tol,
        seed=args.seed,
        parametrization=args.parametrization,
        workers=args.workers,
    )


def _load_distribution(path: str) -> TripartiteDistribution:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    if path.endswith(".json") or text.lstrip().startswith(("{", "[")):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidityError(f"{path}: invalid JSON ({exc})") from None
        if isinstance(data, dict) and "correlators" in data:
            from .correlators import correlators_to_distribution

            return correlators_to_distribution(CorrelatorSet.from_dict(data["correlators"]))
        return TripartiteDistribution.from_json(text)
    return TripartiteDistribution.from_csv("\n".join(l for l in text.splitlines() if not l.startswith("#")))


def _target(args) -> TripartiteDistribution:
    if getattr(args, "distribution", None):
        dist = _load_distribution(args.distribution)
        dist.validate(neg_tol=1e-9, norm_tol=1e-9)
        return dist
    settings = resolve_settings(_settings(args.settings))
    return network_distribution(args.theta, args.v1, args.v2, settings, settings)


# --- commands ---------------------------------------------------------------

def cmd_correlators(args, out: _Output) -> int:
    settings = _settings(args.settings)
    born = distribution_to_correlators(network_distribution(args.theta, args.v1, args.v2, settings, settings))
    closed = closed_form_correlators(args.theta, args.v1, args.v2) if settings == "pauli" else None
    rows = []
    ref = dict(closed.labelled()) if closed is not None else {}
    for label, value in born.labelled():
        c = ref.get(label)
        rows.append([label, c, value, None if c is None else abs(c - value)])
    out.write(["correlator", "closed_form", "born_rule", "discrepancy"], rows)
    return 0


def cmd_scan(args, out: _Output) -> int:
    opts = _fit_options(args)
    header = ["theta", "settings", "V1", "V2crit", "residual", "feasible", "flag", "product", "analytic_V2"]
    rows = []
    settings = _settings(args.settings)
    for theta in args.theta:
        if args.diagonal:
            cv = critical_visibility_symmetricV(theta, settings, opts, args.resolution)
            name = settings if isinstance(settings, str) else json.dumps(settings)
            rows.append([theta, name, cv.value, cv.value, cv.residual, cv.flag != "never feasible", cv.flag, cv.value**2, None])
            continue
        if not args.v1:
            raise UsageError("scan needs --v1 values or --diagonal")
        for r in boundary_scan(theta, settings, args.v1, opts, args.resolution):
            rows.append([r.theta, r.settings, r.V1, r.V2crit, r.residual, r.feasible, r.flag, r.product, r.analytic_V2])
    out.write(header, rows)
    return 0


def cmd_inequalities(args, out: _Output) -> int:
    dist = _target(args)
    corr = distribution_to_correlators(dist)
    v = stz(corr)
    rows = [["S", v.S, None, None], ["T", v.T, None, None], ["Z", v.Z, None, None]]
    b = eval_B(corr)
    rows.append(["B", b.value, b.bound, b.violated])
    for family, margins in slice_margins(corr).items():
        for name, margin in margins.items():
            rows.append([f"{family}_margin:{name}", margin, 0.0, margin < -1e-12])
    bp = eval_Bprime(dist)
    rows.append(["Bprime", bp.value, bp.bilocal_bound, bp.bilocal_violated])
    rows.append(["Bprime_vs_quantum", bp.value, bp.quantum_bound, bp.quantum_violated if bp.quantum_bound_applies else None])
    lin, conc = Bprime_lin(dist)
    rows.append(["Bprime_lin", lin, None, None])
    rows.append(["Bprime_concavity_bound", conc, None, bp.value > conc + 1e-9])
    out.write(["quantity", "value", "bound", "violated"], rows)
    return 0


def cmd_zscan(args, out: _Output) -> int:
    if not args.z:
        raise UsageError("zscan needs at least one --z value")
    opts = _fit_options(args)
    rows = []
    for z in args.z:
        r = max_B_given_Z(z, opts)
        rows.append([z, r.value, 3 + 5 * z, r.Z])
    out.write(["Z", "maxB", "bound_3_plus_5Z", "Z_found"], rows)
    return 0


def cmd_circuit(args, out: _Output) -> int:
    thetas = args.theta if args.theta else DEFAULT_THETAS
    batch = verify_batch(thetas)
    rows = []
    for v in batch.verdicts:
        perm = " ".join(f"{b}->{i:02b}" for b, i in v.permutation.items())
        rows.append([v.theta, perm, v.control, v.max_infidelity, v.passed])
    body = None
    if args.format == "json":
        body = {
            "verdicts": [v.to_dict() for v in batch.verdicts],
            "uniform_permutation": batch.uniform_permutation,
            "pass": batch.passed,
            "diagram": diagram(),
        }
    out.write(["theta", "permutation", "control_wire", "max_infidelity", "pass"], rows, body)
    if not batch.passed:
        raise VerificationFailure("circuit verification failed" + ("" if batch.uniform_permutation else " (permutation depends on theta)"))
    return 0


def cmd_fit(args, out: _Output) -> int:
    res = fit_bilocal(_target(args), _fit_options(args))
    body = {"fit": res.to_dict()}
    row = [res.residual, res.feasible, res.iters_used, res.restarts_used, res.parametrization]
    out.write(["residual", "feasible", "iters_used", "restarts_used", "parametrization"], [row], body)
    return 0


COMMANDS = {
    "correlators": cmd_correlators,
    "scan": cmd_scan,
    "inequalities": cmd_inequalities,
    "zscan": cmd_zscan,
    "circuit": cmd_circuit,
    "fit": cmd_fit,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file whose keys mirror the long flags")
    common.add_argument("-o", "--output", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    fit = _Parser(add_help=False)
    fit.add_argument("--restarts", type=int, default=16)
    fit.add_argument("--max-iters", type=int, default=200)
    fit.add_argument("--tol", type=float, default=1e-5, help="feasibility threshold (max abs probability error)")
    fit.add_argument("--parametrization", choices=("direct", "symmetric14"), default="direct")
    fit.add_argument("--workers", type=int, default=None, help="parallel workers (default from EJMNET_WORKERS)")

    point = _Parser(add_help=False)
    point.add_argument("--theta", type=float, default=0.0)
    point.add_argument("--v1", type=float, default=1.0)
    point.add_argument("--v2", type=float, default=1.0)
    point.add_argument("--settings", default="pauli", help="preset name or JSON list of three Bloch vectors")

    parser = _Parser(prog="ejmnet", description="Bilocality with generalised elegant joint measurements.")
    parser.add_argument("--version", action="version", version=f"ejmnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}
    subs["correlators"] = sub.add_parser("correlators", parents=[common, point], help="closed-form vs Born-rule correlators")
    p = sub.add_parser("scan", parents=[common, fit], help="bilocal region boundary")
    p.add_argument("--theta", type=float, nargs="+", default=[0.0])
    p.add_argument("--settings", default="pauli")
    p.add_argument("--v1", type=float, nargs="*", default=[])
    p.add_argument("--diagonal", action="store_true", help="bisect along V1 = V2 instead")
    p.add_argument("--resolution", type=float, default=1e-3)
    subs["scan"] = p
    p = sub.add_parser("inequalities", parents=[common, point], help="inequality report")
    p.add_argument("--distribution", help="distribution (CSV/JSON) or correlator JSON file")
    subs["inequalities"] = p
    p = sub.add_parser("zscan", parents=[common, fit], help="max S/3-T under |off-pattern| <= Z")
    p.add_argument("--z", type=float, nargs="*", default=[])
    subs["zscan"] = p
    p = sub.add_parser("circuit", parents=[common], help="verify the measurement circuit")
    p.add_argument("--theta", type=float, nargs="*", default=[])
    subs["circuit"] = p
    p = sub.add_parser("fit", parents=[common, point, fit], help="search for a bilocal model")
    p.add_argument("--distribution", help="distribution (CSV/JSON) or correlator JSON file")
    subs["fit"] = p
    return parser, subs


def _parse(argv):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot load config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = set(cfg) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args, _Output(args, argv))
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except EjmError as exc:
        print(f"ejmnet: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
