"""Command-line interface: ``mdapportion <subcommand> ...``.

Exit codes: 0 success, 1 invalid input, 2 infeasible or failed
certification, 3 internal guarantee violated.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .divisor import dhondt_bounded
from .errors import ApportionmentError, CertificationFailed, ParseError, ValidationError
from .fairshare import fair_share
from .lpcore import build_lp, is_box_rounding, solve_lp, window_violations
from .methods import ALL_METHODS, Method, MethodConfig, build_spec, run_method, seats_from_assignment
from .metrics import GI_FORMS, evaluate, evaluate_all
from .model import Assignment, ElectionInstance, VoteTensor, achieved_deviation, aggregate, load_instance
from .rounding import DeviationPolicy
from .simulate import DEFAULT_SEED, DeviationHistogram, SimConfig, VoteModel, run_records, write_records

log = logging.getLogger("mdapportion")


def fmt(x) -> str:
    """12 significant digits; integers stay integers."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def fmt_sci(x) -> str:
    return f"{float(x):.11e}"


def _round_floats(obj):
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_round_floats(obj), indent=2, sort_keys=True) + "\n"


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Outputs:
    """Collects output files for one invocation; writes the manifest last."""

    def __init__(self, out_dir, args, inputs=()):
        self.dir = Path(out_dir) if out_dir else None
        self.args = args
        self.inputs = [p for p in inputs if p]
        self.written: list[str] = []
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str, echo: bool = False) -> None:
        if self.dir is None:
            if echo:
                sys.stdout.write(text)
            return
        (self.dir / name).write_text(text, encoding="utf-8")
        self.written.append(name)

    def finish(self) -> None:
        if self.dir is None:
            return
        config = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        config = {k: (str(v) if isinstance(v, Path) else v) for k, v in config.items()}
        manifest = {
            "tool": "mdapportion",
            "version": __version__,
            "subcommand": self.args.command,
            "seed": getattr(self.args, "seed", None),
            "config": config,
            "inputs": {str(p): sha256(p) for p in self.inputs},
            "outputs": sorted(self.written),
        }
        (self.dir / "manifest.json").write_text(_dump_json(manifest), encoding="utf-8")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def parse_alpha(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad deviation vector {text!r}") from None
    if any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("deviations must be nonnegative")
    return vals


def _instance(args) -> ElectionInstance:
    inst = load_instance(args.candidates, args.districts, getattr(args, "house_size", None))
    inst.validate()
    return inst


def _config(args, method) -> MethodConfig:
    policy = DeviationPolicy.default(3)
    if getattr(args, "fallback", None):
        policy = DeviationPolicy(policy.schedule, args.fallback)
    return MethodConfig(method, args.threshold, policy, args.backend, args.strict_ties)


# -- seat files ---------------------------------------------------------------


def seats_rows(votes: VoteTensor, seats: np.ndarray):
    for ix in np.ndindex(seats.shape):
        if votes.values[ix] > 0 or seats[ix] != 0:
            yield [*(votes.dims[i][k] for i, k in enumerate(ix)), int(seats[ix])]


def read_seats(path, votes: VoteTensor) -> np.ndarray:
    seats = np.zeros(votes.shape, dtype=np.int64)
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(exc), path) from exc
    with fh:
        reader = csv.DictReader(fh)
        need = ("district", "list", "gender", "seats")
        if reader.fieldnames is None or any(f not in reader.fieldnames for f in need):
            raise ParseError(f"expected columns {list(need)}", path, 1)
        for line, row in enumerate(reader, start=2):
            try:
                ix = tuple(votes.index(i, row[f]) for i, f in enumerate(need[:3]))
            except (KeyError, ValueError):
                raise ValidationError(f"{path}:{line}: unknown tuple {[row[f] for f in need[:3]]}") from None
            try:
                seats[ix] = int(row["seats"])
            except ValueError:
                raise ParseError(f"seats {row['seats']!r} is not an integer", path, line) from None
            if seats[ix] < 0:
                raise ParseError("seats must be nonnegative", path, line)
    return seats


def read_elected(path, instance: ElectionInstance) -> Assignment:
    elected = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.DictReader(fh), start=2):
            cid = row.get("candidate_id", "")
            try:
                instance.candidate(cid)
            except KeyError:
                raise ValidationError(f"{path}:{line}: unknown candidate {cid!r}") from None
            if row.get("elected", "").strip().lower() in ("1", "true", "yes"):
                elected.append(cid)
    return Assignment(frozenset(elected))


# -- subcommands ----------------------------------------------------------------


def cmd_apportion(args) -> int:
    inst = _instance(args)
    method = Method(args.method)
    res = run_method(inst, method, _config(args, method) if method.is_proportional else None)
    out = Outputs(args.out, args, [args.candidates, args.districts])
    votes = res.votes
    out.write("seats.csv", _csv_text(["district", "list", "gender", "seats"], seats_rows(votes, res.seats)), echo=True)
    out.write(
        "elected.csv",
        _csv_text(["candidate_id", "elected"], [[c.id, int(c.id in res.assignment.elected)] for c in inst.candidates]),
    )
    summary = {
        "method": method.value,
        "house_size": inst.house_size,
        "district_seats": res.district_seats(),
        "list_seats": res.list_seats(),
        "gender_seats": res.gender_seats(),
        "total_votes_elected": res.total_votes(inst),
    }
    if res.apportionment is not None:
        app = res.apportionment
        summary["achieved_deviation"] = list(app.achieved_deviation)
        summary["alpha"] = list(app.alpha) if app.alpha else None
        summary["multipliers"] = {
            name: {k: fmt_sci(v) for k, v in m.items()} for name, m in zip(votes.names, app.multiplier_map())
        }
        summary["marginals"] = {
            name: {k: int(m[j]) for j, k in enumerate(votes.dims[i])}
            for i, (name, m) in enumerate(zip(votes.names, res.spec.marginals))
        }
    out.write("summary.json", _dump_json(summary))
    out.write("audit.jsonl", "".join(json.dumps(e, sort_keys=True) + "\n" for e in res.audit))
    out.finish()
    if args.out:
        print(f"{method.value}: lists {res.list_seats()} genders {res.gender_seats()}", file=sys.stderr)
    return 0


def cmd_fairshare(args) -> int:
    inst = _instance(args)
    _, spec, _ = build_spec(inst, _config(args, Method(args.method)))
    votes = aggregate(inst)
    fs = fair_share(votes, spec, tolerance=args.tolerance)
    out = Outputs(args.out, args, [args.candidates, args.districts])
    rows = (
        [*(votes.dims[i][k] for i, k in enumerate(ix)), fmt(fs.values[ix])]
        for ix in np.ndindex(fs.values.shape)
        if votes.values[ix] > 0
    )
    out.write("fairshare.csv", _csv_text(["district", "list", "gender", "value"], rows), echo=True)
    mult = {
        "multipliers": {
            name: {k: fmt_sci(lam[j]) for j, k in enumerate(votes.dims[i])}
            for i, (name, lam) in enumerate(zip(votes.names, fs.multipliers))
        },
        "residual": fmt_sci(fs.residual),
        "sweeps": fs.sweeps,
    }
    out.write("multipliers.json", _dump_json(mult))
    if not args.out:
        sys.stderr.write(_dump_json(mult))
    out.finish()
    return 0


def cmd_dhondt(args) -> int:
    if args.file:
        labels, votes, lower, upper = [], [], [], []
        with open(args.file, newline="", encoding="utf-8") as fh:
            for line, row in enumerate(csv.DictReader(fh), start=2):
                try:
                    labels.append(row["label"])
                    votes.append(int(row["votes"]))
                    lower.append(int(row.get("lower") or 0))
                    upper.append(int(row.get("upper") or args.seats))
                except (KeyError, ValueError):
                    raise ParseError("expected columns label,votes[,lower,upper]", args.file, line) from None
    else:
        votes = [int(v) for v in args.votes.split(",")]
        labels = args.labels.split(",") if args.labels else [str(i + 1) for i in range(len(votes))]
        lower = parse_alpha(args.lower) if args.lower else [0] * len(votes)
        upper = parse_alpha(args.upper) if args.upper else [args.seats] * len(votes)
    if not (len(labels) == len(votes) == len(lower) == len(upper)):
        raise ValidationError("labels, votes and bounds need equal lengths")
    res = dhondt_bounded(votes, args.seats, lower, upper, labels)
    out = Outputs(args.out, args, [args.file] if args.file else [])
    out.write("seats.csv", _csv_text(["label", "votes", "seats"], zip(labels, votes, res.seats)), echo=True)
    info = {"multiplier": fmt_sci(float(res.multiplier)), "multiplier_exact": str(res.multiplier)}
    out.write("summary.json", _dump_json(info))
    if not args.out:
        print(f"# multiplier {info['multiplier']} ({info['multiplier_exact']})", file=sys.stderr)
    out.finish()
    return 0


def cmd_evaluate(args) -> int:
    inst = _instance(args)
    if args.elected:
        method = Method(args.method or "tpm")
        res = run_method(inst, method, _config(args, method) if method.is_proportional else None)
        res.assignment = read_elected(args.elected, inst)
        res.seats = seats_from_assignment(res.assignment, inst, res.votes)
        reports = [evaluate(res, inst, args.gi_form)]
    else:
        methods = ALL_METHODS if args.method in (None, "all") else (Method(args.method),)
        results = [run_method(inst, m, _config(args, m) if m.is_proportional else None) for m in methods]
        reports = evaluate_all(results, inst, args.gi_form)
    out = Outputs(args.out, args, [args.candidates, args.districts, args.elected])
    payload = {"gi_form": args.gi_form, "reports": [r.to_dict() for r in reports]}
    out.write("metrics.json", _dump_json(payload), echo=not args.csv_only)
    rows = [[r["method"], r["metric"], r["district"], fmt(r["value"])] for rep in reports for r in rep.rows()]
    out.write("metrics.csv", _csv_text(["method", "metric", "district", "value"], rows), echo=args.csv_only)
    out.finish()
    return 0


def cmd_simulate(args) -> int:
    models = list(VoteModel) if args.model == "all" else [VoteModel(int(args.model))]
    configs = [SimConfig(model=m, runs=args.runs, seed=args.seed) for m in models]
    t0 = time.perf_counter()
    records = run_records(configs, args.backend, args.workers)
    hist = DeviationHistogram()
    for r in records:
        hist.add(r)
    out = Outputs(args.out, args)
    rows = [[m, dev, c[dev]] for m, c in sorted(hist.per_method().items()) for dev in sorted(c)]
    out.write("histogram.csv", _csv_text(["method", "deviation", "count"], rows), echo=True)
    out.write(
        "histogram_by_model.csv",
        _csv_text(["model", "method", "deviation", "count"], ([r["model"], r["method"], r["deviation"], r["count"]] for r in hist.rows())),
    )
    if out.dir:
        write_records(records, out.dir / "runs.csv")
        out.written.append("runs.csv")
    summary = hist.summary()
    summary.pop("cpu_seconds")  # keep outputs byte-identical across machines
    out.write("summary.json", _dump_json(summary))
    out.finish()
    log.info("simulation finished in %.1f s", time.perf_counter() - t0)
    return 0


def certify_seats(inst: ElectionInstance, seats: np.ndarray, config: MethodConfig, alpha):
    """Check a seat tensor against the method's marginals, bounds and LP certificate.

    Returns ``(lines, failures)`` where ``failures`` names each failed condition.
    """
    votes, spec, _ = build_spec(inst, config)
    pair = solve_lp(build_lp(votes, spec), config.backend)
    lines, failures = [], []

    def check(name, ok, detail=""):
        lines.append(f"PASS {name}" if ok else f"FAIL {name}{': ' + detail if detail else ''}")
        if not ok:
            failures.append(f"{name}: {detail}" if detail else name)

    def label(ix):
        return "(" + ",".join(votes.dims[i][k] for i, k in enumerate(ix)) + ")"

    off_support = [label(ix) for ix in zip(*np.nonzero((votes.values == 0) & (seats != 0)))]
    check("support", not off_support, ", ".join(off_support[:5]))
    bad_bounds = [label(ix) for ix in zip(*np.nonzero((seats < spec.lower) | (seats > spec.upper)))]
    check("bounds", not bad_bounds, ", ".join(bad_bounds[:5]))
    dev = achieved_deviation(seats, spec)
    for i, name in enumerate(votes.names):
        sums = seats.sum(axis=tuple(j for j in range(seats.ndim) if j != i))
        worst = [
            f"{votes.dims[i][k]}: {int(sums[k])} vs {int(m)}"
            for k, m in enumerate(spec.marginals[i])
            if abs(int(sums[k]) - int(m)) > alpha[i]
        ]
        check(f"marginal[{name}] deviation {dev[i]} <= {alpha[i]}", dev[i] <= alpha[i], "; ".join(worst[:5]))
    check("box", is_box_rounding(pair, seats), "not a floor/ceiling rounding of the LP optimum")
    viol = [label(e) for e in window_violations(pair, seats)]
    check("windows", not viol, ", ".join(viol[:5]))
    lines.append(f"achieved deviation {tuple(dev)}")
    return lines, failures


def cmd_certify(args) -> int:
    inst = _instance(args)
    votes = aggregate(inst)
    seats = read_seats(args.apportionment, votes)
    config = _config(args, Method(args.method))
    lines, failures = certify_seats(inst, seats, config, args.alpha)
    for line in lines:
        print(line)
    out = Outputs(args.out, args, [args.apportionment, args.candidates, args.districts])
    out.write("certify.txt", "\n".join(lines) + "\n")
    out.finish()
    if failures:
        raise CertificationFailed("; ".join(failures))
    return 0


# -- parser ------------------------------------------------------------------------


def _add_instance(p, method_choices=None, default_method="tpm"):
    p.add_argument("--candidates", required=True, type=Path, help="candidates CSV")
    p.add_argument("--districts", required=True, type=Path, help="districts CSV")
    p.add_argument("--house-size", type=int, default=None, help="must equal the sum of district seats")
    if method_choices:
        p.add_argument("--method", choices=method_choices, default=default_method)
    p.add_argument("--threshold", type=float, default=0.03)
    p.add_argument("--backend", choices=("simplex", "highs"), default="simplex")
    p.add_argument("--strict-ties", action="store_true", help="fail on district-top vote ties")
    p.add_argument("--fallback", type=parse_alpha, default=None, help="guaranteed deviation vector, e.g. 1,0,4")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdapportion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--json-errors", action="store_true", help="report errors as JSON on stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    methods = [m.value for m in ALL_METHODS]
    proportional = [m.value for m in ALL_METHODS if m.is_proportional]

    p = sub.add_parser("apportion", help="run an electoral method")
    _add_instance(p, methods)
    p.add_argument("--out", type=Path, help="output directory (default: seats CSV to stdout)")
    p.set_defaults(func=cmd_apportion)

    p = sub.add_parser("fairshare", help="fractional fair share under a method's marginals")
    _add_instance(p, proportional)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_fairshare)

    p = sub.add_parser("dhondt", help="one-dimensional (bounded) D'Hondt")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--votes", help="comma-separated vote counts")
    src.add_argument("--file", type=Path, help="CSV with label,votes[,lower,upper]")
    p.add_argument("--seats", type=int, required=True)
    p.add_argument("--labels")
    p.add_argument("--lower")
    p.add_argument("--upper")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_dhondt)

    p = sub.add_parser("evaluate", help="disproportionality and representativeness metrics")
    _add_instance(p)
    p.add_argument("--method", choices=[*methods, "all"], default=None)
    p.add_argument("--elected", type=Path, help="evaluate this candidate_id,elected file instead of recomputing")
    p.add_argument("--gi-form", choices=GI_FORMS, default="gallagher")
    p.add_argument("--csv-only", action="store_true", help="print the flat CSV instead of JSON")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="deviation frequencies over random vote models")
    p.add_argument("--model", choices=["1", "2", "3", "4", "all"], default="all")
    p.add_argument("--runs", type=int, default=300, help="runs per model")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--backend", choices=("simplex", "highs"), default="simplex")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("certify", help="re-certify a seat tensor")
    _add_instance(p, proportional)
    p.add_argument("--apportionment", required=True, type=Path, help="district,list,gender,seats CSV")
    p.add_argument("--alpha", type=parse_alpha, default=(1, 0, 4), help="allowed deviations (default 1,0,4)")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_certify)
    return parser


def _report(exc: BaseException, code: int, as_json: bool) -> None:
    if as_json:
        payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        for attr in ("path", "line", "key"):
            if getattr(exc, attr, None) is not None:
                payload[attr] = str(getattr(exc, attr))
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    else:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")


def main(argv=None) -> int:
    level = os.environ.get("APPORTION_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ApportionmentError as exc:
        _report(exc, exc.exit_code, args.json_errors)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        _report(exc, 1, args.json_errors)
        return 1


if __name__ == "__main__":
    sys.exit(main())
