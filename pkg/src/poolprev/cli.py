"""Command-line front end.

Subcommands::

    poolprev estimate --m 1 --y 0 --n 1 --z 1 --q 3
    poolprev pdf-grid --m 1 --y 0 --n 1 --z 1 --q 3 --points 101
    poolprev simulate sim1.json --out results/
    poolprev aggregate results/trials.csv --out results/

Exit codes: 0 success, 2 invalid input, 3 numeric or precision failure,
4 I/O failure.  Numbers are printed with 15 significant digits whatever the
internal precision.  ``POOLPREV_PRECISION`` overrides the default of 200
digits; ``--precision`` overrides both.

The "interval" reported everywhere is the equal-tailed Bayesian credible
interval.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources

from . import simulate as sim
from .errors import InfeasibleFitError, PrecisionError, TermLimitError, ValidationError
from .imperfect import TestAccuracy, build
from .numerics import DEFAULT_DIGITS, PrecisionContext
from .posterior import (
    Design,
    Observation,
    PriorBeta,
    beta_distribution,
    cdf,
    credible_interval,
    fit_beta_mom,
    mean,
    pdf,
    raw_moment,
    variance,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SCHEMA_VERSION = 1
PRECISION_ENV = "POOLPREV_PRECISION"

logger = logging.getLogger("poolprev")


def _num(x) -> float:
    return float(format(float(x), ".15g"))


def default_digits() -> int:
    raw = os.environ.get(PRECISION_ENV)
    if raw is None:
        return DEFAULT_DIGITS
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{PRECISION_ENV} must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class EstimateRequest:
    m: int
    y: int
    n: int
    z: int
    q: int = 1
    alpha: object = 1
    beta: object = 1
    se: object = 1
    sp: object = 1
    level: float = 0.95
    digits: int = DEFAULT_DIGITS
    format: str = "json"

    def parts(self):
        prior = PriorBeta(self.alpha, self.beta)
        design = Design(self.m, self.n, self.q)
        obs = Observation(self.y, self.z)
        obs.check(design)
        acc = TestAccuracy(self.se, self.sp)
        if not 0 < self.level < 1:
            raise ValidationError(f"level must lie in (0, 1), got {self.level}")
        if self.format not in ("json", "csv"):
            raise ValidationError(f"format must be json or csv, got {self.format!r}")
        return prior, design, obs, acc, PrecisionContext(self.digits)


def estimate_summary(req: EstimateRequest) -> dict:
    """Summary document for one data set."""
    prior, design, obs, acc, ctx = req.parts()
    post = build(prior, design, obs, acc, ctx)
    low, high = credible_interval(post, req.level)
    moments = [raw_moment(post, k) for k in (1, 2, 3)]
    try:
        a, b = fit_beta_mom(post)
        approx = beta_distribution(a, b, ctx)
        a_low, a_high = credible_interval(approx, req.level)
        mom = {"feasible": True, "a": _num(a), "b": _num(b),
               "interval": {"low": _num(a_low), "high": _num(a_high)}}
    except InfeasibleFitError:
        mom = {"feasible": False, "a": None, "b": None, "interval": None}
    return {
        "schema_version": SCHEMA_VERSION,
        "inputs": {
            "m": design.m, "y": obs.y, "n": design.n, "z": obs.z, "q": design.q,
            "alpha": _num(prior.alpha), "beta": _num(prior.beta),
            "se": _num(acc.se), "sp": _num(acc.sp), "level": _num(req.level),
        },
        "precision_digits": ctx.digits,
        "exact_arithmetic": post.exact,
        "components": post.n_components,
        "mean": _num(moments[0]),
        "variance": _num(variance(post)),
        "raw_moments": [_num(v) for v in moments],
        "interval": {"level": _num(req.level), "low": _num(low), "high": _num(high)},
        "mom_beta": mom,
    }


def _flatten(doc, prefix=""):
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, name + ".")
        elif isinstance(value, list):
            for i, v in enumerate(value, 1):
                yield f"{name}.{i}", v
        else:
            yield name, value


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".15g")
    return str(v)


def render_summary(doc: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(doc, indent=2) + "\n"
    lines = ["field,value"] + [f"{k},{_csv_value(v)}" for k, v in _flatten(doc)]
    return "\n".join(lines) + "\n"


def pdf_rows(req: EstimateRequest, points: int) -> list[tuple[float, float, float]]:
    """``(p, pdf, cdf)`` at ``points`` equally spaced abscissae in [0, 1]."""
    if isinstance(points, bool) or not isinstance(points, int) or points < 2:
        raise ValidationError(f"points must be an integer >= 2, got {points!r}")
    prior, design, obs, acc, ctx = req.parts()
    post = build(prior, design, obs, acc, ctx)
    rows = []
    for i in range(points):
        p = i / (points - 1)
        rows.append((p, float(pdf(post, p)), float(cdf(post, p))))
    return rows


def render_pdf_rows(rows) -> str:
    fmt = sim.fmt
    return "p,pdf,cdf\n" + "".join(f"{fmt(p)},{fmt(d)},{fmt(c)}\n" for p, d, c in rows)


# --- simulation configuration ------------------------------------------------------


@dataclass(frozen=True)
class GridConfig:
    """Simulation grid; ``n`` is ``total_tests - m`` for every ``m``."""

    p_true: list
    m: list
    total_tests: int
    q: list
    accuracy: list = field(default_factory=lambda: [{"se": 1, "sp": 1}])
    alpha: object = 1
    beta: object = 1
    trials: int = 100
    seed: int = 0

    @classmethod
    def from_dict(cls, doc) -> "GridConfig":
        """Validate a config document, reporting every offending field at once."""
        if not isinstance(doc, dict):
            raise ValidationError("config must be a JSON object")
        problems = []
        known = {"p_true", "m", "total_tests", "q", "accuracy", "alpha", "beta", "trials", "seed"}
        for key in sorted(set(doc) - known):
            problems.append(f"{key}: unknown field")
        for key in ("p_true", "m", "total_tests", "q"):
            if key not in doc:
                problems.append(f"{key}: required")

        def int_list(key, lo):
            v = doc.get(key)
            if not isinstance(v, list) or not v or not all(
                isinstance(x, int) and not isinstance(x, bool) and x >= lo for x in v
            ):
                problems.append(f"{key}: must be a non-empty list of integers >= {lo}")

        if "p_true" in doc:
            v = doc["p_true"]
            if not isinstance(v, list) or not v or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) and 0 < x <= 1 for x in v
            ):
                problems.append("p_true: must be a non-empty list of numbers in (0, 1]")
        if "m" in doc:
            int_list("m", 0)
        if "q" in doc:
            int_list("q", 1)
        total = doc.get("total_tests")
        if "total_tests" in doc and (isinstance(total, bool) or not isinstance(total, int) or total < 0):
            problems.append("total_tests: must be a nonnegative integer")
        elif isinstance(doc.get("m"), list) and isinstance(total, int):
            bad = [m for m in doc["m"] if isinstance(m, int) and m > total]
            if bad:
                problems.append(f"m: values {bad} exceed total_tests, giving negative n")
        trials = doc.get("trials", 100)
        if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
            problems.append("trials: must be an integer >= 1")
        seed = doc.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            problems.append("seed: must be an unsigned 64-bit integer")
        accuracy = doc.get("accuracy", [{"se": 1, "sp": 1}])
        if not isinstance(accuracy, list) or not accuracy:
            problems.append("accuracy: must be a non-empty list of {se, sp} objects")
        else:
            for i, entry in enumerate(accuracy):
                try:
                    TestAccuracy(entry["se"], entry["sp"])
                except (KeyError, TypeError):
                    problems.append(f"accuracy[{i}]: needs se and sp")
                except ValidationError as exc:
                    problems.append(f"accuracy[{i}]: {exc}")
        try:
            PriorBeta(doc.get("alpha", 1), doc.get("beta", 1))
        except ValidationError as exc:
            problems.append(f"alpha/beta: {exc}")
        if problems:
            raise ValidationError("invalid config:\n  " + "\n  ".join(problems))
        return cls(**{k: doc[k] for k in doc})

    def conditions(self) -> list[sim.SimCondition]:
        """Grid cells ordered by q, accuracy, m, then p_true."""
        prior = PriorBeta(self.alpha, self.beta)
        out = []
        for q in self.q:
            for entry in self.accuracy:
                acc = TestAccuracy(entry["se"], entry["sp"])
                for m in self.m:
                    design = Design(m, self.total_tests - m, q)
                    for p in self.p_true:
                        out.append(sim.SimCondition(p, design, acc, prior, self.trials, self.seed))
        return out


def load_grid_config(path) -> GridConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    return GridConfig.from_dict(doc)


def shipped_config(name: str):
    """Path-like handle to a config bundled with the package (e.g. ``sim1.json``)."""
    return resources.files("poolprev") / "configs" / name


def run_simulation(config: GridConfig, out_dir, digits: int = DEFAULT_DIGITS, workers: int = 1):
    """Run ``config`` and write trials.csv, aggregates.csv and marginals.csv."""
    grid = config.conditions()
    records = sim.run_grid(grid, ctx=PrecisionContext(digits), workers=workers)
    os.makedirs(out_dir, exist_ok=True)
    sim.write_trials_csv(records, os.path.join(out_dir, "trials.csv"))
    sim.write_aggregates_csv(sim.aggregate(records), os.path.join(out_dir, "aggregates.csv"))
    sim.write_marginals_csv(sim.marginals(records), os.path.join(out_dir, "marginals.csv"))
    return grid, records


# --- argument parsing ------------------------------------------------------------


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=int, required=True, help="individual tests")
    p.add_argument("--y", type=int, required=True, help="positive individual tests")
    p.add_argument("--n", type=int, required=True, help="pooled tests")
    p.add_argument("--z", type=int, required=True, help="positive pooled tests")
    p.add_argument("--q", type=int, default=1, help="samples per pool")
    p.add_argument("--alpha", default="1", help="prior alpha (default 1)")
    p.add_argument("--beta", default="1", help="prior beta (default 1)")
    p.add_argument("--se", default="1", help="sensitivity (default 1)")
    p.add_argument("--sp", default="1", help="specificity (default 1)")
    p.add_argument("--level", type=float, default=0.95, help="interval level")
    p.add_argument("--precision", type=int, default=None, help="significant digits")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poolprev",
        description="Exact Bayesian prevalence from individual and pooled tests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="posterior summary for one data set")
    _data_args(p)
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("pdf-grid", help="posterior density and CDF on a grid")
    _data_args(p)
    p.add_argument("--points", type=int, default=101)

    p = sub.add_parser("simulate", help="run a simulation grid from a JSON config")
    p.add_argument("config", help="config path, or the name of a shipped config")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--precision", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("aggregate", help="recompute aggregates from trials.csv")
    p.add_argument("trials", help="path to trials.csv")
    p.add_argument("--out", default=".", help="output directory")
    return parser


def _request(args, digits) -> EstimateRequest:
    return EstimateRequest(
        m=args.m, y=args.y, n=args.n, z=args.z, q=args.q,
        alpha=args.alpha, beta=args.beta, se=args.se, sp=args.sp,
        level=args.level, digits=digits, format=getattr(args, "format", "json"),
    )


def _resolve_config(name: str) -> str:
    if os.path.exists(name):
        return name
    bundled = shipped_config(name)
    if bundled.is_file():
        return str(bundled)
    return name


def _dispatch(args, out, err) -> int:
    if args.command == "aggregate":
        records = sim.read_trials_csv(args.trials)
        rows = sim.aggregate(records)
        os.makedirs(args.out, exist_ok=True)
        sim.write_aggregates_csv(rows, os.path.join(args.out, "aggregates.csv"))
        sim.write_marginals_csv(sim.marginals(records), os.path.join(args.out, "marginals.csv"))
        out.write(f"conditions: {len(rows)}\ntrials: {len(records)}\n")
        return EXIT_OK

    digits = args.precision if args.precision is not None else default_digits()
    if args.command == "estimate":
        req = _request(args, digits)
        out.write(render_summary(estimate_summary(req), req.format))
        return EXIT_OK
    if args.command == "pdf-grid":
        out.write(render_pdf_rows(pdf_rows(_request(args, digits), args.points)))
        return EXIT_OK

    config = load_grid_config(_resolve_config(args.config))
    if args.seed is not None:
        config = GridConfig.from_dict({**dataclasses.asdict(config), "seed": args.seed})
    grid, records = run_simulation(config, args.out, digits, max(1, args.workers))
    out.write(f"conditions: {len(grid)}\ntrials: {len(records)}\n")
    failed = [r for r in records if r.failed]
    if failed:
        err.write(f"warnings: {len(failed)} trial(s) failed\n")
        for r in failed:
            err.write(f"  condition {r.condition_id} trial {r.trial}: {r.error}\n")
    return EXIT_OK


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args, out, err)
    except ValidationError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INVALID
    except (PrecisionError, TermLimitError) as exc:
        err.write(f"numeric failure: {exc}\n(try a larger --precision or a smaller design)\n")
        return EXIT_NUMERIC
    except OSError as exc:
        err.write(f"I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
