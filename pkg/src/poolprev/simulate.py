"""Monte Carlo study of interval coverage, width and posterior mean.

Random streams
--------------
Every trial draws from its own Philox4x64 generator (numpy's implementation
of the Salmon et al. counter-based generator).  The 128-bit key is
``(seed << 64) | condition_hash`` where ``condition_hash`` is the first 8
bytes (big-endian) of the BLAKE2b digest of :meth:`SimCondition.label`.  The
256-bit counter starts at ``trial_index << 192``, so draws within a trial
advance the low words and never reach another trial's block.  Conditions and
trials can therefore run in any order or process without changing results.

Within a trial the draws are, in order: ``m`` uniforms for individual
statuses, ``m`` uniforms for individual test outcomes, an ``n x q`` block for
pool member statuses and ``n`` uniforms for pool outcomes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import os
import tempfile
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import PoolPrevError, ValidationError
from .imperfect import TestAccuracy, build
from .numerics import PrecisionContext
from .posterior import Design, Observation, PriorBeta, credible_interval, mean

logger = logging.getLogger(__name__)

TRIALS_COLUMNS = (
    "condition_id", "trial", "p_true", "m", "n", "q", "se", "sp", "alpha", "beta",
    "y", "z", "covered", "ci_low", "ci_high", "ci_width", "posterior_mean",
)
AGGREGATE_COLUMNS = (
    "condition_id", "coverage", "width_mean", "width_std", "e_mean", "e_std", "pct_error",
)
MARGINAL_COLUMNS = (
    "q", "m", "n", "se", "sp", "conditions", "trials", "coverage", "width_mean", "pct_error_mean",
)
SIG_DIGITS = 15

_MASK64 = (1 << 64) - 1


def fmt(x) -> str:
    """Fixed CSV number formatting: 15 significant digits."""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    return format(float(x), f".{SIG_DIGITS}g")


@dataclass(frozen=True)
class SimCondition:
    """One cell of a simulation grid."""

    p_true: float
    design: Design
    acc: TestAccuracy = field(default_factory=TestAccuracy)
    prior: PriorBeta = field(default_factory=PriorBeta)
    trials: int = 100
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.p_true, bool) or not 0 <= self.p_true <= 1:
            raise ValidationError(f"p_true must lie in [0, 1], got {self.p_true!r}")
        if isinstance(self.trials, bool) or not isinstance(self.trials, int) or self.trials < 1:
            raise ValidationError(f"trials must be a positive integer, got {self.trials!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed <= _MASK64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    def label(self) -> str:
        d = self.design
        return (
            f"p={fmt(self.p_true)};m={d.m};n={d.n};q={d.q};"
            f"se={self.acc.se};sp={self.acc.sp};alpha={self.prior.alpha};beta={self.prior.beta}"
        )

    def stream_hash(self) -> int:
        digest = hashlib.blake2b(self.label().encode("ascii"), digest_size=8).digest()
        return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class TrialRecord:
    condition_id: int
    trial: int
    condition: SimCondition
    y: int
    z: int
    covered: bool = False
    ci_low: float = math.nan
    ci_high: float = math.nan
    ci_width: float = math.nan
    posterior_mean: float = math.nan
    error: str | None = None

    @property
    def p_true(self) -> float:
        return self.condition.p_true

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def pct_error(self) -> float:
        return abs(self.posterior_mean - self.p_true) / self.p_true


@dataclass(frozen=True)
class AggregateRow:
    condition_id: int
    coverage: float
    width_mean: float
    width_std: float
    e_mean: float
    e_std: float
    pct_error: float
    trials: int = 0
    failures: int = 0


def trial_rng(cond: SimCondition, trial_index: int) -> np.random.Generator:
    key = (cond.seed << 64) | cond.stream_hash()
    return np.random.Generator(np.random.Philox(key=key, counter=trial_index << 192))


def simulate_trial(cond: SimCondition, trial_index: int) -> Observation:
    """Draw ``(y, z)`` for one trial of ``cond``."""
    rng = trial_rng(cond, trial_index)
    d = cond.design
    p = cond.p_true
    se, sp = float(cond.acc.se), float(cond.acc.sp)

    status = rng.random(d.m) < p
    read = rng.random(d.m)
    y = int(np.count_nonzero(np.where(status, read < se, read < 1 - sp)))

    pool_status = (rng.random((d.n, d.q)) < p).any(axis=1)
    read = rng.random(d.n)
    z = int(np.count_nonzero(np.where(pool_status, read < se, read < 1 - sp)))
    return Observation(y, z)


def run_trial(
    cond: SimCondition,
    condition_id: int,
    trial_index: int,
    level: float = 0.95,
    ctx: PrecisionContext | None = None,
) -> TrialRecord:
    obs = simulate_trial(cond, trial_index)
    try:
        post = build(cond.prior, cond.design, obs, cond.acc, ctx)
        low, high = credible_interval(post, level)
        e = float(mean(post))
    except PoolPrevError as exc:
        logger.warning("condition %d trial %d (%s, y=%d, z=%d) failed: %s",
                       condition_id, trial_index, cond.label(), obs.y, obs.z, exc)
        return TrialRecord(condition_id, trial_index, cond, obs.y, obs.z, error=str(exc))
    return TrialRecord(
        condition_id, trial_index, cond, obs.y, obs.z,
        covered=low <= cond.p_true <= high,
        ci_low=low, ci_high=high, ci_width=high - low, posterior_mean=e,
    )


def _run_condition(args):
    condition_id, cond, level, digits = args
    ctx = PrecisionContext(digits)
    return [run_trial(cond, condition_id, t, level, ctx) for t in range(cond.trials)]


def run_grid(
    grid,
    level: float = 0.95,
    ctx: PrecisionContext | None = None,
    workers: int = 1,
) -> list[TrialRecord]:
    """Run every trial of every condition; ``condition_id`` is the grid index.

    Failed trials are kept as records with ``error`` set.  Output is sorted by
    ``(condition_id, trial)`` regardless of ``workers``.
    """
    digits = (ctx or PrecisionContext()).digits
    jobs = [(i, cond, level, digits) for i, cond in enumerate(grid)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_condition, jobs))
    else:
        chunks = [_run_condition(job) for job in jobs]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.condition_id, r.trial))
    return records


def aggregate(records) -> list[AggregateRow]:
    """Per-condition coverage, width and expectation summaries.

    Standard deviations are population (ddof=0).  ``pct_error`` is
    ``|mean posterior mean - p_true| / p_true``.  Failed trials are counted
    but excluded from every statistic.
    """
    groups: dict = defaultdict(list)
    for r in records:
        groups[r.condition_id].append(r)
    if not groups:
        raise ValidationError("no trial records to aggregate")
    rows = []
    for cid in sorted(groups):
        # fixed summation order keeps the result independent of input order
        group = sorted(groups[cid], key=lambda r: r.trial)
        ok = [r for r in group if not r.failed]
        if not ok:
            raise ValidationError(f"condition {cid} has no successful trials")
        p_true = ok[0].p_true
        covered = np.array([r.covered for r in ok], dtype=float)
        widths = np.array([r.ci_width for r in ok])
        means = np.array([r.posterior_mean for r in ok])
        e_mean = float(np.mean(means))
        rows.append(AggregateRow(
            condition_id=cid,
            coverage=float(np.mean(covered)),
            width_mean=float(np.mean(widths)),
            width_std=float(np.std(widths)),
            e_mean=e_mean,
            e_std=float(np.std(means)),
            pct_error=abs(e_mean - p_true) / p_true if p_true > 0 else math.nan,
            trials=len(group),
            failures=len(group) - len(ok),
        ))
    return rows


def marginals(records) -> list[dict]:
    """Summaries over all true prevalences for each (q, m, n, se, sp)."""
    groups: dict = defaultdict(list)
    for r in records:
        if r.failed:
            continue
        c = r.condition
        groups[(c.design.q, c.design.m, c.design.n, c.acc.se, c.acc.sp)].append(r)
    out = []
    for key in sorted(groups):
        group = sorted(groups[key], key=lambda r: (r.condition_id, r.trial))
        q, m, n, se, sp = key
        pct = [r.pct_error for r in group if r.p_true > 0]
        out.append({
            "q": q, "m": m, "n": n, "se": se, "sp": sp,
            "conditions": len({r.condition_id for r in group}),
            "trials": len(group),
            "coverage": float(np.mean([r.covered for r in group])),
            "width_mean": float(np.mean([r.ci_width for r in group])),
            "pct_error_mean": float(np.mean(pct)) if pct else math.nan,
        })
    return out


# --- CSV ----------------------------------------------------------------------


def _write_atomic(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def trials_table(records) -> str:
    rows = []
    for r in records:
        if r.failed:
            continue
        c = r.condition
        rows.append([
            r.condition_id, r.trial, fmt(c.p_true), c.design.m, c.design.n, c.design.q,
            fmt(c.acc.se), fmt(c.acc.sp), fmt(c.prior.alpha), fmt(c.prior.beta),
            r.y, r.z, fmt(r.covered), fmt(r.ci_low), fmt(r.ci_high), fmt(r.ci_width),
            fmt(r.posterior_mean),
        ])
    return _csv_text(TRIALS_COLUMNS, rows)


def aggregates_table(rows) -> str:
    """Aggregate CSV; a trailing ``failures`` column appears only if any trial failed."""
    with_failures = any(r.failures for r in rows)
    header = AGGREGATE_COLUMNS + (("failures",) if with_failures else ())
    body = []
    for r in rows:
        line = [r.condition_id] + [fmt(getattr(r, name)) for name in AGGREGATE_COLUMNS[1:]]
        if with_failures:
            line.append(r.failures)
        body.append(line)
    return _csv_text(header, body)


def marginals_table(rows) -> str:
    return _csv_text(
        MARGINAL_COLUMNS,
        [[fmt(row[name]) if not isinstance(row[name], int) else row[name]
          for name in MARGINAL_COLUMNS] for row in rows],
    )


def write_trials_csv(records, path) -> None:
    _write_atomic(path, trials_table(records))


def write_aggregates_csv(rows, path) -> None:
    _write_atomic(path, aggregates_table(rows))


def write_marginals_csv(rows, path) -> None:
    _write_atomic(path, marginals_table(rows))


def read_trials_csv(path) -> list[TrialRecord]:
    """Load a ``trials.csv`` written by :func:`write_trials_csv`."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRIALS_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"trials file lacks columns: {', '.join(sorted(missing))}")
        for row in reader:
            cond = SimCondition(
                p_true=float(row["p_true"]),
                design=Design(int(row["m"]), int(row["n"]), int(row["q"])),
                acc=TestAccuracy(row["se"], row["sp"]),
                prior=PriorBeta(row["alpha"], row["beta"]),
            )
            records.append(TrialRecord(
                condition_id=int(row["condition_id"]),
                trial=int(row["trial"]),
                condition=cond,
                y=int(row["y"]),
                z=int(row["z"]),
                covered=row["covered"] == "1",
                ci_low=float(row["ci_low"]),
                ci_high=float(row["ci_high"]),
                ci_width=float(row["ci_width"]),
                posterior_mean=float(row["posterior_mean"]),
            ))
    return records
