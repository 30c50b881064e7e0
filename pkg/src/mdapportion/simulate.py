"""Random vote models and the deviation-frequency experiment.

Four generators over a 28-district, 22-list, 2-gender layout with 138 seats:
a multiplicative normal perturbation of a base tensor, Poisson counts with
exponential (Gamma shape 1) rates, uniform counts, and heavy-tailed Pareto
counts. Models 2-4 are rescaled so that each district's share of votes
matches its share of population.
"""
from __future__ import annotations

import csv
import enum
import logging
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .divisor import dhondt_bounded
from .errors import ApportionmentError
from .lpcore import build_lp, solve_lp
from .methods import (
    PROPORTIONAL_METHODS,
    Method,
    MethodConfig,
    build_spec,
    run_ccm,
    run_greedy,
    select_candidates,
)
from .model import VoteTensor, achieved_deviation, instance_from_tensor
from .rounding import DeviationPolicy, approximate_apportionment, round_guaranteed

log = logging.getLogger(__name__)

DEFAULT_SEED = 20210516
MEAN_VOTES = 4200.0
PARETO_SHAPE = 0.5
PARETO_SCALE = 1000.0
NORMAL_SIGMA = 0.1
# deputy-chamber magnitudes (155 seats), shrunk to 138 by bounded D'Hondt
DEPUTY_MAGNITUDES = (3, 3, 5, 5, 7, 8, 8, 8, 7, 8, 6, 7, 5, 6, 5, 4, 7, 4, 5, 8, 5, 4, 7, 5, 4, 5, 3, 3)
GUARANTEE = (1, 0, 4)


class VoteModel(enum.IntEnum):
    NORMAL_PERTURB = 1
    POISSON_GAMMA = 2
    UNIFORM = 3
    PARETO = 4


def default_magnitudes(house_size: int = 138) -> tuple[int, ...]:
    base = DEPUTY_MAGNITUDES
    n = len(base)
    seats = dhondt_bounded(base, house_size, [3] * n, [8] * n).seats
    return tuple(int(s) for s in seats)


@dataclass(frozen=True)
class SimConfig:
    model: VoteModel = VoteModel.POISSON_GAMMA
    runs: int = 300
    seed: int = DEFAULT_SEED
    n_districts: int = 28
    n_lists: int = 22
    n_genders: int = 2
    house_size: int = 138
    magnitudes: tuple[int, ...] | None = None
    populations: tuple[int, ...] | None = None
    base_votes: VoteTensor | None = None
    mean_votes: float = MEAN_VOTES
    sigma: float = NORMAL_SIGMA

    def __post_init__(self):
        object.__setattr__(self, "model", VoteModel(self.model))
        if self.runs < 1:
            raise ValueError("runs must be positive")
        if self.magnitudes is None:
            if self.n_districts == len(DEPUTY_MAGNITUDES):
                mags = default_magnitudes(self.house_size)
            else:
                mags = tuple(int(s) for s in dhondt_bounded([1] * self.n_districts, self.house_size, [1] * self.n_districts, [self.house_size] * self.n_districts).seats)
            object.__setattr__(self, "magnitudes", mags)
        if len(self.magnitudes) != self.n_districts or sum(self.magnitudes) != self.house_size:
            raise ValueError("district magnitudes must match n_districts and sum to house_size")
        if self.populations is None:
            object.__setattr__(self, "populations", tuple(100_000 * q for q in self.magnitudes))
        if len(self.populations) != self.n_districts:
            raise ValueError("one population per district is required")

    @property
    def dims(self):
        return (
            tuple(f"D{k + 1:02d}" for k in range(self.n_districts)),
            tuple(f"L{k + 1:02d}" for k in range(self.n_lists)),
            ("F", "M") if self.n_genders == 2 else tuple(f"G{k + 1}" for k in range(self.n_genders)),
        )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_districts, self.n_lists, self.n_genders)

    def district_seats(self) -> dict[str, int]:
        return dict(zip(self.dims[0], self.magnitudes))


def run_rng(seed: int, model: int, run: int) -> np.random.Generator:
    """Independent stream for one run, keyed by counter rather than call order."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(model), int(run)])


def population_scale(raw: np.ndarray, populations) -> np.ndarray:
    """Rescale each district so its vote share equals its population share."""
    P = np.asarray(populations, dtype=float)
    Vd = raw.sum(axis=(1, 2)).astype(float)
    factor = np.divide(P / P.sum() * raw.sum(), Vd, out=np.zeros_like(Vd), where=Vd > 0)
    return np.maximum(np.rint(raw * factor[:, None, None]), 0).astype(np.int64)


def raw_draw(model: VoteModel, rng: np.random.Generator, shape, mean: float = MEAN_VOTES) -> np.ndarray:
    """Unscaled draw of models 2-4."""
    D, L, G = shape
    if model is VoteModel.POISSON_GAMMA:
        theta = rng.gamma(1.0, mean, size=(D, L))
        return rng.poisson(np.repeat(theta[:, :, None], G, axis=2)).astype(np.int64)
    if model is VoteModel.UNIFORM:
        return np.rint(rng.uniform(1.0, 2.0 * mean, size=shape)).astype(np.int64)
    if model is VoteModel.PARETO:
        return np.rint((rng.pareto(PARETO_SHAPE, size=shape) + 1.0) * PARETO_SCALE).astype(np.int64)
    raise ValueError(f"model {model} has no raw draw")


def default_base(config: SimConfig) -> VoteTensor:
    """Fixed model-2 tensor perturbed by model 1 when no base is supplied."""
    rng = run_rng(config.seed, 0, 0)
    raw = raw_draw(VoteModel.POISSON_GAMMA, rng, config.shape, config.mean_votes)
    return VoteTensor(config.dims, population_scale(raw, config.populations))


def generate(config: SimConfig, run_index: int) -> VoteTensor:
    rng = run_rng(config.seed, int(config.model), run_index)
    if config.model is VoteModel.NORMAL_PERTURB:
        base = config.base_votes if config.base_votes is not None else default_base(config)
        X = rng.normal(1.0, config.sigma, size=base.shape)
        vals = np.rint(base.values * X)
        if np.any(vals < 0):
            log.info("run %d: clamped %d negative perturbed entries", run_index, int((vals < 0).sum()))
        return VoteTensor(base.dims, np.maximum(vals, 0).astype(np.int64), base.names)
    raw = raw_draw(config.model, rng, config.shape, config.mean_votes)
    return VoteTensor(config.dims, population_scale(raw, config.populations))


# -- experiment ------------------------------------------------------------------


@dataclass
class RunRecord:
    model: int
    run: int
    deviations: dict[str, tuple[int, ...]] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    totals: dict[str, int] = field(default_factory=dict)
    guaranteed: dict[str, tuple[int, ...]] = field(default_factory=dict)
    seconds: float = 0.0


def simulate_instance(votes: VoteTensor, config: SimConfig, backend: str = "simplex", model: int = 0, run: int = 0) -> RunRecord:
    """All proportional methods plus CCM and Greedy on one generated tensor."""
    t0 = time.perf_counter()
    rec = RunRecord(model, run)
    per_tuple = {d: q + 1 for d, q in config.district_seats().items()}
    inst = instance_from_tensor(votes, config.district_seats(), dict(zip(config.dims[0], config.populations)), per_tuple)
    policy = DeviationPolicy.default(3)
    for method in PROPORTIONAL_METHODS:
        try:
            cfg = MethodConfig(method, policy=policy, backend=backend)
            v, spec, tops = build_spec(inst, cfg, votes)
            pair = solve_lp(build_lp(v, spec), backend)
            app = approximate_apportionment(v, spec, policy, backend, method.value, pair=pair)
            rec.deviations[method.value] = tuple(int(a) for a in app.achieved_deviation)
            try:
                g = round_guaranteed(pair, spec, GUARANTEE)
                rec.guaranteed[method.value] = tuple(int(a) for a in achieved_deviation(g, spec))
            except ApportionmentError as exc:
                rec.failures[f"{method.value}:guaranteed"] = type(exc).__name__
            assignment = select_candidates(app.seats, inst, v, [c.id for c in tops.values()])
            rec.totals[method.value] = sum(inst.candidate(c).votes for c in assignment.elected)
        except ApportionmentError as exc:
            rec.failures[method.value] = type(exc).__name__
            log.info("model %s run %d %s failed: %s", model, run, method.value, exc)
    for name, fn in (("ccm", run_ccm), ("greedy", run_greedy)):
        try:
            res = fn(inst)
            rec.totals[name] = res.total_votes(inst)
        except ApportionmentError as exc:
            rec.failures[name] = type(exc).__name__
    rec.seconds = time.perf_counter() - t0
    return rec


def _one(args) -> RunRecord:
    config, run, backend = args
    votes = generate(config, run)
    return simulate_instance(votes, config, backend, int(config.model), run)


@dataclass
class DeviationHistogram:
    """Gender-deviation frequencies keyed by (model, method), plus anomaly counts."""

    counts: dict[tuple[int, str], Counter] = field(default_factory=lambda: defaultdict(Counter))
    district_nonzero: int = 0
    list_nonzero: int = 0
    failures: dict[tuple[int, str], Counter] = field(default_factory=lambda: defaultdict(Counter))
    guaranteed_violations: int = 0
    greedy_violations: list[tuple[int, int, str]] = field(default_factory=list)
    runs: int = 0
    seconds: float = 0.0

    def add(self, rec: RunRecord) -> None:
        self.runs += 1
        self.seconds += rec.seconds
        for method, dev in rec.deviations.items():
            self.counts[(rec.model, method)][dev[2]] += 1
            self.district_nonzero += int(dev[0] != 0)
            self.list_nonzero += int(dev[1] != 0)
        for method, err in rec.failures.items():
            self.failures[(rec.model, method)][err] += 1
        for method, dev in rec.guaranteed.items():
            if any(a > b for a, b in zip(dev, GUARANTEE)):
                self.guaranteed_violations += 1
        best = rec.totals.get("greedy")
        if best is not None:
            for method, total in rec.totals.items():
                if total > best:
                    self.greedy_violations.append((rec.model, rec.run, method))

    def per_method(self) -> dict[str, Counter]:
        out: dict[str, Counter] = defaultdict(Counter)
        for (_, method), c in self.counts.items():
            out[method].update(c)
        return dict(out)

    def max_deviation(self) -> int:
        return max((k for c in self.counts.values() for k in c), default=0)

    def modal_deviation(self, model: int, method: str) -> int | None:
        c = self.counts.get((model, method))
        if not c:
            return None
        return min(c, key=lambda k: (-c[k], k))

    def n_failures(self) -> int:
        return sum(sum(c.values()) for c in self.failures.values())

    def rows(self) -> list[dict]:
        rows = []
        for (model, method) in sorted(self.counts):
            c = self.counts[(model, method)]
            for dev in sorted(c):
                rows.append({"model": model, "method": method, "deviation": dev, "count": c[dev]})
        return rows

    def write_csv(self, path, by_model: bool = True) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if by_model:
                w = csv.DictWriter(fh, fieldnames=["model", "method", "deviation", "count"])
                w.writeheader()
                w.writerows(self.rows())
            else:
                w = csv.writer(fh)
                w.writerow(["method", "deviation", "count"])
                for method, c in sorted(self.per_method().items()):
                    for dev in sorted(c):
                        w.writerow([method, dev, c[dev]])

    def summary(self) -> dict:
        return {
            "runs": self.runs,
            "district_deviation_nonzero": self.district_nonzero,
            "list_deviation_nonzero": self.list_nonzero,
            "max_gender_deviation": self.max_deviation(),
            "failures": {f"{m}:{k}": dict(c) for (m, k), c in sorted(self.failures.items())},
            "guaranteed_violations": self.guaranteed_violations,
            "greedy_violations": len(self.greedy_violations),
            "cpu_seconds": round(self.seconds, 3),
        }


def run_records(configs, backend: str = "simplex", workers: int = 1) -> list[RunRecord]:
    jobs = [(cfg, r, backend) for cfg in configs for r in range(cfg.runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            recs = list(pool.map(_one, jobs, chunksize=4))
    else:
        recs = [_one(j) for j in jobs]
    return sorted(recs, key=lambda r: (r.model, r.run))


def run_simulation(config: SimConfig | list[SimConfig], backend: str = "simplex", workers: int = 1) -> DeviationHistogram:
    """Deterministic in the configs; records are merged in (model, run) order."""
    configs = [config] if isinstance(config, SimConfig) else list(config)
    hist = DeviationHistogram()
    for rec in run_records(configs, backend, workers):
        hist.add(rec)
    return hist


def all_models(runs: int = 300, seed: int = DEFAULT_SEED, **kw) -> list[SimConfig]:
    return [SimConfig(model=m, runs=runs, seed=seed, **kw) for m in VoteModel]


def write_records(records, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "run", "method", "district_dev", "list_dev", "gender_dev", "total_votes"])
        for r in records:
            for m, dev in sorted(r.deviations.items()):
                w.writerow([r.model, r.run, m, *dev, r.totals.get(m, "")])
