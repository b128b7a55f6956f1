"""Simulation studies: data-generating models, the per-run pipeline, tables.

Two studies are provided.

``gauss15``
    15-variate normal data whose covariance has unit diagonal and 0.9
    between coordinates congruent modulo 3; means 0.15 on the last four
    coordinates under the alternative; two-sided tests ``|sqrt(n) mean|``
    with half-normal null.
``vine9``
    9-variate data from a truncated D-vine with three independent blocks
    of strong (Clayton/Gumbel) dependence and standard normal marginals;
    means 0.15 on the last four coordinates; one-sided tests
    ``sqrt(n) mean`` with standard normal null.

Each run draws one null sample ``Z``; the alternative sample is ``Z + theta``.
Rank-based estimation is shift invariant, so the fitted vine, the grouping
and the calibration are shared by the FWER (null) and power (alternative)
evaluations of a run.
"""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from . import sampler
from .dissmann import pseudo_obs, select_structure
from .exceptions import ConfigurationError, VineMeffError
from .grouping import fixed_grouping, greedy_grouping, singleton_grouping
from .meff import calibrate, decide, get_marginal
from .numerics import RngStream
from .pair_copulas import INDEPENDENCE, Family, PairCopulaSpec
from .vine_model import VineEdge, VineModel, VineStructure

__all__ = [
    "gauss15_covariance",
    "gen_gauss15",
    "vine9_model",
    "gen_vine9",
    "STUDIES",
    "ExperimentConfig",
    "ResultTable",
    "run_one",
    "run_study",
    "emit_tables",
]

COMPARATORS = ("sidak", "fixed", "chosen")
COMPARATOR_LABELS = {"sidak": "Sidak correction", "fixed": "fixed groups", "chosen": "chosen groups"}


def _as_generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def gauss15_covariance() -> np.ndarray:
    """Unit diagonal, 0.9 where ``j = k (mod 3)``, 0 elsewhere."""
    idx = np.arange(15)
    sigma = np.where(idx[:, None] % 3 == idx[None, :] % 3, 0.9, 0.0)
    np.fill_diagonal(sigma, 1.0)
    return sigma


_GAUSS15_CHOL = np.linalg.cholesky(gauss15_covariance())
GAUSS15_THETA = np.r_[np.zeros(11), np.full(4, 0.15)]


def gen_gauss15(n: int, under_null: bool = True, rng=None) -> np.ndarray:
    if n < 2:
        raise ConfigurationError("n must be at least 2")
    z = _as_generator(rng).standard_normal((n, 15)) @ _GAUSS15_CHOL.T
    return z if under_null else z + GAUSS15_THETA


def vine9_model() -> VineModel:
    """Truncated (K = 2) D-vine with the three dependence blocks.

    Tree 1 is the path 0-3-6-1-4-7-2-5-8; the links 6-1 and 7-2 and every
    edge not listed below carry the independence copula.
    """
    path = [0, 3, 6, 1, 4, 7, 2, 5, 8]
    cop = {
        ((0, 3), ()): PairCopulaSpec(Family.CLAYTON, 0, 11.0),
        ((3, 6), ()): PairCopulaSpec(Family.CLAYTON, 0, 12.0),
        ((1, 4), ()): PairCopulaSpec(Family.CLAYTON, 0, 12.0),
        ((4, 7), ()): PairCopulaSpec(Family.GUMBEL, 0, 8.0),
        ((2, 5), ()): PairCopulaSpec(Family.GUMBEL, 0, 7.0),
        ((5, 8), ()): PairCopulaSpec(Family.CLAYTON, 0, 8.0),
        ((0, 6), (3,)): PairCopulaSpec(Family.GUMBEL, 0, 2.0),
        ((1, 7), (4,)): PairCopulaSpec(Family.CLAYTON, 0, 11.0),
        ((2, 8), (5,)): PairCopulaSpec(Family.GUMBEL, 0, 2.0),
    }
    trees = []
    for level in range(1, 9):
        edges = []
        for k in range(9 - level):
            pair = tuple(sorted((path[k], path[k + level])))
            cond = tuple(sorted(path[k + 1:k + level]))
            edges.append(VineEdge(level, pair, cond, cop.get((pair, cond), INDEPENDENCE)))
        trees.append(edges)
    return VineModel(VineStructure(9, trees, 2))


_VINE9 = None
VINE9_THETA = np.r_[np.zeros(5), np.full(4, 0.15)]


def gen_vine9(n: int, under_null: bool = True, rng=None) -> np.ndarray:
    global _VINE9
    if n < 2:
        raise ConfigurationError("n must be at least 2")
    if _VINE9 is None:
        _VINE9 = vine9_model()
    x = special.ndtri(sampler.sample(_VINE9, n, _as_generator(rng)))
    return x if under_null else x + VINE9_THETA


@dataclass(frozen=True)
class _Study:
    name: str
    M: int
    generator: object
    theta: np.ndarray
    marginal: str
    two_sided: bool
    fixed_blocks: tuple


STUDIES = {
    "gauss15": _Study("gauss15", 15, gen_gauss15, GAUSS15_THETA, "half_normal", True,
                      (tuple(range(0, 5)), tuple(range(5, 10)), tuple(range(10, 15)))),
    "vine9": _Study("vine9", 9, gen_vine9, VINE9_THETA, "std_normal", False,
                    ((0, 1, 2), (3, 4, 5), (6, 7, 8))),
}


def _statistics(study: _Study, x):
    t = np.sqrt(x.shape[0]) * x.mean(axis=0)
    return np.abs(t) if study.two_sided else t


@dataclass(frozen=True)
class ExperimentConfig:
    study: str
    n: int
    runs: int = 400
    B: int = 3
    K: int = 2
    alpha: float = 0.05
    mc_size: int = 20_000
    seed: int = 42
    comparators: tuple = COMPARATORS
    optimized: bool = True
    order: int = 2
    deterministic_fill: bool = False
    families: tuple = None

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigurationError(f"unknown study {self.study!r}; choose from {sorted(STUDIES)}")
        object.__setattr__(self, "comparators", tuple(self.comparators))
        if not self.comparators:
            raise ConfigurationError("at least one comparator is required")
        bad = set(self.comparators) - set(COMPARATORS)
        if bad:
            raise ConfigurationError(f"unknown comparators {sorted(bad)}")
        if self.runs < 1:
            raise ConfigurationError("runs must be at least 1")
        if self.n < 10:
            raise ConfigurationError("n must be at least 10")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1)")
        M = STUDIES[self.study].M
        if not 1 <= self.K <= M - 1:
            raise ConfigurationError(f"K must lie in [1, {M - 1}]")
        if not 1 <= self.B <= M:
            raise ConfigurationError(f"B must lie in [1, {M}]")

    def echo(self) -> str:
        d = asdict(self)
        d["comparators"] = "+".join(self.comparators)
        d["families"] = "all" if self.families is None else "+".join(self.families)
        return " ".join(f"{k}={v}" for k, v in d.items())


def run_one(config: ExperimentConfig, r: int, attempt: int = 0) -> dict:
    """One simulation run: returns per comparator ``meff``, ``c``, ``power``, ``fwer``."""
    study = STUDIES[config.study]
    base = RngStream(config.seed, r, (config.n, attempt))
    z = study.generator(config.n, True, base.substream(0))
    t_null = _statistics(study, z)
    t_alt = _statistics(study, z + study.theta)
    false_null = study.theta > 0
    out = {}
    model = grouping = u_mc = None
    if {"fixed", "chosen"} & set(config.comparators):
        model = select_structure(pseudo_obs(z), config.K, config.families)
        u_mc = sampler.sample(model, config.mc_size, base.substream(1))
    for comp in config.comparators:
        if comp == "sidak":
            grouping = singleton_grouping(study.M)
        elif comp == "fixed":
            grouping = fixed_grouping(study.fixed_blocks)
        else:
            grouping = greedy_grouping(model, config.B, rng=base.substream(2),
                                       deterministic_fill=config.deterministic_fill)
        cal = calibrate(grouping, study.marginal, model, config.alpha, config.order,
                        config.optimized, config.mc_size, sample=u_mc)
        rej_null, glob_null = decide(t_null, cal)
        rej_alt, _ = decide(t_alt, cal)
        out[comp] = {
            "meff": cal.total_meff,
            "c": float(np.mean(cal.critical_values)),
            "power": float(rej_alt[false_null].mean()) if false_null.any() else 0.0,
            "fwer": float(glob_null),
            "blocks": [list(b) for b in cal.blocks] if comp == "chosen" else None,
        }
    return out


def _run_safe(args):
    config, r = args
    try:
        return run_one(config, r, 0), None
    except VineMeffError:
        try:
            return run_one(config, r, 1), None
        except VineMeffError as exc:
            return None, f"run {r}: {type(exc).__name__}: {exc}"


@dataclass
class ResultTable:
    """Averages over runs per comparator, with Monte Carlo standard errors."""

    config: ExperimentConfig
    rows: dict
    se: dict
    completed: int
    failures: list = field(default_factory=list)
    chosen_blocks: list = field(default_factory=list, repr=False)

    @property
    def n(self):
        return self.config.n

    @property
    def study(self):
        return self.config.study


def run_study(config: ExperimentConfig, threads: int = 1, progress=None) -> ResultTable:
    """Run ``config.runs`` seeded runs and aggregate.

    Power is the percentage of false null hypotheses rejected, averaged
    over runs; FWER is the percentage of runs with at least one rejection
    under the global null.
    """
    args = [(config, r) for r in range(config.runs)]
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_safe, args, chunksize=4))
    else:
        results = []
        for a in args:
            results.append(_run_safe(a))
            if progress is not None:
                progress(len(results), config.runs)
    ok = [res for res, err in results if res is not None]
    failures = [err for res, err in results if err is not None]
    if not ok:
        raise ConfigurationError("every run failed: " + "; ".join(failures[:3]))
    rows, se = {}, {}
    for comp in config.comparators:
        vals = {k: np.array([res[comp][k] for res in ok]) for k in ("meff", "c", "power", "fwer")}
        scale = {"meff": 1.0, "c": 1.0, "power": 100.0, "fwer": 100.0}
        rows[comp] = {k: float(scale[k] * v.mean()) for k, v in vals.items()}
        se[comp] = {k: float(scale[k] * v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
                    for k, v in vals.items()}
    blocks = [res["chosen"]["blocks"] for res in ok] if "chosen" in config.comparators else []
    return ResultTable(config, rows, se, len(ok), failures, blocks)


_TABLES = {
    "meff": ("average total effective number of tests", "{:.4f}"),
    "critical_values": ("average critical value c", "{:.4f}"),
    "power": ("empirical power in per cent (average share of false nulls rejected)", "{:.4f}"),
    "fwer": ("empirical FWER in per cent under the global null", "{:.4f}"),
}
_FIELD = {"meff": "meff", "critical_values": "c", "power": "power", "fwer": "fwer"}


def emit_tables(results, directory) -> list:
    """Write one CSV per table type and study plus a text report.

    Rows are comparators, columns sample sizes.  The first line of every
    file echoes the configuration.  Output depends only on ``results``.
    """
    results = list(results)
    if not results:
        raise ConfigurationError("no results to write")
    os.makedirs(directory, exist_ok=True)
    written = []
    by_study = {}
    for res in results:
        if not res.config.comparators:
            raise ConfigurationError("empty comparator set")
        by_study.setdefault(res.study, []).append(res)
    for study, group in by_study.items():
        group = sorted(group, key=lambda r: r.n)
        comps = [c for c in COMPARATORS if c in group[0].config.comparators]
        echo = group[0].config.echo().replace(f"n={group[0].n}", "n=" + "+".join(str(r.n) for r in group))
        report = [f"# {echo}", f"study {study}", ""]
        for table, (title, fmt) in _TABLES.items():
            buf = io.StringIO()
            buf.write(f"# {echo}\n")
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["comparator"] + [f"n={r.n}" for r in group])
            report.append(title)
            report.append(f"  {'sample size':<18}" + "".join(f"{r.n:>12}" for r in group))
            for comp in comps:
                vals = [fmt.format(r.rows[comp][_FIELD[table]]) for r in group]
                w.writerow([COMPARATOR_LABELS[comp]] + vals)
                ses = [r.se[comp][_FIELD[table]] for r in group]
                report.append(f"  {COMPARATOR_LABELS[comp]:<18}" + "".join(f"{v:>12}" for v in vals)
                              + "   (se " + ", ".join(f"{s:.4f}" for s in ses) + ")")
            report.append("")
            path = os.path.join(directory, f"{study}_{table}.csv")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
            written.append(path)
        report.append("completed runs: " + ", ".join(f"n={r.n}: {r.completed}" for r in group))
        for r in group:
            for f in r.failures:
                report.append(f"  failed (n={r.n}) {f}")
        path = os.path.join(directory, f"{study}_report.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(report) + "\n")
        written.append(path)
    return written
