#!/usr/bin/env python3
from __future__ import annotations

import argparse
import sys
import tomllib
from pathlib import Path
from typing import Any, Callable, Literal, Optional

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from tabulate import tabulate

from sofistat.catalog import DEFAULT_NAMES, list_catalog, resolve_action, resolve_model, resolve_tower
from sofistat.config import CONFIG
from sofistat.distance import DistanceReport, SearchStrategy, containment_verdict, d_inf, d_sup, d_sym
from sofistat.errors import InputError, SofistatError
from sofistat.formats import read_partition
from sofistat.hom_entropy import (
    CountMethod,
    EntropyReport,
    NonemptinessReport,
    SeparationReport,
    entropy_grid,
    entropy_separation,
    genprof_partition,
    hom_nonemptiness,
)
from sofistat.partitions import (
    BernoulliModel,
    FiniteModel,
    IndexedPartition,
    MeasureModel,
    Partition,
    block_measures,
    coordinate_partition,
    singleton_partition,
    trivial_partition,
)
from sofistat.protocol import Provenance, fraction_text, parse_fraction, provenance, write_json, write_long_csv
from sofistat.sofic_towers import (
    SoficApproximation,
    diagonal_product,
    random_sofic,
    tower_convergence,
    validate_sofic,
)
from sofistat.words import FiniteAction, parse_word_list

SCHEMA_VERSION = 1


# ────────────────────── Experiment config ───────────


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SearchSection(_Section):
    mode: Literal["exhaustive", "local"] = "exhaustive"
    restarts: int = Field(default_factory=lambda: CONFIG.local_restarts, ge=1)
    max_moves: int = Field(default_factory=lambda: CONFIG.local_max_moves, ge=0)

    def strategy(self, seed: int, budget: int | None) -> SearchStrategy:
        if self.mode == "local":
            return SearchStrategy.local(self.restarts, self.max_moves, seed)
        return SearchStrategy.exhaustive(budget)


class DistSection(_Section):
    a: str = "C4"
    b: str = "trivial-2"
    words: str = "1"
    kind: Literal["inf", "sup", "sym"] = "sym"
    k: int = Field(2, ge=1)
    partitions: list[str] = Field(default_factory=list, description="partition specs for kind = inf")
    threshold: Optional[str] = None
    search: SearchSection = Field(default_factory=SearchSection)
    inner: Optional[SearchSection] = None


class TowerSection(_Section):
    tower: str = "odometer-2-4"
    words: str = "1,a,A"
    k: int = Field(2, ge=1)
    search: SearchSection = Field(default_factory=lambda: SearchSection(mode="local", restarts=2, max_moves=10))
    inner: Optional[SearchSection] = Field(default_factory=SearchSection)


class NonemptySection(_Section):
    towers: list[str] = Field(min_length=1)
    alpha: str = "singletons"
    words: str = "a"
    delta: str = "1/100"


class SeparationSection(_Section):
    matching: str = "odometer-2-3"
    level: int = Field(2, ge=1)
    b: str = "point"
    mismatched: str = "odometer-3-2"
    xi: str = "singletons"
    alphas: list[str] = Field(default_factory=lambda: ["singletons"])
    words: list[str] = Field(default_factory=lambda: ["a"])
    deltas: list[str] = Field(default_factory=lambda: ["1/100"])


class EntropySection(_Section):
    a: str = "bernoulli-uniform-2"
    xi: str = "coordinate"
    alphas: list[str] = Field(default_factory=lambda: ["coordinate"])
    words: list[str] = Field(default_factory=lambda: ["1"])
    deltas: list[str] = Field(default_factory=lambda: ["1/20"])
    sigma: list[str] = Field(default_factory=lambda: ["C64", "C128", "C256"])
    method: Literal["exact", "montecarlo"] = "exact"
    samples: int = Field(default_factory=lambda: CONFIG.mc_samples, ge=1)
    nonempty: Optional[NonemptySection] = None
    separation: Optional[SeparationSection] = None


class RandomSoficSection(_Section):
    generators: int = Field(2, ge=1)
    sizes: list[int] = Field(min_length=1)


class ValidateSection(_Section):
    tower: Optional[str] = "odometer-2-8"
    actions: list[str] = Field(default_factory=list)
    random: Optional[RandomSoficSection] = None
    kernel: str = ""
    probes: Optional[str] = "a,aa,aaa"
    lo: float = Field(default_factory=lambda: CONFIG.pass_band_lo)
    hi: float = Field(default_factory=lambda: CONFIG.pass_band_hi)


class GenprofSection(_Section):
    tower: str = "odometer-2-12"
    epsilon: str = "1/2"
    depth: int = Field(12, ge=1)


class CatalogSection(_Section):
    names: list[str] = Field(default_factory=lambda: list(DEFAULT_NAMES))


class ExperimentConfig(_Section):
    schema_version: int = SCHEMA_VERSION
    seed: int = Field(0, ge=0, lt=1 << 64)
    budget: Optional[int] = Field(None, ge=1)
    dist: DistSection = Field(default_factory=DistSection)
    tower: TowerSection = Field(default_factory=TowerSection)
    entropy: EntropySection = Field(default_factory=EntropySection)
    validate_sofic: ValidateSection = Field(default_factory=ValidateSection)
    genprof: GenprofSection = Field(default_factory=GenprofSection)
    catalog: CatalogSection = Field(default_factory=CatalogSection)


def load_config(path: Path | None, seed: int | None, budget: int | None) -> ExperimentConfig:
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise InputError(f"config {path} is not valid TOML: {exc}") from exc
    if seed is not None:
        raw["seed"] = seed
    if budget is not None:
        raw["budget"] = budget
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise InputError(f"config error at {'.'.join(str(p) for p in first['loc'])}: {first['msg']}") from exc
    if cfg.schema_version != SCHEMA_VERSION:
        raise InputError(f"unsupported schema_version {cfg.schema_version}")
    return cfg


# ────────────────────── Helpers ─────────────────────


def partition_spec(spec: str, model: MeasureModel) -> Partition:
    """``singletons``, ``trivial``, ``coordinate``, ``assign:0,0,1,1`` or a partition file."""
    spec = spec.strip()
    if spec == "coordinate":
        if not isinstance(model, BernoulliModel):
            raise InputError("the coordinate partition needs a Bernoulli model")
        return coordinate_partition(model.alphabet)
    if isinstance(model, BernoulliModel):
        if spec in ("singletons", "trivial") or spec.startswith("assign:"):
            raise InputError(f"partition {spec!r} is not a cylinder partition")
        return read_partition(Path(spec))
    n = model.action.size
    if spec == "singletons":
        return singleton_partition(n)
    if spec == "trivial":
        return trivial_partition(n)
    if spec.startswith("assign:"):
        try:
            return IndexedPartition([int(tok) for tok in spec[len("assign:"):].split(",")])
        except ValueError as exc:
            raise InputError(f"malformed inline partition {spec!r}") from exc
    return read_partition(Path(spec))


def _distance_row(kind: str, a: str, b: str, words: str, k: int, report: DistanceReport) -> list:
    return [kind, a, b, words, k, fraction_text(report.value), float(report.value), str(report.exact).lower()]


DIST_HEADER = ["kind", "a", "b", "words", "k", "value", "value_float", "exact"]


# ────────────────────── Subcommands ─────────────────

Stamp = Callable[[bool], Provenance]


def run_dist(cfg: ExperimentConfig, out: Path, stamp: Stamp) -> list[Path]:
    sec = cfg.dist
    words = parse_word_list(sec.words)
    a = resolve_model(sec.a)
    b = resolve_action(sec.b)
    strategy = sec.search.strategy(cfg.seed, cfg.budget)
    inner = sec.inner.strategy(cfg.seed, cfg.budget) if sec.inner else None

    body: dict[str, Any]
    if sec.kind == "inf":
        if not sec.partitions:
            raise InputError("kind = inf needs at least one partition")
        alphas = [partition_spec(p, a) for p in sec.partitions]
        if sec.threshold is not None:
            verdict = containment_verdict(a, b, words, alphas, strategy, parse_fraction(sec.threshold))
            reports = verdict.reports
            body = {"kind": "inf", "verdict": verdict.model_dump(mode="json")}
        else:
            reports = [d_inf(a, b, words, alpha, strategy) for alpha in alphas]
            body = {"kind": "inf", "reports": [r.model_dump(mode="json") for r in reports]}
        rows = [_distance_row("inf", sec.a, sec.b, sec.words, alpha.block_count, r) for alpha, r in zip(alphas, reports)]
    else:
        if isinstance(a, BernoulliModel):
            raise InputError("d_sup and d_sym need finite actions on both sides")
        solver = d_sup if sec.kind == "sup" else d_sym
        report = solver(a.action, b, words, sec.k, strategy, inner)
        reports = [report]
        body = {"kind": sec.kind, "reports": [report.model_dump(mode="json")]}
        rows = [_distance_row(sec.kind, sec.a, sec.b, sec.words, sec.k, report)]

    logger.info(
        "dist\n" + tabulate([r[:6] + [r[7]] for r in rows], headers=DIST_HEADER[:6] + ["exact"], tablefmt="github"),
    )
    prov = stamp(all(r.exact for r in reports))
    return [
        write_json(out / "dist.json", prov, body),
        write_long_csv(out / "dist.csv", prov, DIST_HEADER, rows),
    ]


def run_tower(cfg: ExperimentConfig, out: Path, stamp: Stamp) -> list[Path]:
    sec = cfg.tower
    tower = resolve_tower(sec.tower)
    strategy = sec.search.strategy(cfg.seed, cfg.budget)
    inner = sec.inner.strategy(cfg.seed, cfg.budget) if sec.inner else None
    report = tower_convergence(tower, parse_word_list(sec.words), sec.k, strategy, inner)
    prov = stamp(all(cell.exact for cell in report.cells + report.factor_cells))
    return [
        write_json(out / "tower.json", prov, report.model_dump(mode="json")),
        write_long_csv(
            out / "tower.csv", prov, ["direction", "m", "n", "value", "value_float", "exact"], report.rows()
        ),
    ]


def run_entropy(cfg: ExperimentConfig, out: Path, stamp: Stamp) -> list[Path]:
    sec = cfg.entropy
    a = resolve_model(sec.a)
    xi = partition_spec(sec.xi, a)
    alphas = [partition_spec(p, a) for p in sec.alphas]
    word_sets = [parse_word_list(ws) for ws in sec.words]
    sigma = [resolve_action(name) for name in sec.sigma]
    method = CountMethod(kind=sec.method, samples=sec.samples, seed=cfg.seed, budget=cfg.budget)
    report = entropy_grid(a, xi, alphas, word_sets, sec.deltas, sigma, method, xi_id=sec.xi, alpha_ids=sec.alphas)
    logger.info(
        "entropy\n"
        + tabulate(
            [[agg.stage, agg.n, agg.value] for agg in report.aggregates],
            headers=["stage", "n", "aggregate"],
            tablefmt="github",
        ),
    )
    nonempty = _nonempty_reports(sec.nonempty, a, method) if sec.nonempty else []
    separation = _separation_report(sec.separation, method) if sec.separation else None

    exact = report.exact and all(r.exact for r in nonempty) and (separation is None or separation.exact)
    prov = stamp(exact)
    sidecar = report.model_dump(mode="json", exclude={"cells"})
    paths = [
        write_long_csv(out / "entropy.csv", prov, list(EntropyReport.CSV_HEADER), report.rows()),
        write_json(out / "entropy.json", prov, sidecar),
    ]
    if nonempty:
        rows = [row for r in nonempty for row in r.rows()]
        paths += [
            write_long_csv(out / "entropy_nonempty.csv", prov, list(NonemptinessReport.CSV_HEADER), rows),
            write_json(
                out / "entropy_nonempty.json",
                prov,
                {"towers": [r.model_dump(mode="json", exclude={"levels"}) for r in nonempty]},
            ),
        ]
    if separation is not None:
        paths += [
            write_long_csv(
                out / "entropy_separation.csv", prov, list(SeparationReport.CSV_HEADER), separation.rows()
            ),
            write_json(
                out / "entropy_separation.json",
                prov,
                separation.model_dump(mode="json", exclude={"matching": {"cells"}, "mismatched": {"cells"}}),
            ),
        ]
    return paths


def _nonempty_reports(sec: NonemptySection, a: MeasureModel, method: CountMethod) -> list[NonemptinessReport]:
    alpha = partition_spec(sec.alpha, a)
    words = parse_word_list(sec.words)
    reports = [
        hom_nonemptiness(a, alpha, words, sec.delta, resolve_tower(name), method, tower_id=name) for name in sec.towers
    ]
    table = [
        [r.tower_id, " ".join("+" if lvl.nonempty else "." for lvl in r.levels), r.eventually_nonempty]
        for r in reports
    ]
    logger.info("hom nonemptiness\n" + tabulate(table, headers=["tower", "levels", "eventually"], tablefmt="github"))
    return reports


def _separation_report(sec: SeparationSection, method: CountMethod) -> SeparationReport:
    matching = resolve_tower(sec.matching)
    b = resolve_action(sec.b)
    product = FiniteModel(diagonal_product(matching.level(sec.level), b))
    report = entropy_separation(
        matching,
        sec.level,
        b,
        resolve_tower(sec.mismatched),
        partition_spec(sec.xi, product),
        [partition_spec(p, product) for p in sec.alphas],
        [parse_word_list(ws) for ws in sec.words],
        sec.deltas,
        method,
        xi_id=sec.xi,
        alpha_ids=sec.alphas,
    )
    logger.info(
        "entropy separation",
        extra={
            "matching_finite": report.matching_finite,
            "mismatched_empty": report.mismatched_empty,
            "separated": report.separated,
        },
    )
    return report


def _sofic_from_config(sec: ValidateSection, seed: int) -> SoficApproximation:
    kernel = parse_word_list(sec.kernel) if sec.kernel.strip() else []
    probes = parse_word_list(sec.probes) if sec.probes else None
    if sec.random is not None:
        return random_sofic(sec.random.generators, sec.random.sizes, seed, probes)
    if sec.actions:
        actions: list[FiniteAction] = [resolve_action(name) for name in sec.actions]
        return SoficApproximation(tuple(actions), tuple(kernel), tuple(probes or ()))
    if sec.tower is None:
        raise InputError("validate-sofic needs a tower, a list of actions or a random section")
    return SoficApproximation.from_tower(resolve_tower(sec.tower), kernel, probes)


def run_validate(cfg: ExperimentConfig, out: Path, stamp: Stamp) -> list[Path]:
    sec = cfg.validate_sofic
    report = validate_sofic(_sofic_from_config(sec, cfg.seed), sec.lo, sec.hi)
    logger.info(f"overall {'PASS' if report.passed else 'FAIL'}; {report.freeness_label}")
    prov = stamp(True)
    return [
        write_long_csv(out / "validate.csv", prov, ["word", "role", "stage", "n", "fix_ratio"], report.rows()),
        write_json(out / "validate.json", prov, report.model_dump(mode="json")),
    ]


def run_genprof(cfg: ExperimentConfig, out: Path, stamp: Stamp) -> list[Path]:
    sec = cfg.genprof
    tower = resolve_tower(sec.tower)
    result = genprof_partition(tower, sec.epsilon, sec.depth)
    measures = block_measures(tower.level(sec.depth), result.partition)
    levels = [(0, "")] + [(level, point) for level, point in result.fibers]
    rows = [[block, level, point, fraction_text(mu)] for block, ((level, point), mu) in enumerate(zip(levels, measures))]
    logger.info(
        "genprof",
        extra={"N": result.threshold_level, "entropy": result.entropy, "epsilon": sec.epsilon},
    )
    prov = stamp(True)
    return [
        write_json(out / "genprof.json", prov, result.model_dump(mode="json")),
        write_long_csv(out / "genprof.csv", prov, ["block", "level", "point", "measure"], rows),
    ]


def run_catalog(cfg: ExperimentConfig, out: Path, stamp: Stamp) -> list[Path]:
    entries = list_catalog(cfg.catalog.names)
    logger.info(
        "catalog\n"
        + tabulate([e.row() for e in entries], headers=["name", "kind", "r", "sizes", "description"], tablefmt="github")
    )
    prov = stamp(True)
    return [
        write_long_csv(
            out / "catalog.csv", prov, ["name", "kind", "generators", "sizes", "description"], [e.row() for e in entries]
        ),
        write_json(out / "catalog.json", prov, {"entries": [e.model_dump(mode="json") for e in entries]}),
    ]


Runner = Callable[[ExperimentConfig, Path, Stamp], list[Path]]

SUBCOMMANDS: dict[str, tuple[str, Runner]] = {
    # name: (config section, runner)
    "catalog": ("catalog", run_catalog),
    "dist": ("dist", run_dist),
    "tower-converge": ("tower", run_tower),
    "entropy": ("entropy", run_entropy),
    "validate-sofic": ("validate_sofic", run_validate),
    "genprof": ("genprof", run_genprof),
}


# ────────────────────── Entry point ─────────────────


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sofistat", description="Weak containment and sofic entropy at desk scale")
    parser.add_argument("command", choices=list(SUBCOMMANDS))
    parser.add_argument("--config", type=Path, default=None, help="TOML experiment config")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--budget", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--log-level", default=None)
    return parser


def _setup_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format="{level: <8} | {message} | {extra}")


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    _setup_logging(args.log_level or CONFIG.log_level)
    if args.threads is not None:
        if args.threads < 1:
            logger.error("invalid_threads", extra={"threads": args.threads})
            return InputError.exit_code
        CONFIG.threads = args.threads

    try:
        cfg = load_config(args.config, args.seed, args.budget)
        section, runner = SUBCOMMANDS[args.command]
        payload = {
            "command": args.command,
            "schema_version": cfg.schema_version,
            "seed": cfg.seed,
            "budget": cfg.budget,
            section: getattr(cfg, section).model_dump(mode="json"),
        }
        paths = runner(cfg, args.out, lambda exact: provenance(payload, cfg.seed, exact))
    except SofistatError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return exc.exit_code

    logger.success("run_complete", extra={"command": args.command, "files": [str(p) for p in paths]})
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
