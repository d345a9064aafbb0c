"""Experiment runner: configs, paired variant sweeps, metrics and exports."""

from __future__ import annotations

import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .backends import (
    DEFAULT_TARGETS,
    DEFAULT_TIMEOUT,
    RemoteBackend,
    ScriptedOracle,
    calibrate_oracle,
)
from .engine import NO_DYNAMIC_CONTEXT, VARIANTS, EpisodeTrace, VariantConfig, run_episode
from .errors import (
    BadCalibration,
    BadTargets,
    BadTrace,
    BadVariant,
    ConfigError,
    NoEpisodes,
    UnknownKey,
    WriteError,
)
from .mapsim import KINDS, generate_scenario

log = logging.getLogger(__name__)

CSV_HEADER = "variant,round,episodes,successes,accuracy_pct"
DEFAULT_CONTEXT_FACTOR = 0.42
_U64 = 0xFFFF_FFFF_FFFF_FFFF


@dataclass(frozen=True)
class ExperimentConfig:
    base_seed: int = 0
    episodes: int = 10_000
    task_mix: tuple = (("place", 1 / 3), ("identify_all", 1 / 3), ("count", 1 / 3))
    variants: tuple = ("full",)
    targets: Optional[tuple] = DEFAULT_TARGETS
    backend_url: Optional[str] = None
    timeout: float = DEFAULT_TIMEOUT
    context_factor: float = DEFAULT_CONTEXT_FACTOR
    T_max: int = 4
    out: Optional[str] = None
    traces: Optional[str] = None
    triplets: Optional[str] = None
    format: str = "csv"

    def __post_init__(self):
        if self.episodes < 1:
            raise NoEpisodes("episodes must be at least 1")
        if self.T_max < 1:
            raise ConfigError("T_max must be at least 1")
        if not self.variants:
            raise BadVariant("at least one variant is required")
        for v in self.variants:
            if v not in VARIANTS:
                raise BadVariant(f"unknown variant {v!r}; expected one of {', '.join(VARIANTS)}")
        mix = dict(self.task_mix)
        if set(mix) - set(KINDS) or any(w < 0 for w in mix.values()):
            raise ConfigError(f"bad task_mix {self.task_mix}")
        if not math.isclose(sum(mix.values()), 1.0, abs_tol=1e-6):
            raise ConfigError(f"task_mix must sum to 1, got {sum(mix.values())}")
        if self.targets is not None:
            try:
                calibrate_oracle(self.targets)
            except BadCalibration as e:
                raise BadTargets(str(e)) from e
        if not 0.0 <= self.context_factor <= 1.0:
            raise ConfigError("context_factor must lie in [0, 1]")
        if self.format not in ("csv", "markdown"):
            raise ConfigError(f"unknown output format {self.format!r}")


_FIELDS = {f for f in ExperimentConfig.__dataclass_fields__}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in ("base_seed", "episodes", "T_max"):
        return int(raw)
    if key in ("timeout", "context_factor"):
        return float(raw)
    if key == "variants":
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    if key == "targets":
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if key == "task_mix":
        pairs = []
        for part in raw.split(","):
            name, _, weight = part.partition(":")
            pairs.append((name.strip(), float(weight)))
        return tuple(pairs)
    return raw or None


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in _FIELDS:
            raise UnknownKey(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from e
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return parse_config(f.read())


# --------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class ResultRow:
    variant: str
    round: int
    episodes: int
    successes: int

    def __post_init__(self):
        if not 0 <= self.successes <= self.episodes:
            raise ValueError("successes must lie in [0, episodes]")

    @property
    def accuracy_pct(self) -> float:
        return round(100.0 * self.successes / self.episodes, 1) if self.episodes else 0.0


@dataclass(frozen=True)
class ResultsTable:
    rows: tuple = ()

    def accuracy(self, variant: str, round: int) -> float:
        for r in self.rows:
            if r.variant == variant and r.round == round:
                return r.accuracy_pct
        raise KeyError((variant, round))

    def exact_accuracy(self, variant: str, round: int) -> float:
        for r in self.rows:
            if r.variant == variant and r.round == round:
                return 100.0 * r.successes / r.episodes
        raise KeyError((variant, round))

    def variants(self) -> list[str]:
        return list(dict.fromkeys(r.variant for r in self.rows))

    def final(self, variant: str) -> float:
        return max((r for r in self.rows if r.variant == variant), key=lambda r: r.round).accuracy_pct

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        lines += [f"{r.variant},{r.round},{r.episodes},{r.successes},{r.accuracy_pct:.1f}"
                  for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        out = io.StringIO()
        for v in self.variants():
            rows = sorted((r for r in self.rows if r.variant == v), key=lambda r: r.round)
            out.write(f"### {v}\n\n| Iteration Count | Accuracy (%) |\n|---|---|\n")
            for i, r in enumerate(rows):
                label = str(r.round)
                if r.round == 1:
                    label = "1 (Initial Pass)"
                elif i == len(rows) - 1:
                    label = f"{r.round}+"
                out.write(f"| {label} | {r.accuracy_pct:.1f} |\n")
            out.write("\n")
        return out.getvalue()


def emit_results(table: ResultsTable, format: str, path) -> None:
    if format not in ("csv", "markdown"):
        raise ValueError(f"unknown format {format!r}")
    text = table.to_csv() if format == "csv" else table.to_markdown()
    _write_text(path, text)


def _write_text(path, text):
    try:
        with open(path, "w") as f:
            f.write(text)
    except OSError as e:
        raise WriteError(f"cannot write {path}: {e}") from e


# --------------------------------------------------------------------------
# Trace records

_REQUIRED = ("episode", "round", "variant", "response", "feedback", "confidence")


def _episodes(records: Iterable[dict]) -> dict:
    """Group round records by (variant, episode), validating shape."""
    groups: dict = {}
    for rec in records:
        if not isinstance(rec, dict) or any(k not in rec for k in _REQUIRED):
            raise BadTrace(f"malformed trace record: {rec!r}")
        groups.setdefault((rec["variant"], rec["episode"]), []).append(rec)
    for key, recs in groups.items():
        recs.sort(key=lambda r: r["round"])
        last = recs[-1]
        if "success" not in last or "rounds_used" not in last:
            raise BadTrace(f"episode {key} has no final record")
        if last["rounds_used"] != len(recs):
            raise BadTrace(f"episode {key}: rounds_used {last['rounds_used']} != {len(recs)}")
    return groups


def read_trace_records(path) -> list[dict]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise BadTrace(f"{path}:{lineno}: {e}") from e
    return out


def write_trace_records(path, records: Iterable[dict]) -> None:
    _write_text(path, "".join(json.dumps(r) + "\n" for r in records))


def aggregate_metrics(records: Iterable[dict], T_max: Optional[int] = None) -> ResultsTable:
    """Cumulative accuracy per (variant, round).

    An episode counts at round k when it succeeded at some round <= k; since
    the loop halts on its first clean round, that is ``success and
    rounds_used <= k``.
    """
    groups = _episodes(records)
    rounds = T_max or max((len(r) for r in groups.values()), default=0)
    rows = []
    for variant in dict.fromkeys(v for v, _ in groups):
        finals = [recs[-1] for (v, _), recs in groups.items() if v == variant]
        for k in range(1, rounds + 1):
            ok = sum(1 for f in finals if f["success"] and f["rounds_used"] <= k)
            rows.append(ResultRow(variant, k, len(finals), ok))
    return ResultsTable(tuple(rows))


def correction_triplets(records: Iterable[dict]) -> list[dict]:
    out = []
    for (variant, episode), recs in _episodes(records).items():
        for a, b in zip(recs, recs[1:]):
            if a["feedback"] and not b["feedback"]:
                out.append({
                    "erroneous": a["response"],
                    "feedback": a["feedback"],
                    "corrected": b["response"],
                    "variant": variant,
                    "episode": episode,
                    "seed": a.get("seed"),
                    "kind": a.get("kind"),
                    "round": a["round"],
                })
    return out


def export_correction_triplets(records: Iterable[dict], out_path) -> int:
    """Write (erroneous, feedback, corrected) triplets as JSONL; returns the count."""
    triplets = correction_triplets(records)
    _write_text(out_path, "".join(json.dumps(t) + "\n" for t in triplets))
    return len(triplets)


# --------------------------------------------------------------------------
# Running


def kind_for_seed(seed: int, task_mix) -> str:
    u = np.random.default_rng([int(seed) & _U64, 0]).random()
    acc = 0.0
    mix = list(task_mix)
    for kind, weight in mix:
        acc += weight
        if u < acc:
            return kind
    return next(k for k, w in reversed(mix) if w > 0)


def episode_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(base_seed) & _U64, index]))


def backend_for(config: ExperimentConfig, variant: str):
    if config.backend_url:
        return RemoteBackend(config.backend_url, config.timeout)
    oracle = ScriptedOracle(calibrate_oracle(config.targets or DEFAULT_TARGETS))
    if variant == NO_DYNAMIC_CONTEXT:
        oracle = oracle.with_context_factor(config.context_factor)
    return oracle


def _run_chunk(config: ExperimentConfig, indices) -> dict:
    backends = {v: backend_for(config, v) for v in config.variants}
    out = {v: [] for v in config.variants}
    for i in indices:
        seed = (config.base_seed + i) & _U64
        scenario = generate_scenario(seed, kind_for_seed(seed, config.task_mix))
        for v in config.variants:
            # each variant replays the same rng stream on the same scenario
            rng = episode_rng(config.base_seed, i)
            out[v].append(run_episode(scenario, backends[v], VariantConfig(v, config.T_max), rng, i))
    return out


@dataclass
class ExperimentResult:
    table: ResultsTable
    traces: dict = field(default_factory=dict)  # variant -> list[EpisodeTrace]
    triplets: int = 0

    def records(self) -> list[dict]:
        return [rec for v in self.traces for t in self.traces[v] for rec in t.to_records()]


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Run every variant over the same scenario set and write requested outputs."""
    if config.episodes < 1:
        raise NoEpisodes("episodes must be at least 1")
    indices = list(range(config.episodes))
    if workers > 1:
        size = math.ceil(len(indices) / workers)
        chunks = [indices[i:i + size] for i in range(0, len(indices), size)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_chunk, [config] * len(chunks), chunks))
        traces = {v: [t for p in parts for t in p[v]] for v in config.variants}
    else:
        traces = _run_chunk(config, indices)
    result = ExperimentResult(ResultsTable(), traces)
    records = result.records()
    result.table = aggregate_metrics(records, config.T_max)
    if config.traces:
        write_trace_records(config.traces, records)
    if config.out:
        emit_results(result.table, config.format, config.out)
    if config.triplets:
        result.triplets = export_correction_triplets(records, config.triplets)
    log.info("ran %d episodes x %d variants", config.episodes, len(config.variants))
    return result


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})


__all__ = [
    "ExperimentConfig", "ResultsTable", "ResultRow", "parse_config", "load_config",
    "run_experiment", "aggregate_metrics", "export_correction_triplets", "emit_results",
    "read_trace_records", "write_trace_records", "kind_for_seed", "episode_rng", "EpisodeTrace",
]
