"""Command-line entry point: ``simpoplocal <subcommand> [--config FILE] [--key=value ...]``.

Configuration is a YAML file with a ``common`` section and one section per
subcommand; the subcommand's section overrides ``common`` and flags of the
form ``--dotted.key=value`` override both.  Values given on the command line
are parsed as YAML scalars.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import yaml

from . import __version__
from . import landscape as landscape_mod
from .analysis import error_filter, posthoc_reevaluate, ranksize_report, ranksize_series, smooth_trace
from .emoa import EmoaConfig, Individual
from .errors import ConfigError, SimpopLocalError
from .islands import OrchestratorConfig, SimpopEvaluator, orchestrate, write_trace
from .model import ParameterSet, PUBLISHED_SETTING, SimulationConfig, run
from .objectives import EvaluationConfig, evaluate, evaluation_record, normalized_errors

SUBCOMMANDS = ("generate-landscape", "simulate", "evaluate", "calibrate", "posthoc", "report")
WORKERS_ENV = "SIMPOPLOCAL_WORKERS"

_EMOA_KEYS = (
    "sbx_distribution_index",
    "sbx_rate",
    "epsilons",
    "nadir",
    "tournament_arity",
    "initial_step_fraction",
    "step_floor_fraction",
    "tau_global",
    "tau_local",
)


def _field_names(cls, exclude=()):
    return {f.name for f in fields(cls)} - set(exclude)


# top-level key -> None for scalars, or the set of allowed nested keys
SCHEMA: dict[str, set | None] = {
    "seed": None,
    "workers": None,
    "output": None,
    "landscape_path": None,
    "snapshot_every": None,
    "checkpoint": None,
    "resume": None,
    "archive_path": None,
    "trace_path": None,
    "replications": None,
    "threshold": None,
    "window": None,
    "landscape": _field_names(landscape_mod.LandscapeSpec),
    "parameters": _field_names(ParameterSet),
    "simulation": _field_names(SimulationConfig),
    "evaluation": _field_names(EvaluationConfig, exclude=("simulation",)),
    "orchestrator": _field_names(OrchestratorConfig),
    "emoa": set(_EMOA_KEYS),
}

DEFAULTS = {
    "output": "run",
    "parameters": PUBLISHED_SETTING.to_dict(),
    "snapshot_every": 0,
    "resume": False,
    "replications": 1000,
    "threshold": 0.1,
    "window": 1000,
}

SEEDED = {"simulate", "evaluate", "calibrate", "posthoc"}


class _UsageError(Exception):
    pass


def _check_key(path: list[str]) -> None:
    top = path[0]
    if top not in SCHEMA:
        raise KeyError(top)
    nested = SCHEMA[top]
    if nested is None:
        if len(path) > 1:
            raise KeyError(".".join(path))
    elif len(path) > 2 or (len(path) == 2 and path[1] not in nested):
        raise KeyError(".".join(path))


def _validate_tree(tree: dict, where: str) -> None:
    for key, value in tree.items():
        try:
            _check_key([key])
        except KeyError:
            raise ConfigError(f"{where}{key}", "unknown key") from None
        if SCHEMA[key] is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key}", "expected a mapping")
            for sub in value:
                if sub not in SCHEMA[key]:
                    raise ConfigError(f"{where}{key}.{sub}", "unknown key")


def load_config(path: str | None, subcommand: str, overrides: list[tuple[str, object]]) -> dict:
    """Effective configuration of ``subcommand``: defaults, common, section, flags."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"invalid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be a mapping")
        for section in raw:
            if section != "common" and section not in SUBCOMMANDS:
                raise ConfigError(section, "unknown section")
    effective = copy.deepcopy(DEFAULTS)
    for section in ("common", subcommand):
        tree = raw.get(section) or {}
        if not isinstance(tree, dict):
            raise ConfigError(section, "expected a mapping")
        _validate_tree(tree, f"{section}.")
        for key, value in tree.items():
            if SCHEMA[key] is not None:
                effective.setdefault(key, {})
                effective[key] = {**effective[key], **value}
            else:
                effective[key] = value
    for dotted, value in overrides:
        parts = dotted.split(".")
        if len(parts) == 1:
            if SCHEMA[parts[0]] is not None:
                raise _UsageError(f"--{dotted} needs a nested key")
            effective[parts[0]] = value
        else:
            effective.setdefault(parts[0], {})
            effective[parts[0]] = {**effective[parts[0]], parts[1]: value}
    if "workers" not in effective:
        env = os.environ.get(WORKERS_ENV)
        effective["workers"] = env if env is not None else 1
    return effective


def parse_overrides(extra: list[str]) -> list[tuple[str, object]]:
    out = []
    for token in extra:
        if not token.startswith("--") or "=" not in token:
            raise _UsageError(f"unrecognized argument: {token}")
        key, text = token[2:].split("=", 1)
        try:
            _check_key(key.split("."))
        except KeyError:
            raise _UsageError(f"unknown option --{key}") from None
        try:
            value = yaml.safe_load(text) if text else ""
        except yaml.YAMLError:
            value = text
        out.append((key, value))
    return out


def _build(cls, key: str, data: dict, **extra):
    try:
        return cls(**{**data, **extra})
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, str(exc)) from exc


def _int(cfg: dict, key: str, minimum: int | None = None) -> int:
    value = cfg.get(key)
    try:
        if isinstance(value, bool) or value is None or int(value) != float(value):
            raise ValueError
        value = int(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected an integer, got {value!r}") from None
    if minimum is not None and value < minimum:
        raise ConfigError(key, f"must be >= {minimum}")
    return value


def _float(cfg: dict, key: str) -> float:
    try:
        return float(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {cfg[key]!r}") from None


def _path(cfg: dict, key: str) -> Path:
    value = cfg.get(key)
    if not value:
        raise ConfigError(key, "a path is required")
    p = Path(value)
    if not p.exists():
        raise ConfigError(key, f"{p} does not exist")
    return p


def _landscape(cfg: dict):
    if cfg.get("landscape_path"):
        return landscape_mod.load(_path(cfg, "landscape_path"))
    spec = _build(landscape_mod.LandscapeSpec, "landscape", cfg.get("landscape", {}))
    return landscape_mod.generate(spec)


def _evaluation(cfg: dict) -> EvaluationConfig:
    sim = _build(SimulationConfig, "simulation", cfg.get("simulation", {}))
    return _build(EvaluationConfig, "evaluation", cfg.get("evaluation", {}), simulation=sim)


def _parameters(cfg: dict) -> ParameterSet:
    return _build(ParameterSet, "parameters", cfg.get("parameters", {}))


def _executor(cfg: dict):
    workers = _int(cfg, "workers", minimum=1)
    return ProcessPoolExecutor(workers) if workers > 1 else None


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def _read_archive(path: Path) -> tuple[list[Individual], list[dict]]:
    members, records = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                members.append(Individual.from_record(record))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ConfigError("archive_path", f"line {lineno}: {exc}") from exc
            records.append(record)
    return members, records


def _member_record(ind: Individual, replications: int, config: EvaluationConfig) -> dict:
    record = ind.to_record()
    record["replications"] = replications
    record["normalized_errors"] = list(normalized_errors(ind.fitness, replications, config))
    return record


def _write_ranksize(path: Path, sizes) -> float:
    report = ranksize_report(sizes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "size"])
        for rank, size in report.rows():
            w.writerow([rank, repr(size)])
    return report.slope


# -- subcommands ---------------------------------------------------------------


def cmd_generate_landscape(cfg: dict, out: Path) -> str:
    spec = _build(landscape_mod.LandscapeSpec, "landscape", cfg.get("landscape", {}))
    land = landscape_mod.generate(spec)
    landscape_mod.save(land, out / "landscape.csv")
    return f"wrote {len(land)} settlements to {out / 'landscape.csv'}"


def cmd_simulate(cfg: dict, out: Path) -> str:
    land = _landscape(cfg)
    params = _parameters(cfg)
    sim = _build(SimulationConfig, "simulation", cfg.get("simulation", {}))
    snapshot_every = _int(cfg, "snapshot_every", minimum=0)
    outcome = run(land, params, sim, seed=_int(cfg, "seed"), snapshot_every=snapshot_every)
    with open(out / "outcome.json", "w") as fh:
        json.dump(outcome.to_record(), fh, indent=1)
    slope = _write_ranksize(out / "ranksize.csv", outcome.final_sizes)
    if snapshot_every:
        with open(out / "ranksize_series.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "slope"])
            for step, s in ranksize_series(outcome):
                w.writerow([step, repr(s)])
    return (
        f"duration {outcome.duration_steps} steps, max population {outcome.max_population:.1f}, "
        f"terminated by {outcome.terminated_by.value}, rank-size slope {slope:.3f}"
    )


def cmd_evaluate(cfg: dict, out: Path) -> str:
    land = _landscape(cfg)
    params = _parameters(cfg)
    config = _evaluation(cfg)
    seed = _int(cfg, "seed")
    executor = _executor(cfg)
    try:
        vector = evaluate(params, land, config, seed, executor)
    finally:
        if executor is not None:
            executor.shutdown()
    record = evaluation_record(params, vector, config.replications, seed, config)
    _write_jsonl(out / "evaluation.jsonl", [record])
    return f"objectives {vector.as_tuple()}, normalized errors {tuple(round(e, 4) for e in record['normalized_errors'])}"


def cmd_calibrate(cfg: dict, out: Path) -> str:
    land = _landscape(cfg)
    config = _evaluation(cfg)
    orch = _build(OrchestratorConfig, "orchestrator", cfg.get("orchestrator", {}))
    emoa = _build(EmoaConfig, "emoa", cfg.get("emoa", {}), population_size=orch.central_capacity)
    seed = _int(cfg, "seed")
    checkpoint = Path(cfg["checkpoint"]) if cfg.get("checkpoint") else out / "checkpoint.json"
    executor = _executor(cfg)
    try:
        result = orchestrate(
            orch,
            SimpopEvaluator(land, config),
            seed,
            emoa,
            executor=executor,
            checkpoint_path=checkpoint,
            resume=bool(cfg.get("resume")),
        )
    finally:
        if executor is not None:
            executor.shutdown()
    _write_jsonl(out / "archive.jsonl", [_member_record(m, config.replications, config) for m in result.archive])
    with open(out / "trace.csv", "w") as fh:
        write_trace(result.trace, fh)
    final = result.trace[-1].hypervolume if result.trace else result.archive.hypervolume()
    return f"{result.completed} islands merged, {len(result.archive)} archive members, hypervolume {final:.6g}"


def cmd_posthoc(cfg: dict, out: Path) -> str:
    members, _ = _read_archive(_path(cfg, "archive_path"))
    land = _landscape(cfg)
    config = _evaluation(cfg)
    replications = _int(cfg, "replications", minimum=1)
    threshold = _float(cfg, "threshold")
    executor = _executor(cfg)
    try:
        refined = posthoc_reevaluate(
            members,
            replications,
            land,
            _int(cfg, "seed"),
            config,
            executor=executor,
        )
    finally:
        if executor is not None:
            executor.shutdown()
    kept = error_filter(refined, replications, threshold, config)
    _write_jsonl(out / "posthoc.jsonl", [_member_record(m, replications, config) for m in refined])
    _write_jsonl(out / "filtered.jsonl", [_member_record(m, replications, config) for m in kept])
    return f"{len(members)} members re-evaluated, {len(refined)} non-dominated, {len(kept)} within {threshold:g} error"


def cmd_report(cfg: dict, out: Path) -> str:
    lines = []
    if not cfg.get("trace_path") and not cfg.get("archive_path"):
        raise ConfigError("trace_path", "report needs trace_path and/or archive_path")
    if cfg.get("trace_path"):
        rows = []
        with open(_path(cfg, "trace_path")) as fh:
            for row in csv.DictReader(fh):
                rows.append(row)
        if not rows or "hypervolume" not in rows[0]:
            raise ConfigError("trace_path", "not a hypervolume trace")
        window = _int(cfg, "window", minimum=1)
        smoothed = smooth_trace([float(r["hypervolume"]) for r in rows], window)
        with open(out / "trace_smoothed.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["islands_completed", "hypervolume", "smoothed"])
            for r, s in zip(rows, smoothed):
                w.writerow([r["islands_completed"], r["hypervolume"], repr(float(s))])
        lines.append(f"smoothed {len(rows)} trace points over a {window}-island window")
    if cfg.get("archive_path"):
        members, records = _read_archive(_path(cfg, "archive_path"))
        config = _evaluation(cfg)
        with open(out / "errors.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "distribution_error", "population_error", "duration_error", *ParameterSet.__dataclass_fields__])
            for m, r in zip(members, records):
                reps = int(r.get("replications", config.replications))
                errs = normalized_errors(m.fitness, reps, config)
                w.writerow([m.id, *map(repr, errs), *map(repr, m.genome.to_array().tolist())])
        lines.append(f"wrote normalized errors of {len(members)} members")
    return "; ".join(lines)


COMMANDS = {
    "generate-landscape": cmd_generate_landscape,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "calibrate": cmd_calibrate,
    "posthoc": cmd_posthoc,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simpoplocal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", "").replace("_", " "))
        p.add_argument("--config", help="YAML configuration file")
    return parser


def _manifest(command: str, cfg: dict, argv: list[str]) -> dict:
    canonical = json.dumps(cfg, sort_keys=True, default=str).encode()
    return {
        "subcommand": command,
        "version": __version__,
        "config_sha256": hashlib.sha256(canonical).hexdigest(),
        "seed": cfg.get("seed"),
        "landscape_seed": cfg.get("landscape", {}).get("seed", 0),
        "config": cfg,
        "argv": argv,
    }


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        overrides = parse_overrides(extra)
        cfg = load_config(args.config, args.command, overrides)
    except _UsageError as exc:
        parser.error(str(exc))
    except ConfigError as exc:
        print(f"simpoplocal: invalid configuration: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command in SEEDED and cfg.get("seed") is None:
            raise ConfigError("seed", "a seed is required")
        out = Path(cfg["output"])
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](cfg, out)
        with open(out / "manifest.json", "w") as fh:
            json.dump(_manifest(args.command, cfg, argv), fh, indent=1, default=str)
    except ConfigError as exc:
        print(f"simpoplocal: invalid configuration: {exc}", file=sys.stderr)
        return 1
    except (SimpopLocalError, OSError) as exc:
        print(f"simpoplocal: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
