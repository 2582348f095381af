"""Command-line entry point: ``copjoint fit|simulate|eval|compare|breaks``.

Every command reads a YAML config file; ``--seed``, ``--deterministic`` and
``--out`` override the matching top-level keys. See README.md for the schema.

Exit codes: 0 success, 2 usage, 3 validation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from . import marginals as mg
from .copulas import CopulaFamily, CopulaSpec
from .data import Confounder, SyntheticTruth, jenks_breaks, jenks_classify, load_csv, simulate, split
from .estimation import FittedModel, TrainConfig, check_compatible, random_search, train
from .evaluation import FitReport, compare, report
from .exceptions import CopjointError, NumericalError
from .model import LOGIT, MULTINOMIAL, ORDINAL, BlockSpec, ModelSpec

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("copjoint")


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _section(cfg: dict, key: str, required=True) -> dict:
    value = cfg.get(key)
    if value is None:
        if required:
            raise ConfigError(f"config is missing the '{key}' section")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section '{key}' must be a mapping")
    return value


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _families(value) -> list:
    names = value if isinstance(value, list) else [value]
    if names == ["all"]:
        return [f for f in CopulaFamily if f is not CopulaFamily.PRODUCT] + [CopulaFamily.PRODUCT]
    legal = ", ".join(f.value for f in CopulaFamily)
    out = []
    for n in names:
        try:
            out.append(CopulaFamily(str(n).lower()))
        except ValueError:
            raise UsageError(f"unknown copula family {n!r}; legal families: {legal}, or 'all'") from None
    return out


def _slug(spec: ModelSpec) -> str:
    return spec.label.lower().replace("(m=", "-m").replace(")", "")


def _train_config(cfg: dict) -> TrainConfig:
    section = dict(_section(cfg, "train", required=False))
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown train option(s): {sorted(unknown)}")
    section["seed"] = cfg["seed"]
    section["deterministic"] = cfg["deterministic"]
    return TrainConfig(**section)


def _load_data(cfg: dict, base: Path):
    d = _section(cfg, "data")
    for key in ("path", "features", "outcome_a", "outcome_b"):
        if key not in d:
            raise ConfigError(f"data section needs '{key}'")
    path = _resolve(base, d["path"])
    if not path.is_file():
        raise ConfigError(f"data file not found: {path}")
    data = load_csv(path, d["features"], d["outcome_a"], d["outcome_b"], d.get("binary", ()),
                    d.get("levels_a"), d.get("levels_b"))
    if data.rejected:
        log.warning("%d row(s) rejected for missing values", len(data.rejected))
    return data


def _model_specs(cfg: dict, data) -> list:
    m = _section(cfg, "model")
    blocks = []
    for key, K in (("first", data.n_categories[0]), ("second", data.n_categories[1])):
        b = m.get(key)
        if not isinstance(b, dict) or "kind" not in b:
            raise ConfigError(f"model.{key} needs a 'kind'")
        feats = b.get("features", data.feature_names)
        blocks.append(BlockSpec(b["kind"], K, data.feature_index(feats)))
    backbone = m.get("backbone", LOGIT)
    depth = int(m.get("depth", 0 if backbone == LOGIT else 16))
    return [ModelSpec(blocks[0], blocks[1], fam, backbone, depth) for fam in _families(m.get("family", "product"))]


def _trace_csv(path: Path, model: FittedModel) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_nll", "valid_nll"])
        for i, (a, b) in enumerate(zip(model.train_trace, model.valid_trace), start=1):
            w.writerow([i, repr(a), repr(b)])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit(cfg: dict, base: Path, out: Path) -> int:
    data = _load_data(cfg, base)
    specs = _model_specs(cfg, data)
    tcfg = _train_config(cfg)
    search = _section(cfg, "search", required=False)
    train_d, valid_d = split(data, tcfg.split_ratio, tcfg.seed)
    reports = []
    for spec in specs:
        log.info("fitting %s", spec.label)
        if search:
            space = {k: v for k, v in search.items() if k != "budget"}
            result = random_search(spec, data, space, int(search.get("budget", 1)), tcfg.seed, tcfg)
            model, trials = result.model, result.trials
            spec = model.spec
        else:
            model, trials = train(spec, train_d, tcfg, validation=valid_d), None
        rep = report(model, train_d, spec.label)
        val = report(model, valid_d, spec.label)
        folder = out / _slug(spec)
        _write_json(folder / "params.json", {**model.to_dict(), "names": model.layout.flat_names(),
                                             "data": {"features": data.feature_names,
                                                      "label_maps": data.label_maps}})
        _write_json(folder / "report.json", rep.to_dict())
        _write_json(folder / "validation_report.json", val.to_dict())
        _trace_csv(folder / "trace.csv", model)
        if trials is not None:
            _write_json(folder / "search.json", trials)
        reports.append(rep)
    table = compare(reports)
    _write_json(out / "comparison.json", table.to_dict())
    (out / "comparison.txt").write_text(table.to_text(), encoding="utf-8")
    sys.stdout.write(table.to_text())
    return EXIT_OK


def _truth_from_config(sim: dict, seed: int) -> SyntheticTruth:
    if "first" not in sim or "second" not in sim or "family" not in sim:
        raise ConfigError("simulate section needs 'first', 'second' and 'family' truth blocks")
    n_features = int(sim.get("n_features", 0))
    if n_features < 1:
        raise ConfigError("simulate.n_features must be >= 1")
    family = _families(sim["family"])
    if len(family) != 1:
        raise UsageError("simulation needs exactly one copula family")
    family = family[0]
    params, blocks = {}, []
    for prefix, key in (("a", "first"), ("b", "second")):
        b = sim[key]
        try:
            block = BlockSpec(b["kind"], int(b["n_categories"]), b["features"])
            if block.kind == ORDINAL:
                params[f"{prefix}.coef"] = np.asarray(b["coef"], dtype=float)
                params[f"{prefix}.thresholds"] = mg.raw_from_thresholds(np.asarray(b["thresholds"], float)).numpy()
            else:
                params[f"{prefix}.asc"] = np.asarray(b["asc"], dtype=float)
                params[f"{prefix}.coef"] = np.asarray(b["coef"], dtype=float).reshape(block.n_categories - 1, -1)
        except KeyError as exc:
            raise ConfigError(f"simulate.{key} is missing {exc.args[0]!r}") from None
        blocks.append(block)
    spec = ModelSpec(blocks[0], blocks[1], family)
    theta = sim.get("theta")
    thetas = None
    if blocks[0].kind == MULTINOMIAL and family is not CopulaFamily.PRODUCT:
        thetas = tuple(float(t) for t in np.atleast_1d(theta))
        copula = CopulaSpec(family, thetas[0])
    else:
        copula = CopulaSpec(family, None if theta is None else float(theta))
    conf = sim.get("confounder")
    confounder = None
    if conf:
        confounder = Confounder(conf["kind"], tuple(conf["features"]), tuple(float(x) for x in conf["loadings"]))
    return SyntheticTruth(spec, params, copula, n_features, tuple(sim.get("binary", ())), thetas, confounder, seed)


def cmd_simulate(cfg: dict, base: Path, out: Path) -> int:
    sim = _section(cfg, "simulate")
    truth = _truth_from_config(sim, cfg["seed"])
    n_obs = int(sim.get("n_obs", 1000))
    data = simulate(truth, n_obs)
    out.mkdir(parents=True, exist_ok=True)
    data.to_csv(out / "data.csv")
    _write_json(out / "truth.json", {
        "spec": truth.spec.to_dict(),
        "params": {k: np.asarray(v).tolist() for k, v in truth.params.items()},
        "flat_params": truth.flat_params().tolist(),
        "copula": {"family": truth.copula.family.value, "theta": truth.copula.theta,
                   "thetas": None if truth.thetas is None else list(truth.thetas)},
        "confounder": None if truth.confounder is None else {
            "kind": truth.confounder.kind, "features": list(truth.confounder.features),
            "loadings": list(truth.confounder.loadings)},
        "n_obs": n_obs,
        "seed": truth.seed,
    })
    sys.stdout.write(f"wrote {n_obs} rows to {out / 'data.csv'}\n")
    return EXIT_OK


def cmd_eval(cfg: dict, base: Path, out: Path) -> int:
    ev = _section(cfg, "eval")
    if "params" not in ev:
        raise ConfigError("eval section needs 'params' (a params.json written by fit)")
    model = FittedModel.from_dict(_read_json(_resolve(base, ev["params"])))
    data = _load_data(cfg, base)

    check_compatible(model.spec, data)
    which = ev.get("split", "train")
    if which == "all":
        subset = data
    elif which in ("train", "validation"):
        tcfg = _train_config(cfg)
        train_d, valid_d = split(data, tcfg.split_ratio, tcfg.seed)
        subset = train_d if which == "train" else valid_d
    else:
        raise ConfigError("eval.split must be 'train', 'validation' or 'all'")
    rep = report(model, subset, model.spec.label)
    _write_json(out / "eval_report.json", {**rep.to_dict(), "split": which})
    sys.stdout.write(compare([rep]).to_text())
    return EXIT_OK


def cmd_compare(cfg: dict, base: Path, out: Path) -> int:
    paths = _section(cfg, "compare").get("reports")
    if not paths:
        raise ConfigError("compare.reports must list report.json files")
    reports = []
    for p in paths:
        d = _read_json(_resolve(base, p))
        d.pop("split", None)
        try:
            reports.append(FitReport.from_dict(d))
        except TypeError as exc:
            raise ConfigError(f"{p}: not a fit report ({exc})") from None
    table = compare(reports)
    _write_json(out / "comparison.json", table.to_dict())
    (out / "comparison.txt").write_text(table.to_text(), encoding="utf-8")
    sys.stdout.write(table.to_text())
    return EXIT_OK


def cmd_breaks(cfg: dict, base: Path, out: Path) -> int:
    b = _section(cfg, "breaks")
    for key in ("path", "column", "k"):
        if key not in b:
            raise ConfigError(f"breaks section needs '{key}'")
    path = _resolve(base, b["path"])
    if not path.is_file():
        raise ConfigError(f"data file not found: {path}")
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or b["column"] not in reader.fieldnames:
            raise ConfigError(f"{path}: missing column {b['column']!r}")
        for line, rec in enumerate(reader, start=2):
            raw = (rec[b["column"]] or "").strip()
            if not raw:
                continue
            try:
                values.append(float(raw))
            except ValueError:
                raise ConfigError(f"{path}: line {line}, column {b['column']!r}: cannot parse {raw!r}") from None
    thresholds = jenks_breaks(values, int(b["k"]))
    counts = np.bincount(jenks_classify(values, thresholds), minlength=int(b["k"])).tolist()
    _write_json(out / "breaks.json", {"column": b["column"], "k": int(b["k"]), "thresholds": thresholds,
                                      "class_counts": counts})
    sys.stdout.write(" ".join(repr(t) for t in thresholds) + "\n")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "eval": cmd_eval, "compare": cmd_compare,
            "breaks": cmd_breaks}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copjoint", description="Copula-based joint discrete choice models.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--deterministic", action="store_true", help="force deterministic torch kernels")
    parser.add_argument("--out", help="output directory (default: config 'out' or ./out)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise ConfigError(f"config file not found: {cfg_path}")
        try:
            cfg = yaml.safe_load(cfg_path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{cfg_path}: invalid YAML ({exc})") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a mapping")
        cfg["seed"] = int(args.seed if args.seed is not None else cfg.get("seed", 0))
        cfg["deterministic"] = bool(args.deterministic or cfg.get("deterministic", True))
        base = cfg_path.parent
        out = Path(args.out) if args.out else _resolve(base, cfg.get("out", "out"))
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, base, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, CopjointError, ValueError, TypeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
