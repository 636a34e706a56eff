"""Command-line surface: data generation, training, evaluation, ablation,
and attention-weight export.

Every command reads a flat ``key=value`` config file (``--config``) whose
entries can be overridden with ``--key value`` pairs on the command line;
unknown keys are rejected. The ``CASA_SEED`` environment variable overrides
the configured seed(s).

Exit codes: 0 success, 2 config error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import data as D
from . import training as T
from .model import Hyperparams, JointNLUModel, SignalFlags, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


class ConfigError(Exception):
    pass


_HYPER_FIELDS = {f.name: f.type for f in fields(Hyperparams)}
_FLAG_FIELDS = ("use_intent_hist", "use_slot_hist", "use_utt_hist", "use_da_hist")


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _parse_seeds(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {raw!r}") from None


_PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "bool": _parse_bool,
    "seeds": _parse_seeds,
    "path": Path,
}

_HYPER_KEYS = {
    "d_hidden": "int", "d_embed": "int", "d_intent": "int", "d_da": "int",
    "d_slot": "int", "dropout": "float", "context_window": "int",
    "max_tokens": "int", "label_window": "int", "learning_rate": "float",
    "alpha": "float", "beta": "float", "batch_size": "int", "max_epochs": "int",
    "patience": "int", "min_delta": "float", "seeds": "seeds",
    "singleton_unk_prob": "float", "val_fraction": "float",
}

_COMMAND_KEYS: dict[str, dict[str, str]] = {
    "gen-data": {"seed": "int", "n": "int", "profile": "str", "out": "path"},
    "train": {
        "train_path": "path", "val_path": "path", "eval_path": "path",
        "data_format": "str", "variant": "str", "history_policy": "str",
        "out_dir": "path", **_HYPER_KEYS,
        **{k: "bool" for k in _FLAG_FIELDS},
    },
    "eval": {
        "checkpoint": "path", "data_path": "path", "data_format": "str",
        "history_policy": "str", "out": "path",
    },
    "ablate": {
        "train_path": "path", "eval_path": "path", "data_format": "str",
        "configs": "str", "history_policy": "str", "out_dir": "path",
        **_HYPER_KEYS,
    },
    "viz-attention": {
        "checkpoint": "path", "data_path": "path", "data_format": "str",
        "conversation": "str", "turn": "int", "out": "path",
        "render": "bool", "history_policy": "str",
    },
}

_REQUIRED: dict[str, tuple[str, ...]] = {
    "gen-data": ("n", "out"),
    "train": ("train_path", "out_dir"),
    "eval": ("checkpoint", "data_path"),
    "ablate": ("train_path", "eval_path", "configs", "out_dir"),
    "viz-attention": ("checkpoint", "data_path", "conversation", "turn", "out"),
}

_DEFAULTS: dict[str, dict] = {
    "gen-data": {"seed": 1, "profile": "cable-like"},
    "train": {"data_format": "jsonl", "variant": "casa", "history_policy": "predicted"},
    "eval": {"data_format": "jsonl", "history_policy": "predicted"},
    "ablate": {"data_format": "jsonl", "history_policy": "predicted"},
    "viz-attention": {"data_format": "jsonl", "render": False, "history_policy": "gold"},
}


def _read_config_file(path: Path) -> dict[str, str]:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _collect_overrides(extra: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    i = 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--"):
            raise ConfigError(f"expected --key value pairs, got {arg!r}")
        key = arg[2:]
        if "=" in key:
            key, _, value = key.partition("=")
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for --{key}")
            i += 1
            value = extra[i]
        out[key.replace("-", "_")] = value
        i += 1
    return out


def build_config(command: str, config_path: str | None, extra: list[str]) -> dict:
    known = _COMMAND_KEYS[command]
    raw: dict[str, str] = {}
    if config_path:
        raw.update(_read_config_file(Path(config_path)))
    raw.update(_collect_overrides(extra))

    cfg: dict = dict(_DEFAULTS[command])
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} for command {command!r}")
        try:
            cfg[key] = _PARSERS[known[key]](value)
        except ConfigError:
            raise
        except (ValueError, TypeError):
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None

    env_seed = os.environ.get("CASA_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"CASA_SEED must be an integer, got {env_seed!r}") from None
        if "seed" in known:
            cfg["seed"] = seed
        if "seeds" in known:
            cfg["seeds"] = (seed,)

    missing = [k for k in _REQUIRED[command] if k not in cfg]
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(missing)}")
    return cfg


def _hyperparams_from(cfg: dict) -> Hyperparams:
    kwargs = {k: cfg[k] for k in _HYPER_KEYS if k in cfg}
    try:
        return Hyperparams(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _flags_from(cfg: dict) -> SignalFlags:
    return SignalFlags(**{k: cfg.get(k, True) for k in _FLAG_FIELDS})


def _check_input(path: Path) -> Path:
    if not path.exists():
        raise D.DataError(f"input path does not exist: {path}")
    return path


def _load_dataset(path: Path, fmt: str, split: str, vocabs=None) -> D.Dataset:
    if fmt == "jsonl":
        return D.load_conversational_jsonl(path, split=split, vocabs=vocabs)
    if fmt == "flat":
        return D.load_flat_icsl(path, split=split, vocabs=vocabs)
    raise ConfigError(f"unknown data_format {fmt!r}; use 'jsonl' or 'flat'")


def _report_payload(per_seed: list[T.MetricsReport], mean: T.MetricsReport) -> dict:
    return {
        "per_seed": [r.to_dict() for r in per_seed],
        "mean": mean.to_dict(),
    }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_data(cfg: dict) -> int:
    if cfg["profile"] not in D.PROFILES:
        raise ConfigError(
            f"unknown profile {cfg['profile']!r}; choose from {sorted(D.PROFILES)}"
        )
    if cfg["n"] < 0:
        raise ConfigError("n must be >= 0")
    out: Path = cfg["out"]
    out.parent.mkdir(parents=True, exist_ok=True)
    dataset = D.generate_synthetic(cfg["seed"], cfg["n"], cfg["profile"])
    D.write_conversational_jsonl(dataset.conversations, out)
    print(json.dumps({"written": str(out), "conversations": len(dataset),
                      "turns": dataset.n_turns}))
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    for key in ("train_path", "val_path", "eval_path"):
        if key in cfg:
            _check_input(cfg[key])
    if cfg["variant"] not in ("casa", "nc", "cgru"):
        raise ConfigError(f"unknown variant {cfg['variant']!r}")
    if cfg["history_policy"] not in ("gold", "predicted"):
        raise ConfigError(f"unknown history_policy {cfg['history_policy']!r}")
    hp = _hyperparams_from(cfg)
    flags = _flags_from(cfg)
    fmt = cfg["data_format"]

    train_ds = _load_dataset(cfg["train_path"], fmt, "train")
    val_ds = None
    if "val_path" in cfg:
        val_ds = _load_dataset(cfg["val_path"], fmt, "validation", train_ds.vocabs)
    if "eval_path" in cfg:
        eval_ds = _load_dataset(cfg["eval_path"], fmt, "test", train_ds.vocabs)
    elif val_ds is not None:
        eval_ds = val_ds
    else:
        fit_ds, eval_ds = T.split_validation(train_ds, hp.val_fraction)

    out_dir: Path = cfg["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)

    per_seed = []
    for seed in hp.seeds:
        result = T.train(train_ds, variant=cfg["variant"], hp=hp, seed=seed,
                         flags=flags, val_ds=val_ds)
        save_checkpoint(result.model, out_dir / f"seed{seed}.pt")
        with open(out_dir / f"train_log_seed{seed}.jsonl", "w", encoding="utf-8") as fh:
            for entry in result.log:
                fh.write(json.dumps(asdict(entry)) + "\n")
        report = T.evaluate(result.model, eval_ds, history_policy=cfg["history_policy"])
        per_seed.append(report)

    payload = _report_payload(per_seed, T.mean_reports(per_seed))
    payload["variant"] = cfg["variant"]
    payload["history_policy"] = cfg["history_policy"]
    (out_dir / "metrics.json").write_text(json.dumps(payload, indent=2) + "\n",
                                          encoding="utf-8")
    print(json.dumps(payload))
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    _check_input(cfg["checkpoint"])
    _check_input(cfg["data_path"])
    if cfg["history_policy"] not in ("gold", "predicted"):
        raise ConfigError(f"unknown history_policy {cfg['history_policy']!r}")
    model = load_checkpoint(cfg["checkpoint"])
    dataset = _load_dataset(cfg["data_path"], cfg["data_format"], "test", model.vocabs)
    report = T.evaluate(model, dataset, history_policy=cfg["history_policy"])
    payload = report.to_dict()
    payload["history_policy"] = cfg["history_policy"]
    text = json.dumps(payload, indent=2)
    print(text)
    if "out" in cfg:
        cfg["out"].parent.mkdir(parents=True, exist_ok=True)
        cfg["out"].write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


_CONFIG_TOKENS = {"intent": "use_intent_hist", "slot": "use_slot_hist",
                  "utt": "use_utt_hist", "da": "use_da_hist"}


def parse_ablation_configs(spec: str) -> list[SignalFlags]:
    """Parse a '|'-separated list of configs; each config is 'none', 'all',
    or a '+'-joined subset of {intent, slot, utt, da}."""
    configs = []
    for part in spec.split("|"):
        part = part.strip()
        if not part:
            raise ConfigError("empty ablation config")
        if part == "none":
            configs.append(SignalFlags.none())
            continue
        if part == "all":
            configs.append(SignalFlags.all())
            continue
        flags = SignalFlags.none()
        for token in part.split("+"):
            token = token.strip()
            if token not in _CONFIG_TOKENS:
                raise ConfigError(
                    f"unknown signal {token!r}; use intent, slot, utt, da, none, all"
                )
            setattr(flags, _CONFIG_TOKENS[token], True)
        configs.append(flags)
    return configs


def cmd_ablate(cfg: dict) -> int:
    _check_input(cfg["train_path"])
    _check_input(cfg["eval_path"])
    configs = parse_ablation_configs(cfg["configs"])
    hp = _hyperparams_from(cfg)
    fmt = cfg["data_format"]
    train_ds = _load_dataset(cfg["train_path"], fmt, "train")
    eval_ds = _load_dataset(cfg["eval_path"], fmt, "test", train_ds.vocabs)

    rows = T.run_ablation(train_ds, eval_ds, configs, hp=hp,
                          history_policy=cfg["history_policy"])
    table = [
        {"flags": asdict(row.flags), **_report_payload(row.per_seed, row.mean)}
        for row in rows
    ]
    out_dir: Path = cfg["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.json").write_text(json.dumps(table, indent=2) + "\n",
                                           encoding="utf-8")
    print(json.dumps(table))
    return EXIT_OK


def cmd_viz_attention(cfg: dict) -> int:
    _check_input(cfg["checkpoint"])
    _check_input(cfg["data_path"])
    model = load_checkpoint(cfg["checkpoint"])
    if model.variant == "cgru":
        raise ConfigError("the recurrent-fusion variant has no attention to export")
    dataset = _load_dataset(cfg["data_path"], cfg["data_format"], "test", model.vocabs)
    matches = [c for c in dataset.conversations if c.id == cfg["conversation"]]
    if not matches:
        raise D.DataError(f"conversation {cfg['conversation']!r} not found")
    conv = matches[0]
    turn = cfg["turn"]
    if not 0 <= turn < len(conv.turns):
        raise D.DataError(
            f"turn {turn} out of range for conversation {conv.id!r} "
            f"({len(conv.turns)} turns)"
        )
    single = D.Dataset([conv], model.vocabs, "test")
    _, records = T.evaluate(model, single, history_policy=cfg["history_policy"],
                            collect_attention=True)
    record = next(r for r in records if r["turn"] == turn)
    out: Path = cfg["out"]
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(record))
    if cfg["render"]:
        from .viz import render_heatmap

        png = out.with_suffix(".png")
        render_heatmap(record["signals"], png,
                       title=f"{conv.id} turn {turn}")
        logger.info("wrote heatmap to %s", png)
    return EXIT_OK


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "viz-attention": cmd_viz_attention,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="casa-nlu",
        description="Contextual joint intent classification and slot labeling",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")

    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args.command, args.config, extra)
        return _HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except D.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
