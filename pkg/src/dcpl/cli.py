"""Command-line front end.

    dcpl <mode> --config <path> [--out <dir>] [--seed <u64>]

Configuration is a flat JSON object.  Hyperparameters sit at the top level
(``lambda``, ``gamma``, ``tau``, ``lr``, ...), synthetic-benchmark settings
under ``synth``.  Unknown keys are rejected.
"""
from __future__ import annotations

import argparse
import difflib
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import dataset as dsio
from .errors import ArgumentError, ConfigError, DCPLError
from .losses import HyperParams
from .model import accuracy, predict_labels
from .synthbench import SynthConfig, generate_pair, source_hyperparams, train_source_head
from .trainer import oracle_transition, run_adaptation, run_identity_baseline, run_oracle
from .transition import export_csv
from .verify import run_all, transition_recovery_error

logger = logging.getLogger("dcpl")

MODES = ("gen-synth", "train-source", "adapt", "adapt-identity", "adapt-oracle", "verify", "eval")
ADAPT_MODES = ("adapt", "adapt-identity", "adapt-oracle")

# config key -> HyperParams attribute
HYPER_KEYS = {
    "lambda": "lam",
    "gamma": "gamma",
    "tau": "tau",
    "lr": "lr",
    "momentum": "momentum",
    "weight_decay": "weight_decay",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "seed": "seed",
    "im_weight": "im_weight",
    "beta": "beta",
    "lr_schedule": "lr_schedule",
    "prior_transpose": "prior_transpose",
}
PATH_KEYS = ("source", "target", "source_head", "out_dir")
TOP_KEYS = set(HYPER_KEYS) | set(PATH_KEYS) | {"mode", "frozen_oracle", "synth"}
SYNTH_KEYS = {f.name for f in fields(SynthConfig)}
INT_KEYS = {"epochs", "batch_size", "seed", "k", "d_f", "d_p", "n_source", "n_target"}
BOOL_KEYS = {"prior_transpose", "frozen_oracle"}
STR_KEYS = {"lr_schedule", "label_noise_target", "mode"}


@dataclass
class RunConfig:
    mode: str
    hyper: HyperParams
    source: str | None = None
    target: str | None = None
    source_head: str | None = None
    out_dir: str = "."
    frozen_oracle: bool = False
    synth: SynthConfig | None = None

    @property
    def prior_transpose(self) -> bool:
        return self.hyper.prior_transpose

    @property
    def effective_mode(self) -> str:
        if self.mode == "adapt" and self.frozen_oracle:
            return "adapt-oracle"
        return self.mode

    def echo(self) -> dict:
        """Every setting the run used, keyed as in the config file.

        The output directory is left out so relocated runs stay comparable.
        """
        out = {"mode": self.mode, "frozen_oracle": self.frozen_oracle}
        for key in ("source", "target", "source_head"):
            out[key] = getattr(self, key)
        for key, attr in HYPER_KEYS.items():
            out[key] = getattr(self.hyper, attr)
        if self.synth is not None:
            out["synth"] = self.synth.as_dict()
        return out


@dataclass
class MetricsRecord:
    run_id: str
    mode: str
    config: dict
    epochs: list = field(default_factory=list)
    final_accuracy: float | None = None
    pseudo_label_accuracy: float | None = None
    initial_accuracy: float | None = None
    recovery_error_vs_oracle: float | None = None
    identity_error_vs_oracle: float | None = None
    warnings: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsRecord":
        data = json.loads(text)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown metrics fields: {sorted(unknown)}")
        return cls(**data)


def _suggest(key: str, known) -> str:
    close = difflib.get_close_matches(key, sorted(known), n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


def _check_keys(obj: dict, known: set, where: str) -> None:
    for key in obj:
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in {where}{_suggest(key, known)}")


def _typed(key: str, value):
    if key in BOOL_KEYS:
        if not isinstance(value, bool):
            raise ConfigError(f"{key!r} must be true or false, got {value!r}")
    elif key in STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"{key!r} must be a string, got {value!r}")
    elif key in INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key!r} must be an integer, got {value!r}")
    elif isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key!r} must be a number, got {value!r}")
    else:
        value = float(value)
    return value


def config_from_dict(data: dict, base_dir: Path | None = None, mode: str | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(data, TOP_KEYS, "config")
    cfg_mode = data.get("mode")
    if mode is not None and cfg_mode is not None and cfg_mode != mode:
        raise ConfigError(f"command-line mode {mode!r} contradicts config mode {cfg_mode!r}")
    mode = mode or cfg_mode
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {mode!r}")

    hyper = source_hyperparams() if mode == "train-source" else HyperParams()
    for key, attr in HYPER_KEYS.items():
        if key in data:
            setattr(hyper, attr, _typed(key, data[key]))
    try:
        hyper.validate()
    except ArgumentError as exc:
        raise ConfigError(f"out-of-range hyperparameter: {exc}") from None

    paths = {}
    for key in PATH_KEYS:
        value = data.get(key)
        if value is None:
            continue
        if not isinstance(value, str):
            raise ConfigError(f"{key!r} must be a path string")
        if base_dir is not None and not os.path.isabs(value):
            value = str(base_dir / value)
        paths[key] = value

    synth = None
    if "synth" in data or mode == "gen-synth":
        raw = data.get("synth", {})
        if not isinstance(raw, dict):
            raise ConfigError("'synth' must be a JSON object")
        _check_keys(raw, SYNTH_KEYS, "synth")
        synth = SynthConfig(**{k: _typed(k, v) for k, v in raw.items()})
        try:
            synth.validate()
        except ArgumentError as exc:
            raise ConfigError(f"out-of-range synth setting: {exc}") from None

    frozen = _typed("frozen_oracle", data.get("frozen_oracle", False))
    cfg = RunConfig(mode=mode, hyper=hyper, frozen_oracle=frozen, synth=synth, **paths)

    required = {
        "train-source": ("source",),
        "adapt": ("target",),
        "adapt-identity": ("target",),
        "adapt-oracle": ("target",),
        "eval": ("target",),
    }.get(mode, ())
    for key in required:
        if getattr(cfg, key) is None:
            raise ConfigError(f"mode {mode!r} requires {key!r}")
    return cfg


def parse_config(path, mode: str | None = None) -> RunConfig:
    """Read a JSON config strictly and fill in defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc.msg} at line {exc.lineno}, column {exc.colno}") from None
    return config_from_dict(data, base_dir=path.parent, mode=mode)


def _run_id(echo: dict) -> str:
    return hashlib.sha256(json.dumps(echo, sort_keys=True).encode()).hexdigest()[:16]


def _write(out: Path, name: str, text: str) -> None:
    dsio.atomic_write(out / name, text.encode("utf-8"))


def _load_head(cfg: RunConfig, target):
    if cfg.source_head is not None:
        return dsio.load_head(cfg.source_head)
    if target.source_head is not None:
        return target.source_head
    raise ConfigError("no source head: set 'source_head' or embed one in the target container")


def build_metrics(cfg: RunConfig, report, target) -> MetricsRecord:
    echo = cfg.echo()
    rec = MetricsRecord(
        run_id=_run_id(echo),
        mode=report.mode,
        config=echo,
        epochs=[dict(epoch=i + 1, clean_accuracy=acc, **br.as_dict())
                for i, (br, acc) in enumerate(zip(report.epochs, report.clean_accuracy))],
        final_accuracy=report.clean_accuracy[-1] if report.clean_accuracy else report.initial_accuracy,
        pseudo_label_accuracy=report.pseudo_label_accuracy,
        initial_accuracy=report.initial_accuracy,
        warnings=list(report.warnings),
    )
    if target.true_labels is not None:
        t_or = oracle_transition(target.true_labels, report.pseudo_labels, target.k)
        rec.recovery_error_vs_oracle = transition_recovery_error(report.transition, t_or)
        rec.identity_error_vs_oracle = transition_recovery_error(np.eye(target.k), t_or)
    return rec


def _adapt(cfg: RunConfig, out: Path) -> int:
    target = dsio.load_dataset(cfg.target)
    head = _load_head(cfg, target)
    runner = {"adapt": run_adaptation, "adapt-identity": run_identity_baseline,
              "adapt-oracle": run_oracle}[cfg.effective_mode]
    report = runner(target, head, cfg.hyper)
    rec = build_metrics(cfg, report, target)
    _write(out, "metrics.json", rec.to_json())
    _write(out, "transition.csv", export_csv(report.transition))
    _write(out, "prior.csv", export_csv(report.prior.matrix))
    dsio.save_head(report.params, out / "adapted_head.dcph")
    logger.info("adaptation finished in %.2f s", report.seconds)
    print(f"{rec.mode}: final accuracy {rec.final_accuracy}, pseudo-label accuracy {rec.pseudo_label_accuracy}")
    return 0


def _gen_synth(cfg: RunConfig, out: Path) -> int:
    source, target = generate_pair(cfg.synth)
    dsio.save_dataset(source, out / "source.dcpl")
    dsio.save_dataset(target, out / "target.dcpl")
    _write(out, "synth.json", json.dumps(cfg.synth.as_dict(), sort_keys=True, indent=2) + "\n")
    print(f"wrote {out / 'source.dcpl'} and {out / 'target.dcpl'}")
    return 0


def _train_source(cfg: RunConfig, out: Path) -> int:
    source = dsio.load_dataset(cfg.source)
    head = train_source_head(source, cfg.hyper)
    dsio.save_head(head, out / "source_head.dcph")
    acc = accuracy(predict_labels(head, source.features_f), source.true_labels)
    echo = cfg.echo()
    rec = MetricsRecord(run_id=_run_id(echo), mode="train-source", config=echo, final_accuracy=acc)
    _write(out, "metrics.json", rec.to_json())
    print(f"source head written, train accuracy {acc:.4f}")
    return 0


def _eval(cfg: RunConfig, out: Path) -> int:
    target = dsio.load_dataset(cfg.target)
    head = _load_head(cfg, target)
    if target.true_labels is None:
        raise ConfigError("eval needs a dataset with true labels")
    acc = accuracy(predict_labels(head, target.features_f), target.true_labels)
    echo = cfg.echo()
    rec = MetricsRecord(run_id=_run_id(echo), mode="eval", config=echo, final_accuracy=acc)
    _write(out, "metrics.json", rec.to_json())
    print(f"accuracy {acc:.4f}")
    return 0


def _verify(cfg: RunConfig, out: Path) -> int:
    results = run_all(seed=0)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}  ({r.seconds:.2f} s)")
    return 0 if all(r.passed for r in results) else 4


def _thread_cap():
    raw = os.environ.get("DCPL_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DCPL_THREADS must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError(f"DCPL_THREADS must be a non-negative integer, got {raw!r}")
    if n == 0:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def execute(cfg: RunConfig) -> int:
    """Run the configured pipeline; returns the process exit code."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    limiter = _thread_cap()
    try:
        if cfg.mode in ADAPT_MODES:
            return _adapt(cfg, out)
        return {"gen-synth": _gen_synth, "train-source": _train_source,
                "eval": _eval, "verify": _verify}[cfg.mode](cfg, out)
    finally:
        if limiter is not None:
            limiter.unregister()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dcpl", description="Pseudo-label de-confusion for source-free adaptation")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides out_dir)")
    parser.add_argument("--seed", type=int, help="random seed (overrides seed)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = parse_config(args.config, mode=args.mode)
        else:
            cfg = config_from_dict({}, mode=args.mode)
        if args.out is not None:
            cfg.out_dir = args.out
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError(f"seed must fit in an unsigned 64-bit integer, got {args.seed}")
            cfg.hyper.seed = args.seed
            if cfg.synth is not None:
                cfg.synth.seed = args.seed
        return execute(cfg)
    except DCPLError as exc:
        print(f"dcpl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        print(f"dcpl: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
