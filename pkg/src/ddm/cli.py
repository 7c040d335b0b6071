"""``ddm`` command line: train, eval, sample, entropy, classify.

Every command reads an optional flat ``key=value`` config file (``#`` starts
a comment) and any number of ``--set key=value`` overrides; the dedicated
flags below are shorthands for the same keys and take precedence. Unknown
keys are rejected.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Diagnostics are a single line on stderr.
"""

import argparse
from dataclasses import fields
import math
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from .beta import BetaParams, FitError, moment_match_columns, sym_kl_array
from .classifier import (
    REJECT,
    ClassTrainingError,
    classify_with_reject,
    load_classifier,
    save_classifier,
    train_class_models,
)
from .data_io import ModelFormatError, ParseError, load_dataset, load_model, save_csv, save_model
from .density import ModelBundle, corrupted_density, entropy_report, evaluate_density, sample
from .network import InversionError
from .preprocess import fit_preprocessor
from .special import DomainError
from .trainer import EPOCH_LOG_HEADER, ConfigError, TrainConfig, train

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class DataError(Exception):
    pass


class NumericalError(Exception):
    pass


DATA_KEYS = {"data": str, "labels": str, "has_header": bool, "label_column": bool}
PREPROCESS_KEYS = {"use_pca": bool, "target_dim": int, "margin": float, "whiten": bool}

COMMAND_KEYS = {
    "train": {**DATA_KEYS, **PREPROCESS_KEYS, "model": str, "epoch_log": str, "fit_report": str},
    "eval": {**DATA_KEYS, "model": str, "out": str, "corrupt_fraction": float, "seed": int},
    "sample": {"model": str, "count": int, "seed": int, "out": str},
    "entropy": {**DATA_KEYS, "model": str},
    "classify-train": {**DATA_KEYS, **PREPROCESS_KEYS, "model": str, "foreign_weight": float,
                       "reject_lambda": float, "epoch_log": str},
    "classify-predict": {**DATA_KEYS, "model": str, "out": str, "reject_lambda": float},
}
TRAINING_COMMANDS = {"train", "classify-train"}
REQUIRED = {
    "train": ("data", "model"),
    "eval": ("model", "data", "out"),
    "sample": ("model", "count", "out"),
    "entropy": ("model", "data"),
    "classify-train": ("data", "model"),
    "classify-predict": ("model", "data", "out"),
}
DEFAULTS = {
    "has_header": False, "label_column": False, "use_pca": False, "margin": 0.05,
    "whiten": True, "corrupt_fraction": 0.0, "seed": 0, "foreign_weight": 0.0,
    "reject_lambda": 0.0,
}


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_numbers(text, kind):
    body = text.strip().strip("()[]")
    if not body:
        return ()
    return tuple(kind(v) for v in body.replace(" ", "").split(",") if v)


def _train_field_parsers():
    parsers = {}
    for f in fields(TrainConfig):
        d = f.default
        if f.name == "encoder_widths":
            parsers[f.name] = lambda t: _parse_numbers(t, int) or None
        elif f.name == "window_stride":
            parsers[f.name] = lambda t: None if t.strip().lower() == "none" else int(t)
        elif isinstance(d, bool):
            parsers[f.name] = _parse_bool
        elif isinstance(d, int):
            parsers[f.name] = int
        elif isinstance(d, float):
            parsers[f.name] = float
        elif isinstance(d, tuple):
            parsers[f.name] = lambda t: _parse_numbers(t, float)
    return parsers


def _parsers_for(command):
    out = {}
    for key, kind in COMMAND_KEYS[command].items():
        out[key] = _parse_bool if kind is bool else kind
    if command in TRAINING_COMMANDS:
        out.update(_train_field_parsers())
    return out


def parse_config_text(text, command, source="<config>"):
    """Parse ``key=value`` lines into raw strings, rejecting unknown keys."""
    allowed = _parsers_for(command)
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} for '{command}'")
        raw[key] = value
    return raw


def build_config(command, config_path=None, overrides=()):
    """Merge file values and overrides, convert types, check required keys."""
    raw = {}
    if config_path is not None:
        try:
            with open(config_path) as fh:
                text = fh.read()
        except OSError as err:
            raise ConfigError(f"cannot read config {config_path}: {err.strerror}") from None
        raw.update(parse_config_text(text, command, str(config_path)))
    raw.update(parse_config_text("\n".join(overrides), command, "--set"))
    parsers = _parsers_for(command)
    values = dict(DEFAULTS)
    values = {k: v for k, v in values.items() if k in parsers}
    for key, text in raw.items():
        try:
            values[key] = parsers[key](text)
        except ValueError as err:
            raise ConfigError(f"bad value for {key}: {err}") from None
    missing = [k for k in REQUIRED[command] if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s) for '{command}': {', '.join(missing)}")
    train_cfg = None
    if command in TRAINING_COMMANDS:
        names = set(TrainConfig.field_names())
        try:
            train_cfg = TrainConfig(**{k: v for k, v in values.items() if k in names})
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from None
    return values, train_cfg


def _load(values):
    try:
        data = load_dataset(values["data"], values.get("labels"), values["has_header"],
                            values["label_column"])
    except FileNotFoundError as err:
        raise DataError(f"no such file: {err.filename}") from None
    except (ParseError, ValueError, OSError) as err:
        raise DataError(str(err)) from None
    if len(data) == 0 or data.points.shape[1] == 0:
        raise DataError(f"{values['data']}: no data points")
    return data


def _load_model(path):
    try:
        return load_model(path)
    except FileNotFoundError as err:
        raise DataError(f"no such file: {err.filename}") from None
    except (ModelFormatError, OSError) as err:
        raise DataError(str(err)) from None


def _fit_preprocessor(values, points):
    try:
        return fit_preprocessor(points, use_pca=values["use_pca"], target_dim=values.get("target_dim"),
                                margin=values["margin"], whiten=values["whiten"])
    except ValueError as err:
        raise ConfigError(f"preprocessing: {err}") from None


def _emit_log(lines, path, out):
    text = EPOCH_LOG_HEADER + "\n" + "".join(line + "\n" for line in lines)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    out.write(text)


def _density_summary(values, stream):
    finite = np.isfinite(values)
    mean_all = float(np.mean(values)) if values.size else math.nan
    mean_fin = float(np.mean(values[finite])) if finite.any() else math.nan
    stream.write(f"mean_log_density\t{mean_all:.17g}\n")
    stream.write(f"mean_finite_log_density\t{mean_fin:.17g}\n")
    stream.write(f"out_of_support\t{int((~finite).sum())}\n")


def fit_report_rows(latents, target):
    a, b, _, _, _ = moment_match_columns(latents)
    kl = sym_kl_array(a, b, target.alpha, target.beta)
    return [(k, a[k], b[k], kl[k]) for k in range(latents.shape[1])]


def cmd_train(values, cfg, out, err):
    data = _load(values)
    pre = _fit_preprocessor(values, data.points)
    y = pre.apply(data.points)
    state = train(cfg, y)
    model = ModelBundle(state.encoder, state.decoder, BetaParams(*cfg.final_target), pre)
    save_model(model, values["model"])
    _emit_log(state.epoch_log, values.get("epoch_log"), err)
    rows = fit_report_rows(state.encoder(y), model.marginal)
    out.write("dim\talpha_hat\tbeta_hat\tsym_kl\n")
    for k, a, b, kl in rows:
        out.write(f"{k}\t{a:.17g}\t{b:.17g}\t{kl:.17g}\n")
    if values.get("fit_report"):
        save_csv(values["fit_report"], ["dim", "alpha_hat", "beta_hat", "sym_kl"], rows)
    _density_summary(evaluate_density(model, data.points).log_density, out)
    return 0


def cmd_eval(values, cfg, out, err):
    model = _load_model(values["model"])
    data = _load(values)
    if data.points.shape[1] != model.preprocessor.input_dim:
        raise DataError(f"data has {data.points.shape[1]} columns, model expects {model.preprocessor.input_dim}")
    p = values["corrupt_fraction"]
    if not 0.0 <= p <= 1.0:
        raise ConfigError("corrupt_fraction must lie in [0, 1]")
    if p > 0:
        res = corrupted_density(model, data.points, p, np.random.default_rng(values["seed"]))
    else:
        res = evaluate_density(model, data.points)
    rows = [(i, v, "1" if o else "0") for i, (v, o) in enumerate(zip(res.log_density, res.out_of_support))]
    save_csv(values["out"], ["row", "log_density", "out_of_support"], rows)
    _density_summary(res.log_density, out)
    return 0


def cmd_sample(values, cfg, out, err):
    model = _load_model(values["model"])
    if values["count"] < 1:
        raise ConfigError("count must be positive")
    pts = sample(model, values["count"], np.random.default_rng(values["seed"]))
    save_csv(values["out"], [f"x{j}" for j in range(pts.shape[1])], pts)
    return 0


def cmd_entropy(values, cfg, out, err):
    model = _load_model(values["model"])
    data = _load(values)
    y = model.preprocessor.apply(data.points, clip=True)
    rep = entropy_report(model, y)
    for name in ("marginal_entropy_sum", "expected_log_det", "observed_entropy_upper_bound",
                 "original_entropy_upper_bound"):
        out.write(f"{name}\t{getattr(rep, name):.17g}\n")
    return 0


def _log_lambda(lam):
    if lam < 0:
        raise ConfigError("reject_lambda must be nonnegative")
    return -math.inf if lam == 0 else math.log(lam)


def cmd_classify_train(values, cfg, out, err):
    data = _load(values)
    if data.labels is None:
        raise DataError("classify train needs labels (labels=... or label_column=true)")
    pre = _fit_preprocessor(values, data.points)
    try:
        bundle = train_class_models(data.points, data.labels, cfg, values["foreign_weight"],
                                    _log_lambda(values["reject_lambda"]), preprocessor=pre)
    except ClassTrainingError as exc:
        raise NumericalError(str(exc)) from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    save_classifier(bundle, values["model"])
    lines = [f"class{c}:{line}" for c in bundle.labels for line in bundle.training_logs[c]]
    _emit_log(lines, values.get("epoch_log"), err)
    out.write("class\tlog_prior\n")
    for c in bundle.labels:
        out.write(f"{c}\t{bundle.log_priors[c]:.17g}\n")
    return 0


def cmd_classify_predict(values, cfg, out, err):
    try:
        bundle = load_classifier(values["model"])
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {exc.filename}") from None
    except (ModelFormatError, OSError) as exc:
        raise DataError(str(exc)) from None
    data = _load(values)
    thr = _log_lambda(values["reject_lambda"]) if "reject_lambda" in values and values["reject_lambda"] > 0 \
        else bundle.rejection_threshold
    labels, joint = classify_with_reject(bundle, data.points, thr)
    header = ["label"] + [f"score_{c}" for c in bundle.labels]
    rows = [["REJECT" if lab == REJECT else str(int(lab))] + list(s) for lab, s in zip(labels, joint)]
    save_csv(values["out"], header, rows)
    n_rej = int(np.sum(labels == REJECT))
    out.write(f"rows\t{len(labels)}\nrejected\t{n_rej}\n")
    if data.labels is not None:
        acc = float(np.mean(labels == data.labels))
        out.write(f"accuracy\t{acc:.17g}\n")
    return 0


HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sample": cmd_sample,
    "entropy": cmd_entropy,
    "classify-train": cmd_classify_train,
    "classify-predict": cmd_classify_predict,
}

SHORTHANDS = {
    "train": ["data", "labels", "model", "epoch_log", "fit_report", "seed", "epochs"],
    "eval": ["data", "labels", "model", "out", "corrupt_fraction", "seed"],
    "sample": ["model", "count", "seed", "out"],
    "entropy": ["data", "model"],
    "classify-train": ["data", "labels", "model", "foreign_weight", "reject_lambda", "seed", "epoch_log"],
    "classify-predict": ["data", "labels", "model", "out", "reject_lambda"],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(p, command):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    for key in SHORTHANDS[command]:
        p.add_argument("--" + key.replace("_", "-"), dest=key, metavar=key.upper())
    p.set_defaults(command=command)


def make_parser():
    parser = _Parser(prog="ddm", description="Train, evaluate and sample bijective density models.")
    sub = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)
    for name in ("train", "eval", "sample", "entropy"):
        _add_common(sub.add_parser(name), name)
    cls = sub.add_parser("classify")
    cls_sub = cls.add_subparsers(dest="action", required=True, parser_class=_Parser)
    _add_common(cls_sub.add_parser("train"), "classify-train")
    _add_common(cls_sub.add_parser("predict"), "classify-predict")
    return parser


def _threads():
    text = os.environ.get("DDM_THREADS", "1")
    try:
        n = int(text)
    except ValueError:
        raise ConfigError(f"DDM_THREADS must be a positive integer, got {text!r}") from None
    if n < 1:
        raise ConfigError(f"DDM_THREADS must be a positive integer, got {text!r}")
    return n


def run(argv=None, out=None, err=None):
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        args = make_parser().parse_args(argv)
        command = args.command
        overrides = list(args.set)
        for key in SHORTHANDS[command]:
            v = getattr(args, key)
            if v is not None:
                overrides.append(f"{key}={v}")
        values, cfg = build_config(command, args.config, overrides)
        with threadpool_limits(limits=_threads()):
            return HANDLERS[command](values, cfg, out, err)
    except ConfigError as exc:
        err.write(f"ddm: config error: {exc}\n")
        return EXIT_CONFIG
    except DataError as exc:
        err.write(f"ddm: data error: {exc}\n")
        return EXIT_DATA
    except (NumericalError, ArithmeticError, InversionError, FitError, DomainError) as exc:
        err.write(f"ddm: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        err.write(f"ddm: data error: no such file: {exc.filename}\n")
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
