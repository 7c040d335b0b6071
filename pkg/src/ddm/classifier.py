"""Class-conditional density models, Bayes-rule labelling and rejection.

One model is trained per class on that class's examples. All class models
share one preprocessor so their log-densities live in the same coordinates
and can be compared directly.
"""

from dataclasses import dataclass, field
import math
import struct

import numpy as np

from .beta import BetaParams
from .density import ModelBundle, log_density, log_density_decoder_grad, _latent_log_density
from .objective import Gradients
from .preprocess import fit_preprocessor
from .trainer import train

__all__ = [
    "REJECT",
    "ClassifierBundle",
    "ClassTrainingError",
    "ForeignPenalty",
    "train_class_models",
    "class_scores",
    "classify",
    "classify_with_reject",
    "bundle_to_bytes",
    "bundle_from_bytes",
    "save_classifier",
    "load_classifier",
]

REJECT = -1
CLASSIFIER_MAGIC = b"DDMCLS01"
CLASSIFIER_VERSION = 1


class ClassTrainingError(RuntimeError):
    def __init__(self, label, err):
        super().__init__(f"training the model for class {label} failed: {err}")
        self.label = label
        self.__cause__ = err


@dataclass
class ClassifierBundle:
    """Per-class models plus log-priors.

    ``rejection_threshold`` is ``ln(lambda)``: a point is rejected when every
    class log-density falls below it. ``-inf`` never rejects.
    """

    class_models: dict
    log_priors: dict
    rejection_threshold: float = -math.inf
    foreign_weight: float = 0.0
    training_logs: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if set(self.class_models) != set(self.log_priors):
            raise ValueError("class_models and log_priors must have the same labels")
        if not self.class_models:
            raise ValueError("need at least one class")
        total = sum(math.exp(v) for v in self.log_priors.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"priors must sum to 1, got {total}")
        dims = {m.preprocessor.input_dim for m in self.class_models.values()}
        if len(dims) != 1:
            raise ValueError("all class models must share the input dimensionality")
        if self.foreign_weight < 0:
            raise ValueError("foreign_weight must be nonnegative")

    @property
    def labels(self):
        return sorted(self.class_models)


class ForeignPenalty:
    """Hinged penalty on the density a class model gives to other classes.

    Value ``weight * mean(max(0, log p(foreign) - margin))`` over one foreign
    minibatch. The margin is fixed the first time the term is evaluated: the
    mean own-class log-density minus two standard deviations under the
    decoder at that moment. Until some own-class point has finite density
    the term stays inactive.
    """

    def __init__(self, own, marginal, weight):
        self.own = np.asarray(own, dtype=float)
        self.marginal = marginal
        self.weight = float(weight)
        self.margin = None
        self.batch = None

    def activate(self, dec):
        if self.margin is not None:
            return
        values, inside, _, _ = _latent_log_density(dec, self.marginal, self.own)
        finite = values[inside]
        if finite.size >= 2:
            self.margin = float(finite.mean() - 2.0 * finite.std())

    def value_and_grad(self, enc, dec, need_grad):
        self.activate(dec)
        if self.margin is None or self.batch is None or self.weight == 0.0:
            return 0.0, (Gradients.zeros_like(enc, dec) if need_grad else None)
        n = self.batch.shape[0]
        if not need_grad:
            values, inside, _, _ = _latent_log_density(dec, self.marginal, self.batch)
            excess = np.where(inside, np.maximum(values - self.margin, 0.0), 0.0)
            return self.weight * float(excess.mean()), None
        values = _latent_log_density(dec, self.marginal, self.batch)[0]
        active = np.isfinite(values) & (values > self.margin)
        w = np.where(active, self.weight / n, 0.0)
        _, inside, dec_grads = log_density_decoder_grad(dec, self.marginal, self.batch, w)
        excess = np.where(active, values - self.margin, 0.0)
        grads = Gradients.zeros_like(enc, dec)
        grads.decoder = [(dW, db) for dW, db in dec_grads]
        return self.weight * float(excess.sum() / n), grads


def _split(points, labels):
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (points.shape[0],):
        raise ValueError("labels must have one entry per point")
    if np.any(labels < 0):
        raise ValueError("class labels must be nonnegative")
    return points, labels


def train_class_models(points, labels, config, foreign_weight=0.0, rejection_threshold=-math.inf,
                       preprocessor=None, on_epoch=None):
    """Train one model per class on a shared preprocessor.

    With ``foreign_weight == 0`` each class is trained exactly as a standalone
    model on its own (preprocessed) examples with ``config.seed``. Otherwise
    every fine-tuning minibatch also penalises density on a same-size
    minibatch of other classes' examples, drawn from a separate generator.
    """
    points, labels = _split(points, labels)
    if foreign_weight < 0:
        raise ValueError("foreign_weight must be nonnegative")
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size == 0:
        raise ValueError("no labelled examples")
    if np.any(counts < 2):
        raise ValueError(f"every class needs at least two examples (counts {dict(zip(classes.tolist(), counts.tolist()))})")
    pre = preprocessor if preprocessor is not None else fit_preprocessor(points)
    y_all = pre.apply(points, clip=True)
    marginal = BetaParams(*config.final_target)
    models, priors, logs = {}, {}, {}
    for label, count in zip(classes.tolist(), counts.tolist()):
        own = y_all[labels == label]
        foreign = y_all[labels != label]
        extra_fn = None
        if foreign_weight > 0 and foreign.shape[0] > 0:
            term = ForeignPenalty(own, marginal, foreign_weight)
            frng = np.random.default_rng([config.seed, 7919, label])

            def extra_fn(idx, term=term, foreign=foreign, frng=frng):
                pick = frng.integers(0, foreign.shape[0], size=len(idx))
                term.batch = foreign[pick]
                return (term,)

        cb = None if on_epoch is None else (lambda st, ep, rep, label=label: on_epoch(label, st, ep, rep))
        try:
            state = train(config, own, on_epoch=cb, extra_terms_fn=extra_fn)
        except (ArithmeticError, ValueError) as err:
            raise ClassTrainingError(label, err) from err
        models[label] = ModelBundle(state.encoder, state.decoder, marginal, pre)
        priors[label] = math.log(count / labels.size)
        logs[label] = list(state.epoch_log)
    return ClassifierBundle(models, priors, float(rejection_threshold), float(foreign_weight), logs)


def class_scores(bundle, points):
    """Per-class log-densities (N x C, columns in label order); -inf when out of support."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.column_stack([log_density(bundle.class_models[c], pts, clip=True) for c in bundle.labels])


def _decide(bundle, dens):
    labels = np.array(bundle.labels)
    joint = dens + np.array([bundle.log_priors[c] for c in bundle.labels])
    best = np.argmax(joint, axis=1)  # first maximum, i.e. the smallest label on ties
    out = labels[best]
    out = np.where(np.all(np.isneginf(joint), axis=1), REJECT, out)
    return out, joint


def classify(bundle, points):
    """Bayes-rule labels and per-class log-joint scores.

    Ties go to the smallest label. A point that every class places out of
    support is labelled ``REJECT``.
    """
    single = np.ndim(points) == 1
    out, joint = _decide(bundle, class_scores(bundle, points))
    if single:
        return int(out[0]), joint[0]
    return out, joint


def classify_with_reject(bundle, points, threshold=None):
    """Like ``classify`` but returns ``REJECT`` when every class log-density is below ``ln(lambda)``."""
    single = np.ndim(points) == 1
    thr = bundle.rejection_threshold if threshold is None else float(threshold)
    dens = class_scores(bundle, points)
    out, joint = _decide(bundle, dens)
    out = np.where(np.all(dens < thr, axis=1), REJECT, out)
    if single:
        return int(out[0]), joint[0]
    return out, joint


def bundle_to_bytes(bundle):
    from .data_io import model_to_bytes

    parts = [
        CLASSIFIER_MAGIC,
        struct.pack("<II", CLASSIFIER_VERSION, len(bundle.labels)),
        struct.pack("<dd", bundle.rejection_threshold, bundle.foreign_weight),
    ]
    for c in bundle.labels:
        body = model_to_bytes(bundle.class_models[c])
        parts.append(struct.pack("<qdQ", c, bundle.log_priors[c], len(body)))
        parts.append(body)
    return b"".join(parts)


def bundle_from_bytes(raw):
    from .data_io import ModelFormatError, model_from_bytes

    if raw[:8] != CLASSIFIER_MAGIC:
        raise ModelFormatError(f"bad classifier magic {raw[:8]!r}")
    try:
        version, n = struct.unpack_from("<II", raw, 8)
        if version != CLASSIFIER_VERSION:
            raise ModelFormatError(f"unsupported classifier format version {version}")
        thr, fw = struct.unpack_from("<dd", raw, 16)
        pos = 32
        models, priors = {}, {}
        for _ in range(n):
            c, lp, size = struct.unpack_from("<qdQ", raw, pos)
            pos += 24
            if pos + size > len(raw):
                raise ModelFormatError("truncated classifier file")
            models[c] = model_from_bytes(raw[pos:pos + size])
            priors[c] = lp
            pos += size
    except struct.error as err:
        raise ModelFormatError(f"truncated classifier file: {err}") from None
    if pos != len(raw):
        raise ModelFormatError(f"{len(raw) - pos} trailing byte(s) after classifier payload")
    # every class model was saved with the same preprocessor; share one instance again
    first = models[min(models)].preprocessor
    for m in models.values():
        m.preprocessor = first
    return ClassifierBundle(models, priors, thr, fw)


def save_classifier(bundle, path):
    with open(path, "wb") as fh:
        fh.write(bundle_to_bytes(bundle))


def load_classifier(path):
    with open(path, "rb") as fh:
        return bundle_from_bytes(fh.read())
