"""Named training configurations used by the experiment scripts and acceptance tests.

These were picked by small sweeps on the bundled synthetic and MNIST data;
the library defaults in ``TrainConfig`` are left untouched.
"""

from .trainer import TrainConfig

# 1-D and 2-D density estimation: mild constant-mean targets, whole-batch
# divergence (per-example fits are degenerate with K <= 2), no masking noise
LOWDIM = dict(epochs=60, per_example_divergence=False, window_size=256, initial_target=(4.0, 10.0),
              final_target=(2.0, 5.0), interpolation_steps=4, noise_rate=0.0, weight_ratios=(5.0, 0.1, 1.0))

# default sparse target (0.02, 0.2), annealed all the way on 2-D data
PEAKED = dict(epochs=60, per_example_divergence=False, window_size=64, noise_rate=0.0)

# class-conditional models on the two-class 2-D task
CLASSIFIER = dict(epochs=40, per_example_divergence=False, window_size=32, initial_target=(8.0, 20.0),
                  final_target=(6.0, 15.0), interpolation_steps=4, noise_rate=0.0, epsilon_threshold=0.0)
CLASSIFIER_FOREIGN_WEIGHT = 1e-4

# MNIST subset after PCA to 30 dimensions
MNIST = dict(epochs=150, window_size=64, per_example_divergence=True, initial_target=(8.0, 20.0),
             final_target=(6.0, 15.0), interpolation_steps=4, noise_rate=0.0, epsilon_threshold=0.0)
MNIST_DIM = 30

PRESETS = {"lowdim": LOWDIM, "peaked": PEAKED, "classifier": CLASSIFIER, "mnist": MNIST}


def preset(name, **overrides):
    """``TrainConfig`` for a named preset, with optional field overrides."""
    return TrainConfig(**{**PRESETS[name], **overrides})


def as_config_text(name, **overrides):
    """The preset as ``key = value`` lines for ``ddm --config``."""
    lines = []
    for key, value in {**PRESETS[name], **overrides}.items():
        if isinstance(value, tuple):
            value = ", ".join(repr(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
