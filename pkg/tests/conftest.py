import math

import numpy as np
import pytest

from defcert.classifier import CentroidModel, LinearSoftmaxModel, train
from defcert.data_io import synth_shapes
from defcert.deform import Family
from defcert.grid_image import Image, normalized_grid, warp_pixels
from defcert.smoothing import Uniform

ROT = Family("rotation")


def rotated(image, theta):
    u, v = ROT.fields(np.array([[theta]]), image.width, image.height)
    return warp_pixels(image.pixels, u, v)[0]


@pytest.fixture(scope="session")
def ramp():
    """15x15 horizontal intensity ramp, mirror-symmetric about the middle row."""
    g = normalized_grid(15, 15)
    return Image(0.5 + 0.4 * g.x)


@pytest.fixture(scope="session")
def step_model(ramp):
    """Nearest centroid between the ramp rotated by +0.3 (class 0) and -0.3 (class 1).

    As a function of the rotation angle its label is 0 for theta > 0 and 1 for
    theta < 0, for |theta| < 3 rad.
    """
    return CentroidModel(np.stack([rotated(ramp, 0.3), rotated(ramp, -0.3)]))


@pytest.fixture(scope="session")
def soft_step_model(ramp, step_model):
    """Logistic relaxation of ``step_model`` with a transition about 0.1 rad wide."""
    c = step_model.centroids.reshape(2, -1)
    direction = c[0] - c[1]
    offset = -0.5 * (c[0] @ c[0] - c[1] @ c[1])
    slope = (rotated(ramp, 0.05).ravel() @ direction + offset) / 0.05
    beta = 40.0 / slope
    weights = np.stack([beta * direction, np.zeros_like(direction)])
    return LinearSoftmaxModel(weights, np.array([beta * offset, 0.0]), ramp.shape)


@pytest.fixture(scope="session")
def shapes_train():
    return synth_shapes(500, 16, seed=0)


@pytest.fixture(scope="session")
def shapes_test():
    return synth_shapes(100, 16, seed=1)


@pytest.fixture(scope="session")
def shapes_model(shapes_train):
    return train(shapes_train, ROT, Uniform(math.pi / 4), epochs=20, seed=0)


class ConstantModel:
    """Always predicts ``label``."""

    def __init__(self, label, num_classes, input_shape):
        self.label = label
        self.num_classes = num_classes
        self.input_shape = tuple(input_shape)

    def predict_proba(self, batch):
        out = np.zeros((len(batch), self.num_classes))
        out[:, self.label] = 1.0
        return out


class CoinFlipModel:
    """Hard label drawn uniformly at random on every call, ignoring the input."""

    def __init__(self, input_shape, seed=0):
        self.num_classes = 2
        self.input_shape = tuple(input_shape)
        self.rng = np.random.default_rng(seed)

    def predict_proba(self, batch):
        out = np.zeros((len(batch), 2))
        out[np.arange(len(batch)), self.rng.integers(0, 2, len(batch))] = 1.0
        return out


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
