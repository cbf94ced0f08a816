import sys
from pathlib import Path

import numpy as np
import pytest

from cxai.network import Conv2d, Flatten, Linear, MaxPool2d, ReLU, build_network

sys.path.insert(0, str(Path(__file__).parent))

TINY_ARCH = (
    Conv2d(3, 3, 1, 1), ReLU(), MaxPool2d(2), Conv2d(4, 3, 1, 1), ReLU(), MaxPool2d(2), Flatten(), Linear(2),
)


def random_net(seed, input_shape=(2, 8, 8), layers=TINY_ARCH, bias_scale=0.1):
    """Small network with Glorot weights and random (nonzero) biases."""
    net = build_network(layers, input_shape, concept_layer=3, embedding_layer=5, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    params = {
        k: (v + rng.normal(0, bias_scale, v.shape)) if k.endswith(".bias") else v
        for k, v in net.params.items()
    }
    return net.with_params(params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_net():
    return random_net(7)


TOY_ARCH = (
    Conv2d(4, 3, 1, 1), ReLU(), MaxPool2d(2), Conv2d(6, 3, 1, 1), ReLU(), MaxPool2d(2), Flatten(), Linear(2),
)


def trained_toy(test_per_class=5, seed=0):
    """Small network trained on 16x16 synthetic images, plus a held-out test set."""
    from cxai.data import SynthSpec, synthesize_dataset
    from cxai.network import TrainConfig, train

    tr = synthesize_dataset(SynthSpec(40, 16, seed, "train"))
    te = synthesize_dataset(SynthSpec(test_per_class, 16, seed, "test"))
    net = build_network(TOY_ARCH, (1, 16, 16), concept_layer=3, embedding_layer=5, seed=seed)
    net = train(net, tr, TrainConfig(epochs=8, batch_size=8, learning_rate=0.05, seed=seed))
    return net, te


SMALL_CONFIG = """\
# fast end-to-end fixture
seed = 3
architecture = conv:4:3:1:1, relu, maxpool:2, conv:16:3:1:1, relu, maxpool:8, flatten, linear:2
input_shape = 1,16,16
concept_layer = 3
embedding_layer = 5
epochs = 8
batch_size = 8
synth_train_per_class = 40
synth_test_per_class = 6
synth_image_size = 16
"""


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_CONFIG + f"out_dir = {tmp_path / 'out'}\n", encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
