"""Shared fixtures: dataset splits, the trained zoo, and artifact files.

The expensive session fixtures (zoo, denoiser, attack net) train real
models once per run; everything downstream reads from them.  Cheap
module fixtures build tiny randomly initialized models for property
tests that only need gradients, not accuracy.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np
import pytest

from advarena import attacks, data, denoiser, models


@pytest.fixture(scope="session")
def train_split():
    return data.generate(n_per_class=20, seed=101, name="train")


@pytest.fixture(scope="session")
def dev_split():
    split = data.generate(n_per_class=10, seed=7, name="dev")
    return data.assign_targets(split, seed=7)


@pytest.fixture(scope="session")
def final_split():
    split = data.generate(n_per_class=10, seed=202, name="final")
    return data.assign_targets(split, seed=202)


@pytest.fixture(scope="session")
def zoo(train_split):
    return models.train_zoo(train_split.records, seed=0)


def _weights_digest(model) -> str:
    h = hashlib.sha256()
    for layer in model.weights:
        for w in layer:
            h.update(np.ascontiguousarray(w).tobytes())
    return h.hexdigest()


@pytest.fixture(scope="session")
def lgd_denoiser(zoo, train_split):
    """LGD denoiser plus the guide's weight digests before/after training."""
    guide = zoo["cnn_a"]
    pairs = denoiser.generate_trainset(
        {k: zoo[k] for k in ("cnn_a", "mlp2")}, train_split.records,
        per_class_count=20, seed=6)
    before = _weights_digest(guide)
    net = denoiser.build_denoiser(seed=5)
    net = denoiser.train_denoiser(
        net, pairs, denoiser.GuidanceLoss("lgd", guide),
        denoiser.DenoiserTrainConfig(epochs=8, lr=0.02, seed=2))
    after = _weights_digest(guide)
    return {"net": net, "guide": guide, "guide_digest_before": before,
            "guide_digest_after": after}


@pytest.fixture(scope="session")
def attack_net(zoo, dev_split):
    """Hint-fed attack FCN trained on the dev split against cnn_a + mlp2."""
    net = attacks.train_attack_fcn(
        [zoo["cnn_a"], zoo["mlp2"]], dev_split.records,
        attacks.ARENA_EPSILONS, attacks.FcnTrainConfig(seed=3),
        hints=True, hint_model=zoo["mlp2"])
    return net


@pytest.fixture(scope="session")
def artifact_dir(tmp_path_factory, zoo, lgd_denoiser, attack_net,
                 train_split, dev_split):
    """On-disk artifact store consumed by submission/cli/arena tests."""
    root = tmp_path_factory.mktemp("artifacts")
    for name, model in zoo.items():
        models.save(model, str(root / f"{name}.advw"))
    denoiser.save_denoiser(lgd_denoiser["net"], str(root / "denoiser.advw"))
    attacks.save_attack_fcn(attack_net, str(root / "attack_fcn.advw"))
    data.write_split(train_split, str(root / "train"))
    data.write_split(dev_split, str(root / "dev"))
    return str(root)


@pytest.fixture(scope="session")
def tiny_records():
    """Small 4-class 16x16 split for cheap attack/defense property tests."""
    return data.generate(n_classes=4, n_per_class=4, size=16, seed=3).records


@pytest.fixture(scope="session")
def tiny_model(tiny_records):
    """Randomly initialized small CNN on 16x16 inputs; gradients are real
    even though the model is untrained."""
    spec = models.ModelSpec(
        input_shape=(3, 16, 16), n_classes=4,
        layers=(("conv", 4, 4, 2, 1), ("relu",), ("flatten",), ("dense", 4)))
    return models.build(spec, seed=11, name="tiny")


@pytest.fixture(scope="session")
def tiny_pair(tiny_records):
    """Two tiny models (different seeds) for ensemble tests."""
    spec = models.ModelSpec(
        input_shape=(3, 16, 16), n_classes=4,
        layers=(("conv", 4, 4, 2, 1), ("relu",), ("flatten",), ("dense", 4)))
    a = models.build(spec, seed=21, name="tiny_a")
    b = models.build(spec, seed=22, name="tiny_b")
    return a, b
