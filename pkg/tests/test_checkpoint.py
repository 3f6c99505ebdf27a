import json

import numpy as np
import pytest

from homemoe import checkpoint
from homemoe.checkpoint import CheckpointError
from homemoe.gradcheck import randomize, tiny_home_config, tiny_tasks
from homemoe.models import build_model


def trained_like_model():
    model = build_model(tiny_home_config(), tiny_tasks())
    randomize(model, np.random.default_rng(0))
    for bn in model.bn_states().values():
        bn.running_mean = bn.running_mean + 0.3
        bn.running_var = bn.running_var * 2.0
    return model


def test_round_trip_preserves_predictions(tmp_path):
    model = trained_like_model()
    path = tmp_path / "ck.json"
    checkpoint.save(model, path)
    again = checkpoint.load(path)
    x = np.random.default_rng(1).normal(size=(9, 12))
    np.testing.assert_array_equal(model.predict(x), again.predict(x))
    assert again.config == model.config


def test_dumps_is_byte_stable():
    assert checkpoint.dumps(trained_like_model()) == checkpoint.dumps(trained_like_model())


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format="other"),
    lambda d: d["params"].pop(sorted(d["params"])[0]),
    lambda d: d["params"][sorted(d["params"])[0]].update(data="!!notbase64!!"),
    lambda d: d["params"][sorted(d["params"])[0]].update(shape=[1, 1, 1]),
    lambda d: d["config"].update(architecture="nope"),
])
def test_corrupt_checkpoints_are_rejected(mutate):
    doc = json.loads(checkpoint.dumps(trained_like_model()))
    mutate(doc)
    with pytest.raises(CheckpointError):
        checkpoint.loads(json.dumps(doc))


def test_truncated_text():
    text = checkpoint.dumps(trained_like_model())
    with pytest.raises(CheckpointError):
        checkpoint.loads(text[: len(text) // 2])
