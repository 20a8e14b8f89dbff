import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tabanogan.gan import TrainConfig, train_gan  # noqa: E402
from tabanogan.preprocess import Dataset, PreprocessConfig, fit_encoder  # noqa: E402


def toy_table(n=600, seed=0):
    """Two columns: a bimodal one (modes at -3 and 3) and a unimodal one."""
    rng = np.random.default_rng(seed)
    mode = rng.random(n) < 0.5
    a = np.where(mode, -3.0, 3.0) + rng.normal(0, 0.3, n)
    b = rng.normal(10.0, 2.0, n)
    return Dataset(["a", "b"], np.stack([a, b], axis=1))


TOY_TRAIN = TrainConfig(epochs=300, warmup=300, batch_size=128, latent_dim=8,
                        generator_dims=(32, 32), discriminator_dims=(32, 16), pac=4, seed=0)


@pytest.fixture(scope="session")
def toy_model():
    """(encoder, model, history) for a small GAN trained on ``toy_table``."""
    data = toy_table()
    enc = fit_encoder(data, PreprocessConfig())
    model, history = train_gan(enc.transform(data.values), enc.layout, TOY_TRAIN)
    return enc, model, history


SMALL_RUN = """\
# small end-to-end run (seconds, not minutes)
synth.n_normal = 400
synth.n_anomalies = 30
train.epochs = 30
train.warmup = 30
train.batch_size = 64
train.latent_dim = 8
train.generator_dims = 32, 32
train.discriminator_dims = 32, 16
train.pac = 4
invert.steps = 150
invert.restarts = 2
"""


def small_run_config(out_dir, seed=0, extra=""):
    from tabanogan.config import parse_config

    text = SMALL_RUN + f"seed = {seed}\noutput.dir = {out_dir}\n" + extra
    return parse_config(text)


# ----------------------------------------------------------- acceptance lines

_ORDER: dict[str, int] = {}


def pytest_collection_modifyitems(items):
    _ORDER.update((item.nodeid, i) for i, item in enumerate(items))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    doc = getattr(item.function, "__doc__", None)
    report.criterion = (doc or item.name).strip().splitlines()[0]


def pytest_terminal_summary(terminalreporter):
    rows = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            if "test_acceptance.py" not in rep.nodeid:
                continue
            if rep.when != "call" and rep.outcome == "passed":
                continue
            measured = dict(rep.user_properties).get("measured", "")
            status = "PASS" if rep.outcome == "passed" else "FAIL"
            rows.setdefault(rep.nodeid, (status, rep.criterion, measured))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(rows, key=lambda n: _ORDER.get(n, 0)):
        status, criterion, measured = rows[nodeid]
        line = f"{status}  {criterion}"
        if measured:
            line += f"  [{measured}]"
        terminalreporter.write_line(line)
