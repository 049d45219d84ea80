import numpy as np
import pytest

from fskgc.config import ExperimentConfig, ModelConfig
from fskgc.data import SyntheticSpec, generate_synthetic_dataset
from fskgc.diffcore import Tensor
from fskgc.model import init_params

TOY_MODEL = dict(dim=4, memory_size=3, n_layers=2, latent_dim=3, tcvae_hidden=4, kld_sign="elbo")


def toy_config(**train) -> ExperimentConfig:
    base = dict(batch_size=2, inner_steps=2, n_generated=2, iterations_per_epoch=2, max_epochs=1)
    base.update(train)
    return ExperimentConfig(name="toy", seeds=(1,)).replace(model=TOY_MODEL, train=base)


@pytest.fixture(scope="session")
def toy_cfg() -> ExperimentConfig:
    return toy_config()


@pytest.fixture(scope="session")
def toy_model() -> ModelConfig:
    return toy_config().model


@pytest.fixture(scope="session")
def synth_ds():
    return generate_synthetic_dataset(SyntheticSpec(), min_len=12)


@pytest.fixture()
def toy_params(toy_model, synth_ds):
    return init_params(toy_model, synth_ds.vocab.size, np.random.default_rng(0))


def constants(params):
    return {k: Tensor(v) for k, v in params.items()}


# acceptance reporting ----------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
