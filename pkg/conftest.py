import sys

import numpy as np
import pytest

from grpcoll.core.config import settings
from grpcoll.core.logging import configure_logging
from grpcoll.services.datasets import data_path, split, synth_gaussian_two_class

configure_logging(level="WARNING", json=False)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running test on a real dataset or a large Monte Carlo run")


def _has_files(*names: str) -> bool:
    return all(data_path(n).exists() or data_path(n + ".gz").exists() for n in names)


requires_mnist = pytest.mark.skipif(
    not _has_files(
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ),
    reason=f"MNIST files not found under {settings.GRPC0LL_DATA_DIR}",
)
requires_spambase = pytest.mark.skipif(
    not _has_files("spambase.data"), reason=f"spambase.data not found under {settings.GRPC0LL_DATA_DIR}"
)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture
def toy2d():
    """(train, test) of the two-class 2-D Gaussian task."""
    data = synth_gaussian_two_class(2, 2.0, 200, seed=7)
    return split(data, 0.2, seed=7)


@pytest.fixture
def toy10d():
    data = synth_gaussian_two_class(10, 2.0, 200, seed=11)
    return split(data, 0.2, seed=11)


@pytest.fixture(autouse=True)
def _reset_logging():
    """Restore the suite's logging config after tests (e.g. CLI runs) that rebind it to a captured stream."""
    yield
    configure_logging(level="WARNING", json=False)
    # module loggers cache their first binding; drop it so they pick up the restored config
    for name, mod in list(sys.modules.items()):
        lg = getattr(mod, "logger", None) if name.startswith("grpcoll") else None
        if lg is not None and "bind" in getattr(lg, "__dict__", {}):
            del lg.__dict__["bind"]
