import tempfile
from pathlib import Path

import numpy as np
import pytest


@pytest.fixture
def temp_dir():
    """Provide a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def rng():
    """Seeded generator so every test sees the same draws."""
    return np.random.default_rng(12345)


@pytest.fixture
def small_logistic_data():
    """A fixed n=20 logistic dataset with overlapping classes."""
    x = np.linspace(-2.0, 2.0, 20)
    y = np.array([0, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 1], dtype=float)
    return x.reshape(-1, 1), y


@pytest.fixture
def mock_config_file(temp_dir):
    """Create a small simulation config file."""
    config_file = temp_dir / "tiny.cfg"
    config_file.write_text(
        "# tiny multiple index run\n"
        "scenario = multiple_index\n"
        "n = 60\n"
        "p = 8\n"
        "n_reps = 2\n"
        "base_seed = 7\n"
        "criteria = bic,hgbic_p\n"
        "test_size = 200\n"
        "path.n_lambda = 20\n"
    )
    return config_file


@pytest.fixture
def gaussian_csv(temp_dir, rng):
    """A numeric CSV whose response depends on the first two columns."""
    n = 50
    Z = rng.standard_normal((n, 4))
    y = 2.0 * Z[:, 0] - 1.5 * Z[:, 1] + 0.3 * rng.standard_normal(n)
    path = temp_dir / "data.csv"
    lines = ["y,a,b,c,d"] + [",".join(repr(float(v)) for v in (y[i], *Z[i])) for i in range(n)]
    path.write_text("\n".join(lines) + "\n")
    return path
