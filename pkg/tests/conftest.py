"""pytest hooks for the ecgnet suite: ``--run-slow`` gates full training runs."""

import pytest

SLOW_MARKER = "slow: multi-epoch training or finite-difference checks over a whole model"


def pytest_addoption(parser):
    """``--run-slow`` opts in to cross-validation runs and full-model gradient checks."""
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="also run the ecgnet training and whole-model gradient tests marked slow",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", SLOW_MARKER)


def pytest_collection_modifyitems(config, items):
    """Leave ``@pytest.mark.slow`` tests skipped unless ``--run-slow`` was given."""
    if config.getoption("--run-slow"):
        return

    skip_slow = pytest.mark.skip(reason="slow ecgnet test; pass --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
