import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running physics validation")
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")
