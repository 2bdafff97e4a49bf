"""Shared fixtures: the bundled default noise config and a session-wide cache
of experiment runs so acceptance criteria can share the variant/seed grid."""

import time
from dataclasses import replace
from pathlib import Path

import pytest

from btwmoe.config import load_experiment_config
from btwmoe.training import run_experiment

REPO_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG_PATH = REPO_ROOT / "configs" / "noise_default.cfg"

# Populated by tests/test_acceptance.py; echoed after the run so the
# per-criterion verdicts are visible without -s.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_config():
    """The bundled default 3-modality noise config (single source of truth)."""
    return load_experiment_config(DEFAULT_CONFIG_PATH)


class RunCache:
    """Lazily runs (variant, seed) cells of the default config, once per session."""

    def __init__(self, base_config):
        self.base = base_config
        self._results = {}
        self.durations = {}

    def get(self, variant: str, seed: int):
        key = (variant, seed)
        if key not in self._results:
            config = replace(
                self.base,
                variant=variant,
                seed=seed,
                data=replace(self.base.data, seed=seed),
            )
            started = time.perf_counter()
            self._results[key] = run_experiment(config)
            self.durations[key] = time.perf_counter() - started
        return self._results[key]

    def total_duration(self, keys) -> float:
        return sum(self.durations[k] for k in keys)


@pytest.fixture(scope="session")
def run_cache(default_config):
    return RunCache(default_config)
