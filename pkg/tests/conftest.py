import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from maisac.beamforming import init_beamformers, inner_loop  # noqa: E402
from maisac.channel import build_channels  # noqa: E402
from maisac.fp import update_aux  # noqa: E402
from maisac.scenario import ScenarioConfig, layout_random, realization_for, rng_stream  # noqa: E402


class State:
    """A random (realization, layout, channels, beamformers, aux) tuple."""

    def __init__(self, cfg, index, warm=0):
        self.cfg = cfg
        self.real = realization_for(cfg, index)
        self.layout = layout_random(cfg, rng_stream(cfg.seed, "test-layout", index))
        self.ch = build_channels(self.real, self.layout, cfg.d_si, cfg.noise)
        bf = init_beamformers(cfg, rng_stream(cfg.seed, "test-bf", index))
        if warm:
            bf = inner_loop(self.ch, bf, cfg, max_iters=warm).bf
        self.bf = bf
        self.aux = update_aux(self.ch, bf)


def make_state(index, cfg=None, warm=0):
    return State(cfg or ScenarioConfig(), index, warm)


@pytest.fixture
def cfg():
    return ScenarioConfig()


@pytest.fixture
def small_cfg():
    return ScenarioConfig(n_tx=3, n_rx=2, k_dl=2, k_ul=2, n_clutter=2, n_paths=3)


@pytest.fixture
def state():
    return make_state(0, warm=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
