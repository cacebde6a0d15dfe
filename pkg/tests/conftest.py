import functools

import numpy as np
import pytest

from brwspdc import spdc
from brwspdc.materials import constant_index, load_materials
from brwspdc.stack import Layer, LayerStack, load_stack

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def materials():
    return load_materials()


@pytest.fixture(scope="session")
def brw(materials):
    return load_stack("brw-paper", materials)


@pytest.fixture(scope="session")
def conv(materials):
    return load_stack("conventional-paper", materials)


def slab(n_core, n_clad, d_core, pol="TE", clad_thickness=500.0):
    """Symmetric three-layer slab: core in an effectively infinite uniform cladding."""
    core = constant_index("core", n_core)
    clad = constant_index("clad", n_clad)
    return LayerStack(Layer(core, d_core), (Layer(clad, clad_thickness), Layer(clad, clad_thickness)), 1, clad,
                      polarization=pol)


def grid(start, stop, step):
    n = int(round((stop - start) / step))
    return np.round(start + step * np.arange(n + 1), 10)


class SweepCache:
    """Expensive sweeps computed once per session and shared between test files."""

    def __init__(self, brw, conv):
        self.stacks = {"brw": brw, "conv": conv}

    @functools.lru_cache(maxsize=None)
    def pump(self, which, step=0.1, lo=788.0, hi=812.0):
        cfg = spdc.SpdcConfig(self.stacks[which])
        return spdc.pump_sweep(cfg, grid(lo, hi, step))

    @functools.lru_cache(maxsize=None)
    def signal(self, which, step=None, lo=None, hi=None):
        if which == "brw":
            lo, hi, step = lo or 1547.0, hi or 1553.0, step or 0.02
        else:
            lo, hi, step = lo or 1530.0, hi or 1570.0, step or 0.1
        cfg = spdc.SpdcConfig(self.stacks[which], detection_window=1.0)
        return spdc.signal_sweep(cfg, grid(lo, hi, step))


@pytest.fixture(scope="session")
def sweeps(brw, conv):
    return SweepCache(brw, conv)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
