"""Shared simulated logs; each full OCV test runs once per session."""

import numpy as np
import pytest

from ocvkit.battery_model import Cell, ConstantMagnitude, combined3_cell, default_cell
from ocvkit.protocols import OcvTestConfig, low_rate_ocv_test
from ocvkit.soc import compute_capacity, coulomb_count, ocv_branches

C64 = 14400.0 / 3600.0 / 64  # 0.0625 A


def run_test(truth, n=64, seed=1, soc=0.5, **cfg):
    cell = Cell(truth, soc=soc, rng=np.random.default_rng(seed))
    return low_rate_ocv_test(cell, OcvTestConfig(n=n, **cfg)), cell


def branches_with_soc(log):
    br = ocv_branches(log)
    qc, qd = compute_capacity(br)
    return br, coulomb_count(br, qc, qd)


@pytest.fixture(scope="session")
def generative_truth():
    return combined3_cell(C64)


@pytest.fixture(scope="session")
def generative_log(generative_truth):
    """Noiseless C/64 test on the generative Combined+3 cell (resistive hysteresis)."""
    log, _ = run_test(generative_truth)
    return log


@pytest.fixture(scope="session")
def generative_noisy_log():
    log, _ = run_test(combined3_cell(C64, noise_std_V=0.0002), seed=2024)
    return log


@pytest.fixture(scope="session")
def constant_magnitude_log():
    truth = combined3_cell(C64, hysteresis=ConstantMagnitude(0.005), noise_std_V=0.0002)
    log, _ = run_test(truth, seed=5)
    return truth, log


@pytest.fixture(scope="session")
def default_truth():
    return default_cell()


@pytest.fixture(scope="session")
def default_log(default_truth):
    log, _ = run_test(default_truth, seed=3)
    return log
