from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

TESTS_DIR = Path(__file__).resolve().parent
FIXTURES = TESTS_DIR / "fixtures"

sys.path.insert(0, str(TESTS_DIR))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def quadrant_image():
    """64x64 scene with a red, gray, green, gray quadrant layout."""
    img = np.zeros((64, 64, 3), dtype=np.uint8)
    img[:32, :32] = (220, 30, 30)
    img[:32, 32:] = (120, 120, 120)
    img[32:, :32] = (40, 180, 40)
    img[32:, 32:] = (120, 120, 120)
    return img


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {name}: {status}", flush=True)
