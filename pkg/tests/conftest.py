import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vpaw3d.atomic import preset_dataset
from vpaw3d.potential import dimer

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def dataset(name="1s", r_c=0.5, Z=3.0, d=5):
    return preset_dataset(name, Z=Z, r_c=r_c, d=d)


@pytest.fixture(scope="session")
def lithium_dimer():
    return dimer(Z=3.0, separation=1.0, L=5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, dict[str, tuple[bool, str]]] = {}


def record_criterion(number: int, part: str, passed: bool, detail: str) -> None:
    """Store one acceptance check; a criterion passes when all of its parts do."""
    ACCEPTANCE.setdefault(number, {})[part] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        status = "PASS" if all(ok for ok, _ in parts.values()) else "FAIL"
        detail = "; ".join(f"{name}: {'ok' if ok else 'FAILED'} {text}"
                           for name, (ok, text) in parts.items())
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
