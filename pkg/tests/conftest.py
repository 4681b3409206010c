import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# N=6 pm1 instance whose depth-4 landscape actually reaches the ground state
TRADEOFF_SEED = 3
TRADEOFF_DEPTHS = (1, 2, 3, 4, 5)

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def tradeoff_setup():
    from qaoanoise import tradeoff
    from qaoanoise.ising import random_instance
    from qaoanoise.optimize import optimize_angles

    inst = random_instance(6, "pm1", TRADEOFF_SEED)
    angles = {d: optimize_angles(inst, d, restarts=20, seed=0).best_angles for d in TRADEOFF_DEPTHS}
    table = tradeoff.sweep(inst, TRADEOFF_DEPTHS, tradeoff.default_p_grid(), "depolarizing", angles)
    return inst, angles, table


@pytest.fixture
def acceptance_report():
    def record(number, title, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"[{status}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else ""))

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
