import os
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def card_path() -> Path | None:
    env = os.environ.get("YFWL_CARD_CSV")
    path = Path(env) if env else ROOT / "data" / "card.csv"
    return path if path.is_file() else None


@pytest.fixture
def card_csv():
    path = card_path()
    if path is None:
        pytest.skip("Card data absent: run `python3 scripts/fetch_card.py` or set YFWL_CARD_CSV")
    return path


@pytest.fixture
def record():
    """Record an acceptance-criterion outcome for the terminal summary."""

    def _record(criterion: str, passed: bool, detail: str = "") -> None:
        prev = _ACCEPTANCE.get(criterion)
        if prev is not None:
            passed = passed and prev[0]
            detail = "; ".join(d for d in (prev[1], detail) if d)
        _ACCEPTANCE[criterion] = (bool(passed), detail)

    return _record


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int(k.split()[0]), k)):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
