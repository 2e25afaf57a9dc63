"""Shared fixtures plus the acceptance-line reporter.

Acceptance tests report one ``ACCEPTANCE <n>: PASS/FAIL - <detail>`` line per
criterion; the lines are echoed in a terminal section at the end of the run
so they are visible without ``-s``.
"""

import pytest

from gedp.dataset import Dataset, EstablishmentRecord

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one acceptance-criterion outcome, then assert it."""

    def record(n: int, ok: bool, detail: str):
        line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}"
        _ACCEPTANCE_LINES.append((n, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_records(values, attr="m1emp", cnty="01001", naics="236115", start_key=1):
    """Records whose ``attr`` column holds ``values`` (other attributes 10.0)."""
    records = []
    for i, v in enumerate(values):
        fields = {a: 10.0 for a in ("m1emp", "m2emp", "m3emp", "wage")}
        fields[attr] = float(v)
        records.append(
            EstablishmentRecord(
                year=2016,
                qtr=1,
                state=cnty[:2],
                cnty=cnty,
                naics=naics,
                own="5",
                primary_key=str(start_key + i),
                **fields,
            )
        )
    return records


@pytest.fixture
def small_dataset():
    """Six establishments over two counties and two industries."""
    return Dataset(
        make_records([3.0, 10.0, 25.0], cnty="01001", naics="236115", start_key=1)
        + make_records([7.0, 40.0], cnty="01003", naics="445110", start_key=4)
        + make_records([100.0], cnty="01003", naics="445120", start_key=6)
    )
