"""The twelve acceptance criteria, each at its stated tolerance.

Case runs are cached inside :mod:`ejecta.verify`, so criteria sharing a run
(and the ``verify`` command at the end) do not repeat it.
"""

import pytest

from conftest import ACCEPTANCE_LINES
from ejecta import verify
from ejecta.cli import main


@pytest.mark.parametrize("check", verify.CHECKS, ids=lambda c: c.__name__.removeprefix("check_"))
def test_criterion(check):
    res = check()
    line = res.line()
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert res.passed, line


def test_verify_command_reports_all_criteria(capsys):
    code = main(["verify"])
    out = capsys.readouterr().out
    lines = [ln for ln in out.splitlines() if ln.startswith(("[PASS]", "[FAIL]"))]
    assert len(lines) == len(verify.CHECKS)
    assert code == 0, out
