import runpy
from pathlib import Path

import pytest

DEMOS = Path(__file__).resolve().parent.parent / "demos"


@pytest.mark.parametrize("name,args", [
    ("inspect_day", (3000,)),
    ("time_travel_consistency", (6000, 800, 1)),
    ("train_test_matrix", (2, 2, 300)),
])
def test_demo_runs(name, args, capsys):
    mod = runpy.run_path(str(DEMOS / f"{name}.py"))
    mod["main"](*args)
    assert capsys.readouterr().out.strip()
