import runpy
from pathlib import Path

import pytest

from efficientlo import kernels

SCRIPT = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_backends.py"


@pytest.mark.skipif(kernels.BACKEND != "compiled", reason="compiled backend not built")
def test_backend_benchmark_runs_and_agrees(tmp_path, capsys):
    main = runpy.run_path(str(SCRIPT))["main"]
    out = tmp_path / "b.csv"
    assert main(["--sizes", "3000", "--reps", "1", "--out", str(out)]) == 0
    assert "window_group_knn" in capsys.readouterr().out
    assert out.read_text().count("True") == 4
