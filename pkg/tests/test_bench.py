import importlib.util
import pathlib

import pytest

BENCH = pathlib.Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


class TestKernelBenchmark:
    def test_backends_identical(self):
        pytest.importorskip("localcal.trees._kernels")
        spec = importlib.util.spec_from_file_location("bench_kernels", BENCH)
        mod = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(mod)
        rows = mod.run(n=300, d=4, repeat=1)
        assert [r[0] for r in rows] == ["build_tree", "route", "cost_complexity", "match_counts"]
        assert all(r[3] for r in rows)
