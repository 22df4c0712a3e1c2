import json
import subprocess
import sys
from pathlib import Path

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


def test_benchmark_runs_both_backends(tmp_path):
    out = tmp_path / "bench.json"
    proc = subprocess.run([sys.executable, str(BENCH), "--repeat", "1", "--json", str(out)],
                          capture_output=True, text=True, check=True)
    assert "numba vs numpy" in proc.stdout
    doc = json.loads(out.read_text())
    assert set(doc["numba"]) == set(doc["numpy"]) and len(doc["numba"]) == 12
