"""A small simulation study with the benchmark driver.

This runs a reduced version of the Poisson/Gaussian comparison against a
linear factor model: two replicates instead of the default twenty, written
to a temporary directory. The same study is available from the command line
as ``overgfm benchmark --scenario 8``.
"""
import tempfile

from overgfm.benchmark import run_benchmark

with tempfile.TemporaryDirectory() as tmp:
    # per-replicate rows are also flushed to tmp/replicates.csv as they finish
    _, rows = run_benchmark("8", replicates=2, seed=0, out_dir=tmp)

print(f"{'setting':<22} {'method':<8} {'Tr(H)':>8} {'Tr(B,mu)':>9}")
for row in rows:
    print(f"{row['setting']:<22} {row['method']:<8} {float(row['tr_h_mean']):8.3f} "
          f"{float(row['tr_gamma_mean']):9.3f}")
