"""A slice of the benchmark matrix.

Runs two presets (linear model, piecewise Bouchard-Warin) on the first
three registered instances with shared test sets, printing the price table
the bench CLI would write to CSV.  The full registry covers M1-M9 in one
to five dimensions; see `rmcstop bench --help` for the command-line route.
"""

from rmcstop import INSTANCES, run_benchmark
from rmcstop.bench import REFERENCE_PRICES

rows = run_benchmark(["M1", "M2", "M3"], ["lm", "bw"], macro_reps=1,
                     test_size=20_000, seed=0)

print(f"{'model':>5} {'solver':>6} {'price':>8} {'se':>8} "
      f"{'published range':>16}")
for row in rows:
    lo, hi = REFERENCE_PRICES[row["model"]]
    print(f"{row['model']:>5} {row['solver']:>6} {row['price']:8.4f} "
          f"{row['se']:8.4f} {f'[{lo:.2f}, {hi:.2f}]':>16}")

print(f"\nregistry holds {len(INSTANCES)} instances: "
      f"{', '.join(sorted(INSTANCES))}")
print("reproduce the full matrix with: "
      "rmcstop bench --instances M1 M2 M3 M4 M6 M7 M8 M9 --presets lm bw gp")
