"""Training the four formulations side by side.

Trains the same network under no regularization, the per-layer norm sum,
the cross-layer norm product, and the hard max-norm row cap, all from one
shared initialization, split, and frozen noise realization. Prints the
norms table and writes the full outputs for external plotting.
"""

import os

from lipreg import (
    Dataset,
    RegularizationMode,
    TrainConfig,
    make_synthetic_regression,
    report_table,
    run_experiment,
    split,
    standardize,
    write_outputs,
)

X, y = make_synthetic_regression(506, 13, seed=42)
ds = standardize(split(Dataset(X, y), 0.8, seed=7))
print(f"synthetic housing-scale data: {len(ds.train_idx)} train / "
      f"{len(ds.test_idx)} test samples, {ds.n_features} features")

# the classic cap of 10 never binds at this scale (trained row norms stay
# under ~2, so training matches no reg exactly); a unit cap shows the
# projection actually steering the run
modes = [
    RegularizationMode.none(),
    RegularizationMode.layer_sum(0.1),
    RegularizationMode.lipschitz_product(0.1),
    RegularizationMode.max_norm(1.0),
]
cfg = TrainConfig(mode=modes[0], epochs=200, batch_size=50, seed=3)
print(f"training 4 formulations for {cfg.epochs} epochs "
      f"(13-20-20-20-1 network)...")
reports = run_experiment(cfg, ds, modes, eta_levels=[0.0, 0.2, 0.4, 0.6],
                         noise_seed=11)

print()
_, text = report_table(reports)
print(text)

print("final metrics per formulation:")
for report in reports:
    last = report.records[-1]
    print(f"  {report.mode.label:<13} train MAE {last.train_mae:6.3f}   "
          f"clean val MAE {last.val_mae[0.0]:6.3f}   "
          f"val MAE @ eta=0.6 {last.val_mae[0.6]:6.3f}   "
          f"({report.wall_time_s:.1f}s)")

out_dir = os.path.abspath(os.path.join(os.path.dirname(__file__), "..",
                                       "demo_output", "four_formulations"))
write_outputs(reports, out_dir)
print(f"\ncurves.csv, table.csv/txt, and report.json written to {out_dir}")
