"""
Train a small model and evaluate one-step predictions
=====================================================

A reduced version of the full experiment: narrower network, shorter windows,
a dozen epochs. The default architecture and longer training are
what the command line pipeline uses.
"""
from vemo import (
    TrainConfig, VemoArchitecture, concat_runs, filter_run, fit, make_windows, one_step_eval, split_dataset,
)
from vemo.evaluation import format_report
from vemo.signal import ScalingTable
from vemo.synth import (
    SingleTrackParams, add_measurement_noise, build_test_script, build_training_script, simulate,
)

vehicle = SingleTrackParams()
noise = [0.3, 0.3, 1.0, 0.5]
table = ScalingTable.default()

# runs start and end at rest, so they can be joined end to end
train_run = concat_runs([
    add_measurement_noise(simulate(vehicle, build_training_script(seed, 60.0)), noise, seed=10 + seed)
    for seed in (1, 2)
])
test_raw = add_measurement_noise(simulate(vehicle, build_test_script(99, 40.0)), noise, seed=99)

ds = make_windows(filter_run(train_run, 5.0), k=50, scaling=table)
train, val = split_dataset(ds)
print(f"{len(train)} training windows, {len(val)} validation windows")

arch = VemoArchitecture(encoder_widths=(16, 16), branch_widths=(8,))
cfg = TrainConfig(epochs=12, seed=0)
params, log = fit(train, val, cfg, arch=arch,
                  callback=lambda r: print(f"  epoch {r.epoch}: train {r.train_mae:.4f}  val {r.val_mae:.4f}"))
print("best epoch", log.best_epoch)

params.meta = {"k": 50, "scaling": table.to_dict()}
test = make_windows(filter_run(test_raw, 5.0), k=50, scaling=table)
report = one_step_eval(params, test, table)
print(format_report(report))
print("PSD band error 0.25-5 Hz, a_y: %.3f" % report.band_error("a_y", (0.25, 5.0)))
