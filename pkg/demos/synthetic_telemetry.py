"""
Synthetic telemetry from the single-track model
===============================================

Build a maneuver script, integrate the vehicle, add sensor noise and
turn the run into model windows.
"""
import numpy as np

from vemo.data import filter_run, make_windows
from vemo.signal import ScalingTable
from vemo.synth import SingleTrackParams, add_measurement_noise, build_training_script, simulate

vehicle = SingleTrackParams()
script = build_training_script(seed=3, duration=60.0)
print("segments:", " ".join(script.kinds))

run = simulate(vehicle, script)
print(f"{len(run)} samples at {run.sample_rate_hz:g} Hz")
names = ("a_x [m/s^2]", "a_y [m/s^2]", "yaw_rate [deg/s]", "v_x [km/h]")
for name, col in zip(names, run.records[:, 4:].T):
    print(f"  {name:18s} min {col.min():8.2f}  max {col.max():8.2f}")

# sensor noise on the state channels, then the 5 Hz preprocessing filter
noisy = add_measurement_noise(run, [0.3, 0.3, 1.0, 0.5], seed=1)
smooth = filter_run(noisy, 5.0)
err = lambda r: np.sqrt(np.mean((r.records[:, 4:] - run.records[:, 4:]) ** 2, axis=0))
print("rms deviation from clean, noisy:   ", np.round(err(noisy), 3))
print("rms deviation from clean, filtered:", np.round(err(smooth), 3))

ds = make_windows(smooth, k=100, scaling=ScalingTable.default())
print("X", ds.X.shape, "Y", ds.Y.shape)
