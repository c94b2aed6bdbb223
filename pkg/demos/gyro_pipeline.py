"""
From a gyroscope trace to a spatially-variant blur field
========================================================

No image needed: the blur field is pure geometry.  We simulate a shaky
exposure on a rolling-shutter camera, integrate the rate samples into an
orientation trajectory, and project that motion through the camera model
into a per-block (direction, extent) grid.  The console sketch at the end
shows why a single global kernel is the wrong model: extent grows away
from the rotation center and direction curls around it.
"""

import sys
from pathlib import Path

import numpy as np

from gyrodeblur import CameraRig, GyroSample, estimate_blur_field, integrate_gyro, save_field_csv

# a 1080p rig: 8 ms exposure starting at t=0, 25 ms rolling readout
rig = CameraRig(
    fx=1500.0, fy=1500.0, cx=960.0, cy=540.0, width=1920, height=1080,
    readout_ns=25_000_000, exposure_ns=8_000_000, frame_ts_ns=0,
)

# hand shake: a roll-dominant wobble with smaller pitch and yaw terms,
# sampled at 200 Hz.  Roll is what makes the blur spatially variant: its
# displacement is tangential and grows linearly with distance from the
# pivot, while pitch/yaw shift every pixel by roughly the same amount.
ts = np.arange(-20_000_000, 45_000_000, 5_000_000)
samples = [
    GyroSample(
        int(t),
        np.array([
            0.3 * np.sin(2 * np.pi * 9.0 * t * 1e-9),
            0.5 * np.cos(2 * np.pi * 6.0 * t * 1e-9),
            2.2 * np.sin(2 * np.pi * 4.0 * t * 1e-9 + 1.0),
        ]),
    )
    for t in ts
]
traj = integrate_gyro(samples)
print(f"trajectory: {traj.times.size} knots spanning "
      f"[{traj.t_start / 1e6:.0f}, {traj.t_end / 1e6:.0f}] ms")

# one blur vector per 120 px block: where each block center lands at the
# end of its row's exposure, relative to where it started
field = estimate_blur_field(rig, traj, block_w=120, block_h=120)
ext = field.extent_px
print(f"extent: min {ext.min():.1f} px at the pivot, "
      f"max {ext.max():.1f} px in the corners")

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent / "out"
out.mkdir(parents=True, exist_ok=True)
save_field_csv(out / "field.csv", field)
print(f"wrote {out / 'field.csv'}")

# a glyph per block: direction quantized to 4 strokes, '.' where the
# blur is under 2 px.  The strokes curl around a quiet eye near
# mid-frame: that is the roll pivot.
strokes = "-/|\\"
print()
for row in range(field.theta_deg.shape[0]):
    line = ""
    for col in range(field.theta_deg.shape[1]):
        if ext[row, col] < 2.0:
            line += " ."
        else:
            line += " " + strokes[int(((field.theta_deg[row, col] + 22.5) % 180) // 45)]
    print(line)
