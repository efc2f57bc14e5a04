"""Training targets for one long rotated word and a don't-care region.

Run: python3 demos/02_labels.py
"""

import numpy as np

from mostdet.geometry import RotatedRect
from mostdet.labelgen import TextInstance, generate_maps

word = TextInstance(RotatedRect(128, 64, 180, 28, 0.15).to_quad(), text="position")
blur = TextInstance(np.array([[20, 110], [80, 110], [80, 124], [20, 124]], float), dont_care=True)
maps = generate_maps([word, blur], (128, 256), stride=4)

print("map shape:", maps.shape, " positives:", int(maps.positives.sum()),
      " masked pixels:", int((maps.train_mask == 0).sum()))

# Position-sensitive channels peak near their own side and fade to zero
# three quarters of the way across.
row = int(np.median(np.nonzero(maps.positives)[0]))
cols = np.flatnonzero(maps.positives[row])
np.set_printoptions(precision=2, suppress=True, linewidth=120)
print(f"row {row}, columns {cols[0]}..{cols[-1]}")
print("  left :", maps.possens[row, cols, 0])
print("  right:", maps.possens[row, cols, 1])

# Geometry at the centre pixel: distances to the four sides plus the angle.
y, x = row, cols[len(cols) // 2]
t, r, b, l, th = maps.geometry[y, x]
print(f"pixel ({x},{y}): top {t:.1f} right {r:.1f} bottom {b:.1f} left {l:.1f} theta {th:.2f}")
