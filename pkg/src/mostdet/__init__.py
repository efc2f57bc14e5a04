"""Non-neural core of a rotated-quad scene text detector."""
