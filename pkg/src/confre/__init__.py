"""confre: a desk-scale conditional video codec laboratory.

The pipeline codes each frame against a learned context carried from the
previous frame.  Two small residual nets hang off the loop: an in-loop
context filter that refines the carried context before motion
compensation (and therefore shapes every later frame), and an
out-of-loop reconstruction enhancer that only touches the displayed
frame.  A per-frame decision rule arbitrates both with a rate guard and
a per-refresh-period activation budget.
"""

__version__ = "0.1.0"
