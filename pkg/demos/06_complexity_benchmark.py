"""
How mixer cost grows with sequence length
=========================================

Each mixer is timed single-threaded over doubling sequence lengths. The slope
of log time against log length estimates the growth exponent: about 2 for
softmax attention, about 1 for Fourier mixing and the landmark approximation.
Run this on an otherwise idle machine.
"""
from edsnet.bench import run_bench

report = run_bench(("softmax", "fourier", "nystrom", "dwt"), (256, 512, 1024, 2048, 4096), dim=64, trials=5)
print(report.to_csv())
for kind, slope in report.slopes.items():
    print(f"{kind:8s} log-log slope {slope:.2f}")
