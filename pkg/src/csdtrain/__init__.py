"""Heterogeneous data-parallel training on hosts with computational storage devices.

Batch-size tuning, privacy-aware dataset partitioning, a calibrated
simulator of synchronous ring-allreduce training, and a desk-scale SGD
oracle (``csdtrain.minitrain``).
"""

__version__ = "0.1.0"
