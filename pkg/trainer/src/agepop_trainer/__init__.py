"""Surrogate trainer for the age-structured control toolkit.

Fits dense (exportable) or spectral-reference (distilled) approximators of
the fertility/mortality -> growth-rate map, exports them in the shared v1
weights format, and harvests adaptive-run estimate snapshots into training
datasets.  Couples to the simulation toolkit only through files and its
command line.
"""

from .data import DatasetError, Record, featurize, load_records
from .training import TrainConfig, TrainingError, train
from .harvest import HarvestError, harvest, spot_check_labels

__version__ = "0.1.0"
