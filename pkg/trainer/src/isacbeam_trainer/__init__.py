"""Imitation-learning trainer for the isacbeam node-pruning policy.

This package talks to the optimizer exclusively through its command-line
interface and file formats (instances, solutions, feature dumps, weight
files): it never imports the optimizer.  ``collect`` runs the dataset-
aggregation loop (exact search for labels, policy-guided search for node
streams, refit between rounds), ``train`` fits the classifier on a collected
dataset, and ``parity`` proves the exported weights score identically in the
optimizer's own inference path.
"""

from isacbeam_trainer.data import TrainingPair, label, load_dataset, pairs_from_dump
from isacbeam_trainer.fit import FitConfig, evaluate_loss, fit, standardization
from isacbeam_trainer.net import PruningNet, load_net, save_net

__all__ = [
    "TrainingPair",
    "label",
    "load_dataset",
    "pairs_from_dump",
    "FitConfig",
    "evaluate_loss",
    "fit",
    "standardization",
    "PruningNet",
    "load_net",
    "save_net",
]

__version__ = "0.1.0"
