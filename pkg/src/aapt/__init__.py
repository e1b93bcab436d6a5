"""Ancilla-assisted quantum process tomography with the two-stage projection."""
from . import channel, experiments, qlinalg, statesim, tomography
from .channel import KrausChannel, ProcessMatrix, kraus_to_process, phase_damping, random_channel
from .statesim import cube_measurements, maximally_entangled_state, operator_schmidt, sample_counts
from .tomography import aapt_reconstruct

__version__ = "0.1.0"

__all__ = [
    "KrausChannel",
    "ProcessMatrix",
    "aapt_reconstruct",
    "channel",
    "cube_measurements",
    "experiments",
    "kraus_to_process",
    "maximally_entangled_state",
    "operator_schmidt",
    "phase_damping",
    "qlinalg",
    "random_channel",
    "sample_counts",
    "statesim",
    "tomography",
]
