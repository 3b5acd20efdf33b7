"""Identification, decentralized stability certificates and Bode templates
for frequency-dependent droop responses of grid-connected units."""
from __future__ import annotations

from .dataset import DroopDataset, DroopSample
from .freqresp import FrequencyGrid, RationalTransferFunction, default_grid, log_grid
from .lines import LineBounds, LineParams, UncertaintyWeight, extract_line_bounds
from .stability import BusContext, CertificateResult, NetworkEnvelope, certify_unit, gamma_bar
from .units import UnitKind, UnitModel, unit_droop_matrix

__version__ = "0.1.0"

__all__ = [
    "BusContext",
    "CertificateResult",
    "DroopDataset",
    "DroopSample",
    "FrequencyGrid",
    "LineBounds",
    "LineParams",
    "NetworkEnvelope",
    "RationalTransferFunction",
    "UncertaintyWeight",
    "UnitKind",
    "UnitModel",
    "certify_unit",
    "default_grid",
    "extract_line_bounds",
    "gamma_bar",
    "log_grid",
    "unit_droop_matrix",
]
