"""Bed and nurse-staffing capacity planning for frail and elderly patients.

Pipeline: patient episodes -> features -> CART trees -> daily bed demand
scenarios -> deterministic and two-stage stochastic integer programs ->
EV / RP / EEV / VSS report.
"""

__version__ = "0.1.0"
