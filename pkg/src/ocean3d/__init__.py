"""Upper-ocean 3D forecasting toolkit: grids, data I/O, synthetic truth,
increment objective, propagators, rollout and verification diagnostics."""

__version__ = "0.1.0"
