"""Walk-forward return-momentum forecasting and backtesting workbench."""

__version__ = "0.1.0"
