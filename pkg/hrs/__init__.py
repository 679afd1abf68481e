"""HRS: hybrid representation forecasting with scheduling-aware loss."""

__version__ = "0.1.0"
