"""radforge: build perception trees, compile reasoning/reflection training
data for chest X-ray report generation, and score generated reports."""

__version__ = "0.1.0"
