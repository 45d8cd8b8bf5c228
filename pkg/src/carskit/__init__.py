"""Physics-informed CARS-to-Raman reconstruction with uncertainty estimates."""

__version__ = "0.1.0"
