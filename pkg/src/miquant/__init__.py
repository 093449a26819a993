"""Myocardial infarction detection and quantification from short-axis LGE-MRI."""

__version__ = "0.1.0"
