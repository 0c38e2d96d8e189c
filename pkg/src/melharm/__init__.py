"""Automatic melody harmonization: five harmonizers and six objective metrics."""

__version__ = "0.1.0"
