"""Flag unsafe dependency updates in pull requests and summarize them by dependence tier."""

__version__ = "0.1.0"
