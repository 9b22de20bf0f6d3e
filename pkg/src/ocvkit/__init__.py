"""Battery OCV characterisation: cell simulator, test protocols and estimators."""

__version__ = "0.1.0"
