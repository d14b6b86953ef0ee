"""Active place recognition sandbox: simulator, trainers, and benchmark."""

__version__ = "0.1.0"
