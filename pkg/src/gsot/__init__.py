"""Group-structured adversarial training at desk scale."""

__version__ = "0.1.0"
