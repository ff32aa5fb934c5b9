"""Equal risk pricing of European options under dynamic expectile risk."""
__version__ = "0.1.0"
