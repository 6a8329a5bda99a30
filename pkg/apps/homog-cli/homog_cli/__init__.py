"""homog CLI - command line interface for the homogenization toolkit."""

__version__ = "0.1.0"
