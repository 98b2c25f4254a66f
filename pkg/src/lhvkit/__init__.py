"""Local-hidden-variable models, Bell inequalities and critical detection rates."""

__version__ = "0.1.0"
