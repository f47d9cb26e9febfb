"""SysML v2 generation from natural-language specifications."""

__version__ = "0.1.0"
