"""
Core framework para as mini apps ODEInf.
"""

__version__ = "1.0.0"
